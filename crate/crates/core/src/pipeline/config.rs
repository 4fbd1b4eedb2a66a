//! `key=value` training configuration.

use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::features::FeatureVariant;
use crate::models::ModelKind;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub variant: FeatureVariant,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
}

pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const DEFAULT_EPOCHS: usize = 200;

impl TrainConfig {
    /// Parses `key=value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut model = None;
        let mut variant = None;
        let mut batch_size = DEFAULT_BATCH_SIZE;
        let mut epochs = DEFAULT_EPOCHS;
        let mut seed = 0u64;
        let mut train = None;
        let mut val = None;
        let mut cache = None;
        let mut ckpt = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| PipelineError::Config(format!("line {}: {msg}", i + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<u64>().map_err(|_| err(format!("{k} must be a nonnegative integer")));
            match k {
                "model" => model = Some(v.parse::<ModelKind>().map_err(|e| err(e.to_string()))?),
                "variant" => {
                    variant = Some(v.parse::<FeatureVariant>().map_err(|_| err(format!("unknown variant `{v}`")))?)
                }
                "batch_size" => batch_size = num(v)? as usize,
                "epochs" => epochs = num(v)? as usize,
                "seed" => seed = num(v)?,
                "train_manifest" => train = Some(base.join(v)),
                "val_manifest" => val = Some(base.join(v)),
                "cache_dir" => cache = Some(base.join(v)),
                "checkpoint_dir" => ckpt = Some(base.join(v)),
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        let missing = |k: &str| PipelineError::Config(format!("missing `{k}`"));
        let model = model.ok_or_else(|| missing("model"))?;
        let variant = variant.unwrap_or(model.variant());
        if variant != model.variant() {
            return Err(PipelineError::Config(format!(
                "{} is defined on {} features, config asks for {variant}",
                model.id(),
                model.variant()
            )));
        }
        if batch_size == 0 || epochs == 0 {
            return Err(PipelineError::Config("batch_size and epochs must be at least 1".into()));
        }
        Ok(Self {
            model,
            variant,
            batch_size,
            epochs,
            seed,
            train_manifest: train.ok_or_else(|| missing("train_manifest"))?,
            val_manifest: val.ok_or_else(|| missing("val_manifest"))?,
            cache_dir: cache,
            checkpoint_dir: ckpt.ok_or_else(|| missing("checkpoint_dir"))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }
}
