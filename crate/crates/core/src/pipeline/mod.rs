//! Manifests, configuration, in-memory datasets and the training loop.

mod config;
mod dataset;
mod manifest;
mod train;

pub use config::{TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS};
pub use dataset::{fit_clip, ClipFeatures, Dataset, FeatureStore};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use train::{make_batches, predict_dataset, EpochRecord, TrainHistory, TrainOptions, Trainer};

use std::path::PathBuf;

use crate::audio::AudioError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::models::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("manifest row {row}: {msg}")]
    Manifest { row: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{0}")]
    Data(String),
    #[error("loss became non-finite in epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
