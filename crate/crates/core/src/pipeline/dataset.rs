//! Per-clip segment features held in memory at f32 precision.

use std::path::Path;

use super::{DatasetManifest, PipelineError};
use crate::audio::{self, AudioClip};
use crate::classes::SceneClass;
use crate::features::{self, FeatureCache, FeatureVariant, LogMelSpectrogram, Matrix, SegmentSet, CLIP_SECONDS, N_MELS};
use crate::nn::Tensor;
use crate::par::Exec;

/// Repeats or truncates a clip to exactly ten seconds at its own rate.
/// Returns a note describing the change, if any.
pub fn fit_clip(clip: &AudioClip) -> (AudioClip, Option<String>) {
    let want = clip.sample_rate() as usize * CLIP_SECONDS;
    let have = clip.len();
    if have == want {
        return (clip.clone(), None);
    }
    let secs = clip.duration_secs();
    let note = if have < want {
        format!("clip is {secs:.2} s; repeating it to {CLIP_SECONDS} s")
    } else {
        format!("clip is {secs:.2} s; using the first {CLIP_SECONDS} s")
    };
    (clip.fit_length(want), Some(note))
}

/// Segments of one clip, stored as f32 rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    pub clip_id: String,
    pub label: SceneClass,
    pub variant: FeatureVariant,
    data: Vec<f32>,
}

impl ClipFeatures {
    pub fn new(clip_id: impl Into<String>, label: SceneClass, spec: &LogMelSpectrogram) -> Result<Self, PipelineError> {
        let v = spec.variant();
        let clip_id = clip_id.into();
        let seg = features::segment(spec, clip_id.clone())?;
        let mut data = Vec::with_capacity(v.n_segments() * v.segment_frames() * N_MELS);
        for m in &seg.segments {
            data.extend(m.as_slice().iter().map(|x| *x as f32));
        }
        Ok(Self { clip_id, label, variant: v, data })
    }

    pub fn n_segments(&self) -> usize {
        self.variant.n_segments()
    }

    fn segment_len(&self) -> usize {
        self.variant.segment_frames() * N_MELS
    }

    pub fn segment(&self, i: usize) -> &[f32] {
        &self.data[i * self.segment_len()..(i + 1) * self.segment_len()]
    }

    pub fn segment_set(&self) -> SegmentSet {
        let rows = self.variant.segment_frames();
        let segments = (0..self.n_segments())
            .map(|i| {
                let v = self.segment(i).iter().map(|x| *x as f64).collect();
                Matrix::from_vec(rows, N_MELS, v).expect("segment shape")
            })
            .collect();
        SegmentSet { clip_id: self.clip_id.clone(), variant: self.variant, segments }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub variant: FeatureVariant,
    pub clips: Vec<ClipFeatures>,
}

impl Dataset {
    pub fn new(variant: FeatureVariant, clips: Vec<ClipFeatures>) -> Result<Self, PipelineError> {
        if let Some(c) = clips.iter().find(|c| c.variant != variant) {
            return Err(PipelineError::Data(format!("clip {} has {} features in a {variant} dataset", c.clip_id, c.variant)));
        }
        Ok(Self { variant, clips })
    }

    pub fn segment_count(&self) -> usize {
        self.clips.len() * self.variant.n_segments()
    }

    /// `(clip, segment)` for a flat segment index.
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let n = self.variant.n_segments();
        (flat / n, flat % n)
    }

    /// Stacks the given flat segment indices into a batch of `input_shape`
    /// samples, returning the batch and the segment labels.
    pub fn gather(&self, flat: &[usize], input_shape: &[usize]) -> Result<(Tensor, Vec<usize>), PipelineError> {
        let per: usize = input_shape.iter().product();
        let mut data = Vec::with_capacity(flat.len() * per);
        let mut labels = Vec::with_capacity(flat.len());
        for &f in flat {
            let (c, s) = self.locate(f);
            let seg = self.clips[c].segment(s);
            if seg.len() != per {
                return Err(PipelineError::Data(format!(
                    "{} segment has {} values, model input {input_shape:?} needs {per}",
                    self.variant,
                    seg.len()
                )));
            }
            data.extend(seg.iter().map(|x| *x as f64));
            labels.push(self.clips[c].label.index());
        }
        let mut shape = vec![flat.len()];
        shape.extend_from_slice(input_shape);
        Ok((Tensor::new(shape, data).map_err(|e| PipelineError::Data(e.to_string()))?, labels))
    }
}

/// Loads features from the cache, or extracts (and caches) them from audio.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    pub cache: Option<FeatureCache>,
    pub exec: Exec,
}

impl FeatureStore {
    pub fn new(cache: Option<FeatureCache>) -> Self {
        Self { cache, exec: Exec::default() }
    }

    /// Features for one clip, quantized to f32 whether cached or fresh.
    /// The flag tells whether extraction ran.
    pub fn spectrogram(&self, path: &Path, variant: FeatureVariant) -> Result<(LogMelSpectrogram, bool), PipelineError> {
        if let Some(cache) = &self.cache {
            if cache.is_fresh(path, variant) {
                return Ok((cache.load(path, variant)?, false));
            }
        }
        if !path.exists() {
            let hint = match &self.cache {
                Some(c) => format!("no cached features in {} either", c.dir().display()),
                None => "no feature cache configured".to_string(),
            };
            return Err(PipelineError::Data(format!("audio file {} not found and {hint}", path.display())));
        }
        let clip = audio::load_wav(path)?;
        let (clip, note) = fit_clip(&clip);
        if let Some(note) = note {
            log::warn!("{}: {note}", path.display());
        }
        let spec = features::extract(&clip, variant)?.quantized();
        if let Some(cache) = &self.cache {
            cache.store(path, &spec)?;
        }
        Ok((spec, true))
    }

    /// Features for every manifest entry, in manifest order. All clips are
    /// attempted; the error lists every failure.
    pub fn dataset(&self, manifest: &DatasetManifest, variant: FeatureVariant) -> Result<Dataset, PipelineError> {
        let results = self.exec.map(manifest.len(), |i| {
            let e = &manifest.entries[i];
            self.spectrogram(&e.path, variant)
                .and_then(|(spec, _)| ClipFeatures::new(e.clip_id.clone(), e.label, &spec))
        });
        let mut clips = Vec::with_capacity(results.len());
        let mut failures = Vec::new();
        for (e, r) in manifest.entries.iter().zip(results) {
            match r {
                Ok(c) => clips.push(c),
                Err(err) => failures.push(format!("{}: {err}", e.clip_id)),
            }
        }
        if !failures.is_empty() {
            return Err(PipelineError::Data(format!(
                "{} of {} clips failed:\n  {}",
                failures.len(),
                manifest.len(),
                failures.join("\n  ")
            )));
        }
        Dataset::new(variant, clips)
    }
}
