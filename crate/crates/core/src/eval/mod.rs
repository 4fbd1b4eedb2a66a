//! Segment fusion, geometric-mean ensembles, model selection and metrics.

mod dump;
mod metrics;
mod report;
mod select;

pub use dump::{align_dumps, DumpRow, PredictionDump};
pub use metrics::{macro_accuracy_of, ConfusionMatrix};
pub use report::Report;
pub use select::{select_ensemble, Candidate, EnsembleSpec};

use crate::classes::NUM_CLASSES;
use crate::features::SegmentSet;
use crate::models::{Model, ModelError};

/// Floor applied to probabilities before taking logs in the geometric mean.
pub const GEOMEAN_FLOOR: f64 = 1e-12;
/// Allowed deviation of a distribution's sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("ensemble selection failed: {0}")]
    Selection(String),
    #[error("prediction dumps do not align: {0}")]
    Alignment(String),
    #[error("bad prediction dump: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A probability vector over the 15 scene classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    probs: Vec<f64>,
}

impl PredictionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, EvalError> {
        if probs.len() != NUM_CLASSES {
            return Err(EvalError::Shape(format!("{} probabilities, expected {NUM_CLASSES}", probs.len())));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(EvalError::Argument("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(EvalError::Argument(format!("probabilities sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self { probs: vec![1.0 / NUM_CLASSES as f64; NUM_CLASSES] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Most probable class; the lowest index wins exact ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= sum);
    v
}

/// Arithmetic mean of per-segment distributions.
pub fn fuse_segments(dists: &[Vec<f64>]) -> Result<PredictionDistribution, EvalError> {
    if dists.is_empty() {
        return Err(EvalError::Argument("no segment predictions".into()));
    }
    let mut mean = vec![0.0; NUM_CLASSES];
    for d in dists {
        if d.len() != NUM_CLASSES {
            return Err(EvalError::Shape(format!("segment prediction of length {}", d.len())));
        }
        mean.iter_mut().zip(d).for_each(|(m, p)| *m += p);
    }
    let n = dists.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    PredictionDistribution::new(normalized(mean))
}

/// Clip-level prediction: the mean of the model's outputs on every segment.
pub fn predict_clip(model: &Model, features: &SegmentSet) -> Result<PredictionDistribution, EvalError> {
    let v = model.variant();
    if features.variant != v {
        return Err(EvalError::Shape(format!(
            "clip {} has {} features, model expects {v}",
            features.clip_id, features.variant
        )));
    }
    if features.segments.len() != v.n_segments() {
        return Err(EvalError::Shape(format!(
            "clip {} has {} segments, {v} needs {}",
            features.clip_id,
            features.segments.len(),
            v.n_segments()
        )));
    }
    let refs: Vec<_> = features.segments.iter().collect();
    fuse_segments(&model.predict_segments(&refs)?)
}

/// Element-wise geometric mean, renormalized. Computed in log space with
/// entries floored at [`GEOMEAN_FLOOR`].
pub fn ensemble_geomean(dists: &[&PredictionDistribution]) -> Result<PredictionDistribution, EvalError> {
    if dists.is_empty() {
        return Err(EvalError::Argument("no distributions to combine".into()));
    }
    let n = dists.len() as f64;
    let mut logs = [0.0; NUM_CLASSES];
    for d in dists {
        logs.iter_mut().zip(d.probs()).for_each(|(l, p)| *l += p.max(GEOMEAN_FLOOR).ln());
    }
    let mx = logs.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b / n));
    let out = logs.iter().map(|l| (l / n - mx).exp()).collect();
    PredictionDistribution::new(normalized(out))
}
