//! `clip_id,true_label,p0,...,p14` prediction files.

use std::collections::HashMap;
use std::path::Path;

use super::{ConfusionMatrix, EvalError, PredictionDistribution};
use crate::classes::{SceneClass, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub clip_id: String,
    pub truth: SceneClass,
    pub dist: PredictionDistribution,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionDump {
    pub rows: Vec<DumpRow>,
}

fn header() -> String {
    let mut h = String::from("clip_id,true_label");
    for i in 0..NUM_CLASSES {
        h.push_str(&format!(",p{i}"));
    }
    h
}

impl PredictionDump {
    pub fn confusion(&self) -> ConfusionMatrix {
        ConfusionMatrix::from_predictions(self.rows.iter().map(|r| (r.truth, &r.dist)))
    }

    pub fn argmaxes(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.dist.argmax()).collect()
    }

    /// Probabilities use Rust's shortest round-trip formatting, so parsing
    /// restores them exactly.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut s = header();
        s.push('\n');
        for r in &self.rows {
            if r.clip_id.contains([',', '\n', '\r']) {
                return Err(EvalError::Format(format!("clip id {:?} contains a separator", r.clip_id)));
            }
            s.push_str(&r.clip_id);
            s.push(',');
            s.push_str(r.truth.label());
            for p in r.dist.probs() {
                s.push_str(&format!(",{p}"));
            }
            s.push('\n');
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == header() => {}
            _ => return Err(EvalError::Format(format!("missing header `{}`", header()))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let row = i + 1;
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != NUM_CLASSES + 2 {
                return Err(EvalError::Format(format!("line {row}: {} fields", fields.len())));
            }
            let truth = fields[1]
                .parse::<SceneClass>()
                .map_err(|e| EvalError::Format(format!("line {row}: {e}")))?;
            let probs: Result<Vec<f64>, _> = fields[2..].iter().map(|f| f.parse::<f64>()).collect();
            let probs = probs.map_err(|e| EvalError::Format(format!("line {row}: {e}")))?;
            let dist = PredictionDistribution::new(probs).map_err(|e| EvalError::Format(format!("line {row}: {e}")))?;
            rows.push(DumpRow { clip_id: fields[0].to_string(), truth, dist });
        }
        Ok(Self { rows })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))
    }
}

/// Reorders every dump to the first dump's clip order. Fails naming the
/// clip ids that are not shared by all dumps, or whose labels disagree.
pub fn align_dumps(dumps: &[PredictionDump]) -> Result<Vec<PredictionDump>, EvalError> {
    let Some(first) = dumps.first() else {
        return Ok(Vec::new());
    };
    let mut out = vec![first.clone()];
    for (k, d) in dumps.iter().enumerate().skip(1) {
        let index: HashMap<&str, &DumpRow> = d.rows.iter().map(|r| (r.clip_id.as_str(), r)).collect();
        let missing: Vec<&str> = first
            .rows
            .iter()
            .filter(|r| !index.contains_key(r.clip_id.as_str()))
            .map(|r| r.clip_id.as_str())
            .collect();
        let own: HashMap<&str, ()> = first.rows.iter().map(|r| (r.clip_id.as_str(), ())).collect();
        let extra: Vec<&str> =
            d.rows.iter().filter(|r| !own.contains_key(r.clip_id.as_str())).map(|r| r.clip_id.as_str()).collect();
        if !missing.is_empty() || !extra.is_empty() || d.rows.len() != first.rows.len() {
            let show = |v: &[&str]| v.iter().take(5).copied().collect::<Vec<_>>().join(", ");
            return Err(EvalError::Alignment(format!(
                "dump {} lacks [{}] and has extra [{}]",
                k + 1,
                show(&missing),
                show(&extra)
            )));
        }
        let mut rows = Vec::with_capacity(first.rows.len());
        for r in &first.rows {
            let other = index[r.clip_id.as_str()];
            if other.truth != r.truth {
                return Err(EvalError::Alignment(format!("clip {} has different labels", r.clip_id)));
            }
            rows.push(other.clone());
        }
        out.push(PredictionDump { rows });
    }
    Ok(out)
}
