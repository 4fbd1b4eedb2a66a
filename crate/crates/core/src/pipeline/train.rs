//! Mini-batch training with per-epoch validation and best-epoch selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, PipelineError};
use crate::eval::{fuse_segments, DumpRow, PredictionDump};
use crate::models::Model;
use crate::nn::{softmax_cross_entropy, Adadelta};

/// Segments per eval-mode forward pass.
const EVAL_CHUNK: usize = 256;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed for `(seed, tag, a, b)`.
fn derive_seed(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed ^ tag).wrapping_add(a)).wrapping_add(b))
}

const SHUFFLE: u64 = 0x5348_5546;
const DROPOUT: u64 = 0x4452_4f50;

/// Shuffled partition of `0..n` into batches for one epoch; the last batch
/// may be short.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>, PipelineError> {
    if n == 0 {
        return Err(PipelineError::Argument("empty training set".into()));
    }
    if batch_size == 0 {
        return Err(PipelineError::Argument("batch size 0".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, SHUFFLE, epoch as u64, 0)));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Fraction of training segments classified correctly during the epoch.
    pub train_seg_acc: f64,
    /// Clip-level macro accuracy on the validation set, as a fraction.
    pub val_macro_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

const HISTORY_HEADER: &str = "epoch,train_loss,train_seg_acc,val_macro_acc";

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Epoch with the highest validation accuracy; earliest wins ties.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.records {
            if best.is_none_or(|b| r.val_macro_acc > b.val_macro_acc) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.train_seg_acc, r.val_macro_acc));
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self, PipelineError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
            return Err(PipelineError::Data(format!("history must start with `{HISTORY_HEADER}`")));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.trim().split(',').collect();
            let bad = || PipelineError::Data(format!("history row {}: `{line}`", i + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let epoch = f[0].parse::<usize>().map_err(|_| bad())?;
            if epoch != i {
                return Err(bad());
            }
            records.push(EpochRecord {
                epoch,
                train_loss: num(f[1])?,
                train_seg_acc: num(f[2])?,
                val_macro_acc: num(f[3])?,
            });
        }
        Ok(Self { records })
    }
}

/// Clip-level fused predictions for every clip of `data`, in order.
pub fn predict_dataset(model: &Model, data: &Dataset) -> Result<PredictionDump, PipelineError> {
    if data.variant != model.variant() {
        return Err(PipelineError::Data(format!(
            "model expects {} features, dataset has {}",
            model.variant(),
            data.variant
        )));
    }
    let per_clip = data.variant.n_segments();
    let clips_per_chunk = (EVAL_CHUNK / per_clip).max(1);
    let mut rows = Vec::with_capacity(data.clips.len());
    for start in (0..data.clips.len()).step_by(clips_per_chunk) {
        let end = (start + clips_per_chunk).min(data.clips.len());
        let flat: Vec<usize> = (start * per_clip..end * per_clip).collect();
        let (x, _) = data.gather(&flat, &model.graph.input_shape)?;
        let probs = model.network.forward_eval(&x).map_err(crate::models::ModelError::from)?;
        let k = probs.item_len();
        for (ci, clip) in data.clips[start..end].iter().enumerate() {
            let segs: Vec<Vec<f64>> =
                (0..per_clip).map(|s| probs.item(ci * per_clip + s).to_vec()).collect();
            debug_assert!(segs.iter().all(|r| r.len() == k));
            rows.push(DumpRow { clip_id: clip.clip_id.clone(), truth: clip.label, dist: fuse_segments(&segs)? });
        }
    }
    Ok(PredictionDump { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

/// Training state: live model, history so far, and the best-epoch snapshot.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub options: TrainOptions,
    pub optimizer: Adadelta,
    history: TrainHistory,
    best: Option<Model>,
}

impl Trainer {
    pub fn new(model: Model, options: TrainOptions) -> Self {
        Self { model, options, optimizer: Adadelta::default(), history: TrainHistory::default(), best: None }
    }

    /// Continues from a saved model, its history and best snapshot.
    pub fn resume(model: Model, history: TrainHistory, best: Option<Model>, options: TrainOptions) -> Self {
        Self { model, options, optimizer: Adadelta::default(), history, best }
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn best(&self) -> Option<&Model> {
        self.best.as_ref()
    }

    pub fn into_best(self) -> Option<Model> {
        self.best
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.history.len()
    }

    pub fn finished(&self) -> bool {
        self.epoch() >= self.options.epochs
    }

    /// One optimizer step on a batch. Returns the mean loss and the number
    /// of correctly classified samples.
    pub fn train_step(
        &mut self,
        x: &crate::nn::Tensor,
        labels: &[usize],
        dropout_seed: u64,
    ) -> Result<(f64, usize), PipelineError> {
        let net = &mut self.model.network;
        let logits = net.forward_train(x, dropout_seed).map_err(crate::models::ModelError::from)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels).map_err(crate::models::ModelError::from)?;
        let c = logits.item_len();
        let correct = logits
            .data()
            .chunks(c)
            .zip(labels)
            .filter(|(row, &l)| {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best == l
            })
            .count();
        if !loss.is_finite() {
            return Ok((loss, correct));
        }
        let grads = net.backward(&dlogits).map_err(crate::models::ModelError::from)?;
        self.optimizer.step(net.params_mut(), &grads).map_err(crate::models::ModelError::from)?;
        Ok((loss, correct))
    }

    /// One full pass over `train`, then validation on `val`.
    pub fn run_epoch(&mut self, train: &Dataset, val: &Dataset) -> Result<EpochRecord, PipelineError> {
        let epoch = self.epoch();
        let batches = make_batches(train.segment_count(), self.options.batch_size, self.options.seed, epoch)?;
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let (x, labels) = train.gather(idx, &self.model.graph.input_shape)?;
            let seed = derive_seed(self.options.seed, DROPOUT, epoch as u64, b as u64);
            let (loss, ok) = self.train_step(&x, &labels, seed)?;
            if !loss.is_finite() {
                return Err(PipelineError::NonFinite { epoch, batch: b });
            }
            loss_sum += loss * idx.len() as f64;
            correct += ok;
        }
        let n = train.segment_count() as f64;
        let dump = predict_dataset(&self.model, val)?;
        let val_macro_acc = dump.confusion().macro_accuracy()?;
        let record = EpochRecord { epoch, train_loss: loss_sum / n, train_seg_acc: correct as f64 / n, val_macro_acc };
        let improved = match self.history.best_epoch() {
            None => true,
            Some(b) => val_macro_acc > self.history.records[b].val_macro_acc,
        };
        self.history.records.push(record);
        if improved || self.best.is_none() {
            self.best = Some(self.model.clone());
        }
        Ok(record)
    }

    /// Runs the remaining epochs, calling `after_epoch` after each.
    pub fn fit(
        &mut self,
        train: &Dataset,
        val: &Dataset,
        mut after_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<(), PipelineError>,
    ) -> Result<(), PipelineError> {
        if val.clips.is_empty() {
            return Err(PipelineError::Argument("empty validation set".into()));
        }
        while !self.finished() {
            let r = self.run_epoch(train, val)?;
            after_epoch(self, &r)?;
        }
        Ok(())
    }
}
