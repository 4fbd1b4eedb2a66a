//! Log-mel spectrogram features and fixed-length segmentation.

mod cache;
mod mel;
mod stft;

pub use cache::{decode_lmsf, encode_lmsf, FeatureCache};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz};
pub use stft::{frame_count, power_spectrogram};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::audio::{self, AudioClip, AudioError};

pub const N_MELS: usize = 64;
/// Floor applied to mel energies before taking the natural log.
pub const LOG_FLOOR: f64 = 1e-10;
/// Nominal clip duration every variant's frame count is pinned to.
pub const CLIP_SECONDS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("bad feature file: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// The two log-mel front-ends: 16 kHz / 25 ms / 10 ms and 44.1 kHz / 46 ms / 23 ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureVariant {
    V1,
    V2,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 2] = [FeatureVariant::V1, FeatureVariant::V2];

    pub fn id(self) -> u8 {
        match self {
            FeatureVariant::V1 => 1,
            FeatureVariant::V2 => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(FeatureVariant::V1),
            2 => Some(FeatureVariant::V2),
            _ => None,
        }
    }

    pub fn sample_rate(self) -> u32 {
        match self {
            FeatureVariant::V1 => 16000,
            FeatureVariant::V2 => 44100,
        }
    }

    pub fn window_s(self) -> f64 {
        match self {
            FeatureVariant::V1 => 0.025,
            FeatureVariant::V2 => 0.046,
        }
    }

    pub fn hop_s(self) -> f64 {
        match self {
            FeatureVariant::V1 => 0.010,
            FeatureVariant::V2 => 0.023,
        }
    }

    pub fn n_mels(self) -> usize {
        N_MELS
    }

    pub fn total_frames(self) -> usize {
        match self {
            FeatureVariant::V1 => 999,
            FeatureVariant::V2 => 431,
        }
    }

    pub fn segment_frames(self) -> usize {
        match self {
            FeatureVariant::V1 => 111,
            FeatureVariant::V2 => 43,
        }
    }

    pub fn n_segments(self) -> usize {
        match self {
            FeatureVariant::V1 => 9,
            FeatureVariant::V2 => 10,
        }
    }

    /// Window length in samples.
    pub fn window_len(self) -> usize {
        (self.window_s() * self.sample_rate() as f64).round() as usize
    }

    /// Hop length in samples.
    pub fn hop_len(self) -> usize {
        (self.hop_s() * self.sample_rate() as f64).round() as usize
    }

    pub fn n_fft(self) -> usize {
        self.window_len().next_power_of_two()
    }

    /// Samples in a nominal clip at this variant's rate.
    pub fn clip_samples(self) -> usize {
        CLIP_SECONDS * self.sample_rate() as usize
    }

    /// Shared, lazily built filterbank for this variant.
    pub fn filterbank(self) -> &'static Matrix {
        static BANKS: [OnceLock<Matrix>; 2] = [OnceLock::new(), OnceLock::new()];
        BANKS[(self.id() - 1) as usize].get_or_init(|| {
            mel_filterbank(N_MELS, self.n_fft() / 2 + 1, self.sample_rate())
                .expect("variant filterbank parameters are valid")
        })
    }
}

impl fmt::Display for FeatureVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.id())
    }
}

impl FromStr for FeatureVariant {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v1" | "1" => Ok(FeatureVariant::V1),
            "v2" | "2" => Ok(FeatureVariant::V2),
            other => Err(FeatureError::Argument(format!(
                "unknown feature variant {other:?} (expected v1 or v2)"
            ))),
        }
    }
}

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, FeatureError> {
        if data.len() != rows * cols {
            return Err(FeatureError::Argument(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copy of rows `start..start + n`.
    pub fn slice_rows(&self, start: usize, n: usize) -> Matrix {
        Matrix {
            rows: n,
            cols: self.cols,
            data: self.data[start * self.cols..(start + n) * self.cols].to_vec(),
        }
    }
}

/// `total_frames x 64` natural-log mel energies for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    data: Matrix,
    variant: FeatureVariant,
}

impl LogMelSpectrogram {
    pub fn new(data: Matrix, variant: FeatureVariant) -> Result<Self, FeatureError> {
        if data.rows() != variant.total_frames() || data.cols() != N_MELS {
            return Err(FeatureError::Invariant(format!(
                "{variant} log-mel must be {}x{N_MELS}, got {}x{}",
                variant.total_frames(),
                data.rows(),
                data.cols()
            )));
        }
        if data.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::Invariant("non-finite log-mel entry".into()));
        }
        Ok(Self { data, variant })
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    /// Rounds every entry through f32, the precision of the on-disk cache.
    pub fn quantized(&self) -> LogMelSpectrogram {
        let data = self.data.as_slice().iter().map(|v| *v as f32 as f64).collect();
        LogMelSpectrogram {
            data: Matrix { rows: self.data.rows, cols: self.data.cols, data },
            variant: self.variant,
        }
    }
}

/// Consecutive non-overlapping segments of one clip's spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub clip_id: String,
    pub variant: FeatureVariant,
    pub segments: Vec<Matrix>,
}

/// Log-mel spectrogram of a mono clip already at the variant's sample rate.
///
/// The naturally framed result is truncated, or padded by repeating its last
/// frame, to exactly `variant.total_frames()` rows.
pub fn log_mel(clip: &AudioClip, variant: FeatureVariant) -> Result<LogMelSpectrogram, FeatureError> {
    if clip.num_channels() != 1 {
        return Err(FeatureError::Argument("log_mel expects a mono clip".into()));
    }
    if clip.sample_rate() != variant.sample_rate() {
        return Err(FeatureError::Argument(format!(
            "{variant} needs {} Hz audio, got {} Hz",
            variant.sample_rate(),
            clip.sample_rate()
        )));
    }
    let power = power_spectrogram(clip, variant.window_s(), variant.hop_s())?;
    let bank = variant.filterbank();
    let target = variant.total_frames();
    let mut out = Matrix::zeros(target, N_MELS);
    let natural = power.rows();
    for r in 0..target.min(natural) {
        let p = power.row(r);
        let dst = out.row_mut(r);
        for (m, d) in dst.iter_mut().enumerate() {
            let energy: f64 = bank.row(m).iter().zip(p).map(|(w, x)| w * x).sum();
            *d = energy.max(LOG_FLOOR).ln();
        }
    }
    if natural < target {
        let last = out.row(natural - 1).to_vec();
        for r in natural..target {
            out.row_mut(r).copy_from_slice(&last);
        }
    }
    LogMelSpectrogram::new(out, variant)
}

/// Full front end for a decoded clip: downmix, peak-normalize, resample to
/// the variant's rate, then [`log_mel`].
pub fn extract(clip: &AudioClip, variant: FeatureVariant) -> Result<LogMelSpectrogram, FeatureError> {
    let pre = audio::preprocess(clip);
    let at_rate = audio::resample(&pre, variant.sample_rate())?;
    log_mel(&at_rate, variant)
}

/// Splits a spectrogram into the variant's fixed-size segments. Frames past
/// `n_segments * segment_frames` are dropped.
pub fn segment(spec: &LogMelSpectrogram, clip_id: impl Into<String>) -> Result<SegmentSet, FeatureError> {
    let v = spec.variant();
    if spec.frames() != v.total_frames() {
        return Err(FeatureError::Invariant(format!(
            "{v} spectrogram has {} frames, expected {}",
            spec.frames(),
            v.total_frames()
        )));
    }
    let seg = v.segment_frames();
    let segments = (0..v.n_segments())
        .map(|i| spec.data().slice_rows(i * seg, seg))
        .collect();
    Ok(SegmentSet { clip_id: clip_id.into(), variant: v, segments })
}
