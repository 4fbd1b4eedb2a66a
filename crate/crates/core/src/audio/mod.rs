//! Audio ingestion and preprocessing: WAV decoding, mono downmix, peak
//! normalization and band-limited resampling.

mod resample;
mod wav;

pub use resample::{resample, KAISER_BETA, ZERO_CROSSINGS};
pub use wav::{decode_wav, encode_wav, load_wav, write_wav};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV: {0}")]
    Decode(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedFormat(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// A sampled waveform, one amplitude sequence per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self, AudioError> {
        if channels.is_empty() {
            return Err(AudioError::Argument("clip needs at least one channel".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::Argument("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(AudioError::Argument("channels differ in length".into()));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Frames per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// The first channel; for mono clips, the whole signal.
    pub fn samples(&self) -> &[f64] {
        &self.channels[0]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Repeats or truncates the clip so that it is exactly `frames` long.
    pub fn fit_length(&self, frames: usize) -> AudioClip {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                if c.is_empty() {
                    vec![0.0; frames]
                } else {
                    c.iter().copied().cycle().take(frames).collect()
                }
            })
            .collect();
        AudioClip { channels, sample_rate: self.sample_rate }
    }
}

/// Averages all channels into one. Mono input is returned unchanged.
pub fn downmix_mono(clip: &AudioClip) -> AudioClip {
    if clip.num_channels() == 1 {
        return clip.clone();
    }
    let n = clip.num_channels() as f64;
    let mixed = (0..clip.len())
        .map(|i| clip.channels.iter().map(|c| c[i]).sum::<f64>() / n)
        .collect();
    AudioClip { channels: vec![mixed], sample_rate: clip.sample_rate }
}

/// Divides every sample by the peak absolute amplitude so the result lies in
/// [-1, 1]. All-zero clips are returned unchanged.
pub fn normalize_amplitude(clip: &AudioClip) -> AudioClip {
    let peak = clip.peak();
    if peak == 0.0 || !peak.is_finite() {
        return clip.clone();
    }
    let channels = clip
        .channels
        .iter()
        .map(|c| c.iter().map(|s| s / peak).collect())
        .collect();
    AudioClip { channels, sample_rate: clip.sample_rate }
}

/// Downmix followed by peak normalization.
pub fn preprocess(clip: &AudioClip) -> AudioClip {
    normalize_amplitude(&downmix_mono(clip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stereo(l: Vec<f64>, r: Vec<f64>) -> AudioClip {
        AudioClip::new(vec![l, r], 44100).unwrap()
    }

    #[test]
    fn downmix_averages_channels() {
        let m = downmix_mono(&stereo(vec![1.0, 0.5], vec![-1.0, 0.5]));
        assert_eq!(m.samples(), &[0.0, 0.5]);
        assert_eq!(m.sample_rate(), 44100);
        let mono = AudioClip::mono(vec![0.1, -0.3], 16000).unwrap();
        assert_eq!(downmix_mono(&mono), mono);
    }

    #[test]
    fn normalize_examples() {
        let c = AudioClip::mono(vec![0.5, -0.25], 16000).unwrap();
        assert_eq!(normalize_amplitude(&c).samples(), &[1.0, -0.5]);
        let z = AudioClip::mono(vec![0.0; 3], 16000).unwrap();
        assert_eq!(normalize_amplitude(&z), z);
        let p = AudioClip::mono(vec![1.0, -0.2, 0.3], 16000).unwrap();
        assert_eq!(normalize_amplitude(&p), p);
    }

    #[test]
    fn rejects_ragged_channels() {
        assert!(AudioClip::new(vec![vec![0.0; 3], vec![0.0; 2]], 8000).is_err());
        assert!(AudioClip::new(vec![], 8000).is_err());
    }

    #[test]
    fn fit_length_repeats_and_truncates() {
        let c = AudioClip::mono(vec![1.0, 2.0, 3.0], 10).unwrap();
        assert_eq!(c.fit_length(7).samples(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
        assert_eq!(c.fit_length(2).samples(), &[1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn downmix_is_linear(
            x in prop::collection::vec(-1.0f64..1.0, 8),
            y in prop::collection::vec(-1.0f64..1.0, 8),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let (xl, xr) = x.split_at(4);
            let (yl, yr) = y.split_at(4);
            let cx = stereo(xl.to_vec(), xr.to_vec());
            let cy = stereo(yl.to_vec(), yr.to_vec());
            let comb = stereo(
                xl.iter().zip(yl).map(|(p, q)| a * p + b * q).collect(),
                xr.iter().zip(yr).map(|(p, q)| a * p + b * q).collect(),
            );
            let lhs = downmix_mono(&comb);
            let (mx, my) = (downmix_mono(&cx), downmix_mono(&cy));
            for i in 0..4 {
                let rhs = a * mx.samples()[i] + b * my.samples()[i];
                prop_assert!((lhs.samples()[i] - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn normalize_is_idempotent_and_scale_invariant(
            x in prop::collection::vec(-2.0f64..2.0, 1..32),
            c in 0.01f64..100.0,
        ) {
            let clip = AudioClip::mono(x.clone(), 16000).unwrap();
            let n1 = normalize_amplitude(&clip);
            let n2 = normalize_amplitude(&n1);
            let scaled = AudioClip::mono(x.iter().map(|v| v * c).collect(), 16000).unwrap();
            let ns = normalize_amplitude(&scaled);
            prop_assert!(n1.peak() <= 1.0);
            for i in 0..x.len() {
                prop_assert!((n1.samples()[i] - n2.samples()[i]).abs() < 1e-12);
                prop_assert!((n1.samples()[i] - ns.samples()[i]).abs() < 1e-12);
            }
            if x.iter().any(|v| *v != 0.0) {
                prop_assert!((n1.peak() - 1.0).abs() < 1e-15);
            }
        }
    }
}
