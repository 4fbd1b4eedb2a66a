//! Deterministic synthetic clips: pure tones and band-limited noise.

use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::AudioClip;

pub fn tone(freq: f64, amp: f64, phase: f64, rate: u32, len: usize) -> Vec<f64> {
    let w = 2.0 * PI * freq / rate as f64;
    (0..len).map(|n| amp * (w * n as f64 + phase).sin()).collect()
}

/// Noise with a flat magnitude spectrum between `lo` and `hi` Hz and random
/// phases, scaled to RMS `rms`.
pub fn band_noise<R: Rng>(rng: &mut R, lo: f64, hi: f64, rms: f64, rate: u32, len: usize) -> Vec<f64> {
    let mut spec = vec![Complex::new(0.0, 0.0); len];
    let bin_hz = rate as f64 / len as f64;
    for k in 1..len.div_ceil(2) {
        let f = k as f64 * bin_hz;
        if f >= lo && f <= hi {
            let ph = rng.random_range(0.0..2.0 * PI);
            spec[k] = Complex::from_polar(1.0, ph);
            spec[len - k] = spec[k].conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut spec);
    let x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let scale = if cur > 0.0 { rms / cur } else { 0.0 };
    x.into_iter().map(|v| v * scale).collect()
}

pub fn mix(parts: &[Vec<f64>]) -> Vec<f64> {
    let len = parts.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = vec![0.0; len];
    for p in parts {
        out.iter_mut().zip(p).for_each(|(o, v)| *o += v);
    }
    out
}

/// A frequency band used as one cue: either a tone at a random frequency
/// inside it, or noise filling it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn render<R: Rng>(self, rng: &mut R, as_tone: bool, rate: u32, len: usize) -> Vec<f64> {
        let amp = rng.random_range(0.2..0.5);
        if as_tone {
            let f = rng.random_range(self.lo + 0.2 * (self.hi - self.lo)..self.hi - 0.2 * (self.hi - self.lo));
            tone(f, amp, rng.random_range(0.0..2.0 * PI), rate, len)
        } else {
            band_noise(rng, self.lo, self.hi, amp / 2f64.sqrt(), rate, len)
        }
    }
}

/// A ten-second clip of one cue per band; `tones[i]` selects tone or noise
/// for `bands[i]`.
pub fn cue_clip<R: Rng>(rng: &mut R, bands: &[Band], tones: &[bool], rate: u32) -> AudioClip {
    let len = rate as usize * crate::features::CLIP_SECONDS;
    let parts: Vec<Vec<f64>> = bands.iter().zip(tones).map(|(b, t)| b.render(rng, *t, rate, len)).collect();
    AudioClip::mono(mix(&parts), rate).expect("valid synthetic clip")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noise_stays_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = band_noise(&mut rng, 1000.0, 2000.0, 0.1, 8000, 8000);
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / 8000.0).sqrt();
        assert!((rms - 0.1).abs() < 1e-12);
        // direct DFT energy outside the band is negligible
        let energy = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in x.iter().enumerate() {
                let a = 2.0 * PI * f * n as f64 / 8000.0;
                re += v * a.cos();
                im -= v * a.sin();
            }
            re * re + im * im
        };
        assert!(energy(500.0) < 1e-12 * energy(1500.0).max(1.0));
        assert!(energy(1500.0) > 1e-3);
    }

    #[test]
    fn clips_are_seeded() {
        let bands = [Band { lo: 300.0, hi: 900.0 }];
        let a = cue_clip(&mut ChaCha8Rng::seed_from_u64(3), &bands, &[true], 16000);
        let b = cue_clip(&mut ChaCha8Rng::seed_from_u64(3), &bands, &[true], 16000);
        assert_eq!(a, b);
        assert_eq!(a.len(), 160_000);
    }
}
