use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureError, Matrix};
use crate::audio::AudioClip;

/// `1 + floor((len - win) / hop)`, or 0 when the signal is shorter than a window.
pub fn frame_count(len: usize, win: usize, hop: usize) -> usize {
    if len < win {
        0
    } else {
        1 + (len - win) / hop
    }
}

/// Periodic Hann window.
fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Squared-magnitude STFT of a mono clip.
///
/// Frames are `round(window_s * rate)` samples long, start every
/// `round(hop_s * rate)` samples with no centering, are Hann-windowed and
/// zero-padded to the next power of two. Returns `frames x (n_fft / 2 + 1)`.
pub fn power_spectrogram(clip: &AudioClip, window_s: f64, hop_s: f64) -> Result<Matrix, FeatureError> {
    let rate = clip.sample_rate() as f64;
    let win = (window_s * rate).round() as usize;
    let hop = (hop_s * rate).round() as usize;
    if win == 0 || hop == 0 {
        return Err(FeatureError::Argument("window and hop must span at least one sample".into()));
    }
    let x = clip.samples();
    let frames = frame_count(x.len(), win, hop);
    if frames == 0 {
        return Err(FeatureError::Argument(format!(
            "clip of {} samples is shorter than one {win}-sample window",
            x.len()
        )));
    }
    let n_fft = win.next_power_of_two();
    let bins = n_fft / 2 + 1;
    let window = hann(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Matrix::zeros(frames, bins);
    for f in 0..frames {
        let start = f * hop;
        for (b, (s, w)) in buf.iter_mut().zip(x[start..start + win].iter().zip(&window)) {
            *b = Complex::new(s * w, 0.0);
        }
        buf[win..].fill(Complex::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (o, c) in out.row_mut(f).iter_mut().zip(&buf[..bins]) {
            *o = c.norm_sqr();
        }
    }
    Ok(out)
}
