use super::{FeatureError, Matrix};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `n_mels x n_fft_bins`.
///
/// Filter `m` rises from edge point `m` to a peak at point `m + 1` and falls
/// to point `m + 2`, where the `n_mels + 2` points are equally spaced in mel
/// between 0 Hz and Nyquist. Each row is scaled to sum to 1. A filter too
/// narrow to cover any bin gets unit weight on the bin nearest its peak.
pub fn mel_filterbank(n_mels: usize, n_fft_bins: usize, sample_rate: u32) -> Result<Matrix, FeatureError> {
    if n_mels == 0 || n_fft_bins < n_mels + 2 {
        return Err(FeatureError::Argument(format!(
            "{n_fft_bins} FFT bins cannot hold {n_mels} mel filters"
        )));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = nyquist / (n_fft_bins - 1) as f64;

    let mut bank = Matrix::zeros(n_mels, n_fft_bins);
    for m in 0..n_mels {
        let (lo, peak, hi) = (points[m], points[m + 1], points[m + 2]);
        let row = bank.row_mut(m);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            *w = if f > lo && f <= peak {
                (f - lo) / (peak - lo)
            } else if f > peak && f < hi {
                (hi - f) / (hi - peak)
            } else {
                0.0
            };
        }
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|w| *w /= sum);
        } else {
            let k = ((peak / bin_hz).round() as usize).min(n_fft_bins - 1);
            row[k] = 1.0;
        }
    }
    Ok(bank)
}
