//! Batch normalization over the last (channel) axis.

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

pub(crate) struct BnTrainOut {
    pub y: Vec<f64>,
    pub xhat: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Normalizes with batch statistics (biased variance).
pub(crate) fn train_forward(x: &[f64], c: usize, gain: &[f64], shift: &[f64]) -> BnTrainOut {
    let m = (x.len() / c) as f64;
    let mut mean = vec![0.0; c];
    for row in x.chunks_exact(c) {
        mean.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    mean.iter_mut().for_each(|a| *a /= m);
    let mut var = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - mu;
            *a += d * d;
        }
    }
    var.iter_mut().for_each(|a| *a /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for ((xr, hr), yr) in x.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(y.chunks_exact_mut(c)) {
        for ch in 0..c {
            let h = (xr[ch] - mean[ch]) * inv_std[ch];
            hr[ch] = h;
            yr[ch] = gain[ch] * h + shift[ch];
        }
    }
    BnTrainOut { y, xhat, mean, var, inv_std }
}

pub(crate) fn eval_forward(x: &[f64], c: usize, gain: &[f64], shift: &[f64], mean: &[f64], var: &[f64]) -> Vec<f64> {
    let scale: Vec<f64> = (0..c).map(|ch| gain[ch] / (var[ch] + BN_EPSILON).sqrt()).collect();
    let mut y = vec![0.0; x.len()];
    for (xr, yr) in x.chunks_exact(c).zip(y.chunks_exact_mut(c)) {
        for ch in 0..c {
            yr[ch] = (xr[ch] - mean[ch]) * scale[ch] + shift[ch];
        }
    }
    y
}

/// Returns `(dx, dgain, dshift)`.
pub(crate) fn backward(dy: &[f64], xhat: &[f64], inv_std: &[f64], gain: &[f64], c: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let m = (dy.len() / c) as f64;
    let mut dshift = vec![0.0; c];
    let mut dgain = vec![0.0; c];
    for (dr, hr) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            dshift[ch] += dr[ch];
            dgain[ch] += dr[ch] * hr[ch];
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for ((xr, dr), hr) in dx.chunks_exact_mut(c).zip(dy.chunks_exact(c)).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            xr[ch] = gain[ch] * inv_std[ch] / m * (m * dr[ch] - dshift[ch] - hr[ch] * dgain[ch]);
        }
    }
    (dx, dgain, dshift)
}
