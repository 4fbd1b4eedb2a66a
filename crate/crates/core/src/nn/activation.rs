//! ReLU, inverted dropout and softmax.

use rand::Rng;

pub(crate) fn relu_forward(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Gradient through a ReLU given its output.
pub(crate) fn relu_backward(y: &[f64], dy: &mut [f64]) {
    dy.iter_mut().zip(y).for_each(|(d, v)| {
        if *v <= 0.0 {
            *d = 0.0
        }
    });
}

/// Per-element multipliers: 0 with probability `rate`, else `1 / (1 - rate)`.
pub(crate) fn dropout_mask<R: Rng>(rng: &mut R, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Row-wise max-subtracted softmax over rows of length `c`.
pub(crate) fn softmax_rows(x: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (xr, yr) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        let mx = xr.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut sum = 0.0;
        for (y, v) in yr.iter_mut().zip(xr) {
            *y = (v - mx).exp();
            sum += *y;
        }
        yr.iter_mut().for_each(|y| *y /= sum);
    }
    out
}

/// Vector-Jacobian product of softmax: `y * (dy - <dy, y>)` per row.
pub(crate) fn softmax_backward(y: &[f64], dy: &[f64], c: usize) -> Vec<f64> {
    let mut dx = vec![0.0; y.len()];
    for ((yr, gr), dr) in y.chunks_exact(c).zip(dy.chunks_exact(c)).zip(dx.chunks_exact_mut(c)) {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for i in 0..c {
            dr[i] = yr[i] * (gr[i] - dot);
        }
    }
    dx
}
