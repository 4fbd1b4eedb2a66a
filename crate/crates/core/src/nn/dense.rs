//! Fully connected layer: `y = x W^T + b`, weights `[out, in]`.

use super::gemm::gemm;
use crate::par::Exec;

/// Rows per GEMM block; fixed so results do not depend on thread count.
const ROW_BLOCK: usize = 32;

pub(crate) fn forward(exec: Exec, x: &[f64], n: usize, inp: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    let mut y = vec![0.0; n * out];
    exec.for_chunks(&mut y, ROW_BLOCK * out, |blk, ys| {
        let rows = ys.len() / out;
        let xs = &x[blk * ROW_BLOCK * inp..][..rows * inp];
        for r in ys.chunks_exact_mut(out) {
            r.copy_from_slice(b);
        }
        gemm(rows, inp, out, xs, (inp, 1), w, (1, inp), 1.0, ys, (out, 1));
    });
    y
}

/// Returns `(dx, dw, db)`; `dx` is empty unless requested.
pub(crate) fn backward(
    exec: Exec,
    x: &[f64],
    n: usize,
    inp: usize,
    w: &[f64],
    dy: &[f64],
    need_dx: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let out = dy.len() / n;
    let mut dw = vec![0.0; out * inp];
    // dw[out x in] = dy^T[out x n] * x[n x in], blocked over output rows
    exec.for_chunks(&mut dw, ROW_BLOCK * inp, |blk, dws| {
        let rows = dws.len() / inp;
        let dys = &dy[blk * ROW_BLOCK..];
        gemm(rows, n, inp, dys, (1, out), x, (inp, 1), 0.0, dws, (inp, 1));
    });
    let mut db = vec![0.0; out];
    for r in dy.chunks_exact(out) {
        db.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    let mut dx = Vec::new();
    if need_dx {
        dx = vec![0.0; n * inp];
        exec.for_chunks(&mut dx, ROW_BLOCK * inp, |blk, dxs| {
            let rows = dxs.len() / inp;
            let dys = &dy[blk * ROW_BLOCK * out..][..rows * out];
            gemm(rows, out, inp, dys, (out, 1), w, (inp, 1), 0.0, dxs, (inp, 1));
        });
    }
    (dx, dw, db)
}
