//! Non-overlapping max pooling and global average pooling over NHWC batches.

use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub ph: usize,
    pub pw: usize,
}

impl PoolGeom {
    pub fn oh(&self) -> usize {
        self.h / self.ph
    }

    pub fn ow(&self) -> usize {
        self.w / self.pw
    }

    pub fn in_len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn out_len(&self) -> usize {
        self.oh() * self.ow() * self.c
    }
}

/// Returns pooled values and, per output, the offset of the winning input
/// within its sample (first maximum in scan order).
pub(crate) fn max_forward(exec: Exec, g: PoolGeom, x: &[f64], n: usize) -> (Vec<f64>, Vec<u32>) {
    let mut out = vec![0.0; n * g.out_len()];
    let mut arg = vec![0u32; n * g.out_len()];
    let rows = exec.map(n, |s| {
        let xs = &x[s * g.in_len()..(s + 1) * g.in_len()];
        let mut vals = Vec::with_capacity(g.out_len());
        let mut idx = Vec::with_capacity(g.out_len());
        for oy in 0..g.oh() {
            for ox in 0..g.ow() {
                for ch in 0..g.c {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0usize;
                    for i in 0..g.ph {
                        for j in 0..g.pw {
                            let p = ((oy * g.ph + i) * g.w + ox * g.pw + j) * g.c + ch;
                            if xs[p] > best {
                                best = xs[p];
                                at = p;
                            }
                        }
                    }
                    vals.push(best);
                    idx.push(at as u32);
                }
            }
        }
        (vals, idx)
    });
    for (s, (v, i)) in rows.into_iter().enumerate() {
        out[s * g.out_len()..(s + 1) * g.out_len()].copy_from_slice(&v);
        arg[s * g.out_len()..(s + 1) * g.out_len()].copy_from_slice(&i);
    }
    (out, arg)
}

pub(crate) fn max_backward(g: PoolGeom, arg: &[u32], dy: &[f64], n: usize) -> Vec<f64> {
    let mut dx = vec![0.0; n * g.in_len()];
    for s in 0..n {
        let dxs = &mut dx[s * g.in_len()..(s + 1) * g.in_len()];
        let base = s * g.out_len();
        for o in 0..g.out_len() {
            dxs[arg[base + o] as usize] += dy[base + o];
        }
    }
    dx
}

/// Mean over `spatial` positions for each of `c` channels.
pub(crate) fn gap_forward(x: &[f64], n: usize, spatial: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for s in 0..n {
        let acc = &mut out[s * c..(s + 1) * c];
        for px in x[s * spatial * c..(s + 1) * spatial * c].chunks_exact(c) {
            acc.iter_mut().zip(px).for_each(|(a, v)| *a += v);
        }
        acc.iter_mut().for_each(|a| *a /= spatial as f64);
    }
    out
}

pub(crate) fn gap_backward(dy: &[f64], n: usize, spatial: usize, c: usize) -> Vec<f64> {
    let mut dx = vec![0.0; n * spatial * c];
    let scale = 1.0 / spatial as f64;
    for s in 0..n {
        let g = &dy[s * c..(s + 1) * c];
        for px in dx[s * spatial * c..(s + 1) * spatial * c].chunks_exact_mut(c) {
            px.iter_mut().zip(g).for_each(|(d, v)| *d = v * scale);
        }
    }
    dx
}
