//! "Same"-padded, stride-1 convolution over NHWC batches via im2col + GEMM.
//!
//! Kernels are laid out `[cout, kh, kw, cin]`. A 1-D convolution over
//! `[N, T, C]` is the same computation with `w = kw = 1`.

use super::gemm::gemm;
use crate::par::Exec;

/// Samples per partial weight-gradient accumulator. Fixed so the reduction
/// order never depends on the thread count.
const SAMPLE_GROUP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    /// Length of one im2col row.
    pub fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn in_len(&self) -> usize {
        self.pixels() * self.cin
    }

    pub fn out_len(&self) -> usize {
        self.pixels() * self.cout
    }

    pub fn kernel_len(&self) -> usize {
        self.cout * self.patch()
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let patch = self.patch();
        for oy in 0..self.h {
            for ox in 0..self.w {
                let row = &mut cols[(oy * self.w + ox) * patch..][..patch];
                for i in 0..self.kh {
                    let iy = oy as isize + i as isize - ph as isize;
                    for j in 0..self.kw {
                        let ix = ox as isize + j as isize - pw as isize;
                        let dst = &mut row[(i * self.kw + j) * self.cin..][..self.cin];
                        if iy < 0 || ix < 0 || iy >= self.h as isize || ix >= self.w as isize {
                            dst.fill(0.0);
                        } else {
                            let src = (iy as usize * self.w + ix as usize) * self.cin;
                            dst.copy_from_slice(&x[src..src + self.cin]);
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let patch = self.patch();
        for oy in 0..self.h {
            for ox in 0..self.w {
                let row = &cols[(oy * self.w + ox) * patch..][..patch];
                for i in 0..self.kh {
                    let iy = oy as isize + i as isize - ph as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for j in 0..self.kw {
                        let ix = ox as isize + j as isize - pw as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        let src = &row[(i * self.kw + j) * self.cin..][..self.cin];
                        let at = (iy as usize * self.w + ix as usize) * self.cin;
                        for (d, s) in dx[at..at + self.cin].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass for `n` samples packed in `x`.
pub(crate) fn forward(exec: Exec, g: ConvGeom, x: &[f64], n: usize, kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), n * g.in_len());
    debug_assert_eq!(kernel.len(), g.kernel_len());
    let mut out = vec![0.0; n * g.out_len()];
    let (hw, k, cout) = (g.pixels(), g.patch(), g.cout);
    exec.for_chunks(&mut out, g.out_len(), |s, y| {
        let xs = &x[s * g.in_len()..(s + 1) * g.in_len()];
        for px in y.chunks_exact_mut(cout) {
            px.copy_from_slice(bias);
        }
        if g.pointwise() {
            gemm(hw, k, cout, xs, (k, 1), kernel, (1, k), 1.0, y, (cout, 1));
        } else {
            let mut cols = vec![0.0; hw * k];
            g.im2col(xs, &mut cols);
            gemm(hw, k, cout, &cols, (k, 1), kernel, (1, k), 1.0, y, (cout, 1));
        }
    });
    out
}

pub(crate) struct ConvGrads {
    pub dx: Vec<f64>,
    pub dkernel: Vec<f64>,
    pub dbias: Vec<f64>,
}

pub(crate) fn backward(
    exec: Exec,
    g: ConvGeom,
    x: &[f64],
    n: usize,
    kernel: &[f64],
    dy: &[f64],
    need_dx: bool,
) -> ConvGrads {
    let (hw, k, cout) = (g.pixels(), g.patch(), g.cout);
    let groups = n.div_ceil(SAMPLE_GROUP);
    let partials = exec.map(groups, |gi| {
        let mut dk = vec![0.0; g.kernel_len()];
        let mut db = vec![0.0; cout];
        let mut cols = if g.pointwise() { Vec::new() } else { vec![0.0; hw * k] };
        for s in gi * SAMPLE_GROUP..((gi + 1) * SAMPLE_GROUP).min(n) {
            let xs = &x[s * g.in_len()..(s + 1) * g.in_len()];
            let dys = &dy[s * g.out_len()..(s + 1) * g.out_len()];
            let patches: &[f64] = if g.pointwise() {
                xs
            } else {
                g.im2col(xs, &mut cols);
                &cols
            };
            // dk[cout x k] += dy^T[cout x hw] * patches[hw x k]
            gemm(cout, hw, k, dys, (1, cout), patches, (k, 1), 1.0, &mut dk, (k, 1));
            for px in dys.chunks_exact(cout) {
                for (b, d) in db.iter_mut().zip(px) {
                    *b += d;
                }
            }
        }
        (dk, db)
    });
    let mut parts = partials.into_iter();
    let (mut dkernel, mut dbias) = parts.next().unwrap_or_else(|| (vec![0.0; g.kernel_len()], vec![0.0; cout]));
    for (dk, db) in parts {
        dkernel.iter_mut().zip(&dk).for_each(|(a, b)| *a += b);
        dbias.iter_mut().zip(&db).for_each(|(a, b)| *a += b);
    }

    let mut dx = Vec::new();
    if need_dx {
        dx = vec![0.0; n * g.in_len()];
        exec.for_chunks(&mut dx, g.in_len(), |s, dxs| {
            let dys = &dy[s * g.out_len()..(s + 1) * g.out_len()];
            if g.pointwise() {
                gemm(hw, cout, k, dys, (cout, 1), kernel, (k, 1), 0.0, dxs, (k, 1));
            } else {
                let mut dcols = vec![0.0; hw * k];
                gemm(hw, cout, k, dys, (cout, 1), kernel, (k, 1), 0.0, &mut dcols, (k, 1));
                g.col2im_add(&dcols, dxs);
            }
        });
    }
    ConvGrads { dx, dkernel, dbias }
}
