//! Stand-alone layer operations on single samples or leading-batch tensors.

use rand::Rng;

use super::activation::{dropout_mask, softmax_rows};
use super::conv::{self, ConvGeom};
use super::norm::{self, BN_MOMENTUM};
use super::pool::{self, PoolGeom};
use super::{NnError, Tensor};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Splits a tensor of per-sample rank `rank` (optionally with a leading
/// batch axis) into `(batch, sample_shape)`.
fn unbatch(x: &Tensor, rank: usize, what: &str) -> Result<(usize, Vec<usize>), NnError> {
    let s = x.shape();
    if s.len() == rank {
        Ok((1, s.to_vec()))
    } else if s.len() == rank + 1 {
        Ok((s[0], s[1..].to_vec()))
    } else {
        Err(NnError::Shape(format!("{what} expects rank {rank} or {}, got {s:?}", rank + 1)))
    }
}

fn rebatch(x: &Tensor, rank: usize, sample: Vec<usize>, data: Vec<f64>) -> Result<Tensor, NnError> {
    let mut shape = sample;
    if x.shape().len() > rank {
        shape.insert(0, x.shape()[0]);
    }
    Tensor::new(shape, data)
}

fn conv_common(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    rank: usize,
    geom: impl Fn(&[usize], &[usize]) -> Result<ConvGeom, NnError>,
) -> Result<Tensor, NnError> {
    let (n, sample) = unbatch(input, rank, "convolution input")?;
    let g = geom(&sample, kernels.shape())?;
    if g.kh % 2 == 0 || g.kw % 2 == 0 {
        return Err(NnError::Shape(format!("even kernel {:?}", kernels.shape())));
    }
    if bias.shape() != [g.cout] {
        return Err(NnError::Shape(format!("bias {:?} for {} filters", bias.shape(), g.cout)));
    }
    let y = conv::forward(Exec::Sequential, g, input.data(), n, kernels.data(), bias.data());
    let mut out = sample;
    *out.last_mut().unwrap() = g.cout;
    rebatch(input, rank, out, y)
}

/// "Same"-padded stride-1 convolution of `[H, W, Cin]` with kernels
/// `[Cout, kH, kW, Cin]`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    conv_common(input, kernels, bias, 3, |s, k| {
        if k.len() != 4 || k[3] != s[2] {
            return Err(NnError::Shape(format!("kernels {k:?} do not match input channels {}", s[2])));
        }
        Ok(ConvGeom { h: s[0], w: s[1], cin: s[2], cout: k[0], kh: k[1], kw: k[2] })
    })
}

/// "Same"-padded stride-1 convolution of `[T, Cin]` with kernels `[Cout, k, Cin]`.
pub fn conv1d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    conv_common(input, kernels, bias, 2, |s, k| {
        if k.len() != 3 || k[2] != s[1] {
            return Err(NnError::Shape(format!("kernels {k:?} do not match input channels {}", s[1])));
        }
        Ok(ConvGeom { h: s[0], w: 1, cin: s[1], cout: k[0], kh: k[1], kw: 1 })
    })
}

/// Per-channel affine parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            gain: vec![1.0; channels],
            shift: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
        }
    }
}

/// Normalizes over every axis but the last. In train mode the leading axis
/// is taken as the batch and the running statistics are updated.
pub fn batchnorm(input: &Tensor, mode: Mode, state: &mut BatchNormState) -> Result<Tensor, NnError> {
    let c = *input.shape().last().unwrap();
    if state.gain.len() != c || state.shift.len() != c || state.running_mean.len() != c || state.running_var.len() != c
    {
        return Err(NnError::Shape(format!("batch-norm state does not have {c} channels")));
    }
    let y = match mode {
        Mode::Train => {
            if input.len() / c < 1 {
                return Err(NnError::Argument("empty batch".into()));
            }
            let out = norm::train_forward(input.data(), c, &state.gain, &state.shift);
            let m = state.momentum;
            for (r, b) in state.running_mean.iter_mut().zip(&out.mean) {
                *r = m * *r + (1.0 - m) * b;
            }
            for (r, b) in state.running_var.iter_mut().zip(&out.var) {
                *r = m * *r + (1.0 - m) * b;
            }
            out.y
        }
        Mode::Eval => norm::eval_forward(
            input.data(),
            c,
            &state.gain,
            &state.shift,
            &state.running_mean,
            &state.running_var,
        ),
    };
    Tensor::new(input.shape().to_vec(), y)
}

fn pool_common(input: &Tensor, rank: usize, ph: usize, pw: usize) -> Result<Tensor, NnError> {
    let (n, s) = unbatch(input, rank, "pooling input")?;
    let (h, w) = if rank == 3 { (s[0], s[1]) } else { (s[0], 1) };
    if ph == 0 || pw == 0 || ph > h || pw > w {
        return Err(NnError::Shape(format!("pool window {ph}x{pw} does not fit {s:?}")));
    }
    let g = PoolGeom { h, w, c: s[rank - 1], ph, pw };
    let (y, _) = pool::max_forward(Exec::Sequential, g, input.data(), n);
    let out = if rank == 3 { vec![g.oh(), g.ow(), g.c] } else { vec![g.oh(), g.c] };
    rebatch(input, rank, out, y)
}

/// Non-overlapping max pooling of `[H, W, C]`; remainders are dropped.
pub fn maxpool2d(input: &Tensor, window: (usize, usize)) -> Result<Tensor, NnError> {
    pool_common(input, 3, window.0, window.1)
}

/// Non-overlapping max pooling of `[T, C]` along time.
pub fn maxpool1d(input: &Tensor, window: usize) -> Result<Tensor, NnError> {
    pool_common(input, 2, window, 1)
}

/// Mean over all spatial positions of a single `[..., C]` sample.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor, NnError> {
    let s = input.shape();
    let c = *s.last().unwrap();
    let y = pool::gap_forward(input.data(), 1, input.len() / c, c);
    Tensor::new(vec![c], y)
}

/// `weights · input + bias` for weights `[m, n]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (n, s) = unbatch(input, 1, "dense input")?;
    let w = weights.shape();
    if w.len() != 2 || w[1] != s[0] || bias.shape() != [w[0]] {
        return Err(NnError::Shape(format!(
            "weights {w:?} and bias {:?} do not fit input {s:?}",
            bias.shape()
        )));
    }
    let y = super::dense::forward(Exec::Sequential, input.data(), n, s[0], weights.data(), bias.data());
    rebatch(input, 1, vec![w[0]], y)
}

/// Inverted dropout; identity in eval mode.
pub fn dropout<R: Rng>(input: &Tensor, rate: f64, mode: Mode, rng: &mut R) -> Result<Tensor, NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::Argument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(input.clone());
    }
    let mask = dropout_mask(rng, input.len(), rate);
    let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Max-subtracted softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_rows(logits, logits.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop "same" convolution.
    fn naive_conv2d(x: &Tensor, k: &Tensor, b: &Tensor) -> Vec<f64> {
        let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (cout, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
        let mut out = vec![0.0; h * w * cout];
        for y in 0..h {
            for xx in 0..w {
                for c in 0..cout {
                    let mut acc = b.data()[c];
                    for i in 0..kh {
                        for j in 0..kw {
                            let (sy, sx) = (y as isize + i as isize - ph as isize, xx as isize + j as isize - pw as isize);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for d in 0..cin {
                                acc += x.data()[(sy as usize * w + sx as usize) * cin + d]
                                    * k.data()[((c * kh + i) * kw + j) * cin + d];
                            }
                        }
                    }
                    out[(y * w + xx) * cout + c] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_shape_on_lenet_input() {
        let x = Tensor::zeros(&[111, 64, 1]);
        let y = conv2d(&x, &Tensor::zeros(&[8, 3, 3, 1]), &Tensor::zeros(&[8])).unwrap();
        assert_eq!(y.shape(), [111, 64, 8]);
    }

    #[test]
    fn conv2d_identity_kernel() {
        let x = random(&[6, 5, 2], 1);
        let mut k = Tensor::zeros(&[2, 3, 3, 2]);
        for c in 0..2 {
            k.data_mut()[((c * 3 + 1) * 3 + 1) * 2 + c] = 1.0;
        }
        let y = conv2d(&x, &k, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv2d_matches_nested_loops() {
        let x = random(&[5, 5, 2], 2);
        let k = random(&[3, 3, 3, 2], 3);
        let b = random(&[3], 4);
        let y = conv2d(&x, &k, &b).unwrap();
        for (a, e) in y.data().iter().zip(naive_conv2d(&x, &k, &b)) {
            assert!((a - e).abs() < 1e-12);
        }
        let k = random(&[4, 5, 3, 2], 5);
        let b = random(&[4], 6);
        let x = random(&[7, 4, 2], 7);
        let y = conv2d(&x, &k, &b).unwrap();
        for (a, e) in y.data().iter().zip(naive_conv2d(&x, &k, &b)) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_batched_matches_single() {
        let x = random(&[3, 4, 6, 2], 8);
        let k = random(&[5, 3, 3, 2], 9);
        let b = random(&[5], 10);
        let y = conv2d(&x, &k, &b).unwrap();
        assert_eq!(y.shape(), [3, 4, 6, 5]);
        for s in 0..3 {
            let xs = Tensor::new(vec![4, 6, 2], x.item(s).to_vec()).unwrap();
            assert_eq!(conv2d(&xs, &k, &b).unwrap().data(), y.item(s));
        }
    }

    #[test]
    fn conv2d_channel_mismatch() {
        let r = conv2d(&Tensor::zeros(&[4, 4, 2]), &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1]));
        assert!(matches!(r, Err(NnError::Shape(_))));
    }

    #[test]
    fn conv1d_cases() {
        let y = conv1d(&Tensor::zeros(&[111, 64]), &Tensor::zeros(&[64, 5, 64]), &Tensor::zeros(&[64])).unwrap();
        assert_eq!(y.shape(), [111, 64]);

        let x = random(&[9, 3], 11);
        let mut k = Tensor::zeros(&[3, 1, 3]);
        for c in 0..3 {
            k.data_mut()[c * 3 + c] = 1.0;
        }
        assert_eq!(conv1d(&x, &k, &Tensor::zeros(&[3])).unwrap().data(), x.data());

        let k = random(&[2, 5, 3], 12);
        let b = random(&[2], 13);
        let y = conv1d(&x, &k, &b).unwrap();
        for t in 0..9 {
            for c in 0..2 {
                let mut acc = b.data()[c];
                for i in 0..5 {
                    let st = t as isize + i as isize - 2;
                    if (0..9).contains(&st) {
                        for d in 0..3 {
                            acc += x.data()[st as usize * 3 + d] * k.data()[(c * 5 + i) * 3 + d];
                        }
                    }
                }
                assert!((y.data()[t * 2 + c] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batchnorm_train_standardizes() {
        let x = random(&[16, 3, 4], 14);
        let mut st = BatchNormState::new(4);
        let y = batchnorm(&x, Mode::Train, &mut st).unwrap();
        for c in 0..4 {
            let vals: Vec<f64> = y.data().iter().skip(c).step_by(4).copied().collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
        assert!(st.running_mean.iter().any(|m| *m != 0.0));
    }

    #[test]
    fn batchnorm_constant_channel_gives_shift() {
        let x = Tensor::filled(&[8, 2], 3.5);
        let mut st = BatchNormState::new(2);
        st.shift = vec![0.25, -1.0];
        let y = batchnorm(&x, Mode::Train, &mut st).unwrap();
        for r in y.data().chunks(2) {
            assert_eq!(r, [0.25, -1.0]);
        }
    }

    #[test]
    fn batchnorm_eval_formula() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        let mut st = BatchNormState::new(2);
        st.running_mean = vec![0.5, -1.0];
        st.running_var = vec![4.0, 0.25];
        st.gain = vec![2.0, 1.0];
        st.shift = vec![0.0, 1.0];
        let y = batchnorm(&x, Mode::Eval, &mut st).unwrap();
        let f = |x: f64, m: f64, v: f64, g: f64, b: f64| (x - m) / (v + 1e-5f64).sqrt() * g + b;
        let expect = [
            f(1.0, 0.5, 4.0, 2.0, 0.0),
            f(2.0, -1.0, 0.25, 1.0, 1.0),
            f(-3.0, 0.5, 4.0, 2.0, 0.0),
            f(0.5, -1.0, 0.25, 1.0, 1.0),
        ];
        for (a, e) in y.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(st.running_mean, [0.5, -1.0]);
    }

    #[test]
    fn maxpool_shapes_and_values() {
        let y = maxpool2d(&Tensor::zeros(&[111, 64, 8]), (3, 2)).unwrap();
        assert_eq!(y.shape(), [37, 32, 8]);
        let y = maxpool2d(&Tensor::zeros(&[37, 32, 16]), (3, 2)).unwrap();
        assert_eq!(y.shape(), [12, 16, 16]);

        // 4x4 single channel, 2x2 windows, max placed deliberately
        let x = Tensor::new(
            vec![4, 4, 1],
            vec![1., 9., 0., 0., 2., 3., 0., 7., -1., -2., 5., 5., -3., -4., 5., 1.],
        )
        .unwrap();
        assert_eq!(maxpool2d(&x, (2, 2)).unwrap().data(), [9., 7., -1., 5.]);
        assert!(matches!(maxpool2d(&x, (5, 1)), Err(NnError::Shape(_))));

        let x = Tensor::new(vec![7, 1], vec![1., 3., 2., 0., -1., -5., 8.]).unwrap();
        assert_eq!(maxpool1d(&x, 3).unwrap().data(), [3., 0.]);
    }

    #[test]
    fn global_avg_pool_cases() {
        let y = global_avg_pool(&Tensor::filled(&[13, 8, 15], 0.75)).unwrap();
        assert_eq!(y.shape(), [15]);
        assert!(y.data().iter().all(|v| (*v - 0.75).abs() < 1e-15));
        let x = Tensor::new(vec![2, 2, 1], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), [2.5]);
    }

    #[test]
    fn dense_cases() {
        let y = dense(&Tensor::zeros(&[6144]), &Tensor::zeros(&[512, 6144]), &Tensor::zeros(&[512])).unwrap();
        assert_eq!(y.shape(), [512]);
        let x = Tensor::new(vec![3], vec![1., -2., 4.]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        assert_eq!(dense(&x, &eye, &Tensor::zeros(&[3])).unwrap().data(), x.data());
        let x = Tensor::new(vec![2], vec![1., 2.]).unwrap();
        let w = Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::new(vec![2], vec![0.5, -0.5]).unwrap();
        assert_eq!(dense(&x, &w, &b).unwrap().data(), [5.5, 10.5]);
        assert!(dense(&x, &Tensor::zeros(&[2, 3]), &b).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random(&[10, 10], 16);
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap(), x);

        let ones = Tensor::filled(&[1_000_000], 1.0);
        let y = dropout(&ones, 0.5, Mode::Train, &mut rng).unwrap();
        let survivors = y.data().iter().filter(|v| **v != 0.0).count();
        let frac = survivors as f64 / 1e6;
        assert!((frac - 0.5).abs() < 0.002, "{frac}");
        assert!(y.data().iter().all(|v| *v == 0.0 || *v == 2.0));
    }

    #[test]
    fn softmax_cases() {
        assert!(softmax(&[0.0; 15]).iter().all(|p| (p - 1.0 / 15.0).abs() < 1e-15));
        let mut l = vec![0.0; 15];
        l[0] = 1.0;
        let p = softmax(&l);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 14.0)).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn softmax_on_simplex_and_shift_invariant(
            l in proptest::collection::vec(-10.0f64..10.0, 15),
            c in -100.0f64..100.0,
        ) {
            let p = softmax(&l);
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
            let shifted: Vec<f64> = l.iter().map(|v| v + c).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
