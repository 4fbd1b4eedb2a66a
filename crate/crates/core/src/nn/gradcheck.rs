//! Central finite-difference checks of [`Network::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Network, ParamRole, Tensor};

pub const STEP: f64 = 1e-5;

fn loss(net: &mut Network, x: &Tensor, r: &[f64], seed: u64) -> f64 {
    let out = net.forward_train(x, seed).unwrap();
    out.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Denominator floor: gradients that are exactly zero (a bias feeding batch
/// norm) are compared against finite-difference noise of about 1e-10.
pub const FLOOR: f64 = 1e-5;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Uniform `[-1, 1)` entries from a seeded generator.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Largest relative error between analytic and numeric gradients over up to
/// `per_param` entries of every trainable tensor and of the input. The loss
/// is a fixed random projection of the network output. Parameters are
/// jittered first.
pub fn max_relative_error(net: &mut Network, x: &Tensor, per_param: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // zero biases put pre-activations exactly on ReLU kinks
    for pi in 0..net.params().len() {
        if net.params().get(pi).role == ParamRole::Trainable {
            net.params_mut().value_mut(pi).iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
    }
    let out_len = x.batch() * net.output_shape().iter().product::<usize>();
    let r: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = net.forward_train(x, seed).unwrap();
    let grads = net.backward(&Tensor::new(out.shape().to_vec(), r.clone()).unwrap()).unwrap();

    let mut worst: f64 = 0.0;
    for pi in 0..net.params().len() {
        if net.params().get(pi).role != ParamRole::Trainable {
            continue;
        }
        let len = net.params().get(pi).value.len();
        let picks: Vec<usize> =
            if len <= per_param { (0..len).collect() } else { (0..per_param).map(|_| rng.random_range(0..len)).collect() };
        for j in picks {
            let orig = net.params().value(pi)[j];
            net.params_mut().value_mut(pi)[j] = orig + STEP;
            let up = loss(net, x, &r, seed);
            net.params_mut().value_mut(pi)[j] = orig - STEP;
            let down = loss(net, x, &r, seed);
            net.params_mut().value_mut(pi)[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let e = rel(grads.param(pi)[j], numeric);
            worst = worst.max(e);
        }
    }
    let mut xp = x.clone();
    for _ in 0..per_param {
        let j = rng.random_range(0..x.len());
        let orig = xp.data()[j];
        xp.data_mut()[j] = orig + STEP;
        let up = loss(net, &xp, &r, seed);
        xp.data_mut()[j] = orig - STEP;
        let down = loss(net, &xp, &r, seed);
        xp.data_mut()[j] = orig;
        let e = rel(grads.input().data()[j], (up - down) / (2.0 * STEP));
        worst = worst.max(e);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, NnError};

    fn check(layers: Vec<LayerSpec>, input: &[usize], batch: usize) {
        let mut net = Network::new(layers.clone(), input, 7).unwrap();
        let mut shape = vec![batch];
        shape.extend_from_slice(input);
        let x = random_tensor(&shape, 8);
        let e = max_relative_error(&mut net, &x, 40, 9);
        assert!(e < 1e-4, "{layers:?}: relative error {e}");
    }

    #[test]
    fn each_layer_in_isolation() {
        check(vec![LayerSpec::Conv2d { filters: 3, kh: 3, kw: 3 }], &[5, 4, 2], 2);
        check(vec![LayerSpec::Conv2d { filters: 2, kh: 1, kw: 1 }], &[3, 3, 3], 2);
        check(vec![LayerSpec::Conv1d { filters: 3, k: 5 }], &[7, 2], 2);
        check(vec![LayerSpec::BatchNorm], &[3, 2, 3], 4);
        check(vec![LayerSpec::Relu], &[4, 3], 2);
        check(vec![LayerSpec::MaxPool2d { ph: 3, pw: 2 }], &[7, 5, 2], 2);
        check(vec![LayerSpec::MaxPool1d { p: 3 }], &[8, 2], 2);
        check(vec![LayerSpec::GlobalAvgPool], &[3, 4, 2], 2);
        check(vec![LayerSpec::Flatten, LayerSpec::Dense { units: 4 }], &[2, 3, 2], 3);
        check(vec![LayerSpec::Dense { units: 5 }], &[6], 3);
        check(vec![LayerSpec::Dropout { rate: 0.5 }], &[10], 3);
        check(vec![LayerSpec::Dense { units: 4 }, LayerSpec::Softmax, LayerSpec::Dense { units: 3 }], &[5], 2);
        check(vec![LayerSpec::Fire { squeeze: 2, expand: 3 }], &[4, 3, 4], 2);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let layers = vec![
            LayerSpec::Conv2d { filters: 2, kh: 3, kw: 3 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3 },
        ];
        let mut net = Network::new(layers, &[4, 4, 1], 1).unwrap();
        let x = random_tensor(&[3, 4, 4, 1], 2);
        let out = net.forward_train(&x, 3).unwrap();
        let g = net.backward(&Tensor::zeros(out.shape())).unwrap();
        for i in 0..g.len() {
            assert!(g.param(i).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn duplicated_sample_doubles_its_contribution() {
        let layers = vec![
            LayerSpec::Conv2d { filters: 2, kh: 3, kw: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { ph: 2, pw: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3 },
        ];
        let mut net = Network::new(layers, &[4, 4, 1], 4).unwrap();
        let x = random_tensor(&[1, 4, 4, 1], 5);
        let dy = random_tensor(&[1, 3], 6);
        net.forward_train(&x, 0).unwrap();
        let single = net.backward(&dy).unwrap();
        let x2 = Tensor::stack(&[x.item(0), x.item(0)], &[4, 4, 1]).unwrap();
        let dy2 = Tensor::stack(&[dy.item(0), dy.item(0)], &[3]).unwrap();
        net.forward_train(&x2, 0).unwrap();
        let double = net.backward(&dy2).unwrap();
        for i in 0..single.len() {
            for (a, b) in single.param(i).iter().zip(double.param(i)) {
                assert!((2.0 * a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_needs_a_forward_pass() {
        let mut net = Network::new(vec![LayerSpec::Dense { units: 2 }], &[3], 0).unwrap();
        let r = net.backward(&Tensor::zeros(&[1, 2]));
        assert!(matches!(r, Err(NnError::State(_))));
        net.forward_train(&Tensor::zeros(&[1, 3]), 0).unwrap();
        net.backward(&Tensor::zeros(&[1, 2])).unwrap();
        assert!(matches!(net.backward(&Tensor::zeros(&[1, 2])), Err(NnError::State(_))));
    }
}
