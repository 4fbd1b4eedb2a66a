//! A sequential stack of layers with its parameters and training trace.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::{dropout_mask, relu_backward, relu_forward, softmax_backward, softmax_rows};
use super::conv::{self, ConvGeom};
use super::norm::{self, BN_MOMENTUM};
use super::params::glorot;
use super::pool::{self, PoolGeom};
use super::{dense, Gradients, LayerSpec, NnError, ParamRole, ParamStore, Tensor};
use crate::par::Exec;

#[derive(Debug, Clone, Copy)]
struct ConvSlot {
    geom: ConvGeom,
    kernel: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Conv(ConvSlot),
    BatchNorm { c: usize, gain: usize, shift: usize, mean: usize, var: usize },
    Relu,
    MaxPool(PoolGeom),
    Gap { spatial: usize, c: usize },
    Flatten,
    Dense { inp: usize, weight: usize, bias: usize },
    Dropout { rate: f64 },
    Softmax { c: usize },
    Fire { squeeze: ConvSlot, expand1: ConvSlot, expand3: ConvSlot },
}

enum Cache {
    None,
    Input(Vec<f64>),
    Bn { xhat: Vec<f64>, inv_std: Vec<f64> },
    Active(Vec<bool>),
    Pool(Vec<u32>),
    Mask(Vec<f64>),
    Probs(Vec<f64>),
    Fire { x: Vec<f64>, s: Vec<f64>, active: Vec<bool> },
}

struct Trace {
    n: usize,
    caches: Vec<Cache>,
}

pub struct Network {
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    nodes: Vec<Node>,
    params: ParamStore,
    exec: Exec,
    trace: Option<Trace>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("layers", &self.layers)
            .field("input_shape", &self.shapes[0])
            .field("params", &self.params.len())
            .finish()
    }
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            nodes: self.nodes.clone(),
            params: self.params.clone(),
            exec: self.exec,
            trace: None,
        }
    }
}

fn conv_slot(
    params: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    geom: ConvGeom,
    kernel_shape: Vec<usize>,
) -> ConvSlot {
    let field = geom.kh * geom.kw;
    let values = glorot(rng, geom.kernel_len(), field * geom.cin, field * geom.cout);
    let kernel = params.push(
        format!("{name}.kernel"),
        ParamRole::Trainable,
        Tensor::new(kernel_shape, values).expect("kernel shape"),
    );
    let bias = params.push(format!("{name}.bias"), ParamRole::Trainable, Tensor::zeros(&[geom.cout]));
    ConvSlot { geom, kernel, bias }
}

impl Network {
    /// Builds the stack for a per-sample `input_shape` and draws initial
    /// weights from `seed`.
    pub fn new(layers: Vec<LayerSpec>, input_shape: &[usize], seed: u64) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Spec("empty layer list".into()));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NnError::Shape(format!("bad input shape {input_shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut shapes = vec![input_shape.to_vec()];
        let mut nodes = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let inp = shapes[i].clone();
            let out = layer.output_shape(&inp)?;
            let c_in = *inp.last().unwrap();
            let node = match *layer {
                LayerSpec::Conv2d { filters, kh, kw } => {
                    let geom = ConvGeom { h: inp[0], w: inp[1], cin: c_in, cout: filters, kh, kw };
                    Node::Conv(conv_slot(
                        &mut params,
                        &mut rng,
                        &format!("{i}.conv2d"),
                        geom,
                        vec![filters, kh, kw, c_in],
                    ))
                }
                LayerSpec::Conv1d { filters, k } => {
                    let geom = ConvGeom { h: inp[0], w: 1, cin: c_in, cout: filters, kh: k, kw: 1 };
                    Node::Conv(conv_slot(
                        &mut params,
                        &mut rng,
                        &format!("{i}.conv1d"),
                        geom,
                        vec![filters, k, c_in],
                    ))
                }
                LayerSpec::BatchNorm => {
                    let c = c_in;
                    let trainable = ParamRole::Trainable;
                    let gain = params.push(format!("{i}.bn.gain"), trainable, Tensor::filled(&[c], 1.0));
                    let shift = params.push(format!("{i}.bn.shift"), trainable, Tensor::zeros(&[c]));
                    let mean = params.push(format!("{i}.bn.mean"), ParamRole::RunningStat, Tensor::zeros(&[c]));
                    let var =
                        params.push(format!("{i}.bn.var"), ParamRole::RunningStat, Tensor::filled(&[c], 1.0));
                    Node::BatchNorm { c, gain, shift, mean, var }
                }
                LayerSpec::Relu => Node::Relu,
                LayerSpec::MaxPool2d { ph, pw } => {
                    Node::MaxPool(PoolGeom { h: inp[0], w: inp[1], c: c_in, ph, pw })
                }
                LayerSpec::MaxPool1d { p } => Node::MaxPool(PoolGeom { h: inp[0], w: 1, c: c_in, ph: p, pw: 1 }),
                LayerSpec::GlobalAvgPool => Node::Gap { spatial: inp[..inp.len() - 1].iter().product(), c: c_in },
                LayerSpec::Flatten => Node::Flatten,
                LayerSpec::Dense { units } => {
                    let n_in = inp[0];
                    let values = glorot(&mut rng, units * n_in, n_in, units);
                    let weight = params.push(
                        format!("{i}.dense.weight"),
                        ParamRole::Trainable,
                        Tensor::new(vec![units, n_in], values).expect("weight shape"),
                    );
                    let bias = params.push(format!("{i}.dense.bias"), ParamRole::Trainable, Tensor::zeros(&[units]));
                    Node::Dense { inp: n_in, weight, bias }
                }
                LayerSpec::Dropout { rate } => Node::Dropout { rate },
                LayerSpec::Softmax => Node::Softmax { c: c_in },
                LayerSpec::Fire { squeeze, expand } => {
                    let (h, w) = (inp[0], inp[1]);
                    let sq = ConvGeom { h, w, cin: c_in, cout: squeeze, kh: 1, kw: 1 };
                    let e1 = ConvGeom { h, w, cin: squeeze, cout: expand, kh: 1, kw: 1 };
                    let e3 = ConvGeom { h, w, cin: squeeze, cout: expand, kh: 3, kw: 3 };
                    Node::Fire {
                        squeeze: conv_slot(
                            &mut params,
                            &mut rng,
                            &format!("{i}.fire.squeeze"),
                            sq,
                            vec![squeeze, 1, 1, c_in],
                        ),
                        expand1: conv_slot(
                            &mut params,
                            &mut rng,
                            &format!("{i}.fire.expand1"),
                            e1,
                            vec![expand, 1, 1, squeeze],
                        ),
                        expand3: conv_slot(
                            &mut params,
                            &mut rng,
                            &format!("{i}.fire.expand3"),
                            e3,
                            vec![expand, 3, 3, squeeze],
                        ),
                    }
                }
            };
            nodes.push(node);
            shapes.push(out);
        }
        Ok(Self { layers, shapes, nodes, params, exec: Exec::default(), trace: None })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    /// Number of leading layers run during training; a trailing softmax is
    /// folded into the loss instead.
    fn train_depth(&self) -> usize {
        match self.nodes.last() {
            Some(Node::Softmax { .. }) => self.nodes.len() - 1,
            _ => self.nodes.len(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, NnError> {
        if x.shape().len() != self.shapes[0].len() + 1 || x.shape()[1..] != self.shapes[0][..] {
            return Err(NnError::Shape(format!(
                "expected [N, {:?}], got {:?}",
                self.shapes[0],
                x.shape()
            )));
        }
        Ok(x.batch())
    }

    fn batched(&self, n: usize, data: Vec<f64>, depth: usize) -> Tensor {
        let mut shape = vec![n];
        shape.extend_from_slice(&self.shapes[depth]);
        Tensor::new(shape, data).expect("layer output shape")
    }

    /// Inference with running statistics and no dropout. Read-only, so it can
    /// run concurrently on a shared network.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_input(x)?;
        let exec = self.exec;
        let p = &self.params;
        let mut a = x.data().to_vec();
        for node in &self.nodes {
            a = match node {
                Node::Conv(s) => conv::forward(exec, s.geom, &a, n, p.value(s.kernel), p.value(s.bias)),
                Node::BatchNorm { c, gain, shift, mean, var } => {
                    norm::eval_forward(&a, *c, p.value(*gain), p.value(*shift), p.value(*mean), p.value(*var))
                }
                Node::Relu => {
                    relu_forward(&mut a);
                    a
                }
                Node::MaxPool(g) => pool::max_forward(exec, *g, &a, n).0,
                Node::Gap { spatial, c } => pool::gap_forward(&a, n, *spatial, *c),
                Node::Flatten | Node::Dropout { .. } => a,
                Node::Dense { inp, weight, bias } => {
                    dense::forward(exec, &a, n, *inp, p.value(*weight), p.value(*bias))
                }
                Node::Softmax { c } => softmax_rows(&a, *c),
                Node::Fire { squeeze, expand1, expand3 } => {
                    self.fire_forward(&a, n, squeeze, expand1, expand3).0
                }
            };
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("network output".into()));
        }
        Ok(self.batched(n, a, self.nodes.len()))
    }

    fn fire_forward(
        &self,
        x: &[f64],
        n: usize,
        sq: &ConvSlot,
        e1: &ConvSlot,
        e3: &ConvSlot,
    ) -> (Vec<f64>, Vec<f64>) {
        let (exec, p) = (self.exec, &self.params);
        let mut s = conv::forward(exec, sq.geom, x, n, p.value(sq.kernel), p.value(sq.bias));
        relu_forward(&mut s);
        let a1 = conv::forward(exec, e1.geom, &s, n, p.value(e1.kernel), p.value(e1.bias));
        let a3 = conv::forward(exec, e3.geom, &s, n, p.value(e3.kernel), p.value(e3.bias));
        let e = e1.geom.cout;
        let mut out = Vec::with_capacity(2 * a1.len());
        for (l, r) in a1.chunks_exact(e).zip(a3.chunks_exact(e)) {
            out.extend_from_slice(l);
            out.extend_from_slice(r);
        }
        relu_forward(&mut out);
        (out, s)
    }

    /// Training-mode forward pass: batch statistics (running statistics are
    /// updated), dropout masks drawn from `dropout_seed`. Returns the
    /// pre-softmax logits and keeps what `backward` needs.
    pub fn forward_train(&mut self, x: &Tensor, dropout_seed: u64) -> Result<Tensor, NnError> {
        let n = self.check_input(x)?;
        self.trace = None;
        let depth = self.train_depth();
        let exec = self.exec;
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let mut caches = Vec::with_capacity(depth);
        let mut a = x.data().to_vec();
        for i in 0..depth {
            let node = self.nodes[i].clone();
            let p = &mut self.params;
            let (next, cache) = match node {
                Node::Conv(s) => {
                    let y = conv::forward(exec, s.geom, &a, n, p.value(s.kernel), p.value(s.bias));
                    (y, Cache::Input(a))
                }
                Node::BatchNorm { c, gain, shift, mean, var } => {
                    let out = norm::train_forward(&a, c, p.value(gain), p.value(shift));
                    for (slot, batch) in [(mean, &out.mean), (var, &out.var)] {
                        for (r, b) in p.value_mut(slot).iter_mut().zip(batch.iter()) {
                            *r = (BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b) as f32 as f64;
                        }
                    }
                    (out.y, Cache::Bn { xhat: out.xhat, inv_std: out.inv_std })
                }
                Node::Relu => {
                    relu_forward(&mut a);
                    let active = a.iter().map(|v| *v > 0.0).collect();
                    (a, Cache::Active(active))
                }
                Node::MaxPool(g) => {
                    let (y, arg) = pool::max_forward(exec, g, &a, n);
                    (y, Cache::Pool(arg))
                }
                Node::Gap { spatial, c } => (pool::gap_forward(&a, n, spatial, c), Cache::None),
                Node::Flatten => (a, Cache::None),
                Node::Dense { inp, weight, bias } => {
                    let y = dense::forward(exec, &a, n, inp, p.value(weight), p.value(bias));
                    (y, Cache::Input(a))
                }
                Node::Dropout { rate } => {
                    if rate == 0.0 {
                        (a, Cache::None)
                    } else {
                        let mask = dropout_mask(&mut rng, a.len(), rate);
                        a.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                        (a, Cache::Mask(mask))
                    }
                }
                Node::Softmax { c } => {
                    let y = softmax_rows(&a, c);
                    (y.clone(), Cache::Probs(y))
                }
                Node::Fire { squeeze, expand1, expand3 } => {
                    let (y, s) = self.fire_forward(&a, n, &squeeze, &expand1, &expand3);
                    let active = y.iter().map(|v| *v > 0.0).collect();
                    (y, Cache::Fire { x: a, s, active })
                }
            };
            caches.push(cache);
            a = next;
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("training forward output".into()));
        }
        self.trace = Some(Trace { n, caches });
        Ok(self.batched(n, a, depth))
    }

    /// Reverse pass for the most recent [`Network::forward_train`], given the
    /// loss gradient with respect to its output. Parameter gradients are
    /// summed over the batch. The trace is consumed.
    pub fn backward(&mut self, dout: &Tensor) -> Result<Gradients, NnError> {
        let trace = self
            .trace
            .take()
            .ok_or_else(|| NnError::State("backward called without a training forward pass".into()))?;
        let n = trace.n;
        let depth = trace.caches.len();
        let expected = n * self.shapes[depth].iter().product::<usize>();
        if dout.len() != expected || dout.batch() != n {
            return Err(NnError::Shape(format!(
                "output gradient {:?} does not match batch of {n}",
                dout.shape()
            )));
        }
        let exec = self.exec;
        let p = &self.params;
        let mut grads: Vec<Vec<f64>> = p
            .iter()
            .map(|q| if q.role == ParamRole::Trainable { vec![0.0; q.value.len()] } else { Vec::new() })
            .collect();
        let mut d = dout.data().to_vec();
        for (i, cache) in trace.caches.into_iter().enumerate().rev() {
            d = match (&self.nodes[i], cache) {
                (Node::Conv(s), Cache::Input(x)) => {
                    let g = conv::backward(exec, s.geom, &x, n, p.value(s.kernel), &d, true);
                    grads[s.kernel] = g.dkernel;
                    grads[s.bias] = g.dbias;
                    g.dx
                }
                (Node::BatchNorm { c, gain, shift, .. }, Cache::Bn { xhat, inv_std }) => {
                    let (dx, dg, ds) = norm::backward(&d, &xhat, &inv_std, p.value(*gain), *c);
                    grads[*gain] = dg;
                    grads[*shift] = ds;
                    dx
                }
                (Node::Relu, Cache::Active(active)) => {
                    d.iter_mut().zip(&active).for_each(|(g, on)| {
                        if !on {
                            *g = 0.0
                        }
                    });
                    d
                }
                (Node::MaxPool(g), Cache::Pool(arg)) => pool::max_backward(*g, &arg, &d, n),
                (Node::Gap { spatial, c }, _) => pool::gap_backward(&d, n, *spatial, *c),
                (Node::Flatten, _) | (Node::Dropout { .. }, Cache::None) => d,
                (Node::Dense { inp, weight, bias }, Cache::Input(x)) => {
                    let (dx, dw, db) = dense::backward(exec, &x, n, *inp, p.value(*weight), &d, true);
                    grads[*weight] = dw;
                    grads[*bias] = db;
                    dx
                }
                (Node::Dropout { .. }, Cache::Mask(mask)) => {
                    d.iter_mut().zip(&mask).for_each(|(g, m)| *g *= m);
                    d
                }
                (Node::Softmax { c }, Cache::Probs(y)) => softmax_backward(&y, &d, *c),
                (Node::Fire { squeeze, expand1, expand3 }, Cache::Fire { x, s, active }) => {
                    d.iter_mut().zip(&active).for_each(|(g, on)| {
                        if !on {
                            *g = 0.0
                        }
                    });
                    let e = expand1.geom.cout;
                    let mut d1 = Vec::with_capacity(d.len() / 2);
                    let mut d3 = Vec::with_capacity(d.len() / 2);
                    for px in d.chunks_exact(2 * e) {
                        d1.extend_from_slice(&px[..e]);
                        d3.extend_from_slice(&px[e..]);
                    }
                    let g1 = conv::backward(exec, expand1.geom, &s, n, p.value(expand1.kernel), &d1, true);
                    let g3 = conv::backward(exec, expand3.geom, &s, n, p.value(expand3.kernel), &d3, true);
                    let mut ds = g1.dx;
                    ds.iter_mut().zip(&g3.dx).for_each(|(a, b)| *a += b);
                    relu_backward(&s, &mut ds);
                    let gs = conv::backward(exec, squeeze.geom, &x, n, p.value(squeeze.kernel), &ds, true);
                    grads[expand1.kernel] = g1.dkernel;
                    grads[expand1.bias] = g1.dbias;
                    grads[expand3.kernel] = g3.dkernel;
                    grads[expand3.bias] = g3.dbias;
                    grads[squeeze.kernel] = gs.dkernel;
                    grads[squeeze.bias] = gs.dbias;
                    gs.dx
                }
                _ => unreachable!("cache does not match layer {i}"),
            };
        }
        let input = self.batched(n, d, 0);
        let grads = Gradients { params: grads, input };
        if !grads.all_finite() {
            return Err(NnError::NonFinite("parameter gradients".into()));
        }
        Ok(grads)
    }

    /// True if a training forward pass is waiting for its backward pass.
    pub fn has_trace(&self) -> bool {
        self.trace.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::random_tensor;
    use crate::nn::{softmax_cross_entropy, Adadelta};

    fn small() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d { filters: 3, kh: 3, kw: 3 },
            LayerSpec::BatchNorm,
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { ph: 2, pw: 2 },
            LayerSpec::Fire { squeeze: 2, expand: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 6 },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 3 },
            LayerSpec::Softmax,
        ]
    }

    fn train(exec: Exec, steps: usize) -> ParamStore {
        let mut net = Network::new(small(), &[6, 4, 1], 11).unwrap();
        net.set_exec(exec);
        let x = random_tensor(&[20, 6, 4, 1], 12);
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let opt = Adadelta::default();
        for step in 0..steps {
            let logits = net.forward_train(&x, step as u64).unwrap();
            let (_, d) = softmax_cross_entropy(&logits, &labels).unwrap();
            let g = net.backward(&d).unwrap();
            opt.step(net.params_mut(), &g).unwrap();
        }
        net.params().clone()
    }

    #[test]
    fn training_is_deterministic_and_mode_independent() {
        let a = train(Exec::Sequential, 3);
        assert_eq!(a, train(Exec::Sequential, 3));
        assert_eq!(a, train(Exec::Parallel, 3));
        assert_ne!(a, train(Exec::Sequential, 2));
    }

    #[test]
    fn eval_output_is_a_distribution() {
        let net = Network::new(small(), &[6, 4, 1], 1).unwrap();
        let p = net.forward_eval(&random_tensor(&[4, 6, 4, 1], 2)).unwrap();
        assert_eq!(p.shape(), [4, 3]);
        for row in p.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = Network::new(small(), &[6, 4, 1], 1).unwrap();
        assert!(matches!(net.forward_eval(&Tensor::zeros(&[1, 4, 6, 1])), Err(NnError::Shape(_))));
    }

    #[test]
    fn initial_weights_are_f32_exact_and_seeded() {
        let a = Network::new(small(), &[6, 4, 1], 3).unwrap();
        let b = Network::new(small(), &[6, 4, 1], 3).unwrap();
        assert_eq!(a.params(), b.params());
        for p in a.params().iter() {
            assert!(p.value.data().iter().all(|v| *v as f32 as f64 == *v));
        }
        let bn = a.params().index_of("1.bn.var").unwrap();
        assert_eq!(a.params().get(bn).role, ParamRole::RunningStat);
    }
}
