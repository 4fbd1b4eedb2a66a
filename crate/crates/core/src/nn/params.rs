//! Named parameter tensors with their Adadelta accumulators.

use rand::Rng;

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Updated by the optimizer; carries accumulators.
    Trainable,
    /// Batch-norm running statistics, updated during train-mode forward passes.
    RunningStat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub role: ParamRole,
    pub value: Tensor,
    /// Running average of squared gradients, E[g^2].
    pub sq_grad: Tensor,
    /// Running average of squared updates, E[dx^2].
    pub sq_update: Tensor,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, name: String, role: ParamRole, value: Tensor) -> usize {
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name,
            role,
            value,
            sq_grad: Tensor::zeros(&shape),
            sq_update: Tensor::zeros(&shape),
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.params[i].value.data()
    }

    pub(crate) fn value_mut(&mut self, i: usize) -> &mut [f64] {
        self.params[i].value.data_mut()
    }

    /// Total element count of trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.role == ParamRole::Trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Replaces a tensor in place after checking its shape.
    pub fn set(&mut self, i: usize, value: Tensor) -> Result<(), NnError> {
        let p = &mut self.params[i];
        if p.value.shape() != value.shape() {
            return Err(NnError::Shape(format!(
                "{}: expected {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }
}

/// Glorot-uniform samples rounded to f32 precision.
pub(crate) fn glorot<R: Rng>(rng: &mut R, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len)
        .map(|_| rng.random_range(-limit..limit) as f32 as f64)
        .collect()
}

/// Parameter gradients aligned with a [`ParamStore`], plus the gradient with
/// respect to the network input. Running statistics get empty entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) params: Vec<Vec<f64>>,
    pub(crate) input: Tensor,
}

impl Gradients {
    pub fn param(&self, i: usize) -> &[f64] {
        &self.params[i]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn input(&self) -> &Tensor {
        &self.input
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().flatten().all(|v| v.is_finite())
    }

    /// Adds another gradient set element-wise.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}
