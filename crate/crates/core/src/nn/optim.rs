//! Adadelta.

use super::{Gradients, NnError, ParamRole, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adadelta {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for Adadelta {
    fn default() -> Self {
        Self { lr: 1.0, rho: 0.95, eps: 1e-6 }
    }
}

impl Adadelta {
    /// One element of the update rule. Returns `(x, E[g^2], E[dx^2])` after
    /// the step.
    pub fn update(&self, x: f64, g: f64, sq_grad: f64, sq_update: f64) -> (f64, f64, f64) {
        let sq_grad = self.rho * sq_grad + (1.0 - self.rho) * g * g;
        let dx = -((sq_update + self.eps).sqrt() / (sq_grad + self.eps).sqrt()) * g;
        let sq_update = self.rho * sq_update + (1.0 - self.rho) * dx * dx;
        (x + self.lr * dx, sq_grad, sq_update)
    }

    /// Applies one step to every trainable parameter. Stored values and
    /// accumulators are kept at f32 precision, which is what checkpoints hold.
    /// Fails without touching anything if a gradient is not finite.
    pub fn step(&self, store: &mut ParamStore, grads: &Gradients) -> Result<(), NnError> {
        if grads.len() != store.len() {
            return Err(NnError::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (i, p) in store.iter().enumerate() {
            if p.role != ParamRole::Trainable {
                continue;
            }
            let g = grads.param(i);
            if g.len() != p.value.len() {
                return Err(NnError::Shape(format!("gradient for {} has wrong length", p.name)));
            }
            if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!("gradient of {}[{bad}]", p.name)));
            }
        }
        for (i, p) in store.iter_mut().enumerate() {
            if p.role != ParamRole::Trainable {
                continue;
            }
            let g = grads.param(i);
            let xs = p.value.data_mut();
            let eg = p.sq_grad.data_mut();
            let ed = p.sq_update.data_mut();
            for j in 0..xs.len() {
                let (x, a, b) = self.update(xs[j], g[j], eg[j], ed[j]);
                xs[j] = x as f32 as f64;
                eg[j] = a as f32 as f64;
                ed[j] = b as f32 as f64;
            }
        }
        Ok(())
    }
}
