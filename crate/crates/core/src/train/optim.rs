use super::TrainError;
use crate::model::Layout;
use crate::Scalar;

/// AdamW with decoupled weight decay applied before the moment update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T: Scalar> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n: usize) -> Self {
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![T::zero(); n], v: vec![T::zero(); n] }
    }

    /// One update. Fails before touching anything if a gradient is not finite.
    pub fn step(
        &mut self,
        params: &mut [T],
        grads: &[T],
        lr: f64,
        weight_decay: f64,
        layout: &Layout,
    ) -> Result<(), TrainError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(TrainError::Config("optimizer state does not match the parameters".into()));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            let (name, at) = layout.locate(i).unwrap_or(("?", i));
            return Err(TrainError::NonFiniteGradient { name: name.to_string(), index: at });
        }
        self.t += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let decay = T::of(1.0 - lr * weight_decay);
        let (lr, eps) = (T::of(lr), T::of(self.eps));
        for i in 0..params.len() {
            let g = grads[i];
            params[i] *= decay;
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [T], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = T::of(max_norm / norm);
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
