use super::TrainError;
use crate::params::Parameters;

/// Adaptive-moment optimizer with decoupled weight decay:
///
/// ```text
/// m ← β₁ m + (1 − β₁) g
/// v ← β₂ v + (1 − β₂) g²
/// w ← w − lr · ( m̂ / (√v̂ + ε) + decay · w )
/// ```
///
/// with `m̂ = m / (1 − β₁ᵗ)` and `v̂ = v / (1 − β₂ᵗ)`.
#[derive(Debug, Clone)]
pub struct AdamW<P> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: P,
    v: P,
}

impl<P: Parameters> AdamW<P> {
    pub fn new(params: &P) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Apply one update. A non-finite gradient rejects the step and leaves
    /// both weights and state untouched.
    pub fn step(
        &mut self,
        weights: &mut P,
        grads: &P,
        lr: f64,
        decay: f64,
    ) -> Result<(), TrainError> {
        for (name, g) in grads.tensors() {
            if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteGradient {
                    tensor: name,
                    value: *bad,
                });
            }
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let grads = grads.tensors();
        for (((w, m), v), (_, g)) in weights
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            ndarray::Zip::from(w)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * (m_hat / (v_hat.sqrt() + eps) + decay * *w);
                });
        }
        Ok(())
    }
}
