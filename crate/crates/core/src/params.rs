//! Uniform access to the learnable tensors of a model.

use ndarray::Array2;

/// A fixed, ordered collection of named `f64` matrices.
///
/// Vectors (biases, layer-norm gains) are stored as `1 × n` matrices so every
/// tensor has the same type. The order of `tensors` and `tensors_mut` must
/// agree; optimizers and checkpoints rely on it.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)>;
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>>;

    /// Same shapes, all zeros.
    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += other · scale`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.scaled_add(scale, src);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
