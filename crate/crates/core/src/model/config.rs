use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::prompting::DEFAULT_SEQ_LEN;

/// Architecture shape. Defaults follow the BERT-mini layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    /// Widths of the head's linear layers; the last must be 1.
    pub head_dims: Vec<usize>,
    /// Affine map applied to the raw head output: `shift + scale · out`.
    /// Fitted to the training targets before training starts so a freshly
    /// initialized head begins near the target distribution.
    pub output_shift: f64,
    pub output_scale: f64,
}

impl ModelConfig {
    /// 4 layers, hidden 256, 4 heads, FFN 1024, T = 96, 3×3/3 pooling,
    /// head 2720 → 512 → 64 → 1.
    pub fn bert_mini(vocab_size: usize) -> Self {
        Self {
            layers: 4,
            hidden: 256,
            heads: 4,
            ffn_dim: 1024,
            vocab_size,
            max_len: DEFAULT_SEQ_LEN,
            pool_kernel: 3,
            pool_stride: 3,
            head_dims: vec![512, 64, 1],
            output_shift: 0.0,
            output_scale: 1.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Pooled grid shape `(rows, cols)` over the `max_len × hidden` states.
    pub fn pooled_shape(&self) -> (usize, usize) {
        let out = |n: usize| (n - self.pool_kernel) / self.pool_stride + 1;
        (out(self.max_len), out(self.hidden))
    }

    pub fn pooled_len(&self) -> usize {
        let (r, c) = self.pooled_shape();
        r * c
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return bad("layers, hidden, heads and ffn_dim must be positive".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            ));
        }
        if self.vocab_size == 0 || self.max_len == 0 {
            return bad("vocab_size and max_len must be positive".into());
        }
        if self.pool_kernel == 0 || self.pool_stride == 0 {
            return bad("pooling kernel and stride must be positive".into());
        }
        if self.pool_kernel > self.max_len || self.pool_kernel > self.hidden {
            return bad("pooling kernel larger than the hidden-state grid".into());
        }
        if self.head_dims.last() != Some(&1) {
            return bad(format!("head_dims must end in 1, got {:?}", self.head_dims));
        }
        if self.head_dims.contains(&0) {
            return bad("head_dims entries must be positive".into());
        }
        if !(self.output_scale.is_finite()
            && self.output_scale != 0.0
            && self.output_shift.is_finite())
        {
            return bad("output scaling must be finite with non-zero scale".into());
        }
        Ok(())
    }
}
