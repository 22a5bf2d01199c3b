use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::params::Parameters;

const INIT_STD: f64 = 0.02;

/// Parameters of one encoder layer. Projections are stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub w_in: Array2<f64>,
    pub b_in: Array2<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
}

/// All learnable tensors. A gradient set has the same type and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<LayerWeights>,
    /// `(weight, bias)` per head layer.
    pub head: Vec<(Array2<f64>, Array2<f64>)>,
}

impl LayerWeights {
    fn fields(&self) -> [(&'static str, &Array2<f64>); 16] {
        [
            ("attention.query.weight", &self.wq),
            ("attention.query.bias", &self.bq),
            ("attention.key.weight", &self.wk),
            ("attention.key.bias", &self.bk),
            ("attention.value.weight", &self.wv),
            ("attention.value.bias", &self.bv),
            ("attention.output.weight", &self.wo),
            ("attention.output.bias", &self.bo),
            ("attention.norm.gain", &self.ln1_gain),
            ("attention.norm.bias", &self.ln1_bias),
            ("ffn.in.weight", &self.w_in),
            ("ffn.in.bias", &self.b_in),
            ("ffn.out.weight", &self.w_out),
            ("ffn.out.bias", &self.b_out),
            ("ffn.norm.gain", &self.ln2_gain),
            ("ffn.norm.bias", &self.ln2_bias),
        ]
    }

    fn fields_mut(&mut self) -> [&mut Array2<f64>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w_out,
            &mut self.b_out,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

impl Parameters for ModelWeights {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("embeddings.token".to_string(), &self.token_embedding),
            ("embeddings.position".to_string(), &self.position_embedding),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, t) in layer.fields() {
                out.push((format!("layers.{i}.{name}"), t));
            }
        }
        for (i, (w, b)) in self.head.iter().enumerate() {
            out.push((format!("head.{i}.weight"), w));
            out.push((format!("head.{i}.bias"), b));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding];
        for layer in &mut self.layers {
            out.extend(layer.fields_mut());
        }
        for (w, b) in &mut self.head {
            out.push(w);
            out.push(b);
        }
        out
    }
}

/// Expected `(name, shape)` list for a config, in canonical order.
fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let zeros = ModelWeights::zeros(cfg);
    zeros
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.dim()))
        .collect()
}

impl ModelWeights {
    /// All-zero weights of the right shapes.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let z = |r: usize, c: usize| Array2::<f64>::zeros((r, c));
        let h = cfg.hidden;
        let layers = (0..cfg.layers)
            .map(|_| LayerWeights {
                wq: z(h, h),
                bq: z(1, h),
                wk: z(h, h),
                bk: z(1, h),
                wv: z(h, h),
                bv: z(1, h),
                wo: z(h, h),
                bo: z(1, h),
                ln1_gain: z(1, h),
                ln1_bias: z(1, h),
                w_in: z(h, cfg.ffn_dim),
                b_in: z(1, cfg.ffn_dim),
                w_out: z(cfg.ffn_dim, h),
                b_out: z(1, h),
                ln2_gain: z(1, h),
                ln2_bias: z(1, h),
            })
            .collect();
        let mut head = Vec::with_capacity(cfg.head_dims.len());
        let mut fan_in = cfg.pooled_len();
        for &width in &cfg.head_dims {
            head.push((z(fan_in, width), z(1, width)));
            fan_in = width;
        }
        Self {
            config: cfg.clone(),
            token_embedding: z(cfg.vocab_size, h),
            position_embedding: z(cfg.max_len, h),
            layers,
            head,
        }
    }

    /// Import externally exported tensors (e.g. converted pretrained weights).
    /// Names and shapes must match the canonical layout exactly.
    pub fn from_named_tensors(
        cfg: &ModelConfig,
        tensors: Vec<(String, Array2<f64>)>,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        let expected = expected_shapes(cfg);
        if expected.len() != tensors.len() {
            return Err(ModelError::TensorMismatch(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        let mut weights = Self::zeros(cfg);
        for ((exp_name, exp_shape), ((name, t), slot)) in expected
            .iter()
            .zip(tensors.into_iter().zip(weights.tensors_mut()))
        {
            if &name != exp_name || t.dim() != *exp_shape {
                return Err(ModelError::TensorMismatch(format!(
                    "expected {exp_name} {exp_shape:?}, got {name} {:?}",
                    t.dim()
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::TensorMismatch(format!(
                    "{name} has non-finite values"
                )));
            }
            *slot = t;
        }
        Ok(weights)
    }
}

/// Deterministic initialization: weights and embeddings uniform with standard
/// deviation 0.02, biases zero, layer-norm gains one.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights, ModelError> {
    cfg.validate()?;
    let mut weights = ModelWeights::zeros(cfg);
    let names: Vec<String> = weights.tensors().into_iter().map(|(n, _)| n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_width = INIT_STD * 3f64.sqrt();
    for (name, t) in names.iter().zip(weights.tensors_mut()) {
        if name.ends_with(".gain") {
            t.fill(1.0);
        } else if name.ends_with(".weight") || name.starts_with("embeddings.") {
            t.mapv_inplace(|_| rng.random_range(-half_width..half_width));
        }
    }
    Ok(weights)
}
