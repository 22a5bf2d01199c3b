use ndarray::{s, Array2, ArrayView2};

use super::{ModelError, ModelWeights};
use crate::prompting::TokenSequence;

const LN_EPS: f64 = 1e-12;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

/// GELU, tanh form.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x)
}

/// Final encoder output, one row per position.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub states: Array2<f64>,
    pub attention_mask: Vec<u8>,
}

pub(super) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Vec<f64>,
}

/// Row-wise layer norm: `gain · (x − μ)/√(σ² + ε) + bias`.
pub fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> Array2<f64> {
    layer_norm_cached(x, gain, bias).0
}

pub(super) fn layer_norm_cached(
    x: &Array2<f64>,
    gain: &Array2<f64>,
    bias: &Array2<f64>,
) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row *= inv;
        inv_std.push(inv);
    }
    let out = &xhat * gain + bias;
    (out, LnCache { xhat, inv_std })
}

fn key_bias(mask: &[u8]) -> Vec<f64> {
    mask.iter()
        .map(|&m| if m != 0 { 0.0 } else { f64::NEG_INFINITY })
        .collect()
}

/// Row softmax of `q kᵀ / √d_k` with masked key columns excluded.
pub(super) fn attention_probs(q: ArrayView2<f64>, k: ArrayView2<f64>, bias: &[f64]) -> Array2<f64> {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut scores = q.dot(&k.t());
    for mut row in scores.rows_mut() {
        let mut max = f64::NEG_INFINITY;
        for (s, b) in row.iter_mut().zip(bias) {
            *s = *s * scale + b;
            max = max.max(*s);
        }
        let mut sum = 0.0;
        for s in row.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        row /= sum;
    }
    scores
}

/// Scaled dot-product attention for a single head:
/// `softmax(Q Kᵀ / √d_k + mask_bias) V`, where keys with `key_mask == 0`
/// receive a `−∞` bias. At least one key must be unmasked.
pub fn attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    key_mask: &[u8],
) -> Array2<f64> {
    assert_eq!(k.nrows(), key_mask.len());
    assert!(key_mask.iter().any(|&m| m != 0), "all keys masked");
    attention_probs(q.view(), k.view(), &key_bias(key_mask)).dot(v)
}

pub(super) struct LayerCache {
    pub input: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub probs: Vec<Array2<f64>>,
    pub context: Array2<f64>,
    pub ln1: LnCache,
    pub y1: Array2<f64>,
    pub ffn_pre: Array2<f64>,
    pub ffn_act: Array2<f64>,
    pub ln2: LnCache,
}

pub(super) struct HeadCache {
    /// Inputs to each head linear layer (pooled features first).
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden head layers.
    pub pre: Vec<Array2<f64>>,
}

pub(super) struct ForwardTrace {
    pub rows: usize,
    pub layers: Vec<LayerCache>,
    pub head: HeadCache,
    pub prediction: f64,
}

fn check_tokens(w: &ModelWeights, tokens: &TokenSequence) -> Result<(), ModelError> {
    let cfg = &w.config;
    if tokens.ids.len() != cfg.max_len || tokens.attention_mask.len() != cfg.max_len {
        return Err(ModelError::SequenceLength {
            expected: cfg.max_len,
            got: tokens.ids.len(),
        });
    }
    if let Some(&id) = tokens.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    if tokens.attention_mask.first() != Some(&1) {
        return Err(ModelError::InvalidConfig(
            "first position must be attended".into(),
        ));
    }
    Ok(())
}

fn embed(w: &ModelWeights, ids: &[u32], rows: usize) -> Array2<f64> {
    let mut x = w.position_embedding.slice(s![..rows, ..]).to_owned();
    for (mut row, &id) in x.rows_mut().into_iter().zip(ids) {
        row += &w.token_embedding.row(id as usize);
    }
    x
}

fn layer_forward(
    layer: &super::LayerWeights,
    x: Array2<f64>,
    bias: &[f64],
    heads: usize,
) -> (Array2<f64>, LayerCache) {
    let q = x.dot(&layer.wq) + &layer.bq;
    let k = x.dot(&layer.wk) + &layer.bk;
    let v = x.dot(&layer.wv) + &layer.bv;
    let dk = q.ncols() / heads;
    let mut context = Array2::<f64>::zeros(q.dim());
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let p = attention_probs(q.slice(cols), k.slice(cols), bias);
        context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    let attn_out = context.dot(&layer.wo) + &layer.bo;
    let (y1, ln1) = layer_norm_cached(&(&x + &attn_out), &layer.ln1_gain, &layer.ln1_bias);
    let ffn_pre = y1.dot(&layer.w_in) + &layer.b_in;
    let ffn_act = ffn_pre.mapv(gelu);
    let ffn_out = ffn_act.dot(&layer.w_out) + &layer.b_out;
    let (out, ln2) = layer_norm_cached(&(&y1 + &ffn_out), &layer.ln2_gain, &layer.ln2_bias);
    let cache = LayerCache {
        input: x,
        q,
        k,
        v,
        probs,
        context,
        ln1,
        y1,
        ffn_pre,
        ffn_act,
        ln2,
    };
    (out, cache)
}

/// Average-pool `grid` with a square window, zero-filling rows the grid does
/// not have up to `full_rows` (padded positions contribute zeros).
pub fn pool_grid(
    grid: ArrayView2<f64>,
    full_rows: usize,
    kernel: usize,
    stride: usize,
) -> Array2<f64> {
    let out_rows = (full_rows - kernel) / stride + 1;
    let out_cols = (grid.ncols() - kernel) / stride + 1;
    let norm = 1.0 / (kernel * kernel) as f64;
    let mut pooled = Array2::<f64>::zeros((out_rows, out_cols));
    for i in 0..out_rows {
        let r0 = i * stride;
        if r0 >= grid.nrows() {
            break;
        }
        let r1 = (r0 + kernel).min(grid.nrows());
        for j in 0..out_cols {
            let c0 = j * stride;
            pooled[[i, j]] = grid.slice(s![r0..r1, c0..c0 + kernel]).sum() * norm;
        }
    }
    pooled
}

/// Zero rows whose attention mask is 0.
fn masked_rows(states: &Array2<f64>, mask: &[u8]) -> Array2<f64> {
    let mut out = states.clone();
    for (mut row, &m) in out.rows_mut().into_iter().zip(mask) {
        if m == 0 {
            row.fill(0.0);
        }
    }
    out
}

fn head_forward(w: &ModelWeights, pooled: Array2<f64>) -> (f64, HeadCache) {
    let n = w.head.len();
    let mut inputs = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n.saturating_sub(1));
    let mut a = pooled;
    for (i, (wt, b)) in w.head.iter().enumerate() {
        let z = a.dot(wt) + b;
        inputs.push(a);
        if i + 1 < n {
            a = z.mapv(gelu);
            pre.push(z);
        } else {
            a = z;
        }
    }
    let raw = a[[0, 0]];
    let prediction = w.config.output_shift + w.config.output_scale * raw;
    (prediction, HeadCache { inputs, pre })
}

/// Full forward pass over the first `rows` positions.
pub(super) fn forward_trace(
    w: &ModelWeights,
    tokens: &TokenSequence,
    rows: usize,
) -> Result<(ForwardTrace, Array2<f64>), ModelError> {
    check_tokens(w, tokens)?;
    let cfg = &w.config;
    let bias = key_bias(&tokens.attention_mask[..rows]);
    let mut x = embed(w, &tokens.ids[..rows], rows);
    let mut layers = Vec::with_capacity(cfg.layers);
    for layer in &w.layers {
        let (out, cache) = layer_forward(layer, x, &bias, cfg.heads);
        layers.push(cache);
        x = out;
    }
    let masked = masked_rows(&x, &tokens.attention_mask[..rows]);
    let pooled = pool_grid(masked.view(), cfg.max_len, cfg.pool_kernel, cfg.pool_stride);
    let flat = pooled
        .into_shape_with_order((1, cfg.pooled_len()))
        .expect("contiguous pooled grid");
    let (prediction, head) = head_forward(w, flat);
    Ok((
        ForwardTrace {
            rows,
            layers,
            head,
            prediction,
        },
        x,
    ))
}

/// Encode all `T` positions. Padded rows are computed (they attend to the
/// real tokens) but never attended to.
pub fn encode(w: &ModelWeights, tokens: &TokenSequence) -> Result<HiddenStates, ModelError> {
    let (_, states) = forward_trace(w, tokens, w.config.max_len)?;
    Ok(HiddenStates {
        states,
        attention_mask: tokens.attention_mask.clone(),
    })
}

/// Pool the hidden states (padded rows zeroed) and run the regression MLP.
pub fn tsp_head(w: &ModelWeights, hidden: &HiddenStates) -> f64 {
    let cfg = &w.config;
    let masked = masked_rows(&hidden.states, &hidden.attention_mask);
    let pooled = pool_grid(masked.view(), cfg.max_len, cfg.pool_kernel, cfg.pool_stride);
    let flat = pooled
        .into_shape_with_order((1, cfg.pooled_len()))
        .expect("contiguous pooled grid");
    head_forward(w, flat).0
}

/// `tsp_head ∘ encode`, evaluated only over the attended prefix. Positions
/// after the last attended token cannot reach the output, so this equals the
/// full composition exactly.
pub fn predict(w: &ModelWeights, tokens: &TokenSequence) -> Result<f64, ModelError> {
    let rows = tokens.active_len().max(1);
    forward_trace(w, tokens, rows).map(|(t, _)| t.prediction)
}
