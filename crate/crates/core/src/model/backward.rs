use ndarray::{s, Array2, Axis};
use rayon::prelude::*;

use super::forward::{forward_trace, gelu_grad, ForwardTrace, LayerCache, LnCache};
use super::{LayerWeights, ModelError, ModelWeights};
use crate::losses::LossSpec;
use crate::params::Parameters;
use crate::prompting::TokenSequence;

/// Samples per sequential accumulation chunk. Chunk sums are combined in
/// index order, so results do not depend on the worker count.
const CHUNK: usize = 8;

fn row_sum(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array2<f64>,
    dgain: &mut Array2<f64>,
    dbias: &mut Array2<f64>,
) -> Array2<f64> {
    *dbias += &row_sum(dy);
    *dgain += &row_sum(&(dy * &cache.xhat));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = dxhat.clone();
    for (r, mut row) in dx.rows_mut().into_iter().enumerate() {
        let xh = cache.xhat.row(r);
        let m1 = row.sum() / d;
        let m2 = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
        let inv = cache.inv_std[r];
        row.zip_mut_with(&xh, |v, &x| *v = inv * (*v - m1 - x * m2));
    }
    dx
}

fn layer_backward(
    w: &LayerWeights,
    c: &LayerCache,
    dout: Array2<f64>,
    heads: usize,
    g: &mut LayerWeights,
) -> Array2<f64> {
    // out = LN2(y1 + ffn_out)
    let dr2 = layer_norm_backward(&dout, &c.ln2, &w.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);
    g.w_out += &c.ffn_act.t().dot(&dr2);
    g.b_out += &row_sum(&dr2);
    let mut dffn = dr2.dot(&w.w_out.t());
    dffn.zip_mut_with(&c.ffn_pre, |d, &x| *d *= gelu_grad(x));
    g.w_in += &c.y1.t().dot(&dffn);
    g.b_in += &row_sum(&dffn);
    let dy1 = dr2 + dffn.dot(&w.w_in.t());

    // y1 = LN1(x + attn_out)
    let dr1 = layer_norm_backward(&dy1, &c.ln1, &w.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
    g.wo += &c.context.t().dot(&dr1);
    g.bo += &row_sum(&dr1);
    let dcontext = dr1.dot(&w.wo.t());

    let dk_width = c.q.ncols() / heads;
    let scale = 1.0 / (dk_width as f64).sqrt();
    let mut dq = Array2::<f64>::zeros(c.q.dim());
    let mut dk = Array2::<f64>::zeros(c.k.dim());
    let mut dv = Array2::<f64>::zeros(c.v.dim());
    for (h, p) in c.probs.iter().enumerate() {
        let cols = s![.., h * dk_width..(h + 1) * dk_width];
        let dctx = dcontext.slice(cols);
        let mut dp = dctx.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dctx));
        // softmax backward, row by row
        for (mut drow, prow) in dp.rows_mut().into_iter().zip(p.rows()) {
            let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
            drow.zip_mut_with(&prow, |d, &pv| *d = pv * (*d - dot) * scale);
        }
        dq.slice_mut(cols).assign(&dp.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&dp.t().dot(&c.q.slice(cols)));
    }
    g.wq += &c.input.t().dot(&dq);
    g.bq += &row_sum(&dq);
    g.wk += &c.input.t().dot(&dk);
    g.bk += &row_sum(&dk);
    g.wv += &c.input.t().dot(&dv);
    g.bv += &row_sum(&dv);

    dr1 + dq.dot(&w.wq.t()) + dk.dot(&w.wk.t()) + dv.dot(&w.wv.t())
}

/// Accumulate d(loss)/d(weights) for one sample into `grads`, given
/// `dpred = d(loss)/d(prediction)`.
fn backward(
    w: &ModelWeights,
    tokens: &TokenSequence,
    trace: &ForwardTrace,
    dpred: f64,
    grads: &mut ModelWeights,
) {
    let cfg = &w.config;
    let rows = trace.rows;

    // regression head
    let mut dz = Array2::from_elem((1, 1), dpred * cfg.output_scale);
    let mut dpooled = None;
    for i in (0..w.head.len()).rev() {
        let input = &trace.head.inputs[i];
        grads.head[i].0 += &input.t().dot(&dz);
        grads.head[i].1 += &dz;
        let dinput = dz.dot(&w.head[i].0.t());
        if i > 0 {
            let mut da = dinput;
            da.zip_mut_with(&trace.head.pre[i - 1], |d, &x| *d *= gelu_grad(x));
            dz = da;
        } else {
            dpooled = Some(dinput);
        }
    }
    let dpooled = dpooled.expect("head has at least one layer");

    // un-pool into the attended rows, then drop masked rows
    let (_, pcols) = cfg.pooled_shape();
    let (k, st) = (cfg.pool_kernel, cfg.pool_stride);
    let norm = 1.0 / (k * k) as f64;
    let mut dx = Array2::<f64>::zeros((rows, cfg.hidden));
    for (idx, &d) in dpooled.iter().enumerate() {
        let (i, j) = (idx / pcols, idx % pcols);
        let r0 = i * st;
        if r0 >= rows {
            continue;
        }
        let r1 = (r0 + k).min(rows);
        let c0 = j * st;
        dx.slice_mut(s![r0..r1, c0..c0 + k])
            .mapv_inplace(|v| v + d * norm);
    }
    for (mut row, &m) in dx
        .rows_mut()
        .into_iter()
        .zip(&tokens.attention_mask[..rows])
    {
        if m == 0 {
            row.fill(0.0);
        }
    }

    for ((lw, cache), lg) in w
        .layers
        .iter()
        .zip(&trace.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        dx = layer_backward(lw, cache, dx, cfg.heads, lg);
    }

    for (r, row) in dx.rows().into_iter().enumerate() {
        let id = tokens.ids[r] as usize;
        let mut t = grads.token_embedding.row_mut(id);
        t += &row;
        let mut p = grads.position_embedding.row_mut(r);
        p += &row;
    }
}

/// Gradient of one sample's loss. Returns `(grads, loss, prediction)`.
pub fn sample_gradient(
    w: &ModelWeights,
    tokens: &TokenSequence,
    target: f64,
    loss: LossSpec,
) -> Result<(ModelWeights, f64, f64), ModelError> {
    let mut grads = w.zeros_like();
    let (l, p) = accumulate(w, tokens, target, loss, &mut grads)?;
    Ok((grads, l, p))
}

fn accumulate(
    w: &ModelWeights,
    tokens: &TokenSequence,
    target: f64,
    loss: LossSpec,
    grads: &mut ModelWeights,
) -> Result<(f64, f64), ModelError> {
    let rows = tokens.active_len().max(1);
    let (trace, _) = forward_trace(w, tokens, rows)?;
    let prediction = trace.prediction;
    let value = loss.value(target, prediction);
    if !value.is_finite() {
        return Err(ModelError::NonFiniteLoss {
            loss: value,
            target,
            prediction,
        });
    }
    backward(
        w,
        tokens,
        &trace,
        loss.derivative(target, prediction),
        grads,
    );
    Ok((value, prediction))
}

/// Result of a batch gradient evaluation.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub grads: ModelWeights,
    pub mean_loss: f64,
    pub predictions: Vec<f64>,
}

/// Gradient sum, loss sum and per-sample predictions of one chunk.
type ChunkSums = (ModelWeights, f64, Vec<f64>);

/// Gradient of the mean loss over a batch where each item carries its own
/// loss. Chunks of samples may be evaluated in parallel; the reduction order
/// is fixed.
pub(crate) fn batch_gradient(
    w: &ModelWeights,
    batch: &[(&TokenSequence, f64, LossSpec)],
) -> Result<BatchGradient, ModelError> {
    assert!(!batch.is_empty(), "empty batch");
    let partials: Vec<Result<ChunkSums, ModelError>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = w.zeros_like();
            let mut loss_sum = 0.0;
            let mut preds = Vec::with_capacity(chunk.len());
            for &(tokens, target, loss) in chunk {
                let (l, p) = accumulate(w, tokens, target, loss, &mut g)?;
                loss_sum += l;
                preds.push(p);
            }
            Ok((g, loss_sum, preds))
        })
        .collect();

    let mut total: Option<ModelWeights> = None;
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for part in partials {
        let (g, l, p) = part?;
        loss_sum += l;
        predictions.extend(p);
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => t.add_scaled(&g, 1.0),
        }
    }
    let mut grads = total.expect("non-empty batch");
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok(BatchGradient {
        grads,
        mean_loss: loss_sum / n,
        predictions,
    })
}

/// Exact gradient of the mean batch loss with respect to every weight.
pub fn gradients(
    w: &ModelWeights,
    batch: &[(TokenSequence, f64)],
    loss: LossSpec,
) -> Result<ModelWeights, ModelError> {
    let items: Vec<_> = batch.iter().map(|(t, y)| (t, *y, loss)).collect();
    batch_gradient(w, &items).map(|b| b.grads)
}
