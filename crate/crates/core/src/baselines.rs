//! Reference predictors: previous value and a one-hidden-layer network.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::PredictionSample;
use crate::losses::LossSpec;
use crate::model::{gelu, gelu_grad};
use crate::params::Parameters;
use crate::training::{cosine_lr, AdamW, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("sample has an empty history")]
    EmptyHistory,
    #[error("expected {expected} input features, sample provides {got}")]
    InputWidth { expected: usize, got: usize },
    #[error("no training samples")]
    NoSamples,
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// The last observed value.
pub fn previous_value_predict(sample: &PredictionSample) -> Result<f64, BaselineError> {
    sample
        .history
        .last()
        .copied()
        .ok_or(BaselineError::EmptyHistory)
}

/// Loads enter the network divided by this and leave multiplied by it.
const FEATURE_SCALE: f64 = 100.0;

/// `inputs → hidden → 1` with GELU in between. Inputs are the history
/// window followed by the window mean and deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnWeights {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl Parameters for FnnWeights {
    fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        vec![
            ("fnn.hidden.weight".into(), &self.w1),
            ("fnn.hidden.bias".into(), &self.b1),
            ("fnn.output.weight".into(), &self.w2),
            ("fnn.output.bias".into(), &self.b2),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

impl FnnWeights {
    pub fn inputs(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    /// Rebuild from named tensors, e.g. read back from a checkpoint.
    pub fn from_named_tensors(tensors: Vec<(String, Array2<f64>)>) -> Result<Self, String> {
        let mut tensors: std::collections::BTreeMap<_, _> = tensors.into_iter().collect();
        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| format!("missing tensor {name}"))
        };
        let w = Self {
            w1: take("fnn.hidden.weight")?,
            b1: take("fnn.hidden.bias")?,
            w2: take("fnn.output.weight")?,
            b2: take("fnn.output.bias")?,
        };
        let (i, h) = w.w1.dim();
        if w.b1.dim() != (1, h) || w.w2.dim() != (h, 1) || w.b2.dim() != (1, 1) || i == 0 {
            return Err("inconsistent FNN tensor shapes".into());
        }
        if !w.all_finite() {
            return Err("FNN tensors contain non-finite values".into());
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(format!("unexpected tensor {extra}"));
        }
        Ok(w)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn fnn_init(inputs: usize, hidden: usize, seed: u64) -> FnnWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
    };
    let w1 = uniform(inputs, hidden);
    let w2 = uniform(hidden, 1);
    FnnWeights {
        w1,
        b1: Array2::zeros((1, hidden)),
        w2,
        b2: Array2::zeros((1, 1)),
    }
}

fn features(w: &FnnWeights, sample: &PredictionSample) -> Result<Array2<f64>, BaselineError> {
    let got = sample.history.len() + 2;
    if got != w.inputs() {
        return Err(BaselineError::InputWidth {
            expected: w.inputs(),
            got,
        });
    }
    let values = sample
        .history
        .iter()
        .chain([&sample.mean, &sample.deviation])
        .map(|v| v / FEATURE_SCALE);
    Ok(Array2::from_shape_vec((1, got), values.collect()).expect("row vector"))
}

struct FnnTrace {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    out: f64,
}

fn forward(w: &FnnWeights, x: Array2<f64>) -> FnnTrace {
    let pre = x.dot(&w.w1) + &w.b1;
    let act = pre.mapv(gelu);
    let out = (act.dot(&w.w2) + &w.b2)[[0, 0]] * FEATURE_SCALE;
    FnnTrace { x, pre, act, out }
}

pub fn fnn_predict(w: &FnnWeights, sample: &PredictionSample) -> Result<f64, BaselineError> {
    Ok(forward(w, features(w, sample)?).out)
}

/// Exact gradient of the mean loss over `samples`. Returns the gradient and
/// the mean loss.
pub fn fnn_gradients(
    w: &FnnWeights,
    samples: &[&PredictionSample],
    loss: LossSpec,
) -> Result<(FnnWeights, f64), BaselineError> {
    if samples.is_empty() {
        return Err(BaselineError::NoSamples);
    }
    let mut g = w.zeros_like();
    let mut total = 0.0;
    for s in samples {
        let t = forward(w, features(w, s)?);
        total += loss.value(s.target, t.out);
        let dout = loss.derivative(s.target, t.out) * FEATURE_SCALE;
        g.b2[[0, 0]] += dout;
        g.w2.scaled_add(dout, &t.act.t());
        let dpre = (&w.w2.t() * dout) * t.pre.mapv(gelu_grad);
        g.b1 += &dpre;
        g.w1 += &t.x.t().dot(&dpre);
    }
    let n = samples.len() as f64;
    g.scale(1.0 / n);
    Ok((g, total / n))
}

/// Result of FNN training, with the mean training loss per epoch.
#[derive(Debug, Clone)]
pub struct FnnOutcome {
    pub weights: FnnWeights,
    pub epoch_losses: Vec<f64>,
}

/// MSE training with AdamW and cosine annealing. `cfg.patience` and
/// `cfg.fit_output_scaling` do not apply; zero epochs return the
/// initialization.
pub fn fnn_train(
    samples: &[PredictionSample],
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<FnnOutcome, BaselineError> {
    cfg.validate()?;
    let first = samples.first().ok_or(BaselineError::NoSamples)?;
    let mut w = fnn_init(first.history.len() + 2, hidden, cfg.seed);
    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * steps_per_epoch;
    let mut opt = AdamW::new(&w);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PredictionSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (mut g, l) = fnn_gradients(&w, &batch, LossSpec::Mse)?;
            if let Some(max) = cfg.clip_norm {
                let norm = g.global_norm();
                if norm > max {
                    g.scale(max / norm);
                }
            }
            let lr = cosine_lr(step, total, cfg.base_lr)?;
            opt.step(&mut w, &g, lr, cfg.weight_decay)?;
            sum += l * chunk.len() as f64;
            step += 1;
        }
        epoch_losses.push(sum / samples.len() as f64);
    }
    Ok(FnnOutcome {
        weights: w,
        epoch_losses,
    })
}
