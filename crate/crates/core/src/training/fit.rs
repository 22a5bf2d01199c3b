use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cosine_lr, AdamW, EpochRecord, TrainConfig, TrainError};
use crate::data::PredictionSample;
use crate::losses::LossSpec;
use crate::model::{batch_gradient, predict, ModelError, ModelWeights};
use crate::params::Parameters;
use crate::prompting::{
    render_prompt, tokenize, OperatorPreference, Orientation, TokenSequence, Vocabulary,
};

/// How each training instance is prompted and which loss it receives.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    /// The same loss everywhere; prompts carry `preference` when given.
    Fixed {
        loss: LossSpec,
        preference: Option<OperatorPreference>,
    },
    /// Every epoch, each instance draws one of `choices` uniformly. Its
    /// prompt carries that phrase and its loss is BLF with the mapped q.
    Preferences {
        choices: Vec<OperatorPreference>,
        orientation: Orientation,
    },
}

impl Conditioning {
    /// Prompt used for per-epoch validation.
    fn eval_preference(&self) -> Option<OperatorPreference> {
        match self {
            Conditioning::Fixed { preference, .. } => *preference,
            Conditioning::Preferences { choices, .. } => {
                if choices.contains(&OperatorPreference::Neutral) {
                    Some(OperatorPreference::Neutral)
                } else {
                    choices.first().copied()
                }
            }
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        match self {
            Conditioning::Fixed { loss, .. } => loss.validate().map_err(Into::into),
            Conditioning::Preferences { choices, .. } if choices.is_empty() => {
                Err(TrainError::InvalidConfig(
                    "preference conditioning needs at least one phrase".into(),
                ))
            }
            Conditioning::Preferences { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were returned (0 means the initial weights).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Held-out metrics plus the raw predictions, in sample order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mse: f64,
    /// Mean of `prediction − target`.
    pub mean_signed_error: f64,
    pub predictions: Vec<f64>,
}

impl Evaluation {
    pub fn from_predictions(predictions: Vec<f64>, targets: &[f64]) -> Self {
        assert_eq!(
            predictions.len(),
            targets.len(),
            "one prediction per target"
        );
        if targets.is_empty() {
            return Self {
                mse: 0.0,
                mean_signed_error: 0.0,
                predictions,
            };
        }
        let n = targets.len() as f64;
        let (mut sq, mut signed) = (0.0, 0.0);
        for (p, y) in predictions.iter().zip(targets) {
            sq += (p - y) * (p - y);
            signed += p - y;
        }
        Self {
            mse: sq / n,
            mean_signed_error: signed / n,
            predictions,
        }
    }
}

fn encode_sample(
    sample: &PredictionSample,
    pref: Option<OperatorPreference>,
    vocab: &Vocabulary,
    len: usize,
) -> Result<TokenSequence, TrainError> {
    Ok(tokenize(&render_prompt(sample, pref), vocab, len)?)
}

/// Predict every sample under an optional preference clause.
pub fn evaluate(
    weights: &ModelWeights,
    samples: &[PredictionSample],
    pref: Option<OperatorPreference>,
    vocab: &Vocabulary,
) -> Result<Evaluation, TrainError> {
    let len = weights.config.max_len;
    let predictions = samples
        .par_iter()
        .map(|s| {
            let tokens = encode_sample(s, pref, vocab, len)?;
            Ok(predict(weights, &tokens)?)
        })
        .collect::<Result<Vec<f64>, TrainError>>()?;
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    Ok(Evaluation::from_predictions(predictions, &targets))
}

fn fit_output_scaling(weights: &mut ModelWeights, samples: &[PredictionSample]) {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.target).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|s| (s.target - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    weights.config.output_shift = mean;
    weights.config.output_scale = if std > 1e-9 { std } else { 1.0 };
}

/// Mini-batch AdamW with cosine annealing over `epochs · ⌈n / batch⌉` steps.
///
/// Instance order comes from one seeded stream and preference draws from a
/// second, so the visiting order does not depend on the conditioning. When
/// `patience > 0` the weights of the best validation epoch are returned;
/// otherwise the final weights are. An empty `validation` set falls back to
/// the training set.
pub fn fit(
    mut weights: ModelWeights,
    train: &[PredictionSample],
    validation: &[PredictionSample],
    vocab: &Vocabulary,
    conditioning: &Conditioning,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    conditioning.validate()?;
    if train.is_empty() {
        return Err(TrainError::InvalidConfig("no training samples".into()));
    }
    if cfg.fit_output_scaling {
        fit_output_scaling(&mut weights, train);
    }
    let eval_set = if validation.is_empty() {
        train
    } else {
        validation
    };
    let eval_pref = conditioning.eval_preference();
    let len = weights.config.max_len;

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;

    let mut history = vec![EpochRecord {
        epoch: 0,
        lr: cfg.base_lr,
        train_loss: None,
        eval_mse: evaluate(&weights, eval_set, eval_pref, vocab)?.mse,
    }];
    if total_steps == 0 {
        return Ok(TrainOutcome {
            weights,
            history,
            best_epoch: 0,
            stopped_early: false,
        });
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pref_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    pref_rng.set_stream(1);

    let mut opt = AdamW::new(&weights);
    let mut best = (history[0].eval_mse, 0usize, weights.clone());
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut step = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let assigned: Vec<(Option<OperatorPreference>, LossSpec)> = match conditioning {
            Conditioning::Fixed { loss, preference } => vec![(*preference, *loss); order.len()],
            Conditioning::Preferences {
                choices,
                orientation,
            } => (0..order.len())
                .map(|_| {
                    let p = choices[pref_rng.random_range(0..choices.len())];
                    (
                        Some(p),
                        LossSpec::Blf {
                            q: p.q(*orientation),
                        },
                    )
                })
                .collect(),
        };

        let mut loss_sum = 0.0;
        let mut lr = cfg.base_lr;
        for (chunk_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let offset = chunk_idx * cfg.batch_size;
            let items = chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let (pref, loss) = assigned[offset + k];
                    Ok((
                        encode_sample(&train[i], pref, vocab, len)?,
                        train[i].target,
                        loss,
                    ))
                })
                .collect::<Result<Vec<_>, TrainError>>()?;
            let refs: Vec<_> = items.iter().map(|(t, y, l)| (t, *y, *l)).collect();

            lr = cosine_lr(step, total_steps, cfg.base_lr)?;
            let diverged = |reason: String, w: &ModelWeights| TrainError::Diverged {
                epoch,
                step,
                reason,
                last_good: Box::new(w.clone()),
            };
            let mut batch = match batch_gradient(&weights, &refs) {
                Ok(b) => b,
                Err(e @ ModelError::NonFiniteLoss { .. }) => {
                    return Err(diverged(e.to_string(), &weights))
                }
                Err(e) => return Err(e.into()),
            };
            if let Some(max) = cfg.clip_norm {
                let norm = batch.grads.global_norm();
                if norm > max {
                    batch.grads.scale(max / norm);
                }
            }
            if let Err(e) = opt.step(&mut weights, &batch.grads, lr, cfg.weight_decay) {
                return Err(diverged(e.to_string(), &weights));
            }
            loss_sum += batch.mean_loss * chunk.len() as f64;
            step += 1;
        }

        let eval_mse = evaluate(&weights, eval_set, eval_pref, vocab)?.mse;
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss: Some(loss_sum / train.len() as f64),
            eval_mse,
        });
        if eval_mse < best.0 {
            best = (eval_mse, epoch, weights.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.patience > 0 && since_best >= cfg.patience && epoch < cfg.epochs {
            stopped_early = true;
            break;
        }
    }

    let last_epoch = history.last().map_or(0, |r| r.epoch);
    let (weights, best_epoch) = if cfg.patience > 0 {
        (best.2, best.1)
    } else {
        (weights, last_epoch)
    };
    Ok(TrainOutcome {
        weights,
        history,
        best_epoch,
        stopped_early,
    })
}

/// Plain training with one loss and no preference clause.
pub fn train(
    weights: ModelWeights,
    train: &[PredictionSample],
    validation: &[PredictionSample],
    vocab: &Vocabulary,
    loss: LossSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let cond = Conditioning::Fixed {
        loss,
        preference: None,
    };
    fit(weights, train, validation, vocab, &cond, cfg)
}

/// Preference-conditioned fine-tuning: one weight set for every phrase in
/// `prefs`. With no phrases this is plain BLF training at q = 1.
pub fn finetune_berto(
    weights: ModelWeights,
    train: &[PredictionSample],
    validation: &[PredictionSample],
    vocab: &Vocabulary,
    prefs: &[OperatorPreference],
    orientation: Orientation,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let cond = if prefs.is_empty() {
        Conditioning::Fixed {
            loss: LossSpec::Blf { q: 1.0 },
            preference: None,
        }
    } else {
        Conditioning::Preferences {
            choices: prefs.to_vec(),
            orientation,
        }
    };
    fit(weights, train, validation, vocab, &cond, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_zero() {
        let e = Evaluation::from_predictions(vec![1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!((e.mse, e.mean_signed_error), (0.0, 0.0));
    }

    #[test]
    fn plus_one_bias_has_signed_error_one() {
        let e = Evaluation::from_predictions(vec![2.0, 3.0, 5.0], &[1.0, 2.0, 4.0]);
        assert_eq!(e.mean_signed_error, 1.0);
        assert_eq!(e.mse, 1.0);
    }
}
