//! End-to-end runs shared by the CLI, the service and the benchmark tests:
//! building a dataset, training the three forecasters, and scoring
//! preference runs with the energy simulator.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fnn_predict, previous_value_predict, BaselineError, FnnWeights};
use crate::data::{
    make_samples, pair_cells, split_by_time, synth_traffic, CellPair, DataError, LoadSeries,
    PredictionSample, SampleSplit, SplitConfig, SynthConfig,
};
use crate::energy::{simulate, EnergyError, PairTrace, PowerParams, SimReport};
use crate::model::{ModelConfig, ModelWeights};
use crate::prompting::{OperatorPreference, Orientation, Vocabulary};
use crate::training::{evaluate, Evaluation, TrainConfig, TrainError};

/// Windowing and split settings applied to a set of load series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub h: usize,
    pub stats_window: usize,
    pub split: SplitConfig,
    /// Spectral efficiency ratio used when pairing cells.
    pub e: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            h: 5,
            stats_window: 144,
            split: SplitConfig::default(),
            e: 1.0,
        }
    }
}

/// A two-layer encoder small enough to train on a few thousand prompts in
/// minutes on a laptop CPU. Same sequence length, pooling and head layout
/// as the BERT-mini configuration.
pub fn desk_model_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 32,
        heads: 4,
        ffn_dim: 64,
        head_dims: vec![64, 16, 1],
        ..ModelConfig::bert_mini(vocab_size)
    }
}

/// MSE pre-training settings matched to [`desk_model_config`].
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        base_lr: 1e-3,
        batch_size: 32,
        epochs: 10,
        patience: 0,
        seed: 3,
        fit_output_scaling: true,
        ..TrainConfig::default()
    }
}

/// Preference fine-tuning settings that start from a [`desk_train_config`] run.
pub fn desk_finetune_config() -> TrainConfig {
    TrainConfig {
        base_lr: 5e-4,
        epochs: 6,
        seed: 9,
        fit_output_scaling: false,
        ..desk_train_config()
    }
}

/// Settings for the feed-forward baseline.
pub fn fnn_train_config() -> TrainConfig {
    TrainConfig {
        base_lr: 1e-2,
        batch_size: 64,
        epochs: 40,
        patience: 0,
        seed: 3,
        ..TrainConfig::default()
    }
}

/// Hidden width of the feed-forward baseline.
pub const FNN_HIDDEN: usize = 16;

/// Series, pairs and windowed splits ready for training and simulation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Vec<LoadSeries>,
    pub pairs: Vec<CellPair>,
    pub split: SampleSplit,
    /// Day zero of the split.
    pub origin_ms: i64,
}

/// Window and split `series`. Cells are paired in ascending id order; an odd
/// trailing cell is left unpaired (it still contributes samples).
pub fn build_dataset(series: Vec<LoadSeries>, cfg: &DatasetConfig) -> Result<Dataset, DataError> {
    let mut series = series;
    series.sort_by_key(|s| s.cell_id);
    let origin_ms = series.iter().map(|s| s.start_ms).min().unwrap_or(0);
    let mut ids: Vec<u64> = series.iter().map(|s| s.cell_id).collect();
    if ids.len() % 2 == 1 {
        ids.pop();
    }
    let pairs = pair_cells(&ids, cfg.e)?;
    let samples: Vec<PredictionSample> = series
        .iter()
        .flat_map(|s| make_samples(s, cfg.h, cfg.stats_window))
        .collect();
    let split = split_by_time(samples, origin_ms, &cfg.split);
    Ok(Dataset {
        series,
        pairs,
        split,
        origin_ms,
    })
}

pub fn synthetic_dataset(synth: &SynthConfig, cfg: &DatasetConfig) -> Result<Dataset, DataError> {
    build_dataset(synth_traffic(synth)?, cfg)
}

/// Deterministic subset of at most `n` samples, kept in their original order.
pub fn subsample(samples: &[PredictionSample], n: usize, seed: u64) -> Vec<PredictionSample> {
    if n >= samples.len() {
        return samples.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, samples.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| samples[i].clone()).collect()
}

pub fn previous_value_predictions(samples: &[PredictionSample]) -> Result<Vec<f64>, BaselineError> {
    samples.iter().map(previous_value_predict).collect()
}

pub fn fnn_predictions(
    w: &FnnWeights,
    samples: &[PredictionSample],
) -> Result<Vec<f64>, BaselineError> {
    samples.iter().map(|s| fnn_predict(w, s)).collect()
}

/// Predicted and actual pair traces over the intervals where every paired
/// cell has a sample, optionally restricted to `[from_ms, to_ms)`.
/// `predictions[i]` belongs to `samples[i]`.
pub fn pair_traces(
    pairs: &[CellPair],
    samples: &[PredictionSample],
    predictions: &[f64],
    range: Option<(i64, i64)>,
) -> (Vec<PairTrace>, Vec<PairTrace>) {
    assert_eq!(
        samples.len(),
        predictions.len(),
        "one prediction per sample"
    );
    let mut by_cell: BTreeMap<u64, BTreeMap<i64, (f64, f64)>> = BTreeMap::new();
    for (s, &p) in samples.iter().zip(predictions) {
        if let Some((from, to)) = range {
            if s.target_time_ms < from || s.target_time_ms >= to {
                continue;
            }
        }
        by_cell
            .entry(s.cell_id)
            .or_default()
            .insert(s.target_time_ms, (p, s.target));
    }
    let empty = BTreeMap::new();
    let cell = |id: u64| by_cell.get(&id).unwrap_or(&empty);
    let mut times: Option<BTreeSet<i64>> = None;
    for pair in pairs {
        for id in [pair.low_cell, pair.high_cell] {
            let keys: BTreeSet<i64> = cell(id).keys().copied().collect();
            times = Some(match times {
                None => keys,
                Some(t) => t.intersection(&keys).copied().collect(),
            });
        }
    }
    let times: Vec<i64> = times.unwrap_or_default().into_iter().collect();
    let start_ms = times.first().copied().unwrap_or(0);

    let build = |pick: fn(&(f64, f64)) -> f64| -> Vec<PairTrace> {
        pairs
            .iter()
            .map(|pair| {
                let series = |id: u64| times.iter().map(|t| pick(&cell(id)[t])).collect();
                PairTrace {
                    low_cell: pair.low_cell,
                    high_cell: pair.high_cell,
                    start_ms,
                    low: series(pair.low_cell),
                    high: series(pair.high_cell),
                }
            })
            .collect()
    };
    (build(|v| v.0), build(|v| v.1))
}

/// One row of the forecast comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub model: String,
    pub mse: f64,
}

/// Rows sorted by ascending MSE.
pub fn forecast_table(rows: Vec<(String, Evaluation)>) -> Vec<ForecastRow> {
    let mut out: Vec<ForecastRow> = rows
        .into_iter()
        .map(|(model, e)| ForecastRow { model, mse: e.mse })
        .collect();
    out.sort_by(|a, b| a.mse.total_cmp(&b.mse));
    out
}

pub fn render_forecast_table(rows: &[ForecastRow]) -> String {
    let mut out = format!("{:<16} {:>12}\n", "model", "test_mse");
    for r in rows {
        out.push_str(&format!("{:<16} {:>12.4}\n", r.model, r.mse));
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One preference run of the trade-off table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub preference: OperatorPreference,
    pub phrase: String,
    pub q: f64,
    pub total_savings_w: f64,
    pub avg_throughput_loss_pct: f64,
    pub mse: f64,
    pub mean_signed_error: f64,
}

/// The baseline report plus one row per preference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTable {
    pub orientation: Orientation,
    pub baseline: SimReport,
    pub rows: Vec<TradeoffRow>,
}

/// Label of the MSE-trained reference run.
pub const BASELINE_LABEL: &str = "bert_mse";

/// Simulate the MSE-trained model's decisions as the baseline run.
pub fn baseline_report(
    base: &ModelWeights,
    pairs: &[CellPair],
    samples: &[PredictionSample],
    vocab: &Vocabulary,
    params: &PowerParams,
    range: Option<(i64, i64)>,
) -> Result<SimReport, ExperimentError> {
    let eval = evaluate(base, samples, None, vocab)?;
    let (pred, actual) = pair_traces(pairs, samples, &eval.predictions, range);
    Ok(simulate(BASELINE_LABEL, &pred, &actual, params, None)?)
}

/// Evaluate the preference-conditioned model under `pref` and simulate
/// against `baseline`.
#[allow(clippy::too_many_arguments)]
pub fn preference_run(
    berto: &ModelWeights,
    pref: OperatorPreference,
    orientation: Orientation,
    pairs: &[CellPair],
    samples: &[PredictionSample],
    vocab: &Vocabulary,
    params: &PowerParams,
    baseline: &SimReport,
    range: Option<(i64, i64)>,
) -> Result<(TradeoffRow, SimReport), ExperimentError> {
    let eval = evaluate(berto, samples, Some(pref), vocab)?;
    let (pred, actual) = pair_traces(pairs, samples, &eval.predictions, range);
    let report = simulate(pref.phrase(), &pred, &actual, params, Some(baseline))?;
    let row = TradeoffRow {
        preference: pref,
        phrase: pref.phrase().to_string(),
        q: pref.q(orientation),
        total_savings_w: report.total_savings_w,
        avg_throughput_loss_pct: report.avg_throughput_loss_pct,
        mse: eval.mse,
        mean_signed_error: eval.mean_signed_error,
    };
    Ok((row, report))
}

/// All five preferences, ordered from service quality to power savings.
pub fn tradeoff_table(
    bert_mse: &ModelWeights,
    berto: &ModelWeights,
    orientation: Orientation,
    pairs: &[CellPair],
    samples: &[PredictionSample],
    vocab: &Vocabulary,
    params: &PowerParams,
) -> Result<TradeoffTable, ExperimentError> {
    let baseline = baseline_report(bert_mse, pairs, samples, vocab, params, None)?;
    let rows = OperatorPreference::ALL
        .iter()
        .map(|&p| {
            preference_run(
                berto,
                p,
                orientation,
                pairs,
                samples,
                vocab,
                params,
                &baseline,
                None,
            )
            .map(|(row, _)| row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TradeoffTable {
        orientation,
        baseline,
        rows,
    })
}

impl TradeoffTable {
    pub fn to_text(&self) -> String {
        let mapping: Vec<String> = OperatorPreference::ALL
            .iter()
            .map(|p| format!("{}={}", p.phrase(), p.q(self.orientation)))
            .collect();
        let mut out = format!(
            "# orientation: {}\n# q mapping: {}\n# baseline: {} (0 W by definition)\n",
            self.orientation,
            mapping.join("; "),
            self.baseline.label
        );
        out.push_str(&format!(
            "{:<34} {:>6} {:>16} {:>12} {:>10} {:>10}\n",
            "preference", "q", "savings_w", "loss_pct", "mse", "bias"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<34} {:>6} {:>16.2} {:>12.4} {:>10.3} {:>10.3}\n",
                r.phrase,
                r.q,
                r.total_savings_w,
                r.avg_throughput_loss_pct,
                r.mse,
                r.mean_signed_error
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(cell: u64, t: i64, target: f64) -> PredictionSample {
        PredictionSample {
            cell_id: cell,
            target_time_ms: t,
            history: vec![target],
            mean: target,
            deviation: 0.0,
            tod_bucket: 0,
            target,
        }
    }

    #[test]
    fn traces_use_common_intervals() {
        let pairs = pair_cells(&[1, 2], 1.0).unwrap();
        let samples = vec![
            sample(1, 0, 10.0),
            sample(2, 0, 20.0),
            sample(1, 600_000, 11.0),
            sample(2, 1_200_000, 22.0),
        ];
        let preds = vec![1.0, 2.0, 3.0, 4.0];
        let (p, a) = pair_traces(&pairs, &samples, &preds, None);
        assert_eq!(p[0].low, vec![1.0]);
        assert_eq!(p[0].high, vec![2.0]);
        assert_eq!(a[0].low, vec![10.0]);
        assert_eq!(a[0].high, vec![20.0]);
    }

    #[test]
    fn range_filters_intervals() {
        let pairs = pair_cells(&[1, 2], 1.0).unwrap();
        let samples: Vec<_> = (0..4)
            .flat_map(|t| [sample(1, t * 600_000, 1.0), sample(2, t * 600_000, 2.0)])
            .collect();
        let preds = vec![0.0; samples.len()];
        let (p, _) = pair_traces(&pairs, &samples, &preds, Some((600_000, 1_800_000)));
        assert_eq!(p[0].len(), 2);
        assert_eq!(p[0].start_ms, 600_000);
    }

    #[test]
    fn subsample_is_deterministic_and_ordered() {
        let samples: Vec<_> = (0..100).map(|t| sample(1, t, t as f64)).collect();
        let a = subsample(&samples, 10, 4);
        assert_eq!(a, subsample(&samples, 10, 4));
        assert_eq!(a.len(), 10);
        assert!(a
            .windows(2)
            .all(|w| w[0].target_time_ms < w[1].target_time_ms));
    }

    #[test]
    fn synthetic_dataset_shape() {
        let d = synthetic_dataset(&SynthConfig::default(), &DatasetConfig::default()).unwrap();
        assert_eq!(d.pairs.len(), 10);
        // stats window of one day: targets start on day 1
        assert_eq!(d.split.train.len(), 20 * 9 * 144);
        assert_eq!(d.split.validation.len(), 20 * 144);
        assert_eq!(d.split.test.len(), 20 * 3 * 144);
    }

    #[test]
    fn forecast_table_sorts_ascending() {
        let e = |mse| Evaluation {
            mse,
            mean_signed_error: 0.0,
            predictions: vec![],
        };
        let rows = forecast_table(vec![("a".into(), e(3.0)), ("b".into(), e(1.0))]);
        assert_eq!(rows[0].model, "b");
    }
}
