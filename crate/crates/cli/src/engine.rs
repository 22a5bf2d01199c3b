//! Prediction and what-if simulation against loaded checkpoints. The CLI and
//! the JSON service both go through [`Engine`], so a service response can
//! always be reproduced from the command line with the same config.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, Context};
use cellcast_core::checkpoint::load_model;
use cellcast_core::data::{PredictionSample, BIN_MS};
use cellcast_core::energy::{simulate, PairSummary, PowerParams, SimReport};
use cellcast_core::experiment::{
    pair_traces, preference_run, Dataset, TradeoffRow, TradeoffTable, BASELINE_LABEL,
};
use cellcast_core::model::ModelWeights;
use cellcast_core::prompting::{OperatorPreference, Orientation, PromptError, Vocabulary};
use cellcast_core::training::evaluate;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const BERT_MSE_CKPT: &str = "bert_mse.ckpt";
pub const BERTO_CKPT: &str = "berto.ckpt";
pub const FNN_CKPT: &str = "fnn.ckpt";

/// Label of the baseline run when no MSE-trained checkpoint is available.
pub const UNCONDITIONED_LABEL: &str = "berto_no_preference";

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    UnknownPreference(PromptError),
    #[error("no forecast window for cell {cell_id} ending at {window_end_time}")]
    NoWindow { cell_id: u64, window_end_time: i64 },
    #[error("time range must satisfy start < end")]
    BadRange,
    #[error("time range covers no test intervals")]
    EmptyRange,
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

/// `[start, end)` in epoch milliseconds, applied to target times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEntry {
    pub phrase: String,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub cell_id: u64,
    pub window_end_time: i64,
    pub target_time: i64,
    pub prediction: f64,
    pub actual: f64,
    pub q: f64,
    pub preference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub preference: String,
    pub q: f64,
    pub orientation: Orientation,
    pub baseline: String,
    pub time_range: Option<TimeRange>,
    pub intervals: usize,
    pub total_savings_w: f64,
    pub avg_throughput_loss_pct: f64,
    pub mean_power_w: f64,
    pub off_fraction: f64,
    pub mse: f64,
    pub mean_signed_error: f64,
    pub per_pair: Vec<PairSummary>,
}

/// Loaded checkpoints plus the dataset they are queried against.
/// Immutable once built.
pub struct Engine {
    pub vocab: Vocabulary,
    pub orientation: Orientation,
    pub params: PowerParams,
    pub dataset: Dataset,
    berto: ModelWeights,
    baseline: Option<ModelWeights>,
    windows: HashMap<(u64, i64), PredictionSample>,
    full_baseline: Option<SimReport>,
}

fn load(path: &Path, vocab: &Vocabulary) -> anyhow::Result<ModelWeights> {
    let (w, _) = load_model(path, vocab).with_context(|| format!("loading {}", path.display()))?;
    Ok(w)
}

impl Engine {
    /// Requires the fine-tuned checkpoint. Without an MSE-trained checkpoint
    /// the baseline is the fine-tuned model prompted without a preference.
    pub fn load(cfg: &RunConfig) -> anyhow::Result<Self> {
        let vocab = Vocabulary::standard();
        let berto_path = cfg.artifact(BERTO_CKPT);
        if !berto_path.exists() {
            return Err(anyhow!(
                "no fine-tuned checkpoint at {}; run `cellcast finetune` first",
                berto_path.display()
            ));
        }
        let berto = load(&berto_path, &vocab)?;
        let mse_path = cfg.artifact(BERT_MSE_CKPT);
        let baseline = if mse_path.exists() {
            Some(load(&mse_path, &vocab)?)
        } else {
            None
        };
        Self::new(cfg, berto, baseline)
    }

    pub fn new(
        cfg: &RunConfig,
        berto: ModelWeights,
        baseline: Option<ModelWeights>,
    ) -> anyhow::Result<Self> {
        let vocab = Vocabulary::standard();
        let dataset = cfg.dataset()?;
        let split = &dataset.split;
        let windows = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .map(|s| ((s.cell_id, s.target_time_ms), s.clone()))
            .collect();
        let mut engine = Self {
            vocab,
            orientation: cfg.orientation,
            params: cfg.power,
            dataset,
            berto,
            baseline,
            windows,
            full_baseline: None,
        };
        engine.full_baseline = Some(engine.baseline_report(None)?);
        Ok(engine)
    }

    pub fn baseline_label(&self) -> &'static str {
        if self.baseline.is_some() {
            BASELINE_LABEL
        } else {
            UNCONDITIONED_LABEL
        }
    }

    pub fn preferences(&self) -> Vec<PreferenceEntry> {
        OperatorPreference::ALL
            .iter()
            .map(|p| PreferenceEntry {
                phrase: p.phrase().to_string(),
                q: p.q(self.orientation),
            })
            .collect()
    }

    pub fn parse_preference(phrase: &str) -> Result<OperatorPreference, EngineError> {
        OperatorPreference::from_phrase(phrase).map_err(EngineError::UnknownPreference)
    }

    /// Forecast for the bin right after the window whose last bin starts at
    /// `window_end_time`.
    pub fn predict(
        &self,
        cell_id: u64,
        window_end_time: i64,
        pref: OperatorPreference,
    ) -> Result<Prediction, EngineError> {
        let target_time = window_end_time + BIN_MS;
        let sample = self
            .windows
            .get(&(cell_id, target_time))
            .ok_or(EngineError::NoWindow {
                cell_id,
                window_end_time,
            })?;
        let eval = evaluate(
            &self.berto,
            std::slice::from_ref(sample),
            Some(pref),
            &self.vocab,
        )
        .map_err(|e| EngineError::Internal(e.into()))?;
        Ok(Prediction {
            cell_id,
            window_end_time,
            target_time,
            prediction: eval.predictions[0],
            actual: sample.target,
            q: pref.q(self.orientation),
            preference: pref.phrase().to_string(),
        })
    }

    fn baseline_report(&self, range: Option<TimeRange>) -> anyhow::Result<SimReport> {
        if let (None, Some(full)) = (range, &self.full_baseline) {
            return Ok(full.clone());
        }
        let model = self.baseline.as_ref().unwrap_or(&self.berto);
        let test = &self.dataset.split.test;
        let eval = evaluate(model, test, None, &self.vocab)?;
        let range = range.map(|r| (r.start, r.end));
        let (pred, actual) = pair_traces(&self.dataset.pairs, test, &eval.predictions, range);
        Ok(simulate(
            self.baseline_label(),
            &pred,
            &actual,
            &self.params,
            None,
        )?)
    }

    fn checked_baseline(&self, range: Option<TimeRange>) -> Result<SimReport, EngineError> {
        if let Some(r) = range {
            if r.start >= r.end {
                return Err(EngineError::BadRange);
            }
        }
        let baseline = self.baseline_report(range)?;
        if baseline.intervals == 0 {
            return Err(EngineError::EmptyRange);
        }
        Ok(baseline)
    }

    fn run(
        &self,
        pref: OperatorPreference,
        range: Option<TimeRange>,
        baseline: &SimReport,
    ) -> Result<(TradeoffRow, SimReport), EngineError> {
        preference_run(
            &self.berto,
            pref,
            self.orientation,
            &self.dataset.pairs,
            &self.dataset.split.test,
            &self.vocab,
            &self.params,
            baseline,
            range.map(|r| (r.start, r.end)),
        )
        .map_err(|e| EngineError::Internal(e.into()))
    }

    /// Run `pref` over the test period, optionally restricted to `range`,
    /// scored against the baseline over the same intervals.
    pub fn simulate(
        &self,
        pref: OperatorPreference,
        range: Option<TimeRange>,
    ) -> Result<(TradeoffRow, SimReport), EngineError> {
        let baseline = self.checked_baseline(range)?;
        self.run(pref, range, &baseline)
    }

    pub fn summary(
        &self,
        pref: OperatorPreference,
        range: Option<TimeRange>,
    ) -> Result<SimulationSummary, EngineError> {
        let (row, report) = self.simulate(pref, range)?;
        Ok(SimulationSummary {
            preference: row.phrase,
            q: row.q,
            orientation: self.orientation,
            baseline: report.baseline,
            time_range: range,
            intervals: report.intervals,
            total_savings_w: report.total_savings_w,
            avg_throughput_loss_pct: report.avg_throughput_loss_pct,
            mean_power_w: report.mean_power_w,
            off_fraction: report.off_fraction,
            mse: row.mse,
            mean_signed_error: row.mean_signed_error,
            per_pair: report.per_pair,
        })
    }

    /// Rows for `prefs` in the given order, with the matching baseline.
    pub fn table(
        &self,
        prefs: &[OperatorPreference],
        range: Option<TimeRange>,
    ) -> Result<TradeoffTable, EngineError> {
        let baseline = self.checked_baseline(range)?;
        let rows = prefs
            .iter()
            .map(|&p| self.run(p, range, &baseline).map(|(row, _)| row))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TradeoffTable {
            orientation: self.orientation,
            baseline,
            rows,
        })
    }
}
