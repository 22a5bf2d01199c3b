//! Pairwise cell on-off scheme with power and throughput-loss scoring.
//!
//! Decisions are made from predicted loads; power and throughput loss are
//! charged on actual loads. For each co-located pair the high-frequency cell
//! sleeps in an interval when `L̂1 + e·L̂2 ≤ L_th`, and the low-frequency cell
//! then carries `L1 + e·L2`, losing whatever exceeds `L_max`.

mod report;

pub use report::{simulate, PairIntervals, PairSummary, PairTrace, SimReport, ALWAYS_ON};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("invalid power parameters: {0}")]
    InvalidParams(String),
    #[error("trace misalignment: {0}")]
    Misaligned(String),
    #[error("non-finite load in pair ({low}, {high}) at interval {interval}")]
    NonFinite {
        low: u64,
        high: u64,
        interval: usize,
    },
}

/// Power and capacity constants. Loads are in percent of one cell's
/// capacity; `b` is watts per load unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerParams {
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub l_th: f64,
    pub l_max: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            a: 167.0,
            b: 2.73,
            e: 1.0,
            l_th: 80.0,
            l_max: 100.0,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let all_finite = [self.a, self.b, self.e, self.l_th, self.l_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(EnergyError::InvalidParams(
                "all constants must be finite".into(),
            ));
        }
        if self.a <= 0.0 || self.b <= 0.0 {
            return Err(EnergyError::InvalidParams(format!(
                "A and B must be positive, got A={} B={}",
                self.a, self.b
            )));
        }
        if self.e <= 0.0 {
            return Err(EnergyError::InvalidParams(format!(
                "e must be positive, got {}",
                self.e
            )));
        }
        if !(self.l_th > 0.0 && self.l_th <= self.l_max) {
            return Err(EnergyError::InvalidParams(format!(
                "need 0 < L_th <= L_max, got L_th={} L_max={}",
                self.l_th, self.l_max
            )));
        }
        Ok(())
    }
}

/// State of one pair in one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnOffDecision {
    BothOn,
    HighCellOff,
}

impl OnOffDecision {
    pub fn high_cell_off(self) -> bool {
        self == OnOffDecision::HighCellOff
    }
}

/// Switch the high cell off when the predicted combined load fits under the
/// threshold. Negative predictions are treated as zero.
pub fn onoff_decide(l1_hat: f64, l2_hat: f64, params: &PowerParams) -> OnOffDecision {
    if l1_hat.max(0.0) + params.e * l2_hat.max(0.0) <= params.l_th {
        OnOffDecision::HighCellOff
    } else {
        OnOffDecision::BothOn
    }
}

/// Pair power draw in watts for actual loads `l1`, `l2`.
pub fn power(l1: f64, l2: f64, decision: OnOffDecision, params: &PowerParams) -> f64 {
    match decision {
        OnOffDecision::BothOn => 2.0 * params.a + params.b * (l1 + l2),
        OnOffDecision::HighCellOff => params.a + params.b * (l1 + params.e * l2),
    }
}

/// Power saved in one interval by sleeping the high cell, `P_on − P_off`,
/// evaluated in closed form as `A + B·(1 − e)·L2` so that with `e = 1` it is
/// exactly `A` for any loads.
pub fn off_saving(l2: f64, params: &PowerParams) -> f64 {
    params.a + params.b * (1.0 - params.e) * l2
}

/// Load that the remaining cell cannot serve. Zero while both cells are on.
pub fn throughput_loss(l1: f64, l2: f64, decision: OnOffDecision, params: &PowerParams) -> f64 {
    match decision {
        OnOffDecision::BothOn => 0.0,
        OnOffDecision::HighCellOff => (l1 + params.e * l2 - params.l_max).max(0.0),
    }
}
