//! Training objectives: squared error and the balancing loss.
//!
//! The balancing loss (BLF) with knob `q > 0` is
//!
//! ```text
//! blf(y, ŷ, q) = max{ q·(y − ŷ), ŷ − y } / (q + 1)
//! ```
//!
//! which is the pinball loss at level `τ = q/(q+1)`: under-prediction costs
//! `τ` per unit, over-prediction `1 − τ`. Its constant minimizer over a sample
//! is therefore the empirical `τ`-quantile.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("balancing loss needs q > 0, got {0}")]
    InvalidQ(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    Mse,
    Blf { q: f64 },
}

impl LossSpec {
    pub fn blf(q: f64) -> Result<Self, LossError> {
        if q > 0.0 && q.is_finite() {
            Ok(LossSpec::Blf { q })
        } else {
            Err(LossError::InvalidQ(q))
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        match *self {
            LossSpec::Mse => Ok(()),
            LossSpec::Blf { q } => LossSpec::blf(q).map(|_| ()),
        }
    }

    pub fn value(&self, y: f64, y_hat: f64) -> f64 {
        match *self {
            LossSpec::Mse => mse(y, y_hat),
            LossSpec::Blf { q } => blf(y, y_hat, q),
        }
    }

    /// d(loss)/d(ŷ).
    pub fn derivative(&self, y: f64, y_hat: f64) -> f64 {
        match *self {
            LossSpec::Mse => 2.0 * (y_hat - y),
            LossSpec::Blf { q } => blf_subgradient(y, y_hat, q),
        }
    }
}

pub fn mse(y: f64, y_hat: f64) -> f64 {
    (y - y_hat).powi(2)
}

/// Mean squared error over paired slices.
pub fn mean_squared_error(y: &[f64], y_hat: &[f64]) -> f64 {
    assert_eq!(y.len(), y_hat.len());
    if y.is_empty() {
        return 0.0;
    }
    y.iter().zip(y_hat).map(|(&a, &b)| mse(a, b)).sum::<f64>() / y.len() as f64
}

pub fn blf(y: f64, y_hat: f64, q: f64) -> f64 {
    let under = q * (y - y_hat) / (q + 1.0);
    let over = (y_hat - y) / (q + 1.0);
    under.max(over)
}

/// Subgradient with respect to ŷ; zero at an exact fit.
pub fn blf_subgradient(y: f64, y_hat: f64, q: f64) -> f64 {
    if y_hat < y {
        -q / (q + 1.0)
    } else if y_hat > y {
        1.0 / (q + 1.0)
    } else {
        0.0
    }
}

/// Quantile level minimized by the balancing loss with knob `q`.
pub fn blf_minimizer_quantile(q: f64) -> f64 {
    q / (q + 1.0)
}

/// Lower empirical `tau`-quantile: the `⌈τ·n⌉`-th order statistic.
pub fn empirical_quantile(values: &[f64], tau: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((tau * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}
