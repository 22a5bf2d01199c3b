use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    off_saving, onoff_decide, power, throughput_loss, EnergyError, OnOffDecision, PowerParams,
};

/// Label of the implicit baseline in which no cell ever sleeps.
pub const ALWAYS_ON: &str = "always_on";

/// Aligned load traces of one co-located pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTrace {
    pub low_cell: u64,
    pub high_cell: u64,
    /// Start of the first interval, epoch milliseconds.
    pub start_ms: i64,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl PairTrace {
    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }
}

/// Per-interval outcome for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairIntervals {
    pub low_cell: u64,
    pub high_cell: u64,
    pub start_ms: i64,
    pub decisions: Vec<OnOffDecision>,
    pub power_w: Vec<f64>,
    pub throughput_loss: Vec<f64>,
    /// Baseline power minus this run's power.
    pub savings_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub low_cell: u64,
    pub high_cell: u64,
    pub off_intervals: usize,
    /// Mean over intervals of the pair's saving.
    pub savings_w: f64,
    pub mean_power_w: f64,
    pub throughput_loss_pct: f64,
}

/// Outcome of one simulated run against a baseline.
///
/// Watt figures are per-interval means: each pair's power difference is
/// averaged over the simulated intervals and the pair means are summed, so
/// `total_savings_w` is the average network-wide power saved at any instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub label: String,
    pub baseline: String,
    pub params: PowerParams,
    pub intervals: usize,
    pub total_savings_w: f64,
    pub avg_throughput_loss_pct: f64,
    pub mean_power_w: f64,
    pub off_fraction: f64,
    pub per_pair: Vec<PairSummary>,
    pub traces: Vec<PairIntervals>,
}

fn check_alignment(predicted: &[PairTrace], actual: &[PairTrace]) -> Result<(), EnergyError> {
    if predicted.len() != actual.len() {
        return Err(EnergyError::Misaligned(format!(
            "{} predicted pairs vs {} actual pairs",
            predicted.len(),
            actual.len()
        )));
    }
    let intervals = actual.first().map_or(0, PairTrace::len);
    for (p, a) in predicted.iter().zip(actual) {
        let same_pair = p.low_cell == a.low_cell && p.high_cell == a.high_cell;
        if !same_pair || p.start_ms != a.start_ms {
            return Err(EnergyError::Misaligned(format!(
                "predicted pair ({}, {}) @ {} does not match actual pair ({}, {}) @ {}",
                p.low_cell, p.high_cell, p.start_ms, a.low_cell, a.high_cell, a.start_ms
            )));
        }
        for t in [p, a] {
            if t.low.len() != intervals || t.high.len() != intervals {
                return Err(EnergyError::Misaligned(format!(
                    "pair ({}, {}) has traces of length {}/{}, expected {intervals}",
                    t.low_cell,
                    t.high_cell,
                    t.low.len(),
                    t.high.len()
                )));
            }
            let bad = t
                .low
                .iter()
                .zip(&t.high)
                .position(|(l, h)| !l.is_finite() || !h.is_finite());
            if let Some(interval) = bad {
                return Err(EnergyError::NonFinite {
                    low: t.low_cell,
                    high: t.high_cell,
                    interval,
                });
            }
        }
    }
    Ok(())
}

fn check_baseline(base: &SimReport, actual: &[PairTrace]) -> Result<(), EnergyError> {
    let aligned = base.traces.len() == actual.len()
        && base.traces.iter().zip(actual).all(|(b, a)| {
            b.low_cell == a.low_cell
                && b.high_cell == a.high_cell
                && b.start_ms == a.start_ms
                && b.decisions.len() == a.len()
        });
    if aligned {
        Ok(())
    } else {
        Err(EnergyError::Misaligned(format!(
            "baseline run {:?} covers different pairs or intervals",
            base.label
        )))
    }
}

/// Decide on `predicted`, charge on `actual`, and compare with `baseline`
/// (or with every cell always on when `None`). Savings may be negative.
pub fn simulate(
    label: &str,
    predicted: &[PairTrace],
    actual: &[PairTrace],
    params: &PowerParams,
    baseline: Option<&SimReport>,
) -> Result<SimReport, EnergyError> {
    params.validate()?;
    check_alignment(predicted, actual)?;
    if let Some(b) = baseline {
        check_baseline(b, actual)?;
    }
    let intervals = actual.first().map_or(0, PairTrace::len);

    let mut traces = Vec::with_capacity(actual.len());
    let mut per_pair = Vec::with_capacity(actual.len());
    let (mut lost, mut offered, mut off_total) = (0.0, 0.0, 0usize);
    for (k, (p, a)) in predicted.iter().zip(actual).enumerate() {
        let mut row = PairIntervals {
            low_cell: a.low_cell,
            high_cell: a.high_cell,
            start_ms: a.start_ms,
            decisions: Vec::with_capacity(intervals),
            power_w: Vec::with_capacity(intervals),
            throughput_loss: Vec::with_capacity(intervals),
            savings_w: Vec::with_capacity(intervals),
        };
        let (mut pair_lost, mut pair_offered) = (0.0, 0.0);
        for t in 0..intervals {
            let (l1, l2) = (a.low[t], a.high[t]);
            let d = onoff_decide(p.low[t], p.high[t], params);
            let base = baseline.map_or(OnOffDecision::BothOn, |b| b.traces[k].decisions[t]);
            let saving = match (base.high_cell_off(), d.high_cell_off()) {
                (false, true) => off_saving(l2, params),
                (true, false) => -off_saving(l2, params),
                _ => 0.0,
            };
            let loss = throughput_loss(l1, l2, d, params);
            pair_lost += loss;
            pair_offered += l1 + params.e * l2;
            row.decisions.push(d);
            row.power_w.push(power(l1, l2, d, params));
            row.throughput_loss.push(loss);
            row.savings_w.push(saving);
        }
        let off_intervals = row.decisions.iter().filter(|d| d.high_cell_off()).count();
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        per_pair.push(PairSummary {
            low_cell: a.low_cell,
            high_cell: a.high_cell,
            off_intervals,
            savings_w: mean(&row.savings_w),
            mean_power_w: mean(&row.power_w),
            throughput_loss_pct: pct(pair_lost, pair_offered),
        });
        lost += pair_lost;
        offered += pair_offered;
        off_total += off_intervals;
        traces.push(row);
    }

    let pair_intervals = intervals * actual.len();
    Ok(SimReport {
        label: label.to_string(),
        baseline: baseline.map_or_else(|| ALWAYS_ON.to_string(), |b| b.label.clone()),
        params: *params,
        intervals,
        total_savings_w: per_pair.iter().map(|p| p.savings_w).sum(),
        avg_throughput_loss_pct: pct(lost, offered),
        mean_power_w: per_pair.iter().map(|p| p.mean_power_w).sum(),
        off_fraction: if pair_intervals == 0 {
            0.0
        } else {
            off_total as f64 / pair_intervals as f64
        },
        per_pair,
        traces,
    })
}

fn pct(lost: f64, offered: f64) -> f64 {
    if offered > 0.0 {
        100.0 * lost / offered
    } else {
        0.0
    }
}

impl SimReport {
    /// Per-pair rows followed by totals, with a self-describing header.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "# run: {}", self.label);
        let _ = writeln!(out, "# baseline: {}", self.baseline);
        let _ = writeln!(
            out,
            "# A={} W, B={} W/unit, e={}, L_th={}, L_max={}",
            p.a, p.b, p.e, p.l_th, p.l_max
        );
        let _ = writeln!(
            out,
            "# {} intervals; watts are per-interval means summed over pairs",
            self.intervals
        );
        let _ = writeln!(
            out,
            "{:>10} {:>10} {:>8} {:>12} {:>12} {:>10}",
            "low", "high", "off", "savings_w", "power_w", "loss_pct"
        );
        for r in &self.per_pair {
            let _ = writeln!(
                out,
                "{:>10} {:>10} {:>8} {:>12.2} {:>12.2} {:>10.4}",
                r.low_cell,
                r.high_cell,
                r.off_intervals,
                r.savings_w,
                r.mean_power_w,
                r.throughput_loss_pct
            );
        }
        let _ = writeln!(out, "total_savings_w {:.2}", self.total_savings_w);
        let _ = writeln!(
            out,
            "avg_throughput_loss_pct {:.4}",
            self.avg_throughput_loss_pct
        );
        let _ = writeln!(out, "mean_power_w {:.2}", self.mean_power_w);
        let _ = writeln!(out, "off_fraction {:.4}", self.off_fraction);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(low_cell: u64, low: Vec<f64>, high: Vec<f64>) -> PairTrace {
        PairTrace {
            low_cell,
            high_cell: low_cell + 1,
            start_ms: 0,
            low,
            high,
        }
    }

    fn params() -> PowerParams {
        PowerParams::default()
    }

    #[test]
    fn run_against_itself_saves_nothing() {
        let actual = vec![trace(0, vec![30.0, 60.0], vec![40.0, 50.0])];
        let pred = vec![trace(0, vec![20.0, 50.0], vec![30.0, 25.0])];
        let first = simulate("run", &pred, &actual, &params(), None).unwrap();
        let again = simulate("run", &pred, &actual, &params(), Some(&first)).unwrap();
        assert_eq!(again.total_savings_w, 0.0);
        assert!(again.per_pair.iter().all(|p| p.savings_w == 0.0));
        assert_eq!(again.baseline, "run");
    }

    #[test]
    fn negative_savings_against_a_sleepier_baseline() {
        let actual = vec![trace(0, vec![30.0], vec![40.0])];
        let sleepy = simulate("sleepy", &actual, &actual, &params(), None).unwrap();
        let cautious = vec![trace(0, vec![90.0], vec![90.0])];
        let r = simulate("cautious", &cautious, &actual, &params(), Some(&sleepy)).unwrap();
        assert_eq!(r.total_savings_w, -167.0);
    }

    #[test]
    fn misalignment_is_an_error() {
        let actual = vec![trace(0, vec![1.0, 2.0], vec![1.0, 2.0])];
        let short = vec![trace(0, vec![1.0], vec![1.0])];
        assert!(matches!(
            simulate("x", &short, &actual, &params(), None),
            Err(EnergyError::Misaligned(_))
        ));
        let other = vec![trace(4, vec![1.0, 2.0], vec![1.0, 2.0])];
        assert!(simulate("x", &other, &actual, &params(), None).is_err());
        assert!(simulate("x", &[], &actual, &params(), None).is_err());
    }

    #[test]
    fn non_finite_prediction_is_rejected() {
        let actual = vec![trace(0, vec![1.0, 2.0], vec![1.0, 2.0])];
        let pred = vec![trace(0, vec![1.0, f64::NAN], vec![1.0, 2.0])];
        assert_eq!(
            simulate("x", &pred, &actual, &params(), None).unwrap_err(),
            EnergyError::NonFinite {
                low: 0,
                high: 1,
                interval: 1
            }
        );
    }

    #[test]
    fn text_report_lists_pairs_and_totals() {
        let actual = vec![
            trace(0, vec![30.0], vec![40.0]),
            trace(2, vec![70.0], vec![40.0]),
        ];
        let r = simulate("oracle", &actual, &actual, &params(), None).unwrap();
        let text = r.to_text();
        assert!(text.contains("# baseline: always_on"));
        assert!(text.contains("total_savings_w 167.00"));
        assert_eq!(text.lines().filter(|l| l.starts_with(' ')).count(), 3);
    }

    #[test]
    fn json_round_trip() {
        let actual = vec![trace(0, vec![30.0, 90.0], vec![40.0, 5.0])];
        let r = simulate("j", &actual, &actual, &params(), None).unwrap();
        let back: SimReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
