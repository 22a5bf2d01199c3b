use serde::{Deserialize, Serialize};

use super::{LoadSeries, BINS_PER_DAY, BIN_MS};

/// One forecasting instance: predict `target` from the preceding window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSample {
    pub cell_id: u64,
    /// Start of the target bin, epoch milliseconds.
    pub target_time_ms: i64,
    pub history: Vec<f64>,
    pub mean: f64,
    pub deviation: f64,
    /// Time-of-day bin in `[0, 143]`, UTC.
    pub tod_bucket: u16,
    pub target: f64,
}

/// Window `series` into samples. Summary statistics use the trailing
/// `stats_window` values ending just before the target.
///
/// Returns an empty list when the series is too short.
pub fn make_samples(series: &LoadSeries, h: usize, stats_window: usize) -> Vec<PredictionSample> {
    let first = h.max(stats_window);
    if h == 0 || series.len() <= first {
        return Vec::new();
    }
    let step_ms = series.step_s as i64 * 1000;
    (first..series.len())
        .map(|t| {
            let stats = &series.values[t - stats_window..t];
            let (mean, deviation) = mean_std(stats);
            let target_time_ms = series.start_ms + t as i64 * step_ms;
            PredictionSample {
                cell_id: series.cell_id,
                target_time_ms,
                history: series.values[t - h..t].to_vec(),
                mean,
                deviation,
                tod_bucket: tod_bucket(target_time_ms),
                target: series.values[t],
            }
        })
        .collect()
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

pub(crate) fn tod_bucket(time_ms: i64) -> u16 {
    (time_ms.div_euclid(BIN_MS)).rem_euclid(BINS_PER_DAY as i64) as u16
}

/// Day-based train / validation / test split on target time.
///
/// The last `validation_days` of the training period are held out for early
/// stopping; the test period follows the training period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_days: usize,
    pub test_days: usize,
    pub validation_days: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_days: 11,
            test_days: 3,
            validation_days: 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SampleSplit {
    pub train: Vec<PredictionSample>,
    pub validation: Vec<PredictionSample>,
    pub test: Vec<PredictionSample>,
}

/// Assign samples to splits by the day their target falls in, counted from
/// `origin_ms`. Samples past the test period are dropped.
pub fn split_by_time(
    samples: Vec<PredictionSample>,
    origin_ms: i64,
    split: &SplitConfig,
) -> SampleSplit {
    let day_ms = BINS_PER_DAY as i64 * BIN_MS;
    let fit_days = split.train_days.saturating_sub(split.validation_days) as i64;
    let mut out = SampleSplit::default();
    for s in samples {
        let day = (s.target_time_ms - origin_ms).div_euclid(day_ms);
        if day < 0 {
            continue;
        } else if day < fit_days {
            out.train.push(s);
        } else if day < split.train_days as i64 {
            out.validation.push(s);
        } else if day < (split.train_days + split.test_days) as i64 {
            out.test.push(s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0: i64 = 1_383_264_000_000;

    #[test]
    fn single_sample_example() {
        let s = LoadSeries::new(7, T0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let samples = make_samples(&s, 5, 5);
        assert_eq!(samples.len(), 1);
        let x = &samples[0];
        assert_eq!(x.history, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(x.target, 6.0);
        assert_eq!(x.mean, 3.0);
        assert!((x.deviation - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(x.target_time_ms, T0 + 5 * BIN_MS);
        assert_eq!(x.tod_bucket, 5);
    }

    #[test]
    fn constant_series_has_zero_deviation() {
        let s = LoadSeries::new(1, T0, vec![4.2; 50]);
        let samples = make_samples(&s, 5, 10);
        assert_eq!(samples.len(), 40);
        assert!(samples.iter().all(|x| x.deviation == 0.0));
    }

    #[test]
    fn too_short_gives_no_samples() {
        let s = LoadSeries::new(1, T0, vec![1.0; 5]);
        assert!(make_samples(&s, 5, 5).is_empty());
    }

    #[test]
    fn tod_wraps_daily() {
        assert_eq!(tod_bucket(T0), 0);
        assert_eq!(tod_bucket(T0 + 143 * BIN_MS), 143);
        assert_eq!(tod_bucket(T0 + 144 * BIN_MS), 0);
    }

    #[test]
    fn split_assigns_days() {
        let s = LoadSeries::new(1, T0, (0..144 * 15).map(|i| i as f64).collect());
        let samples = make_samples(&s, 5, 144);
        let split = split_by_time(samples, T0, &SplitConfig::default());
        assert_eq!(split.train.len(), 9 * 144);
        assert_eq!(split.validation.len(), 144);
        assert_eq!(split.test.len(), 3 * 144);
        assert_eq!(split.test[0].target_time_ms, T0 + 11 * 144 * BIN_MS);
    }

    proptest! {
        #[test]
        fn targets_partition_the_tail(
            values in proptest::collection::vec(0.0f64..100.0, 0..60),
            h in 1usize..8,
            sw in 1usize..12,
        ) {
            let s = LoadSeries::new(1, T0, values.clone());
            let samples = make_samples(&s, h, sw);
            let targets: Vec<f64> = samples.iter().map(|x| x.target).collect();
            let start = h.max(sw).min(values.len());
            prop_assert_eq!(targets, values[start..].to_vec());
            for x in &samples {
                prop_assert_eq!(x.history.len(), h);
                prop_assert!(x.deviation >= 0.0);
                prop_assert!(x.tod_bucket < 144);
            }
        }
    }
}
