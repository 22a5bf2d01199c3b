use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CellRecord, DataError, BIN_MS, STEP_S};

/// Default calibration percentile for raw-activity → load-percent mapping.
pub const DEFAULT_CALIBRATION_PERCENTILE: f64 = 99.5;
/// Upper clip for normalized load values.
pub const MAX_LOAD_PCT: f64 = 120.0;

/// A gap-free load series on the 10-minute grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSeries {
    pub cell_id: u64,
    pub start_ms: i64,
    pub step_s: u32,
    pub values: Vec<f64>,
}

impl LoadSeries {
    pub fn new(cell_id: u64, start_ms: i64, values: Vec<f64>) -> Self {
        Self {
            cell_id,
            start_ms,
            step_s: STEP_S,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Epoch milliseconds of the bin at `index`.
    pub fn time_at(&self, index: usize) -> i64 {
        self.start_ms + index as i64 * self.step_s as i64 * 1000
    }

    /// Index of the bin starting at `time_ms`, if it lies on this series.
    pub fn index_of(&self, time_ms: i64) -> Option<usize> {
        let step = self.step_s as i64 * 1000;
        let offset = time_ms - self.start_ms;
        if offset < 0 || offset % step != 0 {
            return None;
        }
        let idx = (offset / step) as usize;
        (idx < self.values.len()).then_some(idx)
    }

    /// `cell_id,start_ms,step_s,v0,v1,…`
    pub fn to_line(&self) -> String {
        let mut line = format!("{},{},{}", self.cell_id, self.start_ms, self.step_s);
        for v in &self.values {
            line.push(',');
            line.push_str(&v.to_string());
        }
        line
    }

    pub fn from_line(line: &str) -> Result<Self, String> {
        let mut fields = line.trim().split(',');
        let mut next = |what: &str| fields.next().ok_or_else(|| format!("missing {what}"));
        let cell_id = next("cell_id")?
            .parse::<u64>()
            .map_err(|e| format!("cell_id: {e}"))?;
        let start_ms = next("start_ms")?
            .parse::<i64>()
            .map_err(|e| format!("start_ms: {e}"))?;
        let step_s = next("step_s")?
            .parse::<u32>()
            .map_err(|e| format!("step_s: {e}"))?;
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| format!("value {f:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("series has no values".into());
        }
        if step_s == 0 {
            return Err("step_s must be positive".into());
        }
        Ok(Self {
            cell_id,
            start_ms,
            step_s,
            values,
        })
    }
}

/// Build the contiguous raw series for `cell`, filling gaps by linear
/// interpolation between the neighbouring observed bins.
pub fn build_series(records: &[CellRecord], cell: u64) -> Result<LoadSeries, DataError> {
    build_with_gaps(records, cell).map(|(series, _)| series)
}

fn build_with_gaps(records: &[CellRecord], cell: u64) -> Result<(LoadSeries, usize), DataError> {
    let mut observed: BTreeMap<i64, f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.cell_id == cell) {
        let bin = r.timestamp_ms - r.timestamp_ms.rem_euclid(BIN_MS);
        *observed.entry(bin).or_insert(0.0) += r.activity;
    }
    let (&first, _) = observed
        .first_key_value()
        .ok_or(DataError::EmptySeries(cell))?;
    let (&last, _) = observed.last_key_value().expect("non-empty");
    let len = ((last - first) / BIN_MS) as usize + 1;

    let mut values = vec![0.0; len];
    let mut prev: Option<(usize, f64)> = None;
    for (&ts, &v) in &observed {
        let idx = ((ts - first) / BIN_MS) as usize;
        if let Some((pi, pv)) = prev {
            let span = (idx - pi) as f64;
            for (k, slot) in values.iter_mut().enumerate().take(idx).skip(pi + 1) {
                let frac = (k - pi) as f64 / span;
                *slot = pv + (v - pv) * frac;
            }
        }
        values[idx] = v;
        prev = Some((idx, v));
    }
    let missing = len - observed.len();
    Ok((LoadSeries::new(cell, first, values), missing))
}

/// Build one series per cell present in `records`, dropping cells whose
/// fraction of interpolated bins exceeds `max_missing_fraction`.
///
/// Returns the kept series (ascending cell id) and the excluded cell ids.
pub fn build_all_series(
    records: &[CellRecord],
    max_missing_fraction: f64,
) -> (Vec<LoadSeries>, Vec<u64>) {
    let mut cells: Vec<u64> = records.iter().map(|r| r.cell_id).collect();
    cells.sort_unstable();
    cells.dedup();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for cell in cells {
        match build_with_gaps(records, cell) {
            Ok((series, missing))
                if (missing as f64) <= max_missing_fraction * series.len() as f64 =>
            {
                kept.push(series)
            }
            _ => excluded.push(cell),
        }
    }
    (kept, excluded)
}

/// Percentile (0–100) of `values` with linear interpolation between order
/// statistics.
pub fn calibration_level(values: &[f64], percentile: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (percentile / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Map raw activity to load percent: `100 · raw / level`, clipped to
/// `[0, MAX_LOAD_PCT]`. `level` must come from training-period data only.
pub fn normalize_load(series: &LoadSeries, level: f64) -> Result<LoadSeries, DataError> {
    if level <= 0.0 || !level.is_finite() {
        return Err(DataError::DegenerateCell(series.cell_id));
    }
    let values = series
        .values
        .iter()
        .map(|&raw| (100.0 * raw / level).clamp(0.0, MAX_LOAD_PCT))
        .collect();
    Ok(LoadSeries {
        values,
        ..series.clone()
    })
}

/// Normalize every series against its own calibration level, computed only
/// from bins whose time falls before `train_end_ms`.
pub fn calibrate_series(
    series: &[LoadSeries],
    train_end_ms: i64,
    percentile: f64,
) -> Result<Vec<LoadSeries>, DataError> {
    series
        .iter()
        .map(|s| {
            let train: Vec<f64> = s
                .values
                .iter()
                .enumerate()
                .filter(|(i, _)| s.time_at(*i) < train_end_ms)
                .map(|(_, &v)| v)
                .collect();
            normalize_load(s, calibration_level(&train, percentile))
        })
        .collect()
}

pub fn write_series_store<W: Write>(mut out: W, series: &[LoadSeries]) -> std::io::Result<()> {
    for s in series {
        writeln!(out, "{}", s.to_line())?;
    }
    Ok(())
}

pub fn read_series_store<R: BufRead>(reader: R) -> Result<Vec<LoadSeries>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let series = LoadSeries::from_line(&line).map_err(|reason| DataError::Store {
            line: idx + 1,
            reason,
        })?;
        out.push(series);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0: i64 = 1_383_264_000_000;

    fn rec(cell: u64, bin: i64, activity: f64) -> CellRecord {
        CellRecord {
            cell_id: cell,
            timestamp_ms: T0 + bin * BIN_MS,
            activity,
        }
    }

    #[test]
    fn interpolates_midpoint() {
        let s = build_series(&[rec(1, 0, 2.0), rec(1, 2, 6.0)], 1).unwrap();
        assert_eq!(s.values, vec![2.0, 4.0, 6.0]);
        assert_eq!(s.start_ms, T0);
    }

    #[test]
    fn single_record_series() {
        let s = build_series(&[rec(1, 5, 3.0)], 1).unwrap();
        assert_eq!(s.values, vec![3.0]);
        assert_eq!(s.start_ms, T0 + 5 * BIN_MS);
    }

    #[test]
    fn missing_cell_is_error() {
        assert!(matches!(
            build_series(&[rec(1, 0, 1.0)], 2),
            Err(DataError::EmptySeries(2))
        ));
    }

    #[test]
    fn excludes_sparse_cells() {
        let records = vec![
            rec(1, 0, 1.0),
            rec(1, 1, 1.0),
            rec(1, 2, 1.0),
            rec(2, 0, 1.0),
            rec(2, 9, 1.0),
        ];
        let (kept, excluded) = build_all_series(&records, 0.2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].cell_id, 1);
        assert_eq!(excluded, vec![2]);
    }

    #[test]
    fn normalization_examples() {
        let s = LoadSeries::new(1, T0, vec![50.0, 100.0, 200.0, 0.0]);
        let n = normalize_load(&s, 100.0).unwrap();
        assert_eq!(n.values, vec![50.0, 100.0, 120.0, 0.0]);
        assert!(matches!(
            normalize_load(&s, 0.0),
            Err(DataError::DegenerateCell(1))
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(calibration_level(&v, 99.5), 99.5);
        assert_eq!(calibration_level(&v, 50.0), 50.0);
        assert_eq!(calibration_level(&[4.0], 99.5), 4.0);
    }

    #[test]
    fn store_round_trip() {
        let series = vec![
            LoadSeries::new(3, T0, vec![1.5, 2.25, 0.1]),
            LoadSeries::new(4, T0 + BIN_MS, vec![7.0]),
        ];
        let mut buf = Vec::new();
        write_series_store(&mut buf, &series).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("3,1383264000000,600,1.5,2.25,0.1\n"));
        assert_eq!(read_series_store(buf.as_slice()).unwrap(), series);
    }

    #[test]
    fn time_index_round_trip() {
        let s = LoadSeries::new(1, T0, vec![0.0; 10]);
        assert_eq!(s.index_of(s.time_at(7)), Some(7));
        assert_eq!(s.index_of(T0 + 1), None);
        assert_eq!(s.index_of(s.time_at(10)), None);
    }

    #[test]
    fn calibration_ignores_test_period() {
        let s = LoadSeries::new(3, T0, vec![10.0, 20.0, 1000.0]);
        let out = calibrate_series(&[s], T0 + 2 * BIN_MS, 100.0).unwrap();
        assert_eq!(out[0].values, vec![50.0, 100.0, MAX_LOAD_PCT]);
        let flat = LoadSeries::new(4, T0, vec![0.0, 5.0]);
        assert!(calibrate_series(&[flat], T0 + BIN_MS, 99.5).is_err());
    }

    proptest! {
        #[test]
        fn gap_fill_keeps_observed_bins(
            obs in proptest::collection::btree_map(0i64..200, 0.0f64..1e4, 1..40)
        ) {
            let records: Vec<CellRecord> =
                obs.iter().map(|(&bin, &v)| rec(9, bin, v)).collect();
            let s = build_series(&records, 9).unwrap();
            let first = *obs.keys().next().unwrap();
            for (&bin, &v) in &obs {
                prop_assert_eq!(s.values[(bin - first) as usize], v);
            }
            // interpolation never leaves the observed range
            let lo = obs.values().cloned().fold(f64::INFINITY, f64::min);
            let hi = obs.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.values.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
        }

        #[test]
        fn normalization_is_monotone(a in 0.0f64..1e5, b in 0.0f64..1e5, level in 1e-3f64..1e4) {
            let s = LoadSeries::new(1, T0, vec![a.min(b), a.max(b)]);
            let n = normalize_load(&s, level).unwrap();
            prop_assert!(n.values[0] <= n.values[1]);
        }
    }
}
