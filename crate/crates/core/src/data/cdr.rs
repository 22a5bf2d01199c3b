use std::collections::BTreeMap;
use std::io::BufRead;

use super::{DataError, BIN_MS};

/// One aggregated internet-activity observation for a grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRecord {
    pub cell_id: u64,
    /// Epoch milliseconds, aligned down to a 10-minute bin.
    pub timestamp_ms: i64,
    pub activity: f64,
}

/// Parse delimited `cell_id, timestamp_ms, internet_activity` lines.
///
/// Tab or comma separated. A header is accepted on the first non-empty line
/// when its first field is not numeric. Timestamps are aligned down to the
/// 10-minute grid, records sharing a cell and bin are summed, and the output
/// is sorted by `(cell_id, timestamp_ms)`.
pub fn parse_cdr<R: BufRead>(reader: R) -> Result<Vec<CellRecord>, DataError> {
    let mut bins: BTreeMap<(u64, i64), f64> = BTreeMap::new();
    let mut seen_content = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if trimmed.contains('\t') {
            trimmed.split('\t').map(str::trim).collect()
        } else {
            trimmed.split(',').map(str::trim).collect()
        };
        if !seen_content {
            seen_content = true;
            if fields[0].parse::<f64>().is_err() {
                continue;
            }
        }
        let record = parse_fields(&fields).map_err(|reason| DataError::Malformed {
            line: line_no,
            reason,
        })?;
        *bins
            .entry((record.cell_id, record.timestamp_ms))
            .or_insert(0.0) += record.activity;
    }

    Ok(bins
        .into_iter()
        .map(|((cell_id, timestamp_ms), activity)| CellRecord {
            cell_id,
            timestamp_ms,
            activity,
        })
        .collect())
}

fn parse_fields(fields: &[&str]) -> Result<CellRecord, String> {
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, found {}", fields.len()));
    }
    let cell_id = fields[0]
        .parse::<u64>()
        .map_err(|_| format!("bad cell id {:?}", fields[0]))?;
    let timestamp = fields[1]
        .parse::<i64>()
        .map_err(|_| format!("bad timestamp {:?}", fields[1]))?;
    let activity = fields[2]
        .parse::<f64>()
        .map_err(|_| format!("bad activity {:?}", fields[2]))?;
    if !activity.is_finite() || activity < 0.0 {
        return Err(format!(
            "activity must be finite and non-negative, got {activity}"
        ));
    }
    Ok(CellRecord {
        cell_id,
        timestamp_ms: timestamp - timestamp.rem_euclid(BIN_MS),
        activity,
    })
}
