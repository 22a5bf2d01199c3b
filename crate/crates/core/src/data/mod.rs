//! Ingestion of CDR-style traffic, load series, samples and cell pairing.

mod cdr;
mod pairs;
mod samples;
mod series;
mod synth;

pub use cdr::{parse_cdr, CellRecord};
pub use pairs::{pair_cells, CellPair};
pub use samples::{make_samples, split_by_time, PredictionSample, SampleSplit, SplitConfig};
pub use series::{
    build_all_series, build_series, calibrate_series, calibration_level, normalize_load,
    read_series_store, write_series_store, LoadSeries, DEFAULT_CALIBRATION_PERCENTILE,
    MAX_LOAD_PCT,
};
pub use synth::{synth_traffic, SynthConfig};

use thiserror::Error;

/// Length of one time bin in milliseconds.
pub const BIN_MS: i64 = 600_000;
/// Length of one time bin in seconds.
pub const STEP_S: u32 = 600;
/// Bins per day at 10-minute granularity.
pub const BINS_PER_DAY: usize = 144;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no records for cell {0}")]
    EmptySeries(u64),
    #[error("cell {0}: calibration level is zero")]
    DegenerateCell(u64),
    #[error("cannot pair an odd number of cells ({0})")]
    OddCellCount(usize),
    #[error("cell {0} paired with itself")]
    SelfPair(u64),
    #[error("invalid spectral efficiency ratio {0}")]
    InvalidRatio(f64),
    #[error("invalid synthetic config: {0}")]
    InvalidSynthConfig(String),
    #[error("series store line {line}: {reason}")]
    Store { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
