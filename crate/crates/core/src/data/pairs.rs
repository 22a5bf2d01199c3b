use serde::{Deserialize, Serialize};

use super::DataError;

/// A co-located pair: the low-frequency cell stays on, the high-frequency
/// cell is the one that may be switched off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPair {
    pub low_cell: u64,
    pub high_cell: u64,
    /// Spectral efficiency ratio applied to the absorbed load.
    pub e: f64,
}

/// Pair adjacent cells `(c0, c1), (c2, c3), …` in the given order.
pub fn pair_cells(cells: &[u64], e: f64) -> Result<Vec<CellPair>, DataError> {
    if !cells.len().is_multiple_of(2) {
        return Err(DataError::OddCellCount(cells.len()));
    }
    if !(e > 0.0 && e.is_finite()) {
        return Err(DataError::InvalidRatio(e));
    }
    cells
        .chunks_exact(2)
        .map(|c| {
            if c[0] == c[1] {
                Err(DataError::SelfPair(c[0]))
            } else {
                Ok(CellPair {
                    low_cell: c[0],
                    high_cell: c[1],
                    e,
                })
            }
        })
        .collect()
}
