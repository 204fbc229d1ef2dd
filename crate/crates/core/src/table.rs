use serde::{Deserialize, Serialize};

use crate::rules::DigitString;
use crate::{NUM_CLASSES, SEQ_LEN};

/// Raw per-position scores from the recognizer, one row of ten per digit slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitTable {
    pub rows: [[f64; NUM_CLASSES]; SEQ_LEN],
}

impl LogitTable {
    pub fn zeros() -> Self {
        Self {
            rows: [[0.0; NUM_CLASSES]; SEQ_LEN],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }
}

/// Five independent categorical distributions over digits, `p(. | x)` for
/// each position.
///
/// Tables produced by softmax have rows summing to one within `1e-6`.
/// Hand-built tables are not checked on construction; consumers that need
/// a proper distribution validate explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    pub rows: [[f64; NUM_CLASSES]; SEQ_LEN],
}

impl ProbTable {
    pub fn uniform() -> Self {
        Self {
            rows: [[1.0 / NUM_CLASSES as f64; NUM_CLASSES]; SEQ_LEN],
        }
    }

    /// All mass on `s`.
    pub fn point_mass(s: &DigitString) -> Self {
        let mut rows = [[0.0; NUM_CLASSES]; SEQ_LEN];
        for (row, d) in rows.iter_mut().zip(s.values()) {
            row[d as usize] = 1.0;
        }
        Self { rows }
    }

    /// Probability of the whole string under the factorized model.
    pub fn sequence_prob(&self, s: &DigitString) -> f64 {
        self.rows
            .iter()
            .zip(s.values())
            .map(|(row, d)| row[d as usize])
            .product()
    }

    /// Largest absolute deviation of any row sum from one; `None` if an entry
    /// is negative or not finite.
    pub fn max_row_sum_error(&self) -> Option<f64> {
        let mut worst = 0.0f64;
        for row in &self.rows {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return None;
            }
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        Some(worst)
    }
}
