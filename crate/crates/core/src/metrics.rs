use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Median with midpoint interpolation for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid!("median of an empty list"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid!("median of a list containing NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median position (m) and orientation (deg) errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianErrors {
    pub position_m: f64,
    pub orientation_deg: f64,
}

pub fn median_report(errors: &[(f64, f64)]) -> Result<MedianErrors> {
    let pos: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let ori: Vec<f64> = errors.iter().map(|e| e.1).collect();
    Ok(MedianErrors {
        position_m: median(&pos)?,
        orientation_deg: median(&ori)?,
    })
}
