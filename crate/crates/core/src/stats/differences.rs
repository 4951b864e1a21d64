use serde::{Deserialize, Serialize};

use super::{ContinuousPair, RatingPair, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdinalErrors {
    pub mae: f64,
    /// Percentage of pairs with |pred − ref| ≤ 1.
    pub within_one: f64,
    /// Percentage of exact matches.
    pub exact: f64,
    /// Mean (pred − ref); positive when over-predicting.
    pub bias: f64,
}

pub fn ordinal_errors(pairs: &[RatingPair]) -> Result<OrdinalErrors, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::TooFewPairs { metric: "ordinal errors", needed: 1, got: 0 });
    }
    let n = pairs.len() as f64;
    let diffs: Vec<i64> =
        pairs.iter().map(|p| p.predicted.rank() as i64 - p.reference.rank() as i64).collect();
    Ok(OrdinalErrors {
        mae: diffs.iter().map(|d| d.abs()).sum::<i64>() as f64 / n,
        within_one: 100.0 * diffs.iter().filter(|d| d.abs() <= 1).count() as f64 / n,
        exact: 100.0 * diffs.iter().filter(|&&d| d == 0).count() as f64 / n,
        bias: diffs.iter().sum::<i64>() as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    /// Mean of pred − ref.
    pub bias: f64,
    /// Sample standard deviation (n − 1) of the differences.
    pub sd: f64,
    pub loa_lo: f64,
    pub loa_hi: f64,
}

pub const LOA_Z: f64 = 1.96;

pub fn bland_altman(pairs: &[ContinuousPair]) -> Result<BlandAltman, StatsError> {
    if pairs.len() < 2 {
        return Err(StatsError::TooFewPairs { metric: "bland-altman", needed: 2, got: pairs.len() });
    }
    let d: Vec<f64> = pairs.iter().map(|p| p.predicted - p.reference).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("bland-altman"));
    }
    let n = d.len() as f64;
    // Deviations from the first difference keep constant inputs exact.
    let origin = d[0];
    let shift = d.iter().map(|v| v - origin).sum::<f64>() / n;
    let bias = origin + shift;
    let sd = (d.iter().map(|v| (v - origin - shift).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(BlandAltman { bias, sd, loa_lo: bias - LOA_Z * sd, loa_hi: bias + LOA_Z * sd })
}
