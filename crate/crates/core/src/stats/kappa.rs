use super::{RatingPair, StatsError};
use crate::ordinal::FITZPATRICK_CLASSES;

/// Linear-weighted Cohen's κ over 1-based ranks in `1..=classes`.
///
/// `κ = 1 − Σ d·O / Σ d·E` with `d_ij = |i − j| / (K − 1)`, `O` the observed
/// joint proportions and `E` the product of the two raters' marginals. When
/// the expected disagreement is zero (both raters constant and equal) κ is
/// defined as 1.
pub fn weighted_kappa_ranks(pairs: &[(usize, usize)], classes: usize) -> Result<f64, StatsError> {
    if pairs.len() < 2 {
        return Err(StatsError::TooFewPairs { metric: "kappa", needed: 2, got: pairs.len() });
    }
    if classes < 2 {
        return Err(StatsError::Degenerate(format!("kappa needs at least 2 classes, got {classes}")));
    }
    let mut observed = vec![0.0; classes * classes];
    let mut row = vec![0.0; classes];
    let mut col = vec![0.0; classes];
    for &(r, p) in pairs {
        for v in [r, p] {
            if v < 1 || v > classes {
                return Err(StatsError::Rank { rank: v, classes });
            }
        }
        observed[(r - 1) * classes + (p - 1)] += 1.0;
        row[r - 1] += 1.0;
        col[p - 1] += 1.0;
    }
    let n = pairs.len() as f64;
    let (mut d_obs, mut d_exp) = (0.0, 0.0);
    for i in 0..classes {
        for j in 0..classes {
            let d = i.abs_diff(j) as f64 / (classes - 1) as f64;
            d_obs += d * observed[i * classes + j] / n;
            d_exp += d * (row[i] / n) * (col[j] / n);
        }
    }
    if d_exp == 0.0 {
        log::warn!("kappa: zero expected disagreement (both raters constant); defined as 1");
        return Ok(1.0);
    }
    Ok(1.0 - d_obs / d_exp)
}

pub fn weighted_kappa(pairs: &[RatingPair]) -> Result<f64, StatsError> {
    let ranks: Vec<(usize, usize)> =
        pairs.iter().map(|p| (p.reference.rank() as usize, p.predicted.rank() as usize)).collect();
    weighted_kappa_ranks(&ranks, FITZPATRICK_CLASSES)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let p: Vec<_> = (1..=6).map(|r| (r, r)).collect();
        assert_eq!(weighted_kappa_ranks(&p, 6).unwrap(), 1.0);
    }

    #[test]
    fn constant_equal_raters() {
        assert_eq!(weighted_kappa_ranks(&[(3, 3), (3, 3)], 6).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(weighted_kappa_ranks(&[(1, 1)], 6).is_err());
        assert!(matches!(weighted_kappa_ranks(&[(1, 7), (2, 2)], 6), Err(StatsError::Rank { .. })));
    }

    #[test]
    fn systematic_disagreement_is_negative() {
        let p = [(1, 6), (6, 1), (1, 6), (6, 1)];
        assert!(weighted_kappa_ranks(&p, 6).unwrap() < 0.0);
    }
}
