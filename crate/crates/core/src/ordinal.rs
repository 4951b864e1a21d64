//! CORAL ordinal regression (encoding, loss, decoding, rank-consistent head)
//! and the plain softmax classification alternative.
//!
//! Ranks are 1-based throughout: a `K`-class problem uses ranks `1..=K` and
//! the CORAL head emits `K − 1` threshold logits.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FITZPATRICK_CLASSES: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum OrdinalError {
    #[error("rank {rank} outside 1..={classes}")]
    RankOutOfRange { rank: usize, classes: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("non-finite logit at index {0}")]
    NonFiniteLogit(usize),
}

/// Fitzpatrick skin type I (lightest) .. VI (darkest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Fitzpatrick(u8);

impl Fitzpatrick {
    pub fn new(rank: u8) -> Result<Self, OrdinalError> {
        if (1..=FITZPATRICK_CLASSES as u8).contains(&rank) {
            Ok(Self(rank))
        } else {
            Err(OrdinalError::RankOutOfRange { rank: rank as usize, classes: FITZPATRICK_CLASSES })
        }
    }

    pub fn from_rank(rank: usize) -> Result<Self, OrdinalError> {
        u8::try_from(rank)
            .map_err(|_| OrdinalError::RankOutOfRange { rank, classes: FITZPATRICK_CLASSES })
            .and_then(Self::new)
    }

    pub fn rank(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Fitzpatrick> {
        (1..=FITZPATRICK_CLASSES as u8).map(Fitzpatrick)
    }

    pub fn roman(self) -> &'static str {
        ["I", "II", "III", "IV", "V", "VI"][self.0 as usize - 1]
    }
}

impl TryFrom<u8> for Fitzpatrick {
    type Error = OrdinalError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Fitzpatrick> for u8 {
    fn from(f: Fitzpatrick) -> u8 {
        f.0
    }
}

impl fmt::Display for Fitzpatrick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Loss value with its gradient w.r.t. the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_rank(rank: usize, classes: usize) -> Result<(), OrdinalError> {
    if classes < 2 {
        return Err(OrdinalError::TooFewClasses(classes));
    }
    if rank == 0 || rank > classes {
        return Err(OrdinalError::RankOutOfRange { rank, classes });
    }
    Ok(())
}

fn check_logits(logits: &[f64]) -> Result<(), OrdinalError> {
    match logits.iter().position(|z| !z.is_finite()) {
        Some(i) => Err(OrdinalError::NonFiniteLogit(i)),
        None => Ok(()),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary threshold targets: entry `j` (0-based) is 1 iff `rank > j + 1`.
pub fn encode_ordinal(rank: usize, classes: usize) -> Result<Vec<f64>, OrdinalError> {
    check_rank(rank, classes)?;
    Ok((1..classes).map(|j| if rank > j { 1.0 } else { 0.0 }).collect())
}

/// Sum over thresholds of binary cross-entropy between `sigmoid(logit_k)` and
/// the ordinal encoding of `rank`. The class count is `logits.len() + 1`.
pub fn coral_loss(logits: &[f64], rank: usize) -> Result<LossGrad, OrdinalError> {
    check_logits(logits)?;
    let target = encode_ordinal(rank, logits.len() + 1)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(&target) {
        // -[t ln σ(z) + (1-t) ln(1-σ(z))] = softplus(z) - t z
        loss += softplus(z) - t * z;
        grad.push(sigmoid(z) - t);
    }
    Ok(LossGrad { loss, grad })
}

/// Rank = 1 + number of thresholds with `sigmoid(logit) > 0.5`.
/// A logit of exactly zero does not count as exceeded.
pub fn decode_rank(logits: &[f64]) -> usize {
    1 + logits.iter().filter(|&&z| z > 0.0).count()
}

/// Softmax cross-entropy over `K = logits.len()` classes.
pub fn softmax_loss(logits: &[f64], rank: usize) -> Result<LossGrad, OrdinalError> {
    check_logits(logits)?;
    check_rank(rank, logits.len())?;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = max + sum.ln() - logits[rank - 1];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, e)| e / sum - if i + 1 == rank { 1.0 } else { 0.0 })
        .collect();
    Ok(LossGrad { loss, grad })
}

/// Argmax decoding; ties resolve to the lowest rank.
pub fn argmax_rank(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best + 1
}

/// Sorts biases into non-increasing order, the projection that keeps the
/// threshold probabilities rank-consistent.
pub fn project_biases(biases: &mut [f64]) {
    biases.sort_by(|a, b| b.total_cmp(a));
}

/// CORAL output layer: one shared weight vector and `K − 1` ordered biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoralHead {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl CoralHead {
    pub fn new(weights: Vec<f64>, mut biases: Vec<f64>) -> Self {
        project_biases(&mut biases);
        Self { weights, biases }
    }

    pub fn classes(&self) -> usize {
        self.biases.len() + 1
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        let s: f64 = self.weights.iter().zip(features).map(|(w, x)| w * x).sum();
        self.biases.iter().map(|b| s + b).collect()
    }

    /// `P(y > k)` for `k = 1..K−1`.
    pub fn threshold_probabilities(&self, features: &[f64]) -> Vec<f64> {
        self.logits(features).into_iter().map(sigmoid).collect()
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        decode_rank(&self.logits(features))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn encoding_examples() {
        assert_eq!(encode_ordinal(1, 6).unwrap(), vec![0.0; 5]);
        assert_eq!(encode_ordinal(6, 6).unwrap(), vec![1.0; 5]);
        assert_eq!(encode_ordinal(4, 6).unwrap(), vec![1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            encode_ordinal(0, 6),
            Err(OrdinalError::RankOutOfRange { rank: 0, classes: 6 })
        );
        assert!(encode_ordinal(7, 6).is_err());
        assert_eq!(encode_ordinal(1, 1), Err(OrdinalError::TooFewClasses(1)));
    }

    #[test]
    fn coral_loss_examples() {
        let sat = coral_loss(&[20.0, 20.0, 20.0, -20.0, -20.0], 4).unwrap();
        assert!(sat.loss < 1e-6);
        for r in 1..=6 {
            let flat = coral_loss(&[0.0; 5], r).unwrap();
            assert_abs_diff_eq!(flat.loss, 5.0 * std::f64::consts::LN_2, epsilon = 1e-12);
        }
        assert!(coral_loss(&[f64::NAN, 0.0], 1).is_err());
        // huge logits stay finite
        let big = coral_loss(&[800.0, -800.0], 1).unwrap();
        assert_abs_diff_eq!(big.loss, 800.0, epsilon = 1e-9);
    }

    #[test]
    fn decode_examples() {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let probs = [0.9, 0.8, 0.6, 0.4, 0.2].map(logit);
        assert_eq!(decode_rank(&probs), 4);
        assert_eq!(decode_rank(&[-1.0; 5]), 1);
        assert_eq!(decode_rank(&[1.0; 5]), 6);
        assert_eq!(decode_rank(&[0.0; 5]), 1);
    }

    #[test]
    fn softmax_examples() {
        let mut sat = vec![-30.0; 6];
        sat[2] = 30.0;
        assert!(softmax_loss(&sat, 3).unwrap().loss < 1e-6);
        assert_abs_diff_eq!(softmax_loss(&[0.0; 6], 5).unwrap().loss, 6f64.ln(), epsilon = 1e-12);
        assert_eq!(argmax_rank(&[0.1, 0.7, 0.7, 0.2]), 2);
    }

    #[test]
    fn fitzpatrick_range() {
        assert!(Fitzpatrick::new(0).is_err());
        assert!(Fitzpatrick::new(7).is_err());
        assert_eq!(Fitzpatrick::new(5).unwrap().roman(), "V");
        assert_eq!(Fitzpatrick::all().count(), 6);
    }

    #[test]
    fn head_projects_biases() {
        let head = CoralHead::new(vec![1.0], vec![-1.0, 2.0, 0.5]);
        assert_eq!(head.biases, vec![2.0, 0.5, -1.0]);
        assert_eq!(head.predict(&[0.0]), 3);
    }
}
