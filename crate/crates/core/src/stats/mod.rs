//! Agreement statistics: weighted κ, ICC(3,1), ordinal errors,
//! Bland–Altman and subject-cluster bootstrap intervals.

mod bootstrap;
mod differences;
mod icc;
mod kappa;
mod report;

pub use bootstrap::{bootstrap_ci, percentile, BootstrapCi, BootstrapConfig, MIN_RESAMPLES};
pub use differences::{bland_altman, ordinal_errors, BlandAltman, OrdinalErrors};
pub use icc::{icc3, icc3_matrix};
pub use kappa::{weighted_kappa, weighted_kappa_ranks};
pub use report::{
    continuous_reports, rating_reports, reports_to_csv, stratified, AgreementReport, MetricFamily, ReportStatus,
    ALL_STRATA, NO_DATA, REPORT_COLUMNS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ordinal::Fitzpatrick;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{metric} needs at least {needed} pairs, got {got}")]
    TooFewPairs { metric: &'static str, needed: usize, got: usize },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("rank {rank} outside 1..={classes}")]
    Rank { rank: usize, classes: usize },
    #[error("invalid bootstrap configuration: {0}")]
    Bootstrap(String),
}

impl StatsError {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, StatsError::Degenerate(_))
    }
}

/// One categorical rating comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingPair {
    pub subject_id: String,
    pub reference: Fitzpatrick,
    pub predicted: Fitzpatrick,
    pub stratum: String,
}

/// One continuous (ITA) comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousPair {
    pub subject_id: String,
    pub reference: f64,
    pub predicted: f64,
    pub stratum: String,
}

pub trait Clustered {
    fn subject(&self) -> &str;
    fn stratum(&self) -> &str;
}

impl Clustered for RatingPair {
    fn subject(&self) -> &str {
        &self.subject_id
    }
    fn stratum(&self) -> &str {
        &self.stratum
    }
}

impl Clustered for ContinuousPair {
    fn subject(&self) -> &str {
        &self.subject_id
    }
    fn stratum(&self) -> &str {
        &self.stratum
    }
}
