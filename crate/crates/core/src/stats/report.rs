use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    bland_altman, bootstrap_ci, icc3, ordinal_errors, weighted_kappa, BootstrapConfig, Clustered,
    ContinuousPair, RatingPair, StatsError,
};

pub const ALL_STRATA: &str = "all";
pub const NO_DATA: &str = "no data for stratum";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Ok,
    NoData,
    InsufficientData,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub metric: String,
    pub stratum: String,
    pub n: usize,
    pub n_subjects: usize,
    pub status: ReportStatus,
    pub estimate: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub note: Option<String>,
}

impl AgreementReport {
    fn empty(metric: &str, stratum: &str, n: usize, n_subjects: usize, status: ReportStatus, note: String) -> Self {
        Self {
            metric: metric.to_string(),
            stratum: stratum.to_string(),
            n,
            n_subjects,
            status,
            estimate: None,
            ci_lo: None,
            ci_hi: None,
            note: Some(note),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.status == ReportStatus::Degenerate
    }
}

/// `kappa | icc3 | ordinal | bland-altman`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricFamily {
    Kappa,
    Icc3,
    Ordinal,
    BlandAltman,
}

impl MetricFamily {
    pub fn is_categorical(self) -> bool {
        matches!(self, MetricFamily::Kappa | MetricFamily::Ordinal)
    }
}

impl FromStr for MetricFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kappa" => Ok(Self::Kappa),
            "icc3" => Ok(Self::Icc3),
            "ordinal" => Ok(Self::Ordinal),
            "bland-altman" => Ok(Self::BlandAltman),
            _ => Err(format!("unknown metric {s:?} (kappa, icc3, ordinal, bland-altman)")),
        }
    }
}

type MetricFn<'a, T> = Box<dyn Fn(&[T]) -> Result<f64, StatsError> + Sync + 'a>;

fn evaluate<T: Clustered + Clone + Sync>(
    metrics: Vec<(&str, MetricFn<'_, T>)>,
    items: &[T],
    stratum: &str,
    bootstrap: Option<&BootstrapConfig>,
) -> Vec<AgreementReport> {
    let n = items.len();
    let n_subjects = items.iter().map(|t| t.subject()).collect::<BTreeSet<_>>().len();
    metrics
        .into_iter()
        .map(|(name, f)| {
            if n == 0 {
                return AgreementReport::empty(name, stratum, 0, 0, ReportStatus::NoData, NO_DATA.to_string());
            }
            let estimate = match f(items) {
                Ok(v) => v,
                Err(e) => {
                    let status = if e.is_degenerate() {
                        ReportStatus::Degenerate
                    } else {
                        ReportStatus::InsufficientData
                    };
                    return AgreementReport::empty(name, stratum, n, n_subjects, status, e.to_string());
                }
            };
            let mut report = AgreementReport {
                metric: name.to_string(),
                stratum: stratum.to_string(),
                n,
                n_subjects,
                status: ReportStatus::Ok,
                estimate: Some(estimate),
                ci_lo: None,
                ci_hi: None,
                note: None,
            };
            if let Some(cfg) = bootstrap {
                match bootstrap_ci(items, &f, cfg) {
                    Ok(ci) => {
                        let (lo, hi) = (ci.lo.min(estimate), ci.hi.max(estimate));
                        let mut notes = Vec::new();
                        if (lo, hi) != (ci.lo, ci.hi) {
                            notes.push(format!(
                                "percentile interval ({}, {}) widened to include the estimate",
                                ci.lo, ci.hi
                            ));
                        }
                        if ci.redraws > 0 {
                            notes.push(format!("{} bootstrap redraws", ci.redraws));
                        }
                        report.ci_lo = Some(lo);
                        report.ci_hi = Some(hi);
                        report.note = (!notes.is_empty()).then(|| notes.join("; "));
                    }
                    Err(e) => report.note = Some(format!("no interval: {e}")),
                }
            }
            report
        })
        .collect()
}

/// Reports for a categorical family (`kappa`, `ordinal`).
pub fn rating_reports(
    family: MetricFamily,
    pairs: &[RatingPair],
    stratum: &str,
    bootstrap: Option<&BootstrapConfig>,
) -> Vec<AgreementReport> {
    let metrics: Vec<(&str, MetricFn<'_, RatingPair>)> = match family {
        MetricFamily::Kappa => vec![("kappa", Box::new(weighted_kappa))],
        MetricFamily::Ordinal => vec![
            ("mae", Box::new(|p: &[RatingPair]| ordinal_errors(p).map(|e| e.mae))),
            ("within_one", Box::new(|p: &[RatingPair]| ordinal_errors(p).map(|e| e.within_one))),
            ("bias", Box::new(|p: &[RatingPair]| ordinal_errors(p).map(|e| e.bias))),
        ],
        _ => panic!("{family:?} is not a categorical metric"),
    };
    evaluate(metrics, pairs, stratum, bootstrap)
}

/// Reports for a continuous family (`icc3`, `bland-altman`).
pub fn continuous_reports(
    family: MetricFamily,
    pairs: &[ContinuousPair],
    stratum: &str,
    bootstrap: Option<&BootstrapConfig>,
) -> Vec<AgreementReport> {
    let metrics: Vec<(&str, MetricFn<'_, ContinuousPair>)> = match family {
        MetricFamily::Icc3 => vec![("icc3", Box::new(icc3))],
        MetricFamily::BlandAltman => vec![
            ("ba_bias", Box::new(|p: &[ContinuousPair]| bland_altman(p).map(|b| b.bias))),
            ("loa_lo", Box::new(|p: &[ContinuousPair]| bland_altman(p).map(|b| b.loa_lo))),
            ("loa_hi", Box::new(|p: &[ContinuousPair]| bland_altman(p).map(|b| b.loa_hi))),
        ],
        _ => panic!("{family:?} is not a continuous metric"),
    };
    evaluate(metrics, pairs, stratum, bootstrap)
}

pub const REPORT_COLUMNS: [&str; 9] =
    ["metric", "stratum", "n", "n_subjects", "status", "estimate", "ci_lo", "ci_hi", "note"];

/// One row per report, columns as in [`REPORT_COLUMNS`].
pub fn reports_to_csv(reports: &[AgreementReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let status = serde_json::to_value(r.status).expect("serializes");
        w.write_record([
            r.metric.clone(),
            r.stratum.clone(),
            r.n.to_string(),
            r.n_subjects.to_string(),
            status.as_str().unwrap_or_default().to_string(),
            opt(r.estimate),
            opt(r.ci_lo),
            opt(r.ci_hi),
            r.note.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Splits items into `("all", everything)` followed by one group per stratum.
/// With `strata` empty, the distinct strata of `items` are used, sorted;
/// otherwise the given list is used as is, so absent strata yield empty groups.
pub fn stratified<T: Clustered + Clone>(items: &[T], strata: &[String]) -> Vec<(String, Vec<T>)> {
    let names: Vec<String> = if strata.is_empty() {
        items.iter().map(|t| t.stratum().to_string()).collect::<BTreeSet<_>>().into_iter().collect()
    } else {
        strata.to_vec()
    };
    let mut out = vec![(ALL_STRATA.to_string(), items.to_vec())];
    for s in names {
        let group = items.iter().filter(|t| t.stratum() == s).cloned().collect();
        out.push((s, group));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordinal::Fitzpatrick;

    fn rp(s: usize, r: usize, p: usize, stratum: &str) -> RatingPair {
        RatingPair {
            subject_id: format!("s{s}"),
            reference: Fitzpatrick::from_rank(r).unwrap(),
            predicted: Fitzpatrick::from_rank(p).unwrap(),
            stratum: stratum.into(),
        }
    }

    #[test]
    fn empty_stratum_is_explicit() {
        let pairs = vec![rp(0, 1, 1, "head/neck"), rp(1, 3, 4, "head/neck")];
        let groups = stratified(&pairs, &["head/neck".into(), "palms/soles".into()]);
        assert_eq!(groups.len(), 3);
        let r = rating_reports(MetricFamily::Kappa, &groups[2].1, &groups[2].0, None);
        assert_eq!(r[0].status, ReportStatus::NoData);
        assert_eq!(r[0].note.as_deref(), Some(NO_DATA));
        assert!(r[0].estimate.is_none());
    }

    #[test]
    fn interval_brackets_estimate() {
        let pairs: Vec<_> = (0..30).map(|i| rp(i, i % 6 + 1, (i * 7) % 6 + 1, "x")).collect();
        let cfg = BootstrapConfig { resamples: 200, level: 0.95, seed: 3 };
        for r in rating_reports(MetricFamily::Ordinal, &pairs, "all", Some(&cfg)) {
            let (lo, est, hi) = (r.ci_lo.unwrap(), r.estimate.unwrap(), r.ci_hi.unwrap());
            assert!(lo <= est && est <= hi, "{r:?}");
        }
    }

    #[test]
    fn degenerate_icc_is_flagged() {
        let pairs: Vec<_> = (0..5)
            .map(|i| ContinuousPair { subject_id: format!("s{i}"), reference: 2.0, predicted: 2.0, stratum: "x".into() })
            .collect();
        let r = continuous_reports(MetricFamily::Icc3, &pairs, "all", None);
        assert!(r[0].is_degenerate());
    }
}
