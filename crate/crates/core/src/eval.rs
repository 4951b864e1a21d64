//! Agreement tables: predictions joined with manifest references.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::manifest::Site;
use crate::dataset::predictions::PredictionRow;
use crate::dataset::ModalityFilter;
use crate::estimators::DEFAULT_SOG_ORDER;
use crate::ordinal::Fitzpatrick;
use crate::pipeline::{predict_items, with_threads, Estimator, EstimatorConfig, InputSet, PipelineError};
use crate::stats::{
    continuous_reports, rating_reports, stratified, AgreementReport, BootstrapConfig, ContinuousPair,
    MetricFamily, RatingPair,
};

/// Stratum name for rows without an anatomical site.
pub const UNKNOWN_SITE: &str = "unknown";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub bootstrap: Option<BootstrapConfig>,
    /// Re-run with Shades-of-Gray toggled and tabulate per-class ITA bias.
    pub white_balance_ablation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub fitzpatrick: u8,
    pub n: usize,
    /// Mean (predicted − reference) ITA without white balancing.
    pub bias_without: Option<f64>,
    pub bias_with: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteBalanceAblation {
    pub order: f64,
    pub rows: Vec<AblationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub n_images: usize,
    pub modality_filter: ModalityFilter,
    pub estimator: EstimatorConfig,
    pub manifest_sha256: Option<String>,
    /// Linear-weighted κ, overall and by anatomical site.
    pub kappa_by_site: Vec<AgreementReport>,
    /// MAE / within-one / bias, overall and by reference type.
    pub ordinal_by_type: Vec<AgreementReport>,
    /// ICC(3,1) and Bland–Altman on ITA, overall and by anatomical site.
    pub ita_by_site: Vec<AgreementReport>,
    pub white_balance_ablation: Option<WhiteBalanceAblation>,
}

impl EvalReport {
    pub fn reports(&self) -> impl Iterator<Item = &AgreementReport> {
        self.kappa_by_site.iter().chain(&self.ordinal_by_type).chain(&self.ita_by_site)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn site_name(site: Option<Site>) -> String {
    site.map_or(UNKNOWN_SITE.to_string(), |s| s.as_str().to_string())
}

pub fn all_site_strata() -> Vec<String> {
    Site::ALL.iter().map(|s| s.as_str().to_string()).chain([UNKNOWN_SITE.to_string()]).collect()
}

/// Joins predictions to the references in `set` by image path.
pub fn join_pairs(set: &InputSet, preds: &[PredictionRow]) -> (Vec<RatingPair>, Vec<ContinuousPair>) {
    let by_path: BTreeMap<&str, &PredictionRow> = preds.iter().map(|p| (p.image_path.as_str(), p)).collect();
    let mut ratings = Vec::new();
    let mut continuous = Vec::new();
    for item in &set.items {
        let (Some(row), Some(pred)) = (&item.row, by_path.get(item.image_path.as_str())) else { continue };
        let stratum = site_name(row.site);
        if let (Some(r), Some(p)) = (row.fitzpatrick.and_then(|l| l.single()), pred.pred_fp) {
            ratings.push(RatingPair {
                subject_id: row.subject_id.clone(),
                reference: r,
                predicted: p,
                stratum: stratum.clone(),
            });
        }
        if let (Some(r), Some(p)) = (row.colorimeter, pred.pred_ita) {
            continuous.push(ContinuousPair { subject_id: row.subject_id.clone(), reference: r.ita().0, predicted: p, stratum });
        }
    }
    (ratings, continuous)
}

fn by_type(pairs: &[RatingPair]) -> Vec<RatingPair> {
    pairs.iter().map(|p| RatingPair { stratum: p.reference.roman().to_string(), ..p.clone() }).collect()
}

fn ita_bias_by_type(set: &InputSet, preds: &[PredictionRow]) -> BTreeMap<u8, (usize, Option<f64>)> {
    let by_path: BTreeMap<&str, &PredictionRow> = preds.iter().map(|p| (p.image_path.as_str(), p)).collect();
    let mut acc: BTreeMap<u8, (usize, f64, usize)> = Fitzpatrick::all().map(|f| (f.rank(), (0, 0.0, 0))).collect();
    for item in &set.items {
        let Some(row) = &item.row else { continue };
        let Some(f) = row.fitzpatrick.and_then(|l| l.single()) else { continue };
        let e = acc.get_mut(&f.rank()).expect("all types present");
        e.0 += 1;
        if let (Some(r), Some(p)) = (row.colorimeter, by_path.get(item.image_path.as_str()).and_then(|p| p.pred_ita)) {
            e.1 += p - r.ita().0;
            e.2 += 1;
        }
    }
    acc.into_iter().map(|(k, (n, s, m))| (k, (n, (m > 0).then(|| s / m as f64)))).collect()
}

/// Builds all agreement tables from one prediction pass.
pub fn evaluate_predictions(set: &InputSet, preds: &[PredictionRow], estimator: &Estimator, cfg: &EvalConfig) -> EvalReport {
    let (ratings, continuous) = join_pairs(set, preds);
    let boot = cfg.bootstrap.as_ref();
    let sites = all_site_strata();
    let kappa_by_site = stratified(&ratings, &sites)
        .iter()
        .flat_map(|(s, g)| rating_reports(MetricFamily::Kappa, g, s, boot))
        .collect();
    let types: Vec<String> = Fitzpatrick::all().map(|f| f.roman().to_string()).collect();
    let ordinal_by_type = stratified(&by_type(&ratings), &types)
        .iter()
        .flat_map(|(s, g)| rating_reports(MetricFamily::Ordinal, g, s, boot))
        .collect();
    let ita_by_site = stratified(&continuous, &sites)
        .iter()
        .flat_map(|(s, g)| {
            let mut r = continuous_reports(MetricFamily::Icc3, g, s, boot);
            r.extend(continuous_reports(MetricFamily::BlandAltman, g, s, boot));
            r
        })
        .collect();
    EvalReport {
        dataset: set.name.clone(),
        n_images: preds.len(),
        modality_filter: set.modality_filter,
        estimator: estimator.config().clone(),
        manifest_sha256: set.manifest_sha256.clone(),
        kappa_by_site,
        ordinal_by_type,
        ita_by_site,
        white_balance_ablation: None,
    }
}

/// Predicts, evaluates and optionally runs the white-balance ablation.
/// Returns the report and the primary predictions.
pub fn run_eval(
    set: &InputSet,
    estimator: &Estimator,
    cfg: &EvalConfig,
    threads: usize,
) -> Result<(EvalReport, Vec<PredictionRow>), PipelineError> {
    let preds = with_threads(threads, || predict_items(&set.items, estimator))??;
    let mut report = evaluate_predictions(set, &preds, estimator, cfg);
    if cfg.white_balance_ablation {
        let order = estimator.config().white_balance.unwrap_or(DEFAULT_SOG_ORDER);
        let (without, with) = if estimator.config().white_balance.is_some() {
            let other = with_threads(threads, || predict_items(&set.items, &estimator.with_white_balance(None)))??;
            (other, preds.clone())
        } else {
            let other = with_threads(threads, || predict_items(&set.items, &estimator.with_white_balance(Some(order))))??;
            (preds.clone(), other)
        };
        let a = ita_bias_by_type(set, &without);
        let b = ita_bias_by_type(set, &with);
        let rows = a
            .iter()
            .map(|(&k, &(n, bias_without))| AblationRow { fitzpatrick: k, n, bias_without, bias_with: b[&k].1 })
            .collect();
        report.white_balance_ablation = Some(WhiteBalanceAblation { order, rows });
    }
    Ok((report, preds))
}
