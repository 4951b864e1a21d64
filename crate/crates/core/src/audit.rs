//! Dataset skin-tone audits: predicted Fitzpatrick composition and ITA
//! histogram from a single prediction pass.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::predictions::PredictionRow;
use crate::dataset::ModalityFilter;
use crate::ordinal::{Fitzpatrick, FITZPATRICK_CLASSES};
use crate::pipeline::{predict_items, with_threads, Estimator, EstimatorConfig, InputSet, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

impl Default for HistogramSpec {
    /// The full ITA range in 10° bins.
    fn default() -> Self {
        Self { lo: -90.0, hi: 90.0, width: 10.0 }
    }
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(format!("histogram range [{}, {}] is empty", self.lo, self.hi));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(format!("histogram bin width {} must be positive", self.width));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        ((self.hi - self.lo) / self.width).ceil().max(1.0) as usize
    }

    /// Bin edges; the last edge is clipped to `hi`.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.bin_count();
        (0..=n).map(|i| (self.lo + i as f64 * self.width).min(self.hi)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Bins are half-open `[lo, hi)` except the last, which includes `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItaHistogram {
    pub bins: Vec<HistogramBin>,
    pub underflow: usize,
    pub overflow: usize,
}

impl ItaHistogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum::<usize>() + self.underflow + self.overflow
    }
}

pub fn ita_histogram(values: &[f64], spec: &HistogramSpec) -> ItaHistogram {
    let edges = spec.edges();
    let mut bins: Vec<HistogramBin> =
        edges.windows(2).map(|w| HistogramBin { lo: w[0], hi: w[1], count: 0 }).collect();
    let (mut underflow, mut overflow) = (0, 0);
    for &v in values {
        if v < spec.lo {
            underflow += 1;
        } else if v > spec.hi {
            overflow += 1;
        } else {
            let i = (((v - spec.lo) / spec.width).floor() as usize).min(bins.len() - 1);
            // guard against round-off at bin edges
            let i = if v < bins[i].lo { i - 1 } else if i + 1 < bins.len() && v >= bins[i].hi { i + 1 } else { i };
            bins[i].count += 1;
        }
    }
    ItaHistogram { bins, underflow, overflow }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    /// Counts for types I..VI.
    pub counts: [usize; FITZPATRICK_CLASSES],
    /// Percentages for types I..VI; all zero for an empty set.
    pub percentages: [f64; FITZPATRICK_CLASSES],
}

pub fn composition(types: &[Fitzpatrick]) -> Composition {
    let mut counts = [0; FITZPATRICK_CLASSES];
    for f in types {
        counts[f.rank() as usize - 1] += 1;
    }
    let n = types.len();
    let percentages = counts.map(|c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 });
    Composition { counts, percentages }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub dataset: String,
    pub n_images: usize,
    pub n_subjects: usize,
    /// Images for which the estimator produced no output.
    pub n_failed: usize,
    pub modality_filter: ModalityFilter,
    /// `rank_head` or `ita_bands`.
    pub fitzpatrick_source: String,
    pub composition: Composition,
    pub ita_histogram: ItaHistogram,
    pub histogram_spec: HistogramSpec,
    pub estimator: EstimatorConfig,
    pub manifest_sha256: Option<String>,
    pub seed: u64,
}

impl AuditReport {
    pub fn from_predictions(
        set: &InputSet,
        preds: &[PredictionRow],
        estimator: &Estimator,
        spec: &HistogramSpec,
        seed: u64,
    ) -> Self {
        let types: Vec<Fitzpatrick> = preds.iter().filter_map(|p| p.pred_fp).collect();
        let itas: Vec<f64> = preds.iter().filter_map(|p| p.pred_ita).collect();
        Self {
            dataset: set.name.clone(),
            n_images: preds.len(),
            n_subjects: preds.iter().map(|p| p.subject_id.as_str()).collect::<BTreeSet<_>>().len(),
            n_failed: preds.iter().filter(|p| p.pred_fp.is_none() && p.pred_ita.is_none()).count(),
            modality_filter: set.modality_filter,
            fitzpatrick_source: estimator.fitzpatrick_source().to_string(),
            composition: composition(&types),
            ita_histogram: ita_histogram(&itas, spec),
            histogram_spec: *spec,
            estimator: estimator.config().clone(),
            manifest_sha256: set.manifest_sha256.clone(),
            seed,
        }
    }

    /// Share of predictions in types V and VI combined, in percent.
    pub fn dark_share(&self) -> f64 {
        self.composition.percentages[4] + self.composition.percentages[5]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `fitzpatrick,count,percent`.
    pub fn composition_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fitzpatrick", "count", "percent"]).expect("in-memory write");
        for (i, (c, p)) in self.composition.counts.iter().zip(&self.composition.percentages).enumerate() {
            let roman = Fitzpatrick::from_rank(i + 1).expect("1..=6").roman();
            w.write_record([roman.to_string(), c.to_string(), p.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// `bin_lo,bin_hi,count`, plus underflow/overflow rows when non-zero.
    pub fn histogram_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lo", "bin_hi", "count"]).expect("in-memory write");
        let h = &self.ita_histogram;
        if h.underflow > 0 {
            w.write_record(["-inf".into(), self.histogram_spec.lo.to_string(), h.underflow.to_string()])
                .expect("in-memory write");
        }
        for b in &h.bins {
            w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string()]).expect("in-memory write");
        }
        if h.overflow > 0 {
            w.write_record([self.histogram_spec.hi.to_string(), "inf".into(), h.overflow.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Predicts every input on `threads` workers and summarizes the result.
/// Output does not depend on `threads`.
pub fn run_audit(
    set: &InputSet,
    estimator: &Estimator,
    spec: &HistogramSpec,
    threads: usize,
    seed: u64,
) -> Result<(AuditReport, Vec<PredictionRow>), PipelineError> {
    let preds = with_threads(threads, || predict_items(&set.items, estimator))??;
    Ok((AuditReport::from_predictions(set, &preds, estimator, spec, seed), preds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges_and_totals() {
        let spec = HistogramSpec::default();
        let h = ita_histogram(&[-90.0, -85.0, 0.0, 9.999, 10.0, 90.0], &spec);
        assert_eq!(h.bins.len(), 18);
        assert_eq!(h.bins[0].count, 2);
        assert_eq!(h.bins[9].count, 2);
        assert_eq!(h.bins[10].count, 1);
        assert_eq!(h.bins[17].count, 1);
        assert_eq!(h.total(), 6);
        let narrow = HistogramSpec { lo: 0.0, hi: 25.0, width: 10.0 };
        let h = ita_histogram(&[-5.0, 3.0, 24.0, 25.0, 26.0], &narrow);
        assert_eq!(h.bins.last().unwrap().hi, 25.0);
        assert_eq!((h.underflow, h.overflow, h.total()), (1, 1, 5));
    }

    #[test]
    fn composition_percentages() {
        let t: Vec<_> = (0..600).map(|i| Fitzpatrick::from_rank(i % 6 + 1).unwrap()).collect();
        let c = composition(&t);
        assert_eq!(c.counts, [100; 6]);
        for p in c.percentages {
            assert!((p - 100.0 / 6.0).abs() < 1e-12);
        }
        assert_eq!(composition(&[]).percentages, [0.0; 6]);
    }
}
