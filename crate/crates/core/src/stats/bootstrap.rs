use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Clustered, StatsError};

pub const MIN_RESAMPLES: usize = 100;
/// Redraw budget per resample before giving up.
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    /// Two-sided coverage, e.g. 0.95.
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 1000, level: 0.95, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
    /// Resamples on which the metric was undefined and had to be redrawn.
    pub redraws: usize,
}

/// Linear-interpolation quantile of sorted data (`q ∈ [0, 1]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let f = pos - i as f64;
    if f == 0.0 {
        sorted[i]
    } else {
        sorted[i] + f * (sorted[j] - sorted[i])
    }
}

/// Percentile bootstrap that resamples whole subjects with replacement.
///
/// Resample `b` draws from its own ChaCha8 stream (`seed`, stream `b`), so the
/// result does not depend on thread scheduling and a larger `resamples`
/// extends rather than reshuffles the draw sequence. A resample on which
/// `metric` fails is redrawn from the same stream.
pub fn bootstrap_ci<T, F>(items: &[T], metric: F, cfg: &BootstrapConfig) -> Result<BootstrapCi, StatsError>
where
    T: Clustered + Clone + Sync,
    F: Fn(&[T]) -> Result<f64, StatsError> + Sync,
{
    if cfg.resamples < MIN_RESAMPLES {
        return Err(StatsError::Bootstrap(format!("need at least {MIN_RESAMPLES} resamples, got {}", cfg.resamples)));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(StatsError::Bootstrap(format!("level must be in (0, 1), got {}", cfg.level)));
    }
    let mut clusters: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for it in items {
        clusters.entry(it.subject()).or_default().push(it);
    }
    let clusters: Vec<Vec<&T>> = clusters.into_values().collect();
    if clusters.is_empty() {
        return Err(StatsError::TooFewPairs { metric: "bootstrap", needed: 1, got: 0 });
    }
    let draws: Vec<Result<(f64, usize), StatsError>> = (0..cfg.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let mut last = None;
            for redraw in 0..=MAX_REDRAWS {
                let mut sample = Vec::with_capacity(items.len());
                for _ in 0..clusters.len() {
                    sample.extend(clusters[rng.gen_range(0..clusters.len())].iter().map(|&t| t.clone()));
                }
                match metric(&sample) {
                    Ok(v) if v.is_finite() => return Ok((v, redraw)),
                    Ok(_) => last = Some(StatsError::NonFinite("bootstrap metric")),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect();
    let mut values = Vec::with_capacity(cfg.resamples);
    let mut redraws = 0;
    for d in draws {
        let (v, r) = d?;
        values.push(v);
        redraws += r;
    }
    if redraws > 0 {
        log::info!("bootstrap: redrew {redraws} resample(s) on which the metric was undefined");
    }
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - cfg.level;
    Ok(BootstrapCi {
        lo: percentile(&values, alpha / 2.0),
        hi: percentile(&values, 1.0 - alpha / 2.0),
        resamples: cfg.resamples,
        redraws,
    })
}
