use super::{ContinuousPair, StatsError};

/// ICC(3,1): two-way mixed effects, consistency, single measurement.
///
/// `rows[i]` holds the `k` ratings of subject `i`:
/// `(MS_R − MS_E) / (MS_R + (k − 1)·MS_E)`.
pub fn icc3_matrix(rows: &[Vec<f64>]) -> Result<f64, StatsError> {
    let n = rows.len();
    if n < 3 {
        return Err(StatsError::TooFewPairs { metric: "icc3", needed: 3, got: n });
    }
    let k = rows[0].len();
    if k < 2 || rows.iter().any(|r| r.len() != k) {
        return Err(StatsError::Degenerate("icc3 needs a rectangular table with at least 2 raters".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("icc3"));
    }
    // Centre on the first value to keep the sums of squares well conditioned.
    let origin = rows[0][0];
    let (nf, kf) = (n as f64, k as f64);
    let grand = rows.iter().flatten().map(|v| v - origin).sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v - origin).sum::<f64>() / kf).collect();
    let col_means: Vec<f64> =
        (0..k).map(|j| rows.iter().map(|r| r[j] - origin).sum::<f64>() / nf).collect();
    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            let e = (v - origin) - row_means[i] - col_means[j] + grand;
            ss_err += e * e;
        }
    }
    let ss_total: f64 = rows.iter().flatten().map(|v| (v - origin - grand).powi(2)).sum();
    if ss_rows <= f64::EPSILON * ss_total || ss_rows == 0.0 {
        return Err(StatsError::Degenerate("icc3: zero between-subject variance".into()));
    }
    let ms_rows = ss_rows / (nf - 1.0);
    let ms_err = ss_err / ((nf - 1.0) * (kf - 1.0));
    Ok((ms_rows - ms_err) / (ms_rows + (kf - 1.0) * ms_err))
}

/// ICC(3,1) with the two raters (prediction, reference).
pub fn icc3(pairs: &[ContinuousPair]) -> Result<f64, StatsError> {
    let rows: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.predicted, p.reference]).collect();
    icc3_matrix(&rows)
}
