//! Pixel-statistics ITA baselines and Shades-of-Gray white balance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{ita, LabColor, ItaDegrees};
use crate::image::PatchTensor;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_PATCH_SIZE: usize = 20;
pub const DEFAULT_VARIANCE_CUTOFF: f64 = 50.0;
pub const DEFAULT_SOG_ORDER: f64 = 6.0;

const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("every pixel is masked")]
    NoUnmaskedPixels,
    #[error("{available} unmasked pixels is fewer than k = {k}")]
    TooFewPixels { available: usize, k: usize },
    #[error("{width}x{height} image cannot hold border patches of size {patch}")]
    ImageTooSmall { width: usize, height: usize, patch: usize },
    #[error("all 8 border patches rejected ({masked} overlap the mask, {high_variance} exceed the variance cutoff)")]
    AllPatchesRejected { masked: usize, high_variance: usize },
    #[error("Minkowski order p = {0} must be >= 1")]
    InvalidOrder(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostics {
    KMeans {
        /// Pixel count per cluster, in the order the centers were seeded.
        cluster_sizes: Vec<usize>,
        selected: usize,
        iterations: usize,
    },
    Patch {
        used: usize,
        rejected_masked: usize,
        rejected_variance: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub lab: LabColor,
    pub ita: ItaDegrees,
    pub diagnostics: Diagnostics,
}

impl EstimatorResult {
    fn new(lab: LabColor, diagnostics: Diagnostics) -> Self {
        Self { lab, ita: ita(&lab), diagnostics }
    }
}

fn dist2(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
}

fn nearest(p: &[f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// k-means++ seeding. Stops early when every remaining point coincides with a
/// chosen center, so the result may hold fewer than `k` centers.
fn kmeanspp(points: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centers = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = points.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            acc += w;
            if acc > target && w > 0.0 {
                pick = i;
                break;
            }
        }
        let c = points[pick];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
    }
    centers
}

// Mean accumulated as deviations from the first member so that identical
// points reproduce their value exactly.
fn mean_of<'a>(mut pts: impl Iterator<Item = &'a [f64; 3]>) -> Option<[f64; 3]> {
    let first = *pts.next()?;
    let mut acc = [0.0; 3];
    let mut n = 1usize;
    for p in pts {
        for c in 0..3 {
            acc[c] += p[c] - first[c];
        }
        n += 1;
    }
    Some([
        first[0] + acc[0] / n as f64,
        first[1] + acc[1] / n as f64,
        first[2] + acc[2] / n as f64,
    ])
}

/// Dominant skin color via k-means in Lab space.
///
/// Non-masked pixels are sorted lexicographically in Lab before seeding, which
/// makes the output independent of pixel order. Returns the centroid of the
/// largest cluster (ties go to the earliest-seeded cluster).
pub fn kmeans_ita(img: &PatchTensor, k: usize, seed: u64) -> Result<EstimatorResult, EstimatorError> {
    if k == 0 {
        return Err(EstimatorError::ZeroClusters);
    }
    let mut points: Vec<[f64; 3]> = img.unmasked_lab().into_iter().map(LabColor::to_array).collect();
    if points.is_empty() {
        return Err(EstimatorError::NoUnmaskedPixels);
    }
    if points.len() < k {
        return Err(EstimatorError::TooFewPixels { available: points.len(), k });
    }
    points.sort_by(|p, q| {
        p[0].total_cmp(&q[0])
            .then(p[1].total_cmp(&q[1]))
            .then(p[2].total_cmp(&q[2]))
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp(&points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        for (j, center) in centers.iter_mut().enumerate() {
            let members = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == j)
                .map(|(p, _)| p);
            // An emptied cluster keeps its previous center.
            if let Some(m) = mean_of(members) {
                *center = m;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let mut sizes = vec![0usize; centers.len()];
    for &a in &assignment {
        sizes[a] += 1;
    }
    let selected = sizes
        .iter()
        .enumerate()
        .fold(0, |best, (j, &s)| if s > sizes[best] { j } else { best });
    Ok(EstimatorResult::new(
        LabColor::from_array(centers[selected]),
        Diagnostics::KMeans { cluster_sizes: sizes, selected, iterations },
    ))
}

/// Top-left corners of the 8 border patches: 4 corners then the top, bottom,
/// left and right edge midpoints.
pub fn border_patch_origins(width: usize, height: usize, patch: usize) -> [(usize, usize); 8] {
    let (xr, yb) = (width - patch, height - patch);
    let (xm, ym) = (xr / 2, yb / 2);
    [
        (0, 0),
        (xr, 0),
        (0, yb),
        (xr, yb),
        (xm, 0),
        (xm, yb),
        (0, ym),
        (xr, ym),
    ]
}

/// Mean Lab of the 8 fixed border patches that survive mask and variance checks.
///
/// A patch is rejected if any of its pixels is masked or if the mean squared
/// Lab distance of its pixels to the patch mean exceeds `variance_cutoff`.
pub fn patch_ita(
    img: &PatchTensor,
    patch_size: usize,
    variance_cutoff: f64,
) -> Result<EstimatorResult, EstimatorError> {
    let (w, h) = (img.width(), img.height());
    if patch_size == 0 || w < 3 * patch_size || h < 3 * patch_size {
        return Err(EstimatorError::ImageTooSmall { width: w, height: h, patch: patch_size });
    }
    let mut means = Vec::with_capacity(8);
    let (mut rejected_masked, mut rejected_variance) = (0, 0);
    for (x0, y0) in border_patch_origins(w, h, patch_size) {
        let mut labs = Vec::with_capacity(patch_size * patch_size);
        let mut masked = false;
        'rows: for y in y0..y0 + patch_size {
            for x in x0..x0 + patch_size {
                if img.is_masked(x, y) {
                    masked = true;
                    break 'rows;
                }
                labs.push(crate::color::srgb_to_lab(&img.image().pixel(x, y)).to_array());
            }
        }
        if masked {
            rejected_masked += 1;
            continue;
        }
        let mean = mean_of(labs.iter()).expect("patch is non-empty");
        let variance = labs.iter().map(|p| dist2(p, &mean)).sum::<f64>() / labs.len() as f64;
        if variance > variance_cutoff {
            rejected_variance += 1;
            continue;
        }
        means.push(mean);
    }
    let Some(lab) = mean_of(means.iter()) else {
        return Err(EstimatorError::AllPatchesRejected {
            masked: rejected_masked,
            high_variance: rejected_variance,
        });
    };
    Ok(EstimatorResult::new(
        LabColor::from_array(lab),
        Diagnostics::Patch { used: means.len(), rejected_masked, rejected_variance },
    ))
}

/// Shades-of-Gray white balance output.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteBalanced {
    pub image: PatchTensor,
    /// Per-channel illuminant estimate `(mean(I_c^p))^(1/p)`.
    pub illuminant: [f64; 3],
    /// True when the correction pushed any channel out of `[0, 1]`.
    pub clamped: bool,
    /// False when the illuminant was undefined (a channel estimate of zero)
    /// and the input was returned unchanged.
    pub applied: bool,
}

/// Shades-of-Gray color constancy over all pixels (mask ignored).
///
/// Each channel is scaled by `mean(e) / e_c`, making the corrected illuminant
/// gray at the mean of the original estimates. `p = 1` is Gray-World.
pub fn shades_of_gray(img: &PatchTensor, p: f64) -> Result<WhiteBalanced, EstimatorError> {
    if !p.is_finite() || p < 1.0 {
        return Err(EstimatorError::InvalidOrder(p));
    }
    let data = img.image().data();
    let n = (data.len() / 3) as f64;
    let mut sums = [0.0; 3];
    for px in data.chunks_exact(3) {
        for c in 0..3 {
            sums[c] += px[c].powf(p);
        }
    }
    let illuminant = sums.map(|s| (s / n).powf(1.0 / p));
    if illuminant.iter().any(|&e| e.is_nan() || e <= 0.0) {
        return Ok(WhiteBalanced { image: img.clone(), illuminant, clamped: false, applied: false });
    }
    let gray = illuminant.iter().sum::<f64>() / 3.0;
    let scale = illuminant.map(|e| gray / e);
    let (mut image, mask) = img.clone().into_parts();
    let clamped = image.map_channels(|c, v| v * scale[c]);
    let image = PatchTensor::new(image, mask).expect("shape unchanged");
    Ok(WhiteBalanced { image, illuminant, clamped, applied: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{delta_e_1976, lab_to_srgb, srgb_to_lab, SrgbColor};
    use crate::image::{Mask, RgbImage};
    use approx::assert_abs_diff_eq;

    fn uniform(lab: LabColor, size: usize) -> PatchTensor {
        let c = lab_to_srgb(&lab).color;
        PatchTensor::new(RgbImage::filled(size, size, c), None).unwrap()
    }

    #[test]
    fn kmeans_uniform_image() {
        let lab = LabColor::new(70.0, 5.0, 20.0);
        let img = uniform(lab, 32);
        let r = kmeans_ita(&img, 3, 7).unwrap();
        let expected = srgb_to_lab(&lab_to_srgb(&lab).color);
        assert_eq!(r.lab, expected);
        assert_abs_diff_eq!(r.lab.l, 70.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.ita.0, 45.0, epsilon = 1e-7);
    }

    #[test]
    fn kmeans_errors() {
        let img = uniform(LabColor::new(60.0, 5.0, 15.0), 8);
        assert_eq!(kmeans_ita(&img, 0, 1), Err(EstimatorError::ZeroClusters));
        let (im, _) = img.clone().into_parts();
        let all = PatchTensor::new(im.clone(), Some(Mask::from_fn(8, 8, |_, _| true))).unwrap();
        assert_eq!(kmeans_ita(&all, 3, 1), Err(EstimatorError::NoUnmaskedPixels));
        let two = PatchTensor::new(im, Some(Mask::from_fn(8, 8, |x, y| x + y > 1))).unwrap();
        // (0,0), (1,0), (0,1) unmasked
        assert_eq!(
            kmeans_ita(&two, 4, 1),
            Err(EstimatorError::TooFewPixels { available: 3, k: 4 })
        );
    }

    #[test]
    fn patch_uniform_and_errors() {
        let lab = LabColor::new(55.0, 9.0, 17.0);
        let img = uniform(lab, 64);
        let r = patch_ita(&img, 20, 50.0).unwrap();
        assert_eq!(r.lab, srgb_to_lab(&lab_to_srgb(&lab).color));
        assert_eq!(r.diagnostics, Diagnostics::Patch { used: 8, rejected_masked: 0, rejected_variance: 0 });
        assert!(matches!(patch_ita(&uniform(lab, 32), 20, 50.0), Err(EstimatorError::ImageTooSmall { .. })));
    }

    #[test]
    fn patch_all_masked_names_cause() {
        let (im, _) = uniform(LabColor::new(55.0, 9.0, 17.0), 64).into_parts();
        let img = PatchTensor::new(im, Some(Mask::from_fn(64, 64, |_, _| true))).unwrap();
        assert_eq!(
            patch_ita(&img, 20, 50.0),
            Err(EstimatorError::AllPatchesRejected { masked: 8, high_variance: 0 })
        );
    }

    #[test]
    fn patch_rejects_noisy_patch() {
        let skin = lab_to_srgb(&LabColor::new(60.0, 10.0, 18.0)).color;
        // checkerboard of black/white in the top-left corner only
        let img = RgbImage::from_fn(64, 64, |x, y| {
            if x < 20 && y < 20 {
                let v = ((x + y) % 2) as f64;
                SrgbColor::new(v, v, v)
            } else {
                skin
            }
        });
        let r = patch_ita(&PatchTensor::new(img, None).unwrap(), 20, 50.0).unwrap();
        assert_eq!(r.diagnostics, Diagnostics::Patch { used: 7, rejected_masked: 0, rejected_variance: 1 });
        assert!(delta_e_1976(&r.lab, &srgb_to_lab(&skin)) < 1e-9);
    }

    #[test]
    fn sog_gray_image_unchanged() {
        let img = PatchTensor::new(
            RgbImage::from_fn(16, 16, |x, y| {
                let v = (x * 16 + y) as f64 / 300.0;
                SrgbColor::new(v, v, v)
            }),
            None,
        )
        .unwrap();
        let out = shades_of_gray(&img, 6.0).unwrap();
        assert!(out.applied && !out.clamped);
        for (a, b) in out.image.image().data().iter().zip(img.image().data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sog_black_is_identity_and_order_checked() {
        let img = PatchTensor::new(RgbImage::filled(8, 8, SrgbColor::new(0.0, 0.0, 0.0)), None).unwrap();
        let out = shades_of_gray(&img, 6.0).unwrap();
        assert!(!out.applied);
        assert_eq!(out.image, img);
        assert_eq!(shades_of_gray(&img, 0.5), Err(EstimatorError::InvalidOrder(0.5)));
        assert!(shades_of_gray(&img, f64::NAN).is_err());
    }
}
