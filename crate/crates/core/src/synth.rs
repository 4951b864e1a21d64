//! Synthetic skin patches with known ground truth.
//!
//! Ground truth is a closed-form curve in melanin fraction `m ∈ [0, 1]`:
//!
//! ```text
//! L*(m) = 75 − 50·m
//! a*(m) =  4 + 12·m
//! b*(m) = 14 +  8·sin(π·m)
//! ```
//!
//! The whole curve lies inside the sRGB gamut and its ITA is strictly
//! decreasing in `m`. Rendering starts from the encoded sRGB of the truth
//! color and multiplies each channel by a smooth gain field
//! `g·(1 + ramp·(cos θ·X + sin θ·Y))` (X, Y ∈ [−½, ½] across the patch) and a
//! per-channel cast, then adds Gaussian noise and clamps. An optional lesion
//! disk scales the base color by a darkening factor.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{lab_to_srgb, LabColor, SrgbColor};
use crate::dataset::manifest::{write_manifest, FitzpatrickLabel, ManifestError, ManifestRow, Modality, Site};
use crate::image::{ImageError, Mask, PatchTensor, RgbImage};
use crate::ordinal::Fitzpatrick;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("melanin fraction {0} outside [0, 1]")]
    Melanin(f64),
    #[error("melanin thresholds must be strictly increasing inside (0, 1): {0:?}")]
    Thresholds([f64; 5]),
    #[error("invalid synthesis parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn melanin_to_lab(m: f64) -> Result<LabColor, SynthError> {
    if !(0.0..=1.0).contains(&m) {
        return Err(SynthError::Melanin(m));
    }
    Ok(LabColor::new(75.0 - 50.0 * m, 4.0 + 12.0 * m, 14.0 + 8.0 * (PI * m).sin()))
}

/// Five cut points splitting melanin fraction into six Fitzpatrick bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MelaninThresholds([f64; 5]);

impl MelaninThresholds {
    pub fn new(t: [f64; 5]) -> Result<Self, SynthError> {
        let inside = t.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0);
        let increasing = t.windows(2).all(|w| w[0] < w[1]);
        if inside && increasing {
            Ok(Self(t))
        } else {
            Err(SynthError::Thresholds(t))
        }
    }

    /// k/6 for k = 1..5.
    pub fn uniform() -> Self {
        Self([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0])
    }

    pub fn cuts(&self) -> [f64; 5] {
        self.0
    }

    /// Half-open melanin interval `[lo, hi)` of a type (the last bin is closed).
    pub fn interval(&self, fp: Fitzpatrick) -> (f64, f64) {
        let k = fp.rank() as usize;
        let lo = if k == 1 { 0.0 } else { self.0[k - 2] };
        let hi = if k == 6 { 1.0 } else { self.0[k - 1] };
        (lo, hi)
    }
}

impl Default for MelaninThresholds {
    fn default() -> Self {
        Self::uniform()
    }
}

impl TryFrom<Vec<f64>> for MelaninThresholds {
    type Error = SynthError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let arr: [f64; 5] = v
            .try_into()
            .map_err(|v: Vec<f64>| SynthError::Param(format!("expected 5 thresholds, got {}", v.len())))?;
        Self::new(arr)
    }
}

impl From<MelaninThresholds> for Vec<f64> {
    fn from(t: MelaninThresholds) -> Self {
        t.0.to_vec()
    }
}

/// `1 + #{cuts ≤ m}`.
pub fn melanin_to_fp(m: f64, thresholds: &MelaninThresholds) -> Result<Fitzpatrick, SynthError> {
    if !(0.0..=1.0).contains(&m) {
        return Err(SynthError::Melanin(m));
    }
    let rank = 1 + thresholds.0.iter().filter(|&&t| t <= m).count();
    Ok(Fitzpatrick::from_rank(rank).expect("1..=6"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    /// Center in pixel coordinates.
    pub center: (f64, f64),
    pub radius: f64,
    /// Multiplier applied to the base color inside the disk, in (0, 1].
    pub darkening: f64,
}

impl Lesion {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 - self.center.0;
        let dy = y as f64 - self.center.1;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    pub melanin: f64,
    pub gain: f64,
    /// Relative slope of the linear illumination ramp, |ramp| < 1.
    pub ramp: f64,
    /// Ramp direction in radians.
    pub ramp_angle: f64,
    /// Per-channel RGB gains.
    pub cast: [f64; 3],
    pub noise_sigma: f64,
    pub lesion: Option<Lesion>,
    pub seed: u64,
}

impl SynthParams {
    /// Identity illumination, no noise, no lesion.
    pub fn plain(melanin: f64, size: usize) -> Self {
        Self {
            width: size,
            height: size,
            melanin,
            gain: 1.0,
            ramp: 0.0,
            ramp_angle: 0.0,
            cast: [1.0; 3],
            noise_sigma: 0.0,
            lesion: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Param(m.to_string()));
        if !(0.0..=1.0).contains(&self.melanin) {
            return Err(SynthError::Melanin(self.melanin));
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return bad("gain must be positive");
        }
        if !(self.ramp.is_finite() && self.ramp.abs() < 1.0) || !self.ramp_angle.is_finite() {
            return bad("ramp must satisfy |ramp| < 1");
        }
        if !self.cast.iter().all(|c| c.is_finite() && *c > 0.0) {
            return bad("cast gains must be positive");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise sigma must be non-negative");
        }
        if let Some(l) = &self.lesion {
            if !(l.radius.is_finite() && l.radius > 0.0) {
                return bad("lesion radius must be positive");
            }
            if !(l.darkening > 0.0 && l.darkening <= 1.0) {
                return bad("lesion darkening must be in (0, 1]");
            }
            if !(l.center.0.is_finite() && l.center.1.is_finite()) {
                return bad("lesion center must be finite");
            }
        }
        Ok(())
    }

    /// Illumination multiplier at a pixel.
    pub fn gain_at(&self, x: usize, y: usize) -> f64 {
        let coord = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 - 0.5 } else { 0.0 };
        let (gx, gy) = (coord(x, self.width), coord(y, self.height));
        self.gain * (1.0 + self.ramp * (self.ramp_angle.cos() * gx + self.ramp_angle.sin() * gy))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: PatchTensor,
    pub truth_lab: LabColor,
    pub truth_fp: Fitzpatrick,
    pub params: SynthParams,
}

pub fn render(params: &SynthParams, thresholds: &MelaninThresholds) -> Result<SynthSample, SynthError> {
    params.validate()?;
    let truth_lab = melanin_to_lab(params.melanin)?;
    let truth_fp = melanin_to_fp(params.melanin, thresholds)?;
    let base = lab_to_srgb(&truth_lab).color.to_array();
    let (w, h) = (params.width, params.height);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_sigma).expect("sigma validated");
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let g = params.gain_at(x, y);
            let dark = match &params.lesion {
                Some(l) if l.contains(x, y) => l.darkening,
                _ => 1.0,
            };
            for c in 0..3 {
                let n = if params.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                data.push((base[c] * dark * g * params.cast[c] + n).clamp(0.0, 1.0));
            }
        }
    }
    let image = RgbImage::new(w, h, data)?;
    let mask = params.lesion.map(|l| Mask::from_fn(w, h, |x, y| l.contains(x, y)));
    Ok(SynthSample { image: PatchTensor::new(image, mask)?, truth_lab, truth_fp, params: params.clone() })
}

/// Sampling distribution over [`SynthParams`] for a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthDistribution {
    pub size: usize,
    pub images_per_subject: usize,
    /// Global gain drawn uniformly from this range.
    pub gain: (f64, f64),
    /// Ramp slope drawn uniformly from `[-max_ramp, max_ramp]`.
    pub max_ramp: f64,
    /// Cast `(1 + s·t, 1, 1 − s·t)` with `t ~ U[−1, 1]`.
    pub cast_strength: f64,
    pub noise_sigma: f64,
    pub lesion_probability: f64,
    /// Lesion radius as a fraction of the shorter image edge.
    pub lesion_radius: (f64, f64),
    pub lesion_darkening: (f64, f64),
    pub thresholds: MelaninThresholds,
}

impl Default for SynthDistribution {
    fn default() -> Self {
        Self {
            size: 64,
            images_per_subject: 10,
            gain: (0.7, 1.3),
            max_ramp: 0.2,
            cast_strength: 0.1,
            noise_sigma: 0.01,
            lesion_probability: 0.0,
            lesion_radius: (0.1, 0.25),
            lesion_darkening: (0.4, 0.8),
            thresholds: MelaninThresholds::uniform(),
        }
    }
}

impl SynthDistribution {
    /// Same as the default but with identity illumination (noise kept).
    pub fn identity_illumination() -> Self {
        Self { gain: (1.0, 1.0), max_ramp: 0.0, cast_strength: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Param(m.to_string()));
        if self.size == 0 || self.images_per_subject == 0 {
            return bad("size and images_per_subject must be positive");
        }
        if !(self.gain.0 > 0.0 && self.gain.0 <= self.gain.1 && self.gain.1.is_finite()) {
            return bad("gain range must be positive and ordered");
        }
        if !(0.0..1.0).contains(&self.max_ramp) {
            return bad("max_ramp must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.cast_strength) {
            return bad("cast_strength must be in [0, 1)");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lesion_probability) {
            return bad("lesion_probability must be in [0, 1]");
        }
        let ordered = |r: (f64, f64), lo: f64, hi: f64| lo < r.0 && r.0 <= r.1 && r.1 <= hi;
        if !ordered(self.lesion_radius, 0.0, 1.0) || !ordered(self.lesion_darkening, 0.0, 1.0) {
            return bad("lesion ranges must be ordered inside (0, 1]");
        }
        Ok(())
    }
}

/// One generated image with its subject bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub index: usize,
    pub subject_id: String,
    pub site: Site,
    pub sample: SynthSample,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const SUBJECT_STREAM: u64 = 1 << 40;

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Number of subjects for `n` images.
pub fn subject_count(n: usize, images_per_subject: usize) -> usize {
    n.div_ceil(images_per_subject)
}

/// Melanin fraction of subject `s`: subjects cycle through the six types and
/// draw `m` uniformly inside their type's bin.
pub fn subject_melanin(s: usize, dist: &SynthDistribution, seed: u64) -> (Fitzpatrick, f64) {
    let fp = Fitzpatrick::from_rank(s % 6 + 1).expect("1..=6");
    let (lo, hi) = dist.thresholds.interval(fp);
    let mut rng = stream(seed, SUBJECT_STREAM + s as u64);
    (fp, rng.gen_range(lo..hi))
}

/// Draws the parameters of image `i` (subject `i / images_per_subject`).
pub fn sample_params(i: usize, dist: &SynthDistribution, seed: u64) -> (usize, Site, SynthParams) {
    let s = i / dist.images_per_subject;
    let (_, m) = subject_melanin(s, dist, seed);
    let mut rng = stream(seed, i as u64);
    let gain = uniform(&mut rng, dist.gain);
    let ramp = uniform(&mut rng, (-dist.max_ramp, dist.max_ramp));
    let ramp_angle = rng.gen_range(0.0..2.0 * PI);
    let t = rng.gen_range(-1.0..=1.0);
    let cast = [1.0 + dist.cast_strength * t, 1.0, 1.0 - dist.cast_strength * t];
    let site = Site::ALL[rng.gen_range(0..Site::ALL.len())];
    let lesion = (rng.gen::<f64>() < dist.lesion_probability).then(|| {
        let r = uniform(&mut rng, dist.lesion_radius) * dist.size as f64;
        let c = dist.size as f64 / 2.0;
        let jitter = dist.size as f64 / 8.0;
        Lesion {
            center: (c + rng.gen_range(-jitter..=jitter), c + rng.gen_range(-jitter..=jitter)),
            radius: r,
            darkening: uniform(&mut rng, dist.lesion_darkening),
        }
    });
    let params = SynthParams {
        width: dist.size,
        height: dist.size,
        melanin: m,
        gain,
        ramp,
        ramp_angle,
        cast,
        noise_sigma: dist.noise_sigma,
        lesion,
        seed: rng.next_u64(),
    };
    (s, site, params)
}

pub fn subject_id(s: usize) -> String {
    format!("S{s:04}")
}

/// Renders `n` images in memory. Output order is by index regardless of the
/// thread count.
pub fn generate_samples(n: usize, dist: &SynthDistribution, seed: u64) -> Result<Vec<SynthRecord>, SynthError> {
    dist.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (s, site, params) = sample_params(i, dist, seed);
            Ok(SynthRecord { index: i, subject_id: subject_id(s), site, sample: render(&params, &dist.thresholds)? })
        })
        .collect()
}

pub fn image_name(i: usize) -> String {
    format!("images/img_{i:05}.png")
}

pub fn mask_name(i: usize) -> String {
    format!("masks/img_{i:05}.png")
}

/// Writes `images/`, `masks/` and `manifest.csv` under `dir` and returns the
/// manifest rows. Truth Lab goes in the colorimeter columns and truth type in
/// the `fitzpatrick` column.
pub fn generate_corpus(
    dir: &Path,
    n: usize,
    dist: &SynthDistribution,
    seed: u64,
) -> Result<Vec<ManifestRow>, SynthError> {
    dist.validate()?;
    std::fs::create_dir_all(dir.join("images"))?;
    if dist.lesion_probability > 0.0 {
        std::fs::create_dir_all(dir.join("masks"))?;
    }
    let rows: Vec<ManifestRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (s, site, params) = sample_params(i, dist, seed);
            let sample = render(&params, &dist.thresholds)?;
            sample.image.image().save_png(&dir.join(image_name(i)))?;
            let mut row = ManifestRow::new(image_name(i), subject_id(s));
            if let Some(mask) = sample.image.mask() {
                mask.save_png(&dir.join(mask_name(i)))?;
                row.lesion_mask_path = Some(mask_name(i));
            }
            row.site = Some(site);
            row.modality = Modality::Dermatoscopic;
            row.fitzpatrick = Some(FitzpatrickLabel::Single(sample.truth_fp));
            row.colorimeter = Some(sample.truth_lab);
            Ok(row)
        })
        .collect::<Result<_, SynthError>>()?;
    write_manifest(&dir.join("manifest.csv"), &rows)?;
    Ok(rows)
}

/// Plain patch of the given truth color, used by swatch and sanity tools.
pub fn flat_patch(lab: &LabColor, size: usize) -> RgbImage {
    RgbImage::filled(size, size, SrgbColor::from_array(lab_to_srgb(lab).color.to_array()))
}
