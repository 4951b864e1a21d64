//! CIELAB / sRGB conversions, the Individual Typology Angle and ΔE 1976.
//!
//! All conversions use the D65 reference white with the CIE 1931 2° observer
//! and the IEC 61966-2-1 sRGB transfer curve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// D65 reference white, 2° observer (Y normalized to 1).
pub const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

// Linear sRGB -> XYZ (D65).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

// Exact inverse of RGB_TO_XYZ (computed once, see `xyz_to_rgb_matrix`).
fn xyz_to_rgb_matrix() -> [[f64; 3]; 3] {
    let m = RGB_TO_XYZ;
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv_det = 1.0 / det;
    [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ]
}

// Lab companding kink: delta = 6/29.
const LAB_DELTA: f64 = 6.0 / 29.0;

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error("L* = {0} outside [0, 100]")]
    LightnessOutOfRange(f64),
    #[error("non-finite Lab component")]
    NonFinite,
    #[error("sRGB channel {channel} = {value} outside [0, 1]")]
    ChannelOutOfRange { channel: usize, value: f64 },
    #[error("ITA thresholds must be 5 strictly decreasing finite values, got {0:?}")]
    InvalidBands(Vec<f64>),
}

/// A CIELAB color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    /// Lightness, 0..=100.
    pub l: f64,
    /// Green (−) to red (+).
    pub a: f64,
    /// Blue (−) to yellow (+).
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    /// Builds a color and checks `L* ∈ [0, 100]` with finite `a*`, `b*`.
    pub fn checked(l: f64, a: f64, b: f64) -> Result<Self, ColorError> {
        let c = Self::new(l, a, b);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ColorError> {
        if !(self.l.is_finite() && self.a.is_finite() && self.b.is_finite()) {
            return Err(ColorError::NonFinite);
        }
        if !(0.0..=100.0).contains(&self.l) {
            return Err(ColorError::LightnessOutOfRange(self.l));
        }
        Ok(())
    }

    pub fn ita(&self) -> ItaDegrees {
        ita(self)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Mean of a non-empty set of colors, taken component-wise in Lab.
    ///
    /// Deviations are accumulated relative to the first color so that a set of
    /// identical colors averages to exactly that color.
    pub fn mean(colors: &[LabColor]) -> Option<LabColor> {
        let first = *colors.first()?;
        let n = colors.len() as f64;
        let mut acc = [0.0; 3];
        for c in colors {
            acc[0] += c.l - first.l;
            acc[1] += c.a - first.a;
            acc[2] += c.b - first.b;
        }
        Some(LabColor::new(
            first.l + acc[0] / n,
            first.a + acc[1] / n,
            first.b + acc[2] / n,
        ))
    }
}

/// Nonlinear (gamma-encoded) sRGB in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrgbColor {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl SrgbColor {
    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub fn checked(r: f64, g: f64, b: f64) -> Result<Self, ColorError> {
        for (channel, value) in [r, g, b].into_iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ColorError::ChannelOutOfRange { channel, value });
            }
        }
        Ok(Self::new(r, g, b))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// 8-bit quantization with round-half-up.
    pub fn to_u8(self) -> [u8; 3] {
        self.to_array()
            .map(|c| (c.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
    }
}

/// Individual Typology Angle in degrees; higher means lighter skin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItaDegrees(pub f64);

impl ItaDegrees {
    pub fn degrees(self) -> f64 {
        self.0
    }
}

/// ITA = arctan((L* − 50) / b*) · 180/π.
///
/// At `b* = 0` the limit is taken: ±90° depending on the sign of `L* − 50`,
/// and 0° when `L* = 50` as well. The value never depends on `a*`.
pub fn ita(c: &LabColor) -> ItaDegrees {
    let rise = c.l - 50.0;
    if c.b == 0.0 {
        let deg = if rise > 0.0 {
            90.0
        } else if rise < 0.0 {
            -90.0
        } else {
            0.0
        };
        return ItaDegrees(deg);
    }
    ItaDegrees((rise / c.b).atan().to_degrees())
}

/// CIE 1976 color difference: Euclidean distance in Lab.
pub fn delta_e_1976(x: &LabColor, y: &LabColor) -> f64 {
    let dl = x.l - y.l;
    let da = x.a - y.a;
    let db = x.b - y.b;
    (dl * dl + da * da + db * db).sqrt()
}

pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn srgb_encode(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA * LAB_DELTA * LAB_DELTA {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Linear-light RGB (no clamping) to Lab.
pub fn linear_rgb_to_lab(rgb: [f64; 3]) -> LabColor {
    let xyz = mat_vec(&RGB_TO_XYZ, rgb);
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    LabColor::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

/// Lab to linear-light RGB, possibly outside `[0, 1]`.
pub fn lab_to_linear_rgb(c: &LabColor) -> [f64; 3] {
    let fy = (c.l + 16.0) / 116.0;
    let fx = fy + c.a / 500.0;
    let fz = fy - c.b / 200.0;
    let xyz = [
        lab_f_inv(fx) * D65_WHITE[0],
        lab_f_inv(fy) * D65_WHITE[1],
        lab_f_inv(fz) * D65_WHITE[2],
    ];
    mat_vec(&xyz_to_rgb_matrix(), xyz)
}

pub fn srgb_to_lab(c: &SrgbColor) -> LabColor {
    let lin = c.to_array().map(srgb_decode);
    let mut lab = linear_rgb_to_lab(lin);
    // Reference white lands a hair above 100 through the matrix round-off.
    lab.l = lab.l.clamp(0.0, 100.0);
    lab
}

/// Result of rendering a Lab color into the sRGB gamut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GamutMapped {
    pub color: SrgbColor,
    /// True when at least one channel had to be clamped into `[0, 1]`.
    pub clamped: bool,
}

/// Lab to sRGB with per-channel clamping of out-of-gamut values.
pub fn lab_to_srgb(c: &LabColor) -> GamutMapped {
    // The 4-decimal matrix constants put reference white ~7e-8 outside the
    // cube; well under one 8-bit step, so not worth a flag.
    const SLACK: f64 = 1e-6;
    // Negative linear values stay negative through the linear toe segment.
    let encoded = lab_to_linear_rgb(c).map(srgb_encode);
    let clamped = encoded.iter().any(|&v| !(-SLACK..=1.0 + SLACK).contains(&v));
    let out = encoded.map(|v| v.clamp(0.0, 1.0));
    GamutMapped {
        color: SrgbColor::from_array(out),
        clamped,
    }
}

/// Five strictly decreasing ITA cut points separating six ITA bands.
///
/// Band 1 is the lightest (ITA above the first cut point). These bands are a
/// reporting convenience and are not clinical Fitzpatrick types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ItaBands {
    thresholds: [f64; 5],
}

impl ItaBands {
    pub fn new(thresholds: [f64; 5]) -> Result<Self, ColorError> {
        let ok = thresholds.iter().all(|t| t.is_finite())
            && thresholds.windows(2).all(|w| w[0] > w[1]);
        if !ok {
            return Err(ColorError::InvalidBands(thresholds.to_vec()));
        }
        Ok(Self { thresholds })
    }

    pub fn thresholds(&self) -> [f64; 5] {
        self.thresholds
    }
}

impl Default for ItaBands {
    /// Very light > 55° > light > 41° > intermediate > 28° > tan > 10° > brown > −30° > dark.
    fn default() -> Self {
        Self {
            thresholds: [55.0, 41.0, 28.0, 10.0, -30.0],
        }
    }
}

impl TryFrom<Vec<f64>> for ItaBands {
    type Error = ColorError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let arr: [f64; 5] = v
            .clone()
            .try_into()
            .map_err(|_| ColorError::InvalidBands(v))?;
        Self::new(arr)
    }
}

impl From<ItaBands> for Vec<f64> {
    fn from(b: ItaBands) -> Self {
        b.thresholds.to_vec()
    }
}

/// ITA band index 1..=6. A value equal to a cut point falls in the lighter band.
pub fn ita_to_band(ita: ItaDegrees, bands: &ItaBands) -> u8 {
    1 + bands.thresholds.iter().filter(|&&t| ita.0 < t).count() as u8
}
