//! Resize + per-channel normalization into network input tensors.

use serde::{Deserialize, Serialize};

use crate::image::RgbImage;

/// ImageNet channel statistics.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Square output edge in pixels.
    pub size: usize,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl PreprocessConfig {
    pub fn imagenet(size: usize) -> Self {
        Self { size, mean: IMAGENET_MEAN, std: IMAGENET_STD }
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self::imagenet(224)
    }
}

/// Channel-major (CHW) square tensor of normalized values.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    size: usize,
    channels: usize,
    data: Vec<f64>,
}

impl NetInput {
    pub fn zeros(size: usize) -> Self {
        Self { size, channels: 3, data: vec![0.0; 3 * size * size] }
    }

    /// `data` must hold `3 * size * size` values in CHW order.
    pub fn from_chw(size: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == 3 * size * size).then_some(Self { size, channels: 3, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

// Exact when both ends are equal.
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: &RgbImage, out_w: usize, out_h: usize) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    if (w, h) == (out_w, out_h) {
        return img.clone();
    }
    let src = img.data();
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let axis = |dst: usize, scale: f64, len: usize| {
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, pos - i0 as f64)
    };
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, sy, h);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(x, sx, w);
            for c in 0..3 {
                let at = |xx: usize, yy: usize| src[(yy * w + xx) * 3 + c];
                let top = lerp(at(x0, y0), at(x1, y0), fx);
                let bottom = lerp(at(x0, y1), at(x1, y1), fx);
                data.push(lerp(top, bottom, fy).clamp(0.0, 1.0));
            }
        }
    }
    RgbImage::new(out_w, out_h, data).expect("clamped to [0, 1]")
}

/// Resize to `cfg.size` square and apply `(x − mean) / std` per channel.
pub fn preprocess(img: &RgbImage, cfg: &PreprocessConfig) -> NetInput {
    let resized = resize_bilinear(img, cfg.size, cfg.size);
    let n = cfg.size * cfg.size;
    let mut data = vec![0.0; 3 * n];
    for (i, px) in resized.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * n + i] = (px[c] - cfg.mean[c]) / cfg.std[c];
        }
    }
    NetInput { size: cfg.size, channels: 3, data }
}
