//! Pixel containers: unconstrained-size RGB images, lesion masks and the
//! validated [`PatchTensor`] consumed by the estimators.

use std::path::Path;

use thiserror::Error;

use crate::color::{srgb_to_lab, LabColor, SrgbColor};

/// Smallest edge accepted by [`PatchTensor`].
pub const MIN_PATCH_EDGE: usize = 8;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions {width}x{height} do not match buffer of {len} values")]
    BufferSize { width: usize, height: usize, len: usize },
    #[error("image must be at least {min}x{min}, got {width}x{height}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("pixel value {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("mask is {mask_w}x{mask_h} but image is {width}x{height}")]
    MaskShape { mask_w: usize, mask_h: usize, width: usize, height: usize },
    #[error("image io: {0}")]
    Io(#[from] ::image::ImageError),
}

/// Row-major interleaved RGB image with channel values in `[0, 1]` sRGB.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(ImageError::BufferSize { width, height, len: data.len() });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: SrgbColor) -> Self {
        let px = color.to_array();
        let data = (0..width * height).flat_map(|_| px).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> SrgbColor) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).to_array().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> SrgbColor {
        let i = (y * self.width + x) * 3;
        SrgbColor::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn pixels(&self) -> impl Iterator<Item = SrgbColor> + '_ {
        self.data
            .chunks_exact(3)
            .map(|p| SrgbColor::new(p[0], p[1], p[2]))
    }

    /// Applies `f` to every channel value; results are clamped to `[0, 1]`.
    /// Returns whether any value needed clamping.
    pub fn map_channels(&mut self, mut f: impl FnMut(usize, f64) -> f64) -> bool {
        let mut clamped = false;
        for (i, v) in self.data.iter_mut().enumerate() {
            let out = f(i % 3, *v);
            if !(0.0..=1.0).contains(&out) {
                clamped = true;
            }
            *v = if out.is_nan() { 0.0 } else { out.clamp(0.0, 1.0) };
        }
        clamped
    }

    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = ::image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
        Ok(Self { width: w as usize, height: h as usize, data })
    }

    pub fn to_rgb8(&self) -> ::image::RgbImage {
        let raw = self
            .pixels()
            .flat_map(|p| p.to_u8())
            .collect::<Vec<u8>>();
        ::image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        self.to_rgb8().save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Boolean mask; `true` marks lesion / excluded pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if bits.len() != width * height {
            return Err(ImageError::BufferSize { width, height, len: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn coverage(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }

    /// Any nonzero luma counts as masked.
    pub fn load_png(path: &Path) -> Result<Self, ImageError> {
        let img = ::image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        let bits = img.into_raw().into_iter().map(|v| v > 0).collect();
        Ok(Self { width: w as usize, height: h as usize, bits })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let raw = self.bits.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        ::image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
            .save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Image patch with optional lesion mask, at least 8×8.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTensor {
    image: RgbImage,
    mask: Option<Mask>,
}

impl PatchTensor {
    pub fn new(image: RgbImage, mask: Option<Mask>) -> Result<Self, ImageError> {
        let (width, height) = (image.width, image.height);
        if width < MIN_PATCH_EDGE || height < MIN_PATCH_EDGE {
            return Err(ImageError::TooSmall { width, height, min: MIN_PATCH_EDGE });
        }
        if let Some(m) = &mask {
            if m.width != width || m.height != height {
                return Err(ImageError::MaskShape {
                    mask_w: m.width,
                    mask_h: m.height,
                    width,
                    height,
                });
            }
        }
        Ok(Self { image, mask })
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn is_masked(&self, x: usize, y: usize) -> bool {
        self.mask.as_ref().is_some_and(|m| m.get(x, y))
    }

    pub fn into_parts(self) -> (RgbImage, Option<Mask>) {
        (self.image, self.mask)
    }

    /// Lab values of all non-masked pixels in row-major order.
    pub fn unmasked_lab(&self) -> Vec<LabColor> {
        let w = self.width();
        self.image
            .pixels()
            .enumerate()
            .filter(|(i, _)| !self.is_masked(i % w, i / w))
            .map(|(_, p)| srgb_to_lab(&p))
            .collect()
    }

    pub fn load(image_path: &Path, mask_path: Option<&Path>) -> Result<Self, ImageError> {
        let image = RgbImage::load_png(image_path)?;
        let mask = mask_path.map(Mask::load_png).transpose()?;
        Self::new(image, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(RgbImage::new(2, 2, vec![0.5; 11]).is_err());
        assert!(RgbImage::new(1, 1, vec![0.5, 1.5, 0.0]).is_err());
        assert!(RgbImage::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn patch_size_and_mask_shape() {
        let small = RgbImage::filled(7, 9, SrgbColor::new(0.5, 0.5, 0.5));
        assert!(matches!(PatchTensor::new(small, None), Err(ImageError::TooSmall { .. })));
        let img = RgbImage::filled(8, 8, SrgbColor::new(0.5, 0.5, 0.5));
        let mask = Mask::from_fn(8, 9, |_, _| false);
        assert!(matches!(PatchTensor::new(img.clone(), Some(mask)), Err(ImageError::MaskShape { .. })));
        assert!(PatchTensor::new(img, None).is_ok());
    }

    #[test]
    fn png_round_trip_is_8bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let img = RgbImage::from_fn(9, 8, |x, y| {
            SrgbColor::new(x as f64 / 8.0, y as f64 / 7.0, ((x * y) % 255) as f64 / 255.0)
        });
        img.save_png(&path).unwrap();
        let back = RgbImage::load_png(&path).unwrap();
        assert_eq!(back.to_rgb8(), img.to_rgb8());

        let mask = Mask::from_fn(9, 8, |x, y| x > y);
        let mpath = dir.path().join("m.png");
        mask.save_png(&mpath).unwrap();
        assert_eq!(Mask::load_png(&mpath).unwrap(), mask);
    }
}
