//! Grayscale images on the normalized scale (1.0 = intensity 255).

use serde::{Deserialize, Serialize};

use crate::error::{NaideError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    /// Values restricted to `[0, 1]`.
    Clean,
    /// Unbounded real values.
    Noisy,
}

/// Row-major grid of finite real pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    kind: ImageKind,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, kind: ImageKind) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(NaideError::Shape(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(NaideError::Shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(NaideError::NonFinite(format!("pixel {i} is {}", pixels[i])));
        }
        if kind == ImageKind::Clean {
            if let Some(i) = pixels.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(NaideError::Config(format!(
                    "clean image pixel {i} = {} lies outside [0, 1]",
                    pixels[i]
                )));
            }
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
            kind,
        })
    }

    pub fn clean(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::new(width, height, pixels, ImageKind::Clean)
    }

    pub fn noisy(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::new(width, height, pixels, ImageKind::Noisy)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        kind: ImageKind,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels, kind)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn kind(&self) -> ImageKind {
        self.kind
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn same_dims(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Relabels as noisy; any finite values are acceptable.
    pub fn into_noisy(mut self) -> Self {
        self.kind = ImageKind::Noisy;
        self
    }

    /// Relabels as clean, failing if any value lies outside `[0, 1]`.
    pub fn into_clean(self) -> Result<Self> {
        Self::new(self.width, self.height, self.pixels, ImageKind::Clean)
    }

    /// Copy with each pixel clamped to `[0, 1]` and labelled clean.
    pub fn clamped(&self) -> Self {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            kind: ImageKind::Clean,
        }
    }
}

/// Noise level, configured in 8-bit units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    sigma_255: f64,
}

impl NoiseSpec {
    pub fn new(sigma_255: f64) -> Result<Self> {
        if !sigma_255.is_finite() || sigma_255 <= 0.0 {
            return Err(NaideError::Config(format!(
                "noise sigma must be positive and finite, got {sigma_255}"
            )));
        }
        Ok(NoiseSpec { sigma_255 })
    }

    pub fn sigma_255(&self) -> f64 {
        self.sigma_255
    }

    pub fn sigma_norm(&self) -> f64 {
        self.sigma_255 / 255.0
    }

    pub fn variance_norm(&self) -> f64 {
        let s = self.sigma_norm();
        s * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_images_must_stay_in_unit_range() {
        assert!(GrayImage::clean(2, 1, vec![0.0, 1.0]).is_ok());
        assert!(GrayImage::clean(2, 1, vec![0.0, 1.01]).is_err());
        assert!(GrayImage::noisy(2, 1, vec![-0.3, 1.2]).is_ok());
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            GrayImage::noisy(2, 2, vec![0.0; 3]),
            Err(NaideError::Shape(_))
        ));
        assert!(matches!(
            GrayImage::noisy(0, 2, vec![]),
            Err(NaideError::Shape(_))
        ));
        assert!(matches!(
            GrayImage::noisy(1, 1, vec![f64::NAN]),
            Err(NaideError::NonFinite(_))
        ));
    }

    #[test]
    fn noise_spec_conversions() {
        let spec = NoiseSpec::new(25.0).unwrap();
        assert_eq!(spec.sigma_norm(), 25.0 / 255.0);
        assert_eq!(spec.variance_norm(), (25.0 / 255.0) * (25.0 / 255.0));
        assert!(NoiseSpec::new(0.0).is_err());
        assert!(NoiseSpec::new(-1.0).is_err());
    }
}
