//! Deterministic synthetic test images, quantized to multiples of 1/255.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{GrayImage, ImageKind};

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

enum Shape {
    Rect { r0: f64, c0: f64, r1: f64, c1: f64 },
    Disc { r: f64, c: f64, radius: f64 },
}

impl Shape {
    fn contains(&self, r: f64, c: f64) -> bool {
        match *self {
            Shape::Rect { r0, c0, r1, c1 } => r >= r0 && r < r1 && c >= c0 && c < c1,
            Shape::Disc {
                r: cr,
                c: cc,
                radius,
            } => (r - cr).powi(2) + (c - cc).powi(2) <= radius * radius,
        }
    }
}

fn random_shapes(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    count: usize,
) -> Vec<(Shape, f64)> {
    let (w, h) = (width as f64, height as f64);
    (0..count)
        .map(|_| {
            let level = rng.random_range(0.05..0.95);
            let shape = if rng.random_bool(0.5) {
                let r0 = rng.random_range(0.0..h * 0.8);
                let c0 = rng.random_range(0.0..w * 0.8);
                Shape::Rect {
                    r0,
                    c0,
                    r1: r0 + rng.random_range(h * 0.15..h * 0.6),
                    c1: c0 + rng.random_range(w * 0.15..w * 0.6),
                }
            } else {
                Shape::Disc {
                    r: rng.random_range(0.0..h),
                    c: rng.random_range(0.0..w),
                    radius: rng.random_range(w.min(h) * 0.08..w.min(h) * 0.3),
                }
            };
            (shape, level)
        })
        .collect()
}

/// Overlapping flat rectangles and discs on a flat background.
pub fn piecewise_constant(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = rng.random_range(0.1..0.9);
    let shapes = random_shapes(&mut rng, width, height, 8);
    GrayImage::from_fn(width, height, ImageKind::Clean, |r, c| {
        let (rf, cf) = (r as f64 + 0.5, c as f64 + 0.5);
        let v = shapes
            .iter()
            .rev()
            .find(|(s, _)| s.contains(rf, cf))
            .map_or(background, |(_, level)| *level);
        quantize(v)
    })
    .expect("valid synthetic image")
}

/// Piecewise-smooth regions with gradients, plus oriented stripes inside
/// some regions; a rough stand-in for natural photographs.
pub fn natural_like(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let bg = (
        rng.random_range(0.2..0.8),
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
    );
    let count = (width * height / 150).max(6);
    let shapes = random_shapes(&mut rng, width, height, count);
    let textures: Vec<(f64, f64, f64, f64)> = shapes
        .iter()
        .map(|_| {
            let amp = if rng.random_bool(0.4) {
                rng.random_range(0.05..0.2)
            } else {
                0.0
            };
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let period = rng.random_range(3.0..9.0);
            let slope = rng.random_range(-0.3..0.3);
            (amp, theta, period, slope)
        })
        .collect();
    GrayImage::from_fn(width, height, ImageKind::Clean, |r, c| {
        let (rf, cf) = (r as f64 + 0.5, c as f64 + 0.5);
        let (u, v) = (rf / h - 0.5, cf / w - 0.5);
        let value = match shapes
            .iter()
            .enumerate()
            .rev()
            .find(|(_, (s, _))| s.contains(rf, cf))
        {
            Some((i, (_, level))) => {
                let (amp, theta, period, slope) = textures[i];
                let phase = (rf * theta.cos() + cf * theta.sin()) * std::f64::consts::TAU / period;
                level + slope * u + amp * phase.sin()
            }
            None => bg.0 + bg.1 * u + bg.2 * v,
        };
        quantize(value)
    })
    .expect("valid synthetic image")
}

/// Sum of sinusoidal gratings at several orientations.
pub fn textured(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.05..0.15),
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(2.5..8.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    GrayImage::from_fn(width, height, ImageKind::Clean, |r, c| {
        let v: f64 = waves
            .iter()
            .map(|&(amp, theta, period, phase)| {
                amp * ((r as f64 * theta.cos() + c as f64 * theta.sin()) * std::f64::consts::TAU
                    / period
                    + phase)
                    .sin()
            })
            .sum();
        quantize(0.5 + v)
    })
    .expect("valid synthetic image")
}
