//! Per-pixel affine reconstruction and its noisy-data loss estimate.
//!
//! For `Z = x + N` with `E[N] = 0`, `E[N^2] = sigma^2` and a reconstruction
//! `a Z + b` whose coefficients do not depend on `Z`,
//! `(Z - (aZ + b))^2 + 2 a sigma^2` has expectation
//! `E[(x - (aZ + b))^2] + sigma^2`, so it can stand in for the squared error
//! when the clean value is unknown.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image::NoiseSpec;

/// Slope and intercept applied to one noisy pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub a: f64,
    pub b: f64,
}

impl AffineParams {
    pub fn new(a: f64, b: f64) -> Self {
        AffineParams { a, b }
    }

    /// `a z + b` without clamping.
    #[inline]
    pub fn raw(&self, z: f64) -> f64 {
        self.a * z + self.b
    }
}

/// `(z - (a z + b))^2 + 2 a sigma^2`.
#[inline]
pub fn estimated_loss(z: f64, a: f64, b: f64, variance_norm: f64) -> f64 {
    let r = z - (a * z + b);
    r * r + 2.0 * a * variance_norm
}

/// Partial derivatives of [`estimated_loss`] with respect to `(a, b)`.
#[inline]
pub fn estimated_loss_grad(z: f64, a: f64, b: f64, variance_norm: f64) -> (f64, f64) {
    let e = a * z + b - z;
    (2.0 * e * z + 2.0 * variance_norm, 2.0 * e)
}

/// Reconstruction clamped to the valid intensity range.
#[inline]
pub fn apply_affine(z: f64, params: AffineParams) -> f64 {
    params.raw(z).clamp(0.0, 1.0)
}

/// `E[estimated_loss]` for clean value `x`: `((1-a)x - b)^2 + (1 + a^2) sigma^2`.
pub fn expected_estimated_loss(x: f64, a: f64, b: f64, variance_norm: f64) -> f64 {
    let bias = (1.0 - a) * x - b;
    bias * bias + (1.0 + a * a) * variance_norm
}

/// Outcome of a Monte-Carlo check of the loss estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub empirical_mean: f64,
    pub standard_error: f64,
    pub closed_form: f64,
    pub n_samples: usize,
}

impl LemmaCheck {
    /// |empirical - closed form| in units of the standard error.
    pub fn z_score(&self) -> f64 {
        let diff = (self.empirical_mean - self.closed_form).abs();
        if self.standard_error > 0.0 {
            diff / self.standard_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, standard_errors: f64) -> bool {
        self.z_score() <= standard_errors
    }
}

/// Draws `Z = x + N`, `N ~ Gaussian(0, sigma^2)`, and compares the sample mean
/// of the estimated loss with its closed-form expectation.
pub fn verify_lemma_monte_carlo(
    x: f64,
    a: f64,
    b: f64,
    spec: NoiseSpec,
    n_samples: usize,
    seed: u64,
) -> LemmaCheck {
    let var = spec.variance_norm();
    let normal = Normal::new(0.0, spec.sigma_norm()).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Welford running moments.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n_samples {
        let z = x + normal.sample(&mut rng);
        let l = estimated_loss(z, a, b, var);
        let delta = l - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (l - mean);
    }
    let standard_error = if n_samples > 1 {
        (m2 / (n_samples - 1) as f64 / n_samples as f64).sqrt()
    } else {
        f64::INFINITY
    };
    LemmaCheck {
        empirical_mean: mean,
        standard_error,
        closed_form: expected_estimated_loss(x, a, b, var),
        n_samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimated_loss_examples() {
        assert!((estimated_loss(0.5, 1.0, 0.0, 0.01) - 0.02).abs() < 1e-15);
        assert!((estimated_loss(0.5, 0.0, 0.3, 0.01) - 0.04).abs() < 1e-15);
        let var = (25.0f64 / 255.0).powi(2);
        // (0.8 - 0.6)^2 + 2 * 0.5 * var
        assert!((estimated_loss(0.8, 0.5, 0.2, var) - (0.04 + var)).abs() < 1e-15);
        assert!((estimated_loss(0.8, 0.5, 0.2, var) - 0.0496117).abs() < 1e-7);
    }

    #[test]
    fn gradient_examples() {
        let (ga, gb) = estimated_loss_grad(0.5, 1.0, 0.0, 0.01);
        assert!((ga - 0.02).abs() < 1e-15);
        assert_eq!(gb, 0.0);
        for (a, b) in [(0.3, 0.9), (-1.0, 2.0), (5.0, -0.1)] {
            let (ga, _) = estimated_loss_grad(0.0, a, b, 0.04);
            assert!((ga - 0.08).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-6;
        for &(z, a, b, v) in &[
            (0.5, 1.0, 0.0, 0.01),
            (0.8, 0.5, 0.2, 0.0096),
            (-0.2, 1.7, 0.4, 0.002),
            (1.3, -0.4, 0.9, 0.05),
        ] {
            let (ga, gb) = estimated_loss_grad(z, a, b, v);
            let na = (estimated_loss(z, a + h, b, v) - estimated_loss(z, a - h, b, v)) / (2.0 * h);
            let nb = (estimated_loss(z, a, b + h, v) - estimated_loss(z, a, b - h, v)) / (2.0 * h);
            assert!((ga - na).abs() / ga.abs().max(1.0) < 1e-8, "{ga} vs {na}");
            assert!((gb - nb).abs() / gb.abs().max(1.0) < 1e-8, "{gb} vs {nb}");
        }
    }

    #[test]
    fn apply_affine_examples() {
        assert_eq!(apply_affine(0.5, AffineParams::new(1.0, 0.0)), 0.5);
        assert_eq!(apply_affine(0.9, AffineParams::new(2.0, 0.3)), 1.0);
        assert!((apply_affine(0.4, AffineParams::new(0.5, 0.1)) - 0.3).abs() < 1e-15);
        assert_eq!(apply_affine(0.4, AffineParams::new(-1.0, 0.1)), 0.0);
    }

    #[test]
    fn closed_form_examples() {
        assert!((expected_estimated_loss(0.5, 0.8, 0.1, 0.01) - 0.0164).abs() < 1e-15);
        assert!((expected_estimated_loss(0.37, 1.0, 0.0, 0.01) - 0.02).abs() < 1e-15);
        assert!((expected_estimated_loss(0.37, 0.0, 0.37, 0.01) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let spec = NoiseSpec::new(25.5).unwrap(); // sigma_norm = 0.1
        let check = verify_lemma_monte_carlo(0.5, 0.8, 0.1, spec, 200_000, 11);
        assert!((check.closed_form - 0.0164).abs() < 1e-12);
        assert!(check.within(4.0), "{check:?}");
    }
}
