//! Central-difference check of analytic network gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NaideError, Result};
use crate::nn::{Gradients, MlpWeights};

/// Parameters checked when the caller does not choose.
pub const DEFAULT_MAX_PARAMS: usize = 256;

/// Relative error of one coordinate: `|g - n| / max(1, |g|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Max relative error between the objective's analytic gradient and central
/// differences, over every parameter (or a seeded sample of
/// [`DEFAULT_MAX_PARAMS`] when the network is larger).
pub fn gradient_check<F>(weights: &MlpWeights, objective: F, eps: f64) -> Result<f64>
where
    F: Fn(&MlpWeights) -> Result<(f64, Gradients)>,
{
    gradient_check_sampled(weights, objective, eps, DEFAULT_MAX_PARAMS, 0)
}

pub fn gradient_check_sampled<F>(
    weights: &MlpWeights,
    objective: F,
    eps: f64,
    max_params: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&MlpWeights) -> Result<(f64, Gradients)>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(NaideError::Config(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {eps}"
        )));
    }
    let (_, analytic) = objective(weights)?;
    let total = weights.num_params();
    let indices: Vec<usize> = if total <= max_params {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, total, max_params).into_vec();
        v.sort_unstable();
        v
    };

    let mut probe = weights.clone();
    let mut worst = 0.0f64;
    for flat in indices {
        let p = weights.param(flat);
        let original = weights.get(p);
        probe.set(p, original + eps);
        let (plus, _) = objective(&probe)?;
        probe.set(p, original - eps);
        let (minus, _) = objective(&probe)?;
        probe.set(p, original);
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.get(p), numeric));
    }
    Ok(worst)
}
