//! Applying the network to whole images, and the two training objectives.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::context::{context_batch, context_width, validate_k};
use crate::error::{NaideError, Result};
use crate::image::{GrayImage, ImageKind, NoiseSpec};
use crate::loss::{apply_affine, estimated_loss, estimated_loss_grad, AffineParams};
use crate::nn::{Gradients, MlpWeights};

/// Pixels per inference chunk. Chunks are reduced in index order.
const CHUNK: usize = 1024;

pub(crate) fn check_compat(weights: &MlpWeights, k: usize) -> Result<()> {
    validate_k(k)?;
    if weights.input_width() != context_width(k) {
        return Err(NaideError::Config(format!(
            "network expects {} context values but k = {k} gives {}",
            weights.input_width(),
            context_width(k)
        )));
    }
    Ok(())
}

fn chunks(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(n))
        .collect()
}

/// Slope and intercept for every pixel, row-major.
pub fn affine_map(weights: &MlpWeights, noisy: &GrayImage, k: usize) -> Result<Vec<AffineParams>> {
    check_compat(weights, k)?;
    let parts = chunks(noisy.len())
        .into_par_iter()
        .map(|range| {
            let idx: Vec<usize> = range.collect();
            let ctx = context_batch(noisy, &idx, k)?;
            let out = weights.predict(ctx.view())?;
            Ok(out
                .outer_iter()
                .map(|r| AffineParams::new(r[0], r[1]))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Reconstruction together with the per-pixel affine parameters used.
pub fn denoise_with_map(
    weights: &MlpWeights,
    noisy: &GrayImage,
    k: usize,
) -> Result<(GrayImage, Vec<AffineParams>)> {
    let map = affine_map(weights, noisy, k)?;
    let pixels = noisy
        .pixels()
        .iter()
        .zip(&map)
        .map(|(&z, &p)| apply_affine(z, p))
        .collect();
    let image = GrayImage::new(noisy.width(), noisy.height(), pixels, ImageKind::Clean)?;
    Ok((image, map))
}

/// `clamp(a_i Z_i + b_i, 0, 1)` at every pixel.
pub fn denoise_image(weights: &MlpWeights, noisy: &GrayImage, k: usize) -> Result<GrayImage> {
    denoise_with_map(weights, noisy, k).map(|(img, _)| img)
}

/// `row,col,a,b` dump of an affine map for an image of the given width.
pub fn affine_csv(width: usize, map: &[AffineParams]) -> String {
    let mut out = String::with_capacity(24 * map.len() + 16);
    out.push_str("row,col,a,b\n");
    for (i, p) in map.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i / width, i % width, p.a, p.b));
    }
    out
}

/// Mean estimated loss over every pixel of `noisy`.
pub fn adaptive_objective(
    weights: &MlpWeights,
    noisy: &GrayImage,
    spec: NoiseSpec,
    k: usize,
) -> Result<f64> {
    check_compat(weights, k)?;
    let var = spec.variance_norm();
    let z = noisy.pixels();
    let sums = chunks(noisy.len())
        .into_par_iter()
        .map(|range| {
            let idx: Vec<usize> = range.collect();
            let ctx = context_batch(noisy, &idx, k)?;
            let out = weights.predict(ctx.view())?;
            Ok(idx
                .iter()
                .zip(out.outer_iter())
                .map(|(&i, p)| estimated_loss(z[i], p[0], p[1], var))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.into_iter().sum::<f64>() / noisy.len() as f64)
}

fn check_batch(contexts: &ArrayView2<'_, f64>, columns: &[&[f64]]) -> Result<()> {
    for col in columns {
        if col.len() != contexts.nrows() {
            return Err(NaideError::Shape(format!(
                "{} contexts but {} target values",
                contexts.nrows(),
                col.len()
            )));
        }
    }
    Ok(())
}

/// Batch-mean estimated loss and its parameter gradient.
pub fn adaptive_loss_and_grad(
    weights: &MlpWeights,
    contexts: ArrayView2<'_, f64>,
    noisy_centers: &[f64],
    variance_norm: f64,
) -> Result<(f64, Gradients)> {
    check_batch(&contexts, &[noisy_centers])?;
    let (out, cache) = weights.forward(contexts)?;
    let n = noisy_centers.len();
    let mut grad_out = Array2::zeros((n, 2));
    let mut total = 0.0;
    for (i, &z) in noisy_centers.iter().enumerate() {
        let (a, b) = (out[[i, 0]], out[[i, 1]]);
        total += estimated_loss(z, a, b, variance_norm);
        let (ga, gb) = estimated_loss_grad(z, a, b, variance_norm);
        grad_out[[i, 0]] = ga;
        grad_out[[i, 1]] = gb;
    }
    let grads = weights.backward(&cache, grad_out.view())?;
    Ok((total / n as f64, grads))
}

/// Batch-mean `(x - (a z + b))^2` and its parameter gradient. No clamping.
pub fn supervised_loss_and_grad(
    weights: &MlpWeights,
    contexts: ArrayView2<'_, f64>,
    noisy_centers: &[f64],
    clean_centers: &[f64],
) -> Result<(f64, Gradients)> {
    check_batch(&contexts, &[noisy_centers, clean_centers])?;
    let (out, cache) = weights.forward(contexts)?;
    let n = noisy_centers.len();
    let mut grad_out = Array2::zeros((n, 2));
    let mut total = 0.0;
    for i in 0..n {
        let (z, x) = (noisy_centers[i], clean_centers[i]);
        let e = out[[i, 0]] * z + out[[i, 1]] - x;
        total += e * e;
        grad_out[[i, 0]] = 2.0 * e * z;
        grad_out[[i, 1]] = 2.0 * e;
    }
    let grads = weights.backward(&cache, grad_out.view())?;
    Ok((total / n as f64, grads))
}

/// Batch-mean supervised squared error without gradients.
pub fn supervised_loss(
    weights: &MlpWeights,
    contexts: ArrayView2<'_, f64>,
    noisy_centers: &[f64],
    clean_centers: &[f64],
) -> Result<f64> {
    check_batch(&contexts, &[noisy_centers, clean_centers])?;
    let out = weights.predict(contexts)?;
    let total: f64 = (0..noisy_centers.len())
        .map(|i| {
            let e = clean_centers[i] - (out[[i, 0]] * noisy_centers[i] + out[[i, 1]]);
            e * e
        })
        .sum();
    Ok(total / noisy_centers.len() as f64)
}

/// Batch-mean estimated loss without gradients.
pub fn adaptive_loss(
    weights: &MlpWeights,
    contexts: ArrayView2<'_, f64>,
    noisy_centers: &[f64],
    variance_norm: f64,
) -> Result<f64> {
    check_batch(&contexts, &[noisy_centers])?;
    let out = weights.predict(contexts)?;
    let total: f64 = noisy_centers
        .iter()
        .enumerate()
        .map(|(i, &z)| estimated_loss(z, out[[i, 0]], out[[i, 1]], variance_norm))
        .sum();
    Ok(total / noisy_centers.len() as f64)
}
