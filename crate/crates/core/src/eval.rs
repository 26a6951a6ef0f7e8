//! MSE / PSNR metrics and directory-level evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::denoise::{check_compat, denoise_image};
use crate::error::{NaideError, Result};
use crate::image::{GrayImage, NoiseSpec};
use crate::io::load_image;
use crate::nn::MlpWeights;
use crate::noise::{add_gaussian_noise, derive_seed};

pub fn mse(clean: &GrayImage, recon: &GrayImage) -> Result<f64> {
    if !clean.same_dims(recon) {
        return Err(NaideError::Shape(format!(
            "cannot compare {}x{} with {}x{}",
            clean.width(),
            clean.height(),
            recon.width(),
            recon.height()
        )));
    }
    let sum: f64 = clean
        .pixels()
        .iter()
        .zip(recon.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / clean.len() as f64)
}

/// `-10 log10(mse)` on the unit-peak scale; `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

pub fn psnr(clean: &GrayImage, recon: &GrayImage) -> Result<f64> {
    mse(clean, recon).map(psnr_from_mse)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetric {
    pub image: String,
    pub psnr_db: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_image: Vec<ImageMetric>,
    /// Mean of the per-image MSE values.
    pub mse: f64,
    /// PSNR of the mean MSE.
    pub psnr_db: f64,
    pub mean_psnr_db: f64,
    /// Population standard deviation of per-image PSNR.
    pub std_psnr_db: f64,
}

impl MetricReport {
    pub fn from_images(per_image: Vec<ImageMetric>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(NaideError::Config("no images were evaluated".into()));
        }
        let n = per_image.len() as f64;
        let mse = per_image.iter().map(|m| m.mse).sum::<f64>() / n;
        let mean = per_image.iter().map(|m| m.psnr_db).sum::<f64>() / n;
        let var = per_image
            .iter()
            .map(|m| (m.psnr_db - mean).powi(2))
            .sum::<f64>()
            / n;
        Ok(MetricReport {
            per_image,
            mse,
            psnr_db: psnr_from_mse(mse),
            mean_psnr_db: mean,
            std_psnr_db: var.sqrt(),
        })
    }

    /// `image,psnr_db,mse`, one row per image.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,psnr_db,mse\n");
        for m in &self.per_image {
            out.push_str(&format!("{},{},{}\n", m.image, m.psnr_db, m.mse));
        }
        out
    }
}

/// Image files (`.pgm`, `.ngf`) directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| NaideError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension()
                        .and_then(|e| e.to_str())
                        .map(|e| e.to_ascii_lowercase())
                        .as_deref(),
                    Some("pgm") | Some("ngf")
                )
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Corrupts every clean image in `clean_dir` (seed derived from
/// `master_seed` and the image's sorted position), runs `denoise`, and
/// scores the result against the clean image.
pub fn evaluate_suite_with<F>(
    clean_dir: &Path,
    spec: NoiseSpec,
    master_seed: u64,
    denoise: F,
) -> Result<MetricReport>
where
    F: Fn(&GrayImage) -> Result<GrayImage> + Sync,
{
    let paths = list_images(clean_dir)?;
    let results: Vec<Option<ImageMetric>> = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let outcome = load_image(path)
                .and_then(|img| img.into_clean())
                .and_then(|clean| {
                    let noisy =
                        add_gaussian_noise(&clean, spec, derive_seed(master_seed, i as u64));
                    let recon = denoise(&noisy)?;
                    let err = mse(&clean, &recon)?;
                    Ok(ImageMetric {
                        image: name.clone(),
                        psnr_db: psnr_from_mse(err),
                        mse: err,
                    })
                });
            match outcome {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    None
                }
            }
        })
        .collect();
    let per_image: Vec<ImageMetric> = results.into_iter().flatten().collect();
    if per_image.is_empty() {
        return Err(NaideError::Config(format!(
            "no images in {} could be evaluated",
            clean_dir.display()
        )));
    }
    MetricReport::from_images(per_image)
}

/// [`evaluate_suite_with`] using the network denoiser.
pub fn evaluate_suite(
    clean_dir: &Path,
    weights: &MlpWeights,
    spec: NoiseSpec,
    k: usize,
    master_seed: u64,
) -> Result<MetricReport> {
    check_compat(weights, k)?;
    evaluate_suite_with(clean_dir, spec, master_seed, |noisy| {
        denoise_image(weights, noisy, k)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageKind;

    #[test]
    fn psnr_closed_forms() {
        let a = GrayImage::clean(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = GrayImage::clean(2, 2, vec![0.2, 0.3, 0.4, 0.5]).unwrap();
        // every error is 0.1 -> mse 0.01 -> 20 dB
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = GrayImage::clean(2, 1, vec![0.0, 0.0]).unwrap();
        assert!(matches!(psnr(&a, &c), Err(NaideError::Shape(_))));
    }

    #[test]
    fn psnr_is_minus_ten_log_mse() {
        let a =
            GrayImage::from_fn(5, 5, ImageKind::Clean, |r, c| (r * 5 + c) as f64 / 25.0).unwrap();
        let b = GrayImage::from_fn(5, 5, ImageKind::Clean, |r, c| {
            ((r * 7 + c * 3) % 25) as f64 / 25.0
        })
        .unwrap();
        let m = mse(&a, &b).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), -10.0 * m.log10());
    }

    #[test]
    fn report_aggregates() {
        let report = MetricReport::from_images(vec![
            ImageMetric {
                image: "a".into(),
                psnr_db: 20.0,
                mse: 0.01,
            },
            ImageMetric {
                image: "b".into(),
                psnr_db: 30.0,
                mse: 0.001,
            },
        ])
        .unwrap();
        assert_eq!(report.mean_psnr_db, 25.0);
        assert_eq!(report.std_psnr_db, 5.0);
        assert_eq!(
            report.to_csv(),
            "image,psnr_db,mse\na,20,0.01\nb,30,0.001\n"
        );
        assert!(MetricReport::from_images(vec![]).is_err());
    }
}
