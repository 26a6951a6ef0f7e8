use std::fs;

use naide_core::eval::evaluate_suite_with;
use naide_core::synthetic::natural_like;
use naide_core::*;
use ndarray::{array, Array2};

fn mid_gray(w: usize, h: usize, seed: u64) -> GrayImage {
    let img = natural_like(w, h, seed);
    GrayImage::clean(w, h, img.pixels().iter().map(|v| 0.3 + 0.4 * v).collect()).unwrap()
}

#[test]
fn identical_images_with_noise_free_output_have_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let img = mid_gray(16, 16, 1);
    for name in ["a.pgm", "b.pgm", "c.pgm"] {
        save_image(&img, dir.path().join(name)).unwrap();
    }
    // a = 0, b = 0.5: output ignores the noise entirely
    let w = MlpWeights::from_parts(
        vec![8, 2],
        vec![Array2::zeros((2, 8))],
        vec![array![0.0, 0.5]],
        Activation::Linear,
    )
    .unwrap();
    let report = evaluate_suite(dir.path(), &w, NoiseSpec::new(25.0).unwrap(), 3, 0).unwrap();
    assert_eq!(report.per_image.len(), 3);
    assert_eq!(report.std_psnr_db, 0.0);
}

#[test]
fn identity_surrogate_scores_noisy_input_psnr() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        save_image(
            &mid_gray(128, 128, 10 + i),
            dir.path().join(format!("img{i}.pgm")),
        )
        .unwrap();
    }
    let report = evaluate_suite_with(dir.path(), NoiseSpec::new(25.0).unwrap(), 4, |noisy| {
        Ok(noisy.clone())
    })
    .unwrap();
    let expected = -20.0 * (25.0f64 / 255.0).log10();
    assert!(
        (report.mean_psnr_db - expected).abs() < 0.1,
        "{}",
        report.mean_psnr_db
    );
    let mean = report.per_image.iter().map(|m| m.psnr_db).sum::<f64>() / 3.0;
    assert_eq!(report.mean_psnr_db, mean);
    assert_eq!(report.to_csv().lines().count(), 4);
}

#[test]
fn unreadable_files_are_skipped_and_empty_suites_fail() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("broken.pgm"), b"P5\n2 2\n255\n\x01").unwrap();
    let spec = NoiseSpec::new(25.0).unwrap();
    assert!(evaluate_suite_with(dir.path(), spec, 0, |n| Ok(n.clone())).is_err());
    save_image(&mid_gray(8, 8, 3), dir.path().join("good.pgm")).unwrap();
    let report = evaluate_suite_with(dir.path(), spec, 0, |n| Ok(n.clone())).unwrap();
    assert_eq!(report.per_image.len(), 1);
    assert_eq!(report.per_image[0].image, "good.pgm");
}

#[test]
fn suites_are_reproducible_per_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..2 {
        save_image(
            &mid_gray(16, 16, 20 + i),
            dir.path().join(format!("{i}.pgm")),
        )
        .unwrap();
    }
    let spec = NoiseSpec::new(25.0).unwrap();
    let run = |seed| {
        evaluate_suite_with(dir.path(), spec, seed, |n| Ok(n.clone()))
            .unwrap()
            .to_csv()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}
