use ndarray::Array2;
use proptest::prelude::*;

use naide_core::adam::AdamState;
use naide_core::context::{context_batch, context_width};
use naide_core::denoise::{adaptive_loss, adaptive_loss_and_grad, supervised_loss_and_grad};
use naide_core::eval::mse;
use naide_core::gradcheck::gradient_check;
use naide_core::io::{decode_ngf, decode_pgm, encode_ngf, encode_pgm};
use naide_core::loss::estimated_loss_grad;
use naide_core::training::Phase;
use naide_core::*;

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Linear),
        Just(Activation::Positive),
        Just(Activation::Sigmoid)
    ]
}

fn noisy_image(max_side: usize) -> impl Strategy<Value = GrayImage> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(-0.5f64..1.5, w * h)
            .prop_map(move |px| GrayImage::noisy(w, h, px).unwrap())
    })
}

fn batch(rows: usize, width: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * width)
        .prop_map(move |v| Array2::from_shape_vec((rows, width), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn output_ranges_follow_activation(seed in any::<u64>(), scale in 0.1f64..5.0, ctx in batch(16, 8)) {
        let ctx = ctx * scale;
        let pos = MlpWeights::init(&[8, 12, 2], Activation::Positive, seed).unwrap();
        prop_assert!(pos.predict(ctx.view()).unwrap().iter().all(|&v| v > 0.0));
        let sig = MlpWeights::init(&[8, 12, 2], Activation::Sigmoid, seed).unwrap();
        prop_assert!(sig.predict(ctx.view()).unwrap().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>(), act in activation(), ctx in batch(5, 8)) {
        let w = MlpWeights::init(&[8, 6, 6, 2], act, seed).unwrap();
        let (out, _) = w.forward(ctx.view()).unwrap();
        prop_assert_eq!(&out, &w.predict(ctx.view()).unwrap());
        prop_assert_eq!(out, w.forward(ctx.view()).unwrap().0);
    }

    #[test]
    fn hole_property(img in noisy_image(9), k in prop::sample::select(vec![3usize, 5, 7]),
                     pick in any::<prop::sample::Index>(), value in -3.0f64..3.0, seed in any::<u64>()) {
        let w = MlpWeights::init(&[context_width(k), 10, 2], Activation::Positive, seed).unwrap();
        let i = pick.index(img.len());
        let mut px = img.pixels().to_vec();
        px[i] = value;
        let altered = GrayImage::noisy(img.width(), img.height(), px).unwrap();
        let before = w.predict(context_batch(&img, &[i], k).unwrap().view()).unwrap();
        let after = w.predict(context_batch(&altered, &[i], k).unwrap().view()).unwrap();
        let same = before.iter().zip(after.iter()).all(|(p, q)| p.to_bits() == q.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn adaptive_loss_is_residual_plus_slope_penalty(seed in any::<u64>(), ctx in batch(12, 8),
                                                    z in prop::collection::vec(-0.3f64..1.3, 12),
                                                    sigma in 1.0f64..60.0) {
        let var = (sigma / 255.0).powi(2);
        let w = MlpWeights::init(&[8, 6, 2], Activation::Positive, seed).unwrap();
        let out = w.predict(ctx.view()).unwrap();
        let n = z.len() as f64;
        let residual: f64 = z.iter().enumerate().map(|(i, &zi)| (zi - out[[i, 0]] * zi - out[[i, 1]]).powi(2)).sum::<f64>() / n;
        let mean_a: f64 = out.column(0).sum() / n;
        let direct = residual + 2.0 * var * mean_a;
        let got = adaptive_loss(&w, ctx.view(), &z, var).unwrap();
        prop_assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn estimated_loss_grad_matches_differences(z in -0.5f64..1.5, a in -2.0f64..2.0, b in -1.0f64..1.0, var in 1e-5f64..0.05) {
        let (ga, gb) = estimated_loss_grad(z, a, b, var);
        let h = 1e-6;
        let na = (estimated_loss(z, a + h, b, var) - estimated_loss(z, a - h, b, var)) / (2.0 * h);
        let nb = (estimated_loss(z, a, b + h, var) - estimated_loss(z, a, b - h, var)) / (2.0 * h);
        prop_assert!((ga - na).abs() <= 1e-8 * ga.abs().max(1.0));
        prop_assert!((gb - nb).abs() <= 1e-8 * gb.abs().max(1.0));
    }

    #[test]
    fn network_gradients_match_differences(seed in any::<u64>(), act in activation(), ctx in batch(4, 8),
                                           x in prop::collection::vec(0.0f64..1.0, 4),
                                           biases in prop::collection::vec(-0.5f64..0.5, 14)) {
        let mut w = MlpWeights::init(&[8, 7, 5, 2], act, seed).unwrap();
        let n = w.num_params();
        let bias_slots: Vec<_> = (0..n)
            .map(|i| w.param(i))
            .filter(|p| matches!(p, naide_core::nn::ParamIndex::Bias { .. }))
            .collect();
        for (p, value) in bias_slots.into_iter().zip(&biases) {
            w.set(p, *value);
        }
        // central differences are meaningless across a ReLU kink
        let (_, cache) = w.forward(ctx.view()).unwrap();
        let hidden = &cache.pre_activations()[..cache.pre_activations().len() - 1];
        prop_assume!(hidden.iter().all(|m| m.iter().all(|v| v.abs() > 1e-4)));
        let z: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.05 * (i as f64 - 1.5)).collect();
        let sup = gradient_check(&w, |w| supervised_loss_and_grad(w, ctx.view(), &z, &x), 1e-6).unwrap();
        let ada = gradient_check(&w, |w| adaptive_loss_and_grad(w, ctx.view(), &z, 0.01), 1e-6).unwrap();
        prop_assert!(sup < 1e-5, "supervised {}", sup);
        prop_assert!(ada < 1e-5, "adaptive {}", ada);
    }

    #[test]
    fn denoised_output_is_clamped_and_same_size(img in noisy_image(12), seed in any::<u64>(), act in activation()) {
        let w = MlpWeights::init(&[8, 6, 2], act, seed).unwrap();
        let out = denoise_image(&w, &img, 3).unwrap();
        prop_assert!(out.same_dims(&img));
        prop_assert_eq!(out.kind(), ImageKind::Clean);
        prop_assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn noise_preserves_dimensions_and_input(w in 1usize..20, h in 1usize..20, seed in any::<u64>(), sigma in 0.5f64..80.0) {
        let clean = GrayImage::from_fn(w, h, ImageKind::Clean, |r, c| ((r * 31 + c * 17) % 256) as f64 / 255.0).unwrap();
        let copy = clean.clone();
        let noisy = add_gaussian_noise(&clean, NoiseSpec::new(sigma).unwrap(), seed);
        prop_assert_eq!(&clean, &copy);
        prop_assert!(noisy.same_dims(&clean));
        prop_assert_eq!(noisy.kind(), ImageKind::Noisy);
    }

    #[test]
    fn psnr_is_minus_ten_log_mse(img in noisy_image(10), shift in 0.001f64..0.5) {
        let clean = img.clamped();
        let other = GrayImage::clean(clean.width(), clean.height(),
            clean.pixels().iter().map(|v| (v + shift).min(1.0) * 0.999).collect()).unwrap();
        let m = mse(&clean, &other).unwrap();
        prop_assume!(m > 0.0);
        prop_assert_eq!(psnr(&clean, &other).unwrap(), -10.0 * m.log10());
    }

    #[test]
    fn ngf_round_trip_is_bitwise(img in noisy_image(16)) {
        let back = decode_ngf(&encode_ngf(&img)).unwrap();
        prop_assert!(back.same_dims(&img));
        let same = back.pixels().iter().zip(img.pixels()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn pgm_round_trip_on_eight_bit_images(levels in prop::collection::vec(0u8..=255, 1..200), w in 1usize..20) {
        let h = levels.len().div_ceil(w);
        let px: Vec<f64> = (0..w * h).map(|i| levels[i % levels.len()] as f64 / 255.0).collect();
        let img = GrayImage::clean(w, h, px).unwrap();
        prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn learning_rate_schedule_is_exact(epoch in 0usize..500, every in 1usize..40, lr0 in 1e-6f64..1e-1) {
        let c = TrainConfig { lr0_supervised: lr0, lr0_finetune: lr0, lr_halve_every_supervised: every,
                              lr_halve_every_finetune: every, ..TrainConfig::default() };
        let expected = lr0 * 2f64.powi(-((epoch / every) as i32));
        prop_assert_eq!(c.learning_rate(Phase::Supervised, epoch), expected);
        prop_assert_eq!(c.learning_rate(Phase::FineTune, epoch), expected);
    }

    #[test]
    fn adam_with_zero_gradients_keeps_parameters(seed in any::<u64>(), t in 0u64..10_000, lr in 1e-6f64..1.0) {
        let mut w = MlpWeights::init(&[6, 5, 2], Activation::Positive, seed).unwrap();
        let before = w.clone();
        let mut state = AdamState::new(&w);
        state.set_timestep(t);
        let zeros = Gradients::zeros_like(&w);
        state.step(&mut w, &zeros, lr).unwrap();
        prop_assert_eq!(w, before);
        prop_assert_eq!(state.timestep(), t + 1);
        prop_assert!(state.second_moments_nonnegative());
    }
}
