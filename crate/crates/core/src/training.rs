//! Supervised pretraining, adaptive training from scratch, and adaptive
//! fine-tuning with the sigma-squared stopping rule.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::context::{context_width, extract_context, fill_context, validate_k, ContextVector};
use crate::denoise::{
    adaptive_loss_and_grad, adaptive_objective, check_compat, supervised_loss_and_grad,
};
use crate::error::{NaideError, Result};
use crate::image::{GrayImage, ImageKind, NoiseSpec};
use crate::nn::{Activation, MlpWeights};
use crate::noise::{add_gaussian_noise, derive_seed};

// Seed streams derived from `TrainConfig::seed`.
const STREAM_INIT: u64 = 0x1000;
const STREAM_EPOCH: u64 = 0x2000;
const STREAM_DATASET: u64 = 0x3000;

const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    None,
    /// Stop once the full-image objective drops below `sigma_norm^2`.
    #[default]
    Heuristic,
}

impl FromStr for StopRule {
    type Err = NaideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(StopRule::None),
            "heuristic" => Ok(StopRule::Heuristic),
            other => Err(NaideError::Config(format!(
                "unknown stop rule {other:?} (expected heuristic or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Supervised,
    FineTune,
}

/// Training hyperparameters. Field names double as JSON config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0_supervised: f64,
    pub lr0_finetune: f64,
    pub lr_halve_every_supervised: usize,
    pub lr_halve_every_finetune: usize,
    pub sigma_255: f64,
    pub seed: u64,
    pub stop_rule: StopRule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 17,
            hidden: vec![512; 9],
            activation: Activation::Positive,
            epochs: 50,
            batch_size: 128,
            lr0_supervised: 1e-4,
            lr0_finetune: 1e-5,
            lr_halve_every_supervised: 10,
            lr_halve_every_finetune: 20,
            sigma_255: 25.0,
            seed: 0,
            stop_rule: StopRule::Heuristic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        validate_k(self.k)?;
        let bad = |what: &str| Err(NaideError::Config(what.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if [self.lr0_supervised, self.lr0_finetune]
            .iter()
            .any(|lr| lr.is_nan() || *lr <= 0.0)
        {
            return bad("learning rates must be positive");
        }
        if self.lr_halve_every_supervised == 0 || self.lr_halve_every_finetune == 0 {
            return bad("learning-rate halving periods must be at least 1 epoch");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        NoiseSpec::new(self.sigma_255)?;
        Ok(())
    }

    /// `[k^2 - 1, hidden..., 2]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(context_width(self.k));
        dims.extend_from_slice(&self.hidden);
        dims.push(2);
        dims
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.sigma_255)
    }

    /// `lr0 * 2^-floor(epoch / halve_every)`, epochs counted from 0.
    pub fn learning_rate(&self, phase: Phase, epoch: usize) -> f64 {
        let (lr0, every) = match phase {
            Phase::Supervised => (self.lr0_supervised, self.lr_halve_every_supervised),
            Phase::FineTune => (self.lr0_finetune, self.lr_halve_every_finetune),
        };
        lr0 * 0.5f64.powi((epoch / every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    EpochBudget,
    Heuristic,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::EpochBudget => "epoch_budget",
            StopReason::Heuristic => "heuristic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Full-data objective after the epoch.
    pub objective: f64,
    pub lr: f64,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Full-data objective before the first update.
    pub initial_objective: f64,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn final_objective(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_objective, |e| e.objective)
    }

    /// `epoch,objective,lr,seconds`; epoch 0 is the starting point.
    /// Without timing the `seconds` column is written as 0 so that reruns
    /// are byte-identical.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("epoch,objective,lr,seconds\n");
        out.push_str(&format!("0,{},0,0\n", self.initial_objective));
        for e in &self.epochs {
            let secs = if include_timing { e.seconds } else { 0.0 };
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.objective, e.lr, secs));
        }
        out
    }
}

/// One labelled pixel: clean center, noisy center and the noisy context.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSample {
    pub x: f64,
    pub z: f64,
    pub context: ContextVector,
}

/// Clean/noisy image pairs plus a shuffled sample order. Contexts are
/// gathered on demand.
#[derive(Debug, Clone)]
pub struct SupervisedDataset {
    k: usize,
    pairs: Vec<(GrayImage, GrayImage)>,
    order: Vec<(u32, u32)>,
}

impl SupervisedDataset {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sample(&self, i: usize) -> SupervisedSample {
        let (img, px) = self.order[i];
        let (clean, noisy) = &self.pairs[img as usize];
        let px = px as usize;
        let (row, col) = (px / clean.width(), px % clean.width());
        SupervisedSample {
            x: clean.pixels()[px],
            z: noisy.pixels()[px],
            context: extract_context(noisy, row, col, self.k).expect("in-bounds sample"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = SupervisedSample> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// The noisy images the samples were drawn from.
    pub fn noisy_images(&self) -> impl Iterator<Item = &GrayImage> {
        self.pairs.iter().map(|(_, n)| n)
    }

    fn batch(&self, ids: &[usize]) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let mut ctx = Array2::zeros((ids.len(), context_width(self.k)));
        let mut z = Vec::with_capacity(ids.len());
        let mut x = Vec::with_capacity(ids.len());
        for (mut row, &i) in ctx.outer_iter_mut().zip(ids) {
            let (img, px) = self.order[i];
            let (clean, noisy) = &self.pairs[img as usize];
            let px = px as usize;
            fill_context(
                noisy,
                px / noisy.width(),
                px % noisy.width(),
                self.k,
                row.as_slice_mut().expect("standard layout"),
            );
            z.push(noisy.pixels()[px]);
            x.push(clean.pixels()[px]);
        }
        (ctx, z, x)
    }

    /// Mean supervised squared error over every sample.
    pub fn objective(&self, weights: &MlpWeights) -> Result<f64> {
        check_compat(weights, self.k)?;
        let ids: Vec<usize> = (0..self.len()).collect();
        let sums = ids
            .par_chunks(EVAL_CHUNK)
            .map(|chunk| {
                let (ctx, z, x) = self.batch(chunk);
                crate::denoise::supervised_loss(weights, ctx.view(), &z, &x)
                    .map(|m| m * chunk.len() as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(sums.into_iter().sum::<f64>() / self.len() as f64)
    }
}

/// Corrupts each clean image once and emits one sample per pixel, shuffled.
pub fn make_supervised_dataset(
    clean_images: &[GrayImage],
    spec: NoiseSpec,
    k: usize,
    seed: u64,
) -> Result<SupervisedDataset> {
    validate_k(k)?;
    if clean_images.is_empty() {
        return Err(NaideError::Config("no clean training images".into()));
    }
    let mut pairs = Vec::with_capacity(clean_images.len());
    for (i, img) in clean_images.iter().enumerate() {
        if img.kind() != ImageKind::Clean {
            return Err(NaideError::Config(format!(
                "training image {i} is not a clean image"
            )));
        }
        if img.len() > u32::MAX as usize {
            return Err(NaideError::Config(format!(
                "training image {i} is too large"
            )));
        }
        let noisy = add_gaussian_noise(img, spec, derive_seed(seed, i as u64));
        pairs.push((img.clone(), noisy));
    }
    let mut order: Vec<(u32, u32)> = pairs
        .iter()
        .enumerate()
        .flat_map(|(i, (c, _))| (0..c.len() as u32).map(move |p| (i as u32, p)))
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        STREAM_DATASET,
    )));
    Ok(SupervisedDataset { k, pairs, order })
}

fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        STREAM_EPOCH + epoch as u64,
    )));
    perm
}

fn ensure_finite(value: f64, epoch: usize, batch: usize, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(NaideError::Training {
            epoch,
            batch,
            message: format!("{what} is {value}"),
        })
    }
}

fn step_error(e: NaideError, epoch: usize, batch: usize) -> NaideError {
    match e {
        NaideError::NonFinite(message) => NaideError::Training {
            epoch,
            batch,
            message,
        },
        other => other,
    }
}

fn init_for(config: &TrainConfig) -> Result<MlpWeights> {
    MlpWeights::init(
        &config.dims(),
        config.activation,
        derive_seed(config.seed, STREAM_INIT),
    )
}

/// Minimizes the supervised squared error with mini-batch Adam from a
/// fresh initialization.
pub fn train_supervised(
    dataset: &SupervisedDataset,
    config: &TrainConfig,
) -> Result<(MlpWeights, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(NaideError::Config("empty training set".into()));
    }
    if dataset.k() != config.k {
        return Err(NaideError::Config(format!(
            "dataset built with k = {} but config has k = {}",
            dataset.k(),
            config.k
        )));
    }
    let mut weights = init_for(config)?;
    let mut adam = AdamState::new(&weights);
    let initial_objective = dataset.objective(&weights)?;
    ensure_finite(initial_objective, 0, 0, "initial objective")?;
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.learning_rate(Phase::Supervised, epoch);
        let perm = epoch_permutation(dataset.len(), config.seed, epoch);
        let mut steps = 0;
        for (b, ids) in perm.chunks(config.batch_size).enumerate() {
            let (ctx, z, x) = dataset.batch(ids);
            let (loss, grads) = supervised_loss_and_grad(&weights, ctx.view(), &z, &x)?;
            ensure_finite(loss, epoch + 1, b, "batch loss")?;
            adam.step(&mut weights, &grads, lr)
                .map_err(|e| step_error(e, epoch + 1, b))?;
            steps += 1;
        }
        let objective = dataset.objective(&weights)?;
        ensure_finite(objective, epoch + 1, steps, "epoch objective")?;
        log::info!(
            "supervised epoch {} objective {objective:.6e} lr {lr:.3e}",
            epoch + 1
        );
        records.push(EpochRecord {
            epoch: epoch + 1,
            objective,
            lr,
            steps,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((
        weights,
        TrainReport {
            initial_objective,
            epochs: records,
            stop_reason: StopReason::EpochBudget,
        },
    ))
}

/// Result of adaptive training on a single noisy image.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    /// Weights after the last completed epoch.
    pub weights: MlpWeights,
    /// Snapshot with the lowest full-image objective seen (epoch 0 included).
    pub best_weights: MlpWeights,
    pub best_epoch: usize,
    pub report: TrainReport,
}

fn run_adaptive(
    mut weights: MlpWeights,
    noisy: &GrayImage,
    spec: NoiseSpec,
    config: &TrainConfig,
    phase: Phase,
    stop_rule: StopRule,
) -> Result<AdaptiveOutcome> {
    config.validate()?;
    check_compat(&weights, config.k)?;
    let var = spec.variance_norm();
    let k = config.k;
    let mut adam = AdamState::new(&weights);

    let initial_objective = adaptive_objective(&weights, noisy, spec, k)?;
    ensure_finite(initial_objective, 0, 0, "initial objective")?;
    let mut best_weights = weights.clone();
    let mut best_objective = initial_objective;
    let mut best_epoch = 0;
    let mut records = Vec::with_capacity(config.epochs);
    let mut stop_reason = StopReason::EpochBudget;

    let z = noisy.pixels();
    let mut centers = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.learning_rate(phase, epoch);
        let perm = epoch_permutation(noisy.len(), config.seed, epoch);
        let mut steps = 0;
        for (b, ids) in perm.chunks(config.batch_size).enumerate() {
            let ctx = crate::context::context_batch(noisy, ids, k)?;
            centers.clear();
            centers.extend(ids.iter().map(|&i| z[i]));
            let (loss, grads) = adaptive_loss_and_grad(&weights, ctx.view(), &centers, var)?;
            ensure_finite(loss, epoch + 1, b, "batch loss")?;
            adam.step(&mut weights, &grads, lr)
                .map_err(|e| step_error(e, epoch + 1, b))?;
            steps += 1;
        }
        let objective = adaptive_objective(&weights, noisy, spec, k)?;
        ensure_finite(objective, epoch + 1, steps, "epoch objective")?;
        log::info!(
            "adaptive epoch {} objective {objective:.6e} lr {lr:.3e}",
            epoch + 1
        );
        records.push(EpochRecord {
            epoch: epoch + 1,
            objective,
            lr,
            steps,
            seconds: started.elapsed().as_secs_f64(),
        });
        if objective < best_objective {
            best_objective = objective;
            best_weights = weights.clone();
            best_epoch = epoch + 1;
        }
        if stop_rule == StopRule::Heuristic && objective < var {
            stop_reason = StopReason::Heuristic;
            break;
        }
    }
    Ok(AdaptiveOutcome {
        weights,
        best_weights,
        best_epoch,
        report: TrainReport {
            initial_objective,
            epochs: records,
            stop_reason,
        },
    })
}

/// Random initialization, then the estimated-loss objective on `noisy` alone
/// for `config.epochs` epochs using the supervised learning-rate schedule.
pub fn adaptive_train_from_scratch(
    noisy: &GrayImage,
    spec: NoiseSpec,
    config: &TrainConfig,
) -> Result<(MlpWeights, TrainReport)> {
    config.validate()?;
    let weights = init_for(config)?;
    let out = run_adaptive(
        weights,
        noisy,
        spec,
        config,
        Phase::Supervised,
        StopRule::None,
    )?;
    Ok((out.weights, out.report))
}

/// Continues from `weights` on the estimated-loss objective of `noisy`, with
/// the fine-tuning schedule and `config.stop_rule`.
///
/// Only the noisy image and the noise level are consulted.
pub fn fine_tune(
    weights: &MlpWeights,
    noisy: &GrayImage,
    spec: NoiseSpec,
    config: &TrainConfig,
) -> Result<AdaptiveOutcome> {
    if weights.activation() != config.activation {
        log::debug!(
            "fine-tuning keeps the checkpoint activation {} (config says {})",
            weights.activation(),
            config.activation
        );
    }
    run_adaptive(
        weights.clone(),
        noisy,
        spec,
        config,
        Phase::FineTune,
        config.stop_rule,
    )
}
