//! Neural affine image denoiser.
//!
//! Each pixel is reconstructed as `a * Z + b`, where `(a, b)` come from a
//! fully-connected network that sees only the pixel's `k x k` neighbourhood
//! with the center removed. The network can be trained on clean/noisy pairs,
//! on a single noisy image through an unbiased estimate of the squared
//! error, or pretrained one way and fine-tuned the other.

pub mod adam;
pub mod checkpoint;
pub mod context;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod loss;
pub mod nn;
pub mod noise;
pub mod synthetic;
pub mod training;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use context::{extract_context, ContextVector};
pub use denoise::{adaptive_objective, affine_map, denoise_image, denoise_with_map};
pub use error::{NaideError, Result};
pub use eval::{evaluate_suite, psnr, MetricReport};
pub use gradcheck::gradient_check;
pub use image::{GrayImage, ImageKind, NoiseSpec};
pub use io::{load_image, save_image};
pub use loss::{
    apply_affine, estimated_loss, estimated_loss_grad, verify_lemma_monte_carlo, AffineParams,
};
pub use nn::{softplus, Activation, ForwardCache, Gradients, MlpWeights};
pub use noise::add_gaussian_noise;
pub use training::{
    adaptive_train_from_scratch, fine_tune, make_supervised_dataset, train_supervised,
    AdaptiveOutcome, StopReason, StopRule, SupervisedDataset, SupervisedSample, TrainConfig,
    TrainReport,
};
