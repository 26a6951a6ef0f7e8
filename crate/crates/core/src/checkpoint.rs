//! JSON checkpoints tagged `naide-ckpt-v1`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{NaideError, Result};
use crate::nn::{Activation, MlpWeights};
use crate::training::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "naide-ckpt-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    dims: Vec<usize>,
    activation: Activation,
    /// One row-major `out x in` matrix per layer.
    matrices: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    config: TrainConfig,
}

/// Network weights together with the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub weights: MlpWeights,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(weights: MlpWeights, config: TrainConfig) -> Self {
        Checkpoint { weights, config }
    }

    pub fn to_json(&self) -> String {
        let w = &self.weights;
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            dims: w.dims().to_vec(),
            activation: w.activation(),
            matrices: w
                .matrices()
                .iter()
                .map(|m| m.iter().copied().collect())
                .collect(),
            biases: w.biases().iter().map(|b| b.to_vec()).collect(),
            config: self.config.clone(),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)
            .map_err(|e| NaideError::Checkpoint(format!("malformed checkpoint: {e}")))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(NaideError::Checkpoint(format!(
                "unsupported format tag {:?} (expected {CHECKPOINT_FORMAT:?})",
                file.format
            )));
        }
        if file.dims.len() < 2 || file.matrices.len() + 1 != file.dims.len() {
            return Err(NaideError::Checkpoint(format!(
                "dims {:?} do not match {} stored matrices",
                file.dims,
                file.matrices.len()
            )));
        }
        let mut matrices = Vec::with_capacity(file.matrices.len());
        for (l, (data, pair)) in file
            .matrices
            .into_iter()
            .zip(file.dims.windows(2))
            .enumerate()
        {
            let m = Array2::from_shape_vec((pair[1], pair[0]), data)
                .map_err(|e| NaideError::Checkpoint(format!("layer {l} matrix: {e}")))?;
            matrices.push(m);
        }
        let biases = file.biases.into_iter().map(Array1::from).collect();
        let weights = MlpWeights::from_parts(file.dims, matrices, biases, file.activation)
            .map_err(|e| NaideError::Checkpoint(e.to_string()))?;
        Ok(Checkpoint {
            weights,
            config: file.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| NaideError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| NaideError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            NaideError::Checkpoint(msg) => {
                NaideError::Checkpoint(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }
}
