//! Dense ReLU network with a configurable two-unit output head.
//!
//! The network maps a context vector to the slope and intercept of the
//! per-pixel affine reconstruction. Forward and backward passes are written
//! out by hand over `ndarray` matrices; all arithmetic is `f64`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NaideError, Result};

/// Output activation applied to both network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    /// `log(1 + e^x)`; keeps slope and intercept strictly positive.
    #[default]
    Positive,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Positive => softplus(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Positive => sigmoid(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Positive => "positive",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = NaideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Activation::Linear),
            "positive" | "softplus" => Ok(Activation::Positive),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(NaideError::Config(format!(
                "unknown activation {other:?} (expected linear, positive or sigmoid)"
            ))),
        }
    }
}

/// `log(1 + e^x)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

// Subgradient at exactly zero is 0.
#[inline]
fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Layer widths, weight matrices (`out x in`) and bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    dims: Vec<usize>,
    matrices: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
}

/// Per-layer pre- and post-activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn input(&self) -> ArrayView2<'_, f64> {
        self.input.view()
    }

    /// One `batch x width` matrix per layer, before the activation.
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }
}

/// Gradients with the same layout as [`MlpWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub matrices: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(weights: &MlpWeights) -> Self {
        Gradients {
            matrices: weights
                .matrices
                .iter()
                .map(|m| Array2::zeros(m.raw_dim()))
                .collect(),
            biases: weights
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.matrices
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Value at a flat parameter index (see [`MlpWeights::param`]).
    pub fn get(&self, index: ParamIndex) -> f64 {
        match index {
            ParamIndex::Weight { layer, row, col } => self.matrices[layer][[row, col]],
            ParamIndex::Bias { layer, row } => self.biases[layer][row],
        }
    }
}

/// Location of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamIndex {
    Weight {
        layer: usize,
        row: usize,
        col: usize,
    },
    Bias {
        layer: usize,
        row: usize,
    },
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(NaideError::Config(format!(
            "network needs at least an input and an output layer, got dims {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(NaideError::Config(format!(
            "layer widths must be positive, got dims {dims:?}"
        )));
    }
    if *dims.last().unwrap() != 2 {
        return Err(NaideError::Config(format!(
            "output layer must have width 2 (slope, intercept), got dims {dims:?}"
        )));
    }
    Ok(())
}

impl MlpWeights {
    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init(dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrices = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                .expect("positive standard deviation");
            let m = Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(&mut rng));
            matrices.push(m);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MlpWeights {
            dims: dims.to_vec(),
            matrices,
            biases,
            activation,
        })
    }

    /// Network with every weight and bias equal to zero.
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(dims)?;
        Ok(MlpWeights {
            dims: dims.to_vec(),
            matrices: dims
                .windows(2)
                .map(|p| Array2::zeros((p[1], p[0])))
                .collect(),
            biases: dims.windows(2).map(|p| Array1::zeros(p[1])).collect(),
            activation,
        })
    }

    pub fn from_parts(
        dims: Vec<usize>,
        matrices: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        validate_dims(&dims)?;
        let layers = dims.len() - 1;
        if matrices.len() != layers || biases.len() != layers {
            return Err(NaideError::Shape(format!(
                "dims {dims:?} describe {layers} layers, got {} matrices and {} bias vectors",
                matrices.len(),
                biases.len()
            )));
        }
        for (l, pair) in dims.windows(2).enumerate() {
            if matrices[l].dim() != (pair[1], pair[0]) {
                return Err(NaideError::Shape(format!(
                    "layer {l}: matrix is {:?}, expected ({}, {})",
                    matrices[l].dim(),
                    pair[1],
                    pair[0]
                )));
            }
            if biases[l].len() != pair[1] {
                return Err(NaideError::Shape(format!(
                    "layer {l}: bias has length {}, expected {}",
                    biases[l].len(),
                    pair[1]
                )));
            }
        }
        let weights = MlpWeights {
            dims,
            matrices,
            biases,
            activation,
        };
        if !weights.is_finite() {
            return Err(NaideError::Config("non-finite parameter value".into()));
        }
        Ok(weights)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.matrices
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn num_layers(&self) -> usize {
        self.matrices.len()
    }

    pub fn num_params(&self) -> usize {
        self.matrices.iter().map(|m| m.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.matrices
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Maps a flat index in `0..num_params()` to a parameter location.
    /// Layer by layer: the weight matrix in row-major order, then the bias.
    pub fn param(&self, mut flat: usize) -> ParamIndex {
        for (layer, (m, b)) in self.matrices.iter().zip(&self.biases).enumerate() {
            if flat < m.len() {
                let cols = m.ncols();
                return ParamIndex::Weight {
                    layer,
                    row: flat / cols,
                    col: flat % cols,
                };
            }
            flat -= m.len();
            if flat < b.len() {
                return ParamIndex::Bias { layer, row: flat };
            }
            flat -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn get(&self, index: ParamIndex) -> f64 {
        match index {
            ParamIndex::Weight { layer, row, col } => self.matrices[layer][[row, col]],
            ParamIndex::Bias { layer, row } => self.biases[layer][row],
        }
    }

    pub fn set(&mut self, index: ParamIndex, value: f64) {
        match index {
            ParamIndex::Weight { layer, row, col } => self.matrices[layer][[row, col]] = value,
            ParamIndex::Bias { layer, row } => self.biases[layer][row] = value,
        }
    }

    pub(crate) fn matrices_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.matrices
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    fn check_input(&self, inputs: &ArrayView2<'_, f64>) -> Result<()> {
        if inputs.ncols() != self.dims[0] {
            return Err(NaideError::Shape(format!(
                "input width {} does not match network input width {}",
                inputs.ncols(),
                self.dims[0]
            )));
        }
        if inputs.nrows() == 0 {
            return Err(NaideError::Shape("empty input batch".into()));
        }
        Ok(())
    }

    /// Outputs only (`batch x 2`, column 0 = slope, column 1 = intercept).
    pub fn predict(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        let last = self.num_layers() - 1;
        let mut h = inputs.to_owned();
        for l in 0..=last {
            let mut z = h.dot(&self.matrices[l].t());
            z += &self.biases[l];
            if l == last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            } else {
                z.mapv_inplace(relu);
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass retaining everything backward needs.
    pub fn forward(&self, inputs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&inputs)?;
        let last = self.num_layers() - 1;
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.num_layers());
        for l in 0..=last {
            let mut z = {
                let h = if l == 0 { inputs } else { post[l - 1].view() };
                h.dot(&self.matrices[l].t())
            };
            z += &self.biases[l];
            let a = if l == last {
                let act = self.activation;
                z.mapv(|v| act.apply(v))
            } else {
                z.mapv(relu)
            };
            pre.push(z);
            post.push(a);
        }
        let out = post[last].clone();
        Ok((
            out,
            ForwardCache {
                input: inputs.to_owned(),
                pre,
                post,
            },
        ))
    }

    /// Gradient of the batch-mean loss given per-sample output gradients
    /// `grad_out` (`batch x 2`, dL/da and dL/db of each sample's loss).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        let batch = cache.batch_size();
        if grad_out.dim() != (batch, 2) {
            return Err(NaideError::Shape(format!(
                "grad_out is {:?}, expected ({batch}, 2)",
                grad_out.dim()
            )));
        }
        if cache.pre.len() != self.num_layers() || cache.input.ncols() != self.dims[0] {
            return Err(NaideError::Shape(
                "forward cache does not belong to this network".into(),
            ));
        }
        let last = self.num_layers() - 1;
        let act = self.activation;
        let scale = 1.0 / batch as f64;

        let mut delta = grad_out.to_owned();
        ndarray::Zip::from(&mut delta)
            .and(&cache.pre[last])
            .for_each(|d, &z| *d *= act.derivative(z) * scale);

        let mut gm = vec![Array2::zeros((0, 0)); self.num_layers()];
        let mut gb = vec![Array1::zeros(0); self.num_layers()];
        for l in (0..=last).rev() {
            let h = if l == 0 {
                cache.input.view()
            } else {
                cache.post[l - 1].view()
            };
            gm[l] = delta.t().dot(&h);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut next = delta.dot(&self.matrices[l]);
                ndarray::Zip::from(&mut next)
                    .and(&cache.pre[l - 1])
                    .for_each(|d, &z| *d *= relu_grad(z));
                delta = next;
            }
        }
        Ok(Gradients {
            matrices: gm,
            biases: gb,
        })
    }
}
