use ndarray::{Array1, Array2, Zip};

use crate::error::{NaideError, Result};
use crate::nn::{Gradients, MlpWeights};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Bias-corrected Adam moments for one [`MlpWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m_matrices: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_matrices: Vec<Array2<f64>>,
    v_biases: Vec<Array1<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(weights: &MlpWeights) -> Self {
        Self::with_hyperparameters(weights, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
    }

    pub fn with_hyperparameters(
        weights: &MlpWeights,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        let zeros = Gradients::zeros_like(weights);
        AdamState {
            m_matrices: zeros.matrices.clone(),
            m_biases: zeros.biases.clone(),
            v_matrices: zeros.matrices,
            v_biases: zeros.biases,
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// Moves the timestep without touching the moments.
    pub fn set_timestep(&mut self, t: u64) {
        self.t = t;
    }

    pub fn second_moments_nonnegative(&self) -> bool {
        self.v_matrices.iter().all(|m| m.iter().all(|&v| v >= 0.0))
            && self.v_biases.iter().all(|b| b.iter().all(|&v| v >= 0.0))
    }

    /// One Adam update of `weights` in place.
    ///
    /// Rejects non-finite gradients before any state is modified.
    pub fn step(&mut self, weights: &mut MlpWeights, grads: &Gradients, lr: f64) -> Result<()> {
        if lr.is_nan() || lr <= 0.0 {
            return Err(NaideError::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if grads.matrices.len() != self.m_matrices.len()
            || grads
                .matrices
                .iter()
                .zip(&self.m_matrices)
                .any(|(g, m)| g.dim() != m.dim())
            || grads
                .biases
                .iter()
                .zip(&self.m_biases)
                .any(|(g, m)| g.dim() != m.dim())
        {
            return Err(NaideError::Shape(
                "gradient shapes do not match optimizer state".into(),
            ));
        }
        if !grads.is_finite() {
            return Err(NaideError::NonFinite(
                "gradient contains NaN or infinity".into(),
            ));
        }

        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);

        for (l, w) in weights.matrices_mut().iter_mut().enumerate() {
            Zip::from(w)
                .and(&mut self.m_matrices[l])
                .and(&mut self.v_matrices[l])
                .and(&grads.matrices[l])
                .for_each(|w, m, v, &g| update(w, m, v, g, b1, b2, c1, c2, eps, lr));
        }
        for (l, b) in weights.biases_mut().iter_mut().enumerate() {
            Zip::from(b)
                .and(&mut self.m_biases[l])
                .and(&mut self.v_biases[l])
                .and(&grads.biases[l])
                .for_each(|w, m, v, &g| update(w, m, v, g, b1, b2, c1, c2, eps, lr));
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn update(
    w: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
    eps: f64,
    lr: f64,
) {
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *w -= lr * m_hat / (v_hat.sqrt() + eps);
}
