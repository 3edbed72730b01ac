//! From-scratch multilayer perceptron for user-group classification.
//!
//! Sigmoid activation everywhere, one bias unit appended to every non-output
//! layer, weights stored row-major with the bias column last. Training is
//! full-batch gradient descent on an L2-regularized cross-entropy cost; see
//! [`train`]. [`encode`] turns charging histories into fixed-length input
//! vectors and [`search`] picks hyperparameters by random search with
//! cross-validation.

mod encode;
mod search;
mod train;

pub use encode::{encode_user_row, encode_users, UserRecordMatrix};
pub use search::{random_search, select_best, CandidateEval, SearchReport, SearchSpace};
pub use train::{cost, gradients, train, TrainConfig, TrainOutcome};

pub(crate) use search::kfold_indices;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cost became non-finite at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("user `{0}` has no sessions")]
    NoSessions(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols));
        Self {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Layer sizes plus one weight matrix per layer transition. The matrix for
/// transition `s` has shape `layer_sizes[s+1] x (layer_sizes[s] + 1)`; the
/// extra column multiplies the bias unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Mat>,
}

impl MlpModel {
    /// Random weights uniform in `±init_scale / sqrt(fan_in)`.
    pub fn random(layer_sizes: &[usize], init_scale: f64, rng: &mut impl Rng) -> Self {
        assert!(layer_sizes.len() >= 2, "need input and output layers");
        let weights = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = init_scale / (fan_in as f64).sqrt();
                let mut m = Mat::zeros(fan_out, fan_in + 1);
                for v in &mut m.data {
                    *v = rng.gen_range(-bound..bound);
                }
                m
            })
            .collect();
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn check_shapes(&self) -> Result<(), MlpError> {
        if self.weights.len() + 1 != self.layer_sizes.len() {
            return Err(MlpError::ShapeMismatch(format!(
                "{} weight matrices for {} layers",
                self.weights.len(),
                self.layer_sizes.len()
            )));
        }
        for (s, m) in self.weights.iter().enumerate() {
            if m.rows != self.layer_sizes[s + 1] || m.cols != self.layer_sizes[s] + 1 {
                return Err(MlpError::ShapeMismatch(format!(
                    "weights[{s}] is {}x{}, expected {}x{}",
                    m.rows,
                    m.cols,
                    self.layer_sizes[s + 1],
                    self.layer_sizes[s] + 1
                )));
            }
        }
        Ok(())
    }
}

/// A trained classifier bundled with everything needed to classify a new
/// user from raw sessions: the encoding parameters and the mapping from
/// output index to cluster group (identity unless the model was re-indexed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArtifact {
    pub model: MlpModel,
    pub d: usize,
    pub e_scale: f64,
    pub label_map: Vec<usize>,
}

impl ClassifierArtifact {
    pub fn new(model: MlpModel, records: &UserRecordMatrix) -> Self {
        let label_map = (0..records.n_classes()).collect();
        Self {
            model,
            d: records.days_per_user(),
            e_scale: records.e_scale(),
            label_map,
        }
    }

    /// Classify one user's raw session history.
    pub fn classify(
        &self,
        sessions: &[&crate::session::ChargingSession],
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<usize, MlpError> {
        let row = encode_user_row(sessions, self.d, self.e_scale, rng);
        let (class, _) = predict_class(&self.model, &row)?;
        Ok(self.label_map[class])
    }
}

/// Activations for every layer, input first, output last. A bias unit of 1
/// is appended to each non-output layer before the matrix product.
pub fn forward(model: &MlpModel, x: &[f64]) -> Result<Vec<Vec<f64>>, MlpError> {
    if x.len() != model.input_dim() {
        return Err(MlpError::ShapeMismatch(format!(
            "input has {} components, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let mut activations = Vec::with_capacity(model.layer_sizes.len());
    activations.push(x.to_vec());
    for w in &model.weights {
        let prev = activations.last().unwrap();
        let mut next = vec![0.0; w.rows];
        for (r, out) in next.iter_mut().enumerate() {
            let row = w.row(r);
            let mut z = row[w.cols - 1]; // bias unit
            for (c, &a) in prev.iter().enumerate() {
                z += row[c] * a;
            }
            *out = sigmoid(z);
        }
        activations.push(next);
    }
    Ok(activations)
}

/// Output-layer activations only.
pub fn output(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>, MlpError> {
    Ok(forward(model, x)?.pop().unwrap())
}

/// Argmax class over output activations, ties broken toward the lowest
/// index, plus the per-class scores.
pub fn predict_class(model: &MlpModel, x: &[f64]) -> Result<(usize, Vec<f64>), MlpError> {
    let scores = output(model, x)?;
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    Ok((best, scores))
}
