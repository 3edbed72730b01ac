//! Hyperparameter selection by random search with k-fold cross-validation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{predict_class, train, MlpError, TrainConfig, UserRecordMatrix};

/// Sampling ranges for one candidate configuration. Neuron counts and
/// learning rates are drawn log-uniformly, layer counts and gamma uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden_layers_min: usize,
    pub hidden_layers_max: usize,
    pub neurons_min: usize,
    pub neurons_max: usize,
    pub learning_rate_min: f64,
    pub learning_rate_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Epochs per candidate training run.
    pub epochs: usize,
    pub init_scale: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            hidden_layers_min: 1,
            hidden_layers_max: 4,
            neurons_min: 16,
            neurons_max: 512,
            learning_rate_min: 1e-4,
            learning_rate_max: 1e-1,
            gamma_min: 0.0,
            gamma_max: 1.0,
            epochs: 500,
            init_scale: 0.5,
        }
    }
}

/// One evaluated candidate; `error` is set when a fold failed to train.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateEval {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchReport {
    pub candidates: Vec<CandidateEval>,
    /// Index of the best successful candidate, if any succeeded.
    pub best: Option<usize>,
}

impl SearchReport {
    pub fn best_candidate(&self) -> Option<&CandidateEval> {
        self.best.map(|i| &self.candidates[i])
    }
}

/// Highest mean validation accuracy among candidates without errors; ties
/// go to the earliest candidate.
pub fn select_best(candidates: &[CandidateEval]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.error.is_none())
        .max_by(|(ia, a), (ib, b)| {
            a.mean_accuracy
                .partial_cmp(&b.mean_accuracy)
                .unwrap()
                .then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
}

/// Shuffled near-equal split of `0..n` into `k` disjoint index sets.
pub(crate) fn kfold_indices(n: usize, k: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    folds
}

fn accuracy_on(model: &super::MlpModel, records: &UserRecordMatrix) -> Result<f64, MlpError> {
    let mut hits = 0;
    for i in 0..records.n_rows() {
        let (class, _) = predict_class(model, records.input_row(i))?;
        if class == records.label(i) {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.n_rows() as f64)
}

/// Sample `budget` configurations from `space`, score each by k-fold
/// cross-validated mean validation accuracy, and return all evaluations with
/// the best one marked. Training failures are recorded per candidate, not
/// fatal. Deterministic for a fixed seed.
pub fn random_search(
    records: &UserRecordMatrix,
    k_folds: usize,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<SearchReport, MlpError> {
    if budget < 1 {
        return Err(MlpError::InvalidConfig("budget must be >= 1".into()));
    }
    if k_folds < 2 || records.n_rows() < k_folds {
        return Err(MlpError::InvalidConfig(format!(
            "need 2 <= k_folds <= {} rows, got {k_folds}",
            records.n_rows()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let folds = kfold_indices(records.n_rows(), k_folds, &mut rng);
    let all_rows: Vec<usize> = (0..records.n_rows()).collect();

    let mut candidates = Vec::with_capacity(budget);
    for _ in 0..budget {
        let n_hidden = rng.gen_range(space.hidden_layers_min..=space.hidden_layers_max);
        let hidden_layers: Vec<usize> = (0..n_hidden)
            .map(|_| {
                let ln = rng.gen_range((space.neurons_min as f64).ln()..=(space.neurons_max as f64).ln());
                (ln.exp().round() as usize).clamp(space.neurons_min, space.neurons_max)
            })
            .collect();
        let learning_rate = rng
            .gen_range(space.learning_rate_min.ln()..=space.learning_rate_max.ln())
            .exp();
        let gamma = rng.gen_range(space.gamma_min..=space.gamma_max);
        let train_seed: u64 = rng.gen();

        let mut layer_sizes = vec![records.input_dim()];
        layer_sizes.extend(&hidden_layers);
        layer_sizes.push(records.n_classes());

        let cfg = TrainConfig {
            gamma,
            learning_rate,
            epochs: space.epochs,
            seed: train_seed,
            init_scale: space.init_scale,
        };

        let mut fold_accuracies = Vec::with_capacity(k_folds);
        let mut error = None;
        for fold in &folds {
            let train_rows: Vec<usize> = all_rows
                .iter()
                .copied()
                .filter(|i| !fold.contains(i))
                .collect();
            let train_set = records.subset(&train_rows);
            let val_set = records.subset(fold);
            match train(&train_set, &layer_sizes, &cfg)
                .and_then(|out| accuracy_on(&out.model, &val_set))
            {
                Ok(acc) => fold_accuracies.push(acc),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let mean_accuracy = if error.is_none() && !fold_accuracies.is_empty() {
            fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64
        } else {
            f64::NAN
        };
        candidates.push(CandidateEval {
            hidden_layers,
            learning_rate,
            gamma,
            fold_accuracies,
            mean_accuracy,
            error,
        });
    }

    let best = select_best(&candidates);
    Ok(SearchReport { candidates, best })
}
