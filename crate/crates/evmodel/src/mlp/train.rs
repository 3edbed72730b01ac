//! Cost, backpropagated gradients, and full-batch gradient descent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward, Mat, MlpError, MlpModel, UserRecordMatrix};

/// Sigmoid outputs are clamped into `[CLAMP, 1 - CLAMP]` inside the log
/// terms, where the cost is otherwise undefined.
pub const OUTPUT_CLAMP: f64 = 1e-12;

/// Training stops early once the cost change per epoch falls below this.
pub const COST_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 regularization weight; bias columns are never regularized.
    pub gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Initial weights are uniform in `±init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            learning_rate: 2.0,
            epochs: 3000,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), MlpError> {
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(MlpError::InvalidConfig("gamma must be >= 0".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(MlpError::InvalidConfig("learning_rate must be >= 0".into()));
        }
        if self.epochs < 1 {
            return Err(MlpError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.init_scale.is_nan() || self.init_scale <= 0.0 {
            return Err(MlpError::InvalidConfig("init_scale must be > 0".into()));
        }
        Ok(())
    }
}

fn one_hot(label: usize, k: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    y[label] = 1.0;
    y
}

/// Regularized cross-entropy cost over the whole record matrix:
///
/// ```text
/// J = -(1/u) sum_i sum_k [ y log h + (1 - y) log(1 - h) ]
///     + (gamma / 2u) sum over non-bias weights of theta^2
/// ```
pub fn cost(model: &MlpModel, records: &UserRecordMatrix, gamma: f64) -> Result<f64, MlpError> {
    model.check_shapes()?;
    let u = records.n_rows();
    let k = records.n_classes();
    let mut data_term = 0.0;
    for i in 0..u {
        let h = forward(model, records.input_row(i))?.pop().unwrap();
        let y = one_hot(records.label(i), k);
        for (hk, yk) in h.iter().zip(&y) {
            let hk = hk.clamp(OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP);
            data_term += yk * hk.ln() + (1.0 - yk) * (1.0 - hk).ln();
        }
    }
    let mut reg = 0.0;
    for w in &model.weights {
        for r in 0..w.rows {
            for c in 0..w.cols - 1 {
                // bias column excluded
                reg += w.at(r, c) * w.at(r, c);
            }
        }
    }
    Ok(-data_term / u as f64 + gamma / (2.0 * u as f64) * reg)
}

/// Backpropagated gradient of [`cost`] with respect to every weight matrix.
pub fn gradients(
    model: &MlpModel,
    records: &UserRecordMatrix,
    gamma: f64,
) -> Result<Vec<Mat>, MlpError> {
    model.check_shapes()?;
    let u = records.n_rows();
    let k = records.n_classes();
    let mut grads: Vec<Mat> = model
        .weights
        .iter()
        .map(|w| Mat::zeros(w.rows, w.cols))
        .collect();

    for i in 0..u {
        let activations = forward(model, records.input_row(i))?;
        let y = one_hot(records.label(i), k);

        // output delta: dJ/dz = h - y for sigmoid + cross-entropy
        let mut delta: Vec<f64> = activations
            .last()
            .unwrap()
            .iter()
            .zip(&y)
            .map(|(h, y)| h - y)
            .collect();

        for s in (0..model.weights.len()).rev() {
            let a_prev = &activations[s];
            let g = &mut grads[s];
            for (r, &d) in delta.iter().enumerate() {
                for (c, &a) in a_prev.iter().enumerate() {
                    *g.at_mut(r, c) += d * a;
                }
                *g.at_mut(r, g.cols - 1) += d; // bias unit is 1
            }
            if s > 0 {
                let w = &model.weights[s];
                let mut prev_delta = vec![0.0; a_prev.len()];
                for (c, pd) in prev_delta.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (r, &d) in delta.iter().enumerate() {
                        acc += w.at(r, c) * d;
                    }
                    *pd = acc * a_prev[c] * (1.0 - a_prev[c]);
                }
                delta = prev_delta;
            }
        }
    }

    let inv_u = 1.0 / u as f64;
    for (g, w) in grads.iter_mut().zip(&model.weights) {
        for r in 0..g.rows {
            for c in 0..g.cols {
                let mut v = g.at(r, c) * inv_u;
                if c < g.cols - 1 {
                    v += gamma * inv_u * w.at(r, c);
                }
                *g.at_mut(r, c) = v;
            }
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Cost before training followed by the cost after each epoch.
    pub cost_trace: Vec<f64>,
}

/// Full-batch gradient descent for `cfg.epochs` epochs, stopping early when
/// the cost change drops below [`COST_TOLERANCE`]. Deterministic for a fixed
/// seed.
pub fn train(
    records: &UserRecordMatrix,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, MlpError> {
    cfg.validate()?;
    if layer_sizes.len() < 2 {
        return Err(MlpError::InvalidConfig(
            "need at least input and output layers".into(),
        ));
    }
    if layer_sizes[0] != records.input_dim() {
        return Err(MlpError::ShapeMismatch(format!(
            "input layer has {} units, records have {} features",
            layer_sizes[0],
            records.input_dim()
        )));
    }
    if *layer_sizes.last().unwrap() != records.n_classes() {
        return Err(MlpError::ShapeMismatch(format!(
            "output layer has {} units, records have {} classes",
            layer_sizes.last().unwrap(),
            records.n_classes()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MlpModel::random(layer_sizes, cfg.init_scale, &mut rng);
    let mut trace = vec![cost(&model, records, cfg.gamma)?];

    for epoch in 1..=cfg.epochs {
        let grads = gradients(&model, records, cfg.gamma)?;
        for (w, g) in model.weights.iter_mut().zip(&grads) {
            for (wv, gv) in w.data.iter_mut().zip(&g.data) {
                *wv -= cfg.learning_rate * gv;
            }
        }
        let c = cost(&model, records, cfg.gamma)?;
        if !c.is_finite() {
            return Err(MlpError::DivergenceDetected { epoch });
        }
        let prev = *trace.last().unwrap();
        trace.push(c);
        if (prev - c).abs() < COST_TOLERANCE {
            break;
        }
    }

    Ok(TrainOutcome {
        model,
        cost_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::encode::UserRecordMatrix;
    use rand::Rng;

    pub(crate) fn toy_records(
        inputs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> UserRecordMatrix {
        let users = (0..inputs.len()).map(|i| format!("u{i}")).collect();
        UserRecordMatrix::from_parts(users, Mat::from_rows(inputs), labels, n_classes, 1, 1.0)
    }

    fn random_records(
        rng: &mut ChaCha8Rng,
        u: usize,
        dim: usize,
        k: usize,
    ) -> UserRecordMatrix {
        let inputs = (0..u)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let labels = (0..u).map(|_| rng.gen_range(0..k)).collect();
        toy_records(inputs, labels, k)
    }

    /// Central finite differences of [`cost`]; the independent oracle the
    /// analytic gradients are checked against.
    pub(crate) fn finite_difference_gradients(
        model: &MlpModel,
        records: &UserRecordMatrix,
        gamma: f64,
        step: f64,
    ) -> Vec<Mat> {
        let mut grads = Vec::new();
        for s in 0..model.weights.len() {
            let w = &model.weights[s];
            let mut g = Mat::zeros(w.rows, w.cols);
            for idx in 0..w.data.len() {
                let mut plus = model.clone();
                plus.weights[s].data[idx] += step;
                let mut minus = model.clone();
                minus.weights[s].data[idx] -= step;
                g.data[idx] = (cost(&plus, records, gamma).unwrap()
                    - cost(&minus, records, gamma).unwrap())
                    / (2.0 * step);
            }
            grads.push(g);
        }
        grads
    }

    pub(crate) fn max_gradient_error(analytic: &[Mat], numeric: &[Mat]) -> f64 {
        let mut worst = 0.0f64;
        for (a, n) in analytic.iter().zip(numeric) {
            for (&x, &y) in a.data.iter().zip(&n.data) {
                let rel = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences_on_3_4_2() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let model = MlpModel::random(&[3, 4, 2], 0.5, &mut rng);
        let records = random_records(&mut rng, 5, 3, 2);
        let gamma = 0.3;
        let analytic = gradients(&model, &records, gamma).unwrap();
        let numeric = finite_difference_gradients(&model, &records, gamma, 1e-5);
        let err = max_gradient_error(&analytic, &numeric);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn gamma_shifts_gradients_linearly_on_non_bias_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let model = MlpModel::random(&[4, 3, 2], 0.5, &mut rng);
        let records = random_records(&mut rng, 6, 4, 2);
        let g0 = gradients(&model, &records, 0.0).unwrap();
        let g2 = gradients(&model, &records, 2.0).unwrap();
        let u = records.n_rows() as f64;
        for (s, w) in model.weights.iter().enumerate() {
            for r in 0..w.rows {
                for c in 0..w.cols {
                    let diff = g2[s].at(r, c) - g0[s].at(r, c);
                    let expected = if c < w.cols - 1 {
                        2.0 / u * w.at(r, c)
                    } else {
                        0.0
                    };
                    assert!((diff - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_weights_make_the_regularizer_vanish() {
        let model = MlpModel {
            layer_sizes: vec![2, 2],
            weights: vec![Mat::zeros(2, 3)],
        };
        let records = toy_records(vec![vec![0.1, 0.9], vec![0.8, 0.2]], vec![0, 1], 2);
        let with = cost(&model, &records, 100.0).unwrap();
        let without = cost(&model, &records, 0.0).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn near_perfect_outputs_give_near_zero_cost() {
        // one giant-bias neuron per class pushes h to the clamp edge
        let model = MlpModel {
            layer_sizes: vec![1, 2],
            weights: vec![Mat::from_rows(vec![vec![0.0, 40.0], vec![0.0, -40.0]])],
        };
        // h ~ (1, 0); label 0 matches perfectly
        let records = toy_records(vec![vec![0.0]], vec![0], 2);
        let c = cost(&model, &records, 0.0).unwrap();
        assert!(c < 1e-9, "cost {c}");
    }

    #[test]
    fn cost_matches_scalar_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let model = MlpModel::random(&[3, 4, 3], 0.5, &mut rng);
        let records = random_records(&mut rng, 4, 3, 3);
        let gamma = 0.7;

        // independent scalar route
        let u = records.n_rows() as f64;
        let mut data = 0.0;
        for i in 0..records.n_rows() {
            let h = forward(&model, records.input_row(i)).unwrap().pop().unwrap();
            for (j, &hj) in h.iter().enumerate() {
                let y = if records.label(i) == j { 1.0 } else { 0.0 };
                data += y * hj.ln() + (1.0 - y) * (1.0 - hj).ln();
            }
        }
        let mut reg = 0.0;
        for w in &model.weights {
            for r in 0..w.rows {
                for c in 0..w.cols - 1 {
                    reg += w.at(r, c).powi(2);
                }
            }
        }
        let expected = -data / u + gamma / (2.0 * u) * reg;
        let got = cost(&model, &records, gamma).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn regularization_is_monotone_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let model = MlpModel::random(&[3, 3, 2], 0.5, &mut rng);
        let records = random_records(&mut rng, 5, 3, 2);
        let c1 = cost(&model, &records, 0.1).unwrap();
        let c2 = cost(&model, &records, 0.9).unwrap();
        assert!(c2 >= c1);
    }

    #[test]
    fn gradients_unchanged_by_example_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let model = MlpModel::random(&[3, 4, 2], 0.5, &mut rng);
        let records = random_records(&mut rng, 6, 3, 2);
        let permuted = records.subset(&[5, 3, 1, 0, 4, 2]);
        let a = gradients(&model, &records, 0.2).unwrap();
        let b = gradients(&model, &permuted, 0.2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.data.iter().zip(&y.data) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights_and_cost_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let records = random_records(&mut rng, 5, 3, 2);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 50,
            seed: 9,
            ..Default::default()
        };
        let out = train(&records, &[3, 4, 2], &cfg).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let initial = MlpModel::random(&[3, 4, 2], cfg.init_scale, &mut rng2);
        assert_eq!(out.model, initial);
        assert!(out.cost_trace.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_separates_a_linearly_separable_toy_set() {
        // 20 points, class by sign of x0 - x1
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(106);
        for _ in 0..20 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let b: f64 = rng.gen_range(0.0..1.0);
            if (a - b).abs() < 0.1 {
                continue;
            }
            labels.push(usize::from(a > b));
            inputs.push(vec![a, b]);
        }
        let records = toy_records(inputs, labels, 2);
        let cfg = TrainConfig {
            learning_rate: 2.0,
            epochs: 5000,
            gamma: 0.0,
            seed: 3,
            ..Default::default()
        };
        let out = train(&records, &[2, 4, 2], &cfg).unwrap();
        let correct = (0..records.n_rows())
            .filter(|&i| {
                let (class, _) =
                    crate::mlp::predict_class(&out.model, records.input_row(i)).unwrap();
                class == records.label(i)
            })
            .count();
        assert_eq!(correct, records.n_rows(), "training accuracy below 100%");
    }

    #[test]
    fn small_learning_rate_descends_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let records = random_records(&mut rng, 8, 3, 2);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 200,
            gamma: 0.01,
            seed: 4,
            ..Default::default()
        };
        let out = train(&records, &[3, 5, 2], &cfg).unwrap();
        for w in out.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "cost rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(108);
        let records = random_records(&mut rng, 6, 3, 2);
        let cfg = TrainConfig {
            epochs: 100,
            seed: 77,
            ..Default::default()
        };
        let a = train(&records, &[3, 4, 2], &cfg).unwrap();
        let b = train(&records, &[3, 4, 2], &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.cost_trace, b.cost_trace);
    }
}
