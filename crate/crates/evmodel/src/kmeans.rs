//! Lloyd-style K-means over the normalized 5-dimensional feature space.
//!
//! Squared Euclidean cost, random initialization from the data points,
//! multiple restarts with best-cost selection, and deterministic behavior
//! for a fixed seed. Convergence is on the absolute change of total cost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::features::{FeatureMatrix, Normalization, UserFeatureTuple, FEATURE_DIM};

#[derive(Debug, Error, PartialEq)]
pub enum KmeansError {
    #[error("{have} user(s) available, need at least k = {need}")]
    TooFewUsers { have: usize, need: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    /// Convergence threshold on the absolute change of total cost.
    pub epsilon: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            k: 4,
            epsilon: 1e-6,
            max_iter: 300,
            seed: 0,
            restarts: 10,
        }
    }
}

impl KmeansConfig {
    fn validate(&self) -> Result<(), KmeansError> {
        if self.k < 1 {
            return Err(KmeansError::InvalidConfig("k must be >= 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(KmeansError::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.max_iter < 1 {
            return Err(KmeansError::InvalidConfig("max_iter must be >= 1".into()));
        }
        if self.restarts < 1 {
            return Err(KmeansError::InvalidConfig("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fitted clustering: centroids in normalized feature space plus the
/// per-user group assignments and the normalization that maps into that
/// space. `centroids_unnormalized` are the same centroids mapped back to
/// raw feature units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<[f64; FEATURE_DIM]>,
    pub centroids_unnormalized: Vec<[f64; FEATURE_DIM]>,
    pub assignments: BTreeMap<String, usize>,
    pub cost: f64,
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
    pub normalization: Normalization,
    pub config: KmeansConfig,
}

impl ClusterModel {
    /// Group index for an arbitrary feature tuple (normalized with this
    /// model's parameters, then nearest centroid). This is how users outside
    /// the training set get cluster-derived labels.
    pub fn assign_tuple(&self, tuple: &UserFeatureTuple) -> usize {
        assign(&self.normalization.apply(&tuple.as_array()), &self.centroids)
    }

    pub fn label_of(&self, user: &str) -> Option<usize> {
        self.assignments.get(user).copied()
    }
}

fn sq_dist(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    let mut s = 0.0;
    for d in 0..FEATURE_DIM {
        let diff = a[d] - b[d];
        s += diff * diff;
    }
    s
}

/// Index of the nearest centroid by squared Euclidean distance, ties broken
/// by lowest index.
pub fn assign(x: &[f64; FEATURE_DIM], centroids: &[[f64; FEATURE_DIM]]) -> usize {
    assert!(!centroids.is_empty(), "assign: need at least one centroid");
    let mut best = 0;
    let mut best_d = sq_dist(x, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Mean of each group's members. An empty group is re-seeded to the point
/// with maximal distance to its own group's (new) centroid; each re-seed
/// claims a distinct point.
pub fn update_centroids(
    points: &[[f64; FEATURE_DIM]],
    assignments: &[usize],
    k: usize,
) -> Vec<[f64; FEATURE_DIM]> {
    assert_eq!(points.len(), assignments.len());
    let mut sums = vec![[0.0; FEATURE_DIM]; k];
    let mut counts = vec![0usize; k];
    for (x, &j) in points.iter().zip(assignments) {
        counts[j] += 1;
        for d in 0..FEATURE_DIM {
            sums[j][d] += x[d];
        }
    }
    let mut centroids = vec![[0.0; FEATURE_DIM]; k];
    for j in 0..k {
        if counts[j] > 0 {
            for d in 0..FEATURE_DIM {
                centroids[j][d] = sums[j][d] / counts[j] as f64;
            }
        }
    }
    let mut claimed = vec![false; points.len()];
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| !claimed[*i])
            .max_by(|(i, a), (l, b)| {
                let da = sq_dist(a, &centroids[assignments[*i]]);
                let db = sq_dist(b, &centroids[assignments[*l]]);
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i);
        if let Some(i) = far {
            claimed[i] = true;
            centroids[j] = points[i];
        }
    }
    centroids
}

/// Total clustering cost: sum of squared distances of every point to its
/// assigned centroid.
pub fn total_cost(
    points: &[[f64; FEATURE_DIM]],
    centroids: &[[f64; FEATURE_DIM]],
    assignments: &[usize],
) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(x, &j)| sq_dist(x, &centroids[j]))
        .sum()
}

struct LloydRun {
    centroids: Vec<[f64; FEATURE_DIM]>,
    assignments: Vec<usize>,
    cost: f64,
    iterations: usize,
    trace: Vec<f64>,
}

fn lloyd(points: &[[f64; FEATURE_DIM]], cfg: &KmeansConfig, rng: &mut ChaCha8Rng) -> LloydRun {
    let k = cfg.k;
    let init = rand::seq::index::sample(rng, points.len(), k);
    let mut centroids: Vec<[f64; FEATURE_DIM]> = init.iter().map(|i| points[i]).collect();

    let mut assignments: Vec<usize> = points.iter().map(|x| assign(x, &centroids)).collect();
    let mut cost = total_cost(points, &centroids, &assignments);
    let mut trace = vec![cost];
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        centroids = update_centroids(points, &assignments, k);
        let next: Vec<usize> = points.iter().map(|x| assign(x, &centroids)).collect();
        let next_cost = total_cost(points, &centroids, &next);
        // Lloyd property: neither step may increase the cost
        assert!(
            next_cost <= cost + 1e-9 * cost.max(1.0),
            "cost increased: {cost} -> {next_cost}"
        );
        trace.push(next_cost);
        let stable = next == assignments;
        let delta = cost - next_cost;
        assignments = next;
        cost = next_cost;
        if stable && delta.abs() < cfg.epsilon {
            break;
        }
    }

    LloydRun {
        centroids,
        assignments,
        cost,
        iterations,
        trace,
    }
}

/// Fit K-means on the matrix's normalized rows.
///
/// Runs `cfg.restarts` independent initializations (centroids drawn without
/// replacement from the data) and keeps the lowest-cost run. Deterministic
/// for a fixed seed.
pub fn fit(matrix: &FeatureMatrix, cfg: &KmeansConfig) -> Result<ClusterModel, KmeansError> {
    cfg.validate()?;
    let points = matrix.normalized_rows();
    if points.len() < cfg.k {
        return Err(KmeansError::TooFewUsers {
            have: points.len(),
            need: cfg.k,
        });
    }

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let restart_seeds: Vec<u64> = (0..cfg.restarts).map(|_| master.gen()).collect();

    let best = restart_seeds
        .into_iter()
        .map(|s| lloyd(&points, cfg, &mut ChaCha8Rng::seed_from_u64(s)))
        .min_by(|a, b| a.cost.partial_cmp(&b.cost).unwrap())
        .expect("restarts >= 1");

    let normalization = *matrix.normalization();
    let centroids_unnormalized = best
        .centroids
        .iter()
        .map(|c| normalization.invert(c))
        .collect();
    let assignments = matrix
        .user_ids()
        .zip(&best.assignments)
        .map(|(u, &j)| (u.to_string(), j))
        .collect();

    Ok(ClusterModel {
        k: cfg.k,
        centroids: best.centroids,
        centroids_unnormalized,
        assignments,
        cost: best.cost,
        iterations: best.iterations,
        cost_trace: best.trace,
        normalization,
        config: cfg.clone(),
    })
}

/// Best cost per k, for elbow inspection. The per-k fits share the seed and
/// restart budget of `cfg`.
pub fn choose_k(
    matrix: &FeatureMatrix,
    k_range: impl IntoIterator<Item = usize>,
    cfg: &KmeansConfig,
) -> Result<Vec<(usize, f64)>, KmeansError> {
    let mut curve = Vec::new();
    for k in k_range {
        let model = fit(matrix, &KmeansConfig { k, ..cfg.clone() })?;
        curve.push((k, model.cost));
    }
    Ok(curve)
}
