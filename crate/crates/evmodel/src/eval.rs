//! Evaluation protocol: k-fold cross-validation, classification accuracy,
//! MAPE, clustering agreement, and the end-to-end experiment runner.
//!
//! Each fold clusters the training users, trains the classifier on
//! cluster-derived labels, scores it on the held-out users, and compares the
//! load forecast built from cluster labels against the one built from
//! classifier predictions and against a simulated realized load.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{build_matrix, user_tuple, FeatureError};
use crate::forecast::{
    aggregate_forecast, cohort_stats_from_labels, greedy_profile, simulate_draw, CohortStats,
    ForecastError, RateLimits, SampledSession,
};
use crate::kmeans::{self, KmeansConfig, KmeansError};
use crate::mlp::{
    encode_users, predict_class, random_search, train, MlpError, SearchSpace, TrainConfig,
};
use crate::session::SessionDataset;

/// Slots where the reference load is below this are excluded from MAPE.
pub const MAPE_FLOOR_KW: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{have} user(s) for {want} folds")]
    TooFewUsers { have: usize, want: usize },
    #[error("length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("every slot fell below the MAPE exclusion floor")]
    AllSlotsExcluded,
    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Kmeans(#[from] KmeansError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

/// K disjoint near-equal user-id sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub folds: Vec<Vec<String>>,
}

/// Shuffle and deal the users into `k` folds whose sizes differ by at most
/// one. Deterministic for a fixed seed.
pub fn kfold_split(user_ids: &[String], k: usize, seed: u64) -> Result<FoldSplit, EvalError> {
    if k < 1 || user_ids.len() < k {
        return Err(EvalError::TooFewUsers {
            have: user_ids.len(),
            want: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index_folds = crate::mlp::kfold_indices(user_ids.len(), k, &mut rng);
    let folds = index_folds
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| user_ids[i].clone()).collect())
        .collect();
    Ok(FoldSplit { k, folds })
}

/// Fraction of positions where the labels agree exactly.
pub fn accuracy<T: PartialEq>(predicted: &[T], actual: &[T]) -> Result<f64, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch {
            a: predicted.len(),
            b: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::LengthMismatch { a: 0, b: 0 });
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p == a)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Mean absolute percentage error over slots whose actual value clears
/// [`MAPE_FLOOR_KW`].
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            a: actual.len(),
            b: predicted.len(),
        });
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, p) in actual.iter().zip(predicted) {
        if a.abs() >= MAPE_FLOOR_KW {
            sum += (a - p).abs() / a.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::AllSlotsExcluded);
    }
    Ok(sum / n as f64)
}

fn binomial2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items: 1 for
/// identical partitions up to relabeling, around 0 for chance-level
/// agreement.
pub fn adjusted_rand_index<T, U>(labels_a: &[T], labels_b: &[U]) -> Result<f64, EvalError>
where
    T: Ord + Clone,
    U: Ord + Clone,
{
    if labels_a.len() != labels_b.len() {
        return Err(EvalError::LengthMismatch {
            a: labels_a.len(),
            b: labels_b.len(),
        });
    }
    if labels_a.len() < 2 {
        return Err(EvalError::LengthMismatch {
            a: labels_a.len(),
            b: labels_b.len(),
        });
    }

    let mut cells: BTreeMap<(T, U), usize> = BTreeMap::new();
    let mut rows: BTreeMap<T, usize> = BTreeMap::new();
    let mut cols: BTreeMap<U, usize> = BTreeMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        *cells.entry((a.clone(), b.clone())).or_default() += 1;
        *rows.entry(a.clone()).or_default() += 1;
        *cols.entry(b.clone()).or_default() += 1;
    }

    let index: f64 = cells.values().map(|&n| binomial2(n)).sum();
    let sum_rows: f64 = rows.values().map(|&n| binomial2(n)).sum();
    let sum_cols: f64 = cols.values().map(|&n| binomial2(n)).sum();
    let expected = sum_rows * sum_cols / binomial2(labels_a.len());
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-12 {
        // both partitions trivial (all singletons or one block): identical
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

/// Forecast geometry and sampling effort used inside the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub t_slots: usize,
    pub dt_hours: f64,
    pub draws: usize,
    pub limits: RateLimits,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            t_slots: 96,
            dt_hours: 0.25,
            draws: 200,
            limits: RateLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kfolds: usize,
    pub kmeans: KmeansConfig,
    /// Sessions sampled per user for the classifier encoding.
    pub d: usize,
    pub hidden_layers: Vec<usize>,
    pub train: TrainConfig,
    /// When set, pick hyperparameters by random search (this budget, same
    /// fold count) on a full-dataset clustering before the fold runs.
    pub search_budget: Option<usize>,
    pub search_space: SearchSpace,
    pub forecast: ForecastConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kfolds: 10,
            kmeans: KmeansConfig::default(),
            d: 20,
            hidden_layers: vec![32],
            train: TrainConfig::default(),
            search_budget: None,
            search_space: SearchSpace::default(),
            forecast: ForecastConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train_users: usize,
    pub n_test_users: usize,
    /// Classifier accuracy against cluster labels on the training users.
    pub train_accuracy: f64,
    /// Classifier accuracy against cluster labels on the held-out users.
    pub test_accuracy: f64,
    /// Held-out accuracy against synthetic ground truth, when available.
    pub gt_accuracy: Option<f64>,
    /// MAPE of the classifier-model expected load against the simulated
    /// realized load of the held-out users (greedy charging on both sides).
    pub mape: f64,
    /// MAPE between the cluster-label forecast and the classifier-label
    /// forecast (model agreement).
    pub agreement_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenHyperparameters {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kfolds: usize,
    pub k: usize,
    pub n_users: usize,
    pub n_records: usize,
    pub seed: u64,
    pub hyperparameters: ChosenHyperparameters,
    pub folds: Vec<FoldReport>,
    pub mean_train_accuracy: f64,
    pub mean_test_accuracy: f64,
    pub mean_gt_accuracy: Option<f64>,
    pub mean_mape: f64,
    pub mean_agreement_mape: f64,
}

impl ExperimentReport {
    /// `fold,train_acc,test_acc,mape` CSV, one row per fold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,train_acc,test_acc,mape\n");
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{}\n",
                f.fold, f.train_accuracy, f.test_accuracy, f.mape
            ));
        }
        out
    }
}

// splitmix64; decorrelates the per-stage seeds derived from one base seed
fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SALT_SPLIT: u64 = 1;
const SALT_KMEANS: u64 = 2;
const SALT_ENCODE: u64 = 3;
const SALT_TRAIN: u64 = 4;
const SALT_FORECAST: u64 = 5;
const SALT_REALIZED: u64 = 7;
const SALT_SEARCH: u64 = 8;
const SALT_EXPECTED: u64 = 9;

/// Mean over Monte-Carlo draws of the aggregate load the sampled population
/// would realize under greedy full-rate charging. Unlike the rate envelope
/// (a bound), this is a load series directly comparable to a realized one.
pub fn expected_greedy_load(
    stats: &CohortStats,
    n_evs: usize,
    limits: &[RateLimits],
    t_slots: usize,
    dt_hours: f64,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut total = vec![0.0; t_slots];
    for _ in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(rand::Rng::gen(&mut master));
        let draw = simulate_draw(stats, n_evs, limits, t_slots, dt_hours, &mut rng);
        for (gi, session) in &draw.sessions {
            let group_limits = limits[stats
                .groups
                .iter()
                .position(|g| g.group == *gi)
                .unwrap_or(0)];
            let profile = greedy_profile(session, group_limits.r_max_kw, t_slots, dt_hours);
            for t in 0..t_slots {
                total[t] += profile[t];
            }
        }
    }
    total.iter().map(|v| v / draws as f64).collect()
}

fn in_fold(fold: usize) -> impl Fn(EvalError) -> EvalError {
    move |e| EvalError::InFold {
        fold,
        source: Box::new(e),
    }
}

/// Run the full k-fold protocol and assemble the per-fold report.
///
/// Ground-truth labels, when provided, add a held-out accuracy column scored
/// through a majority mapping from clusters to cohorts fitted on the
/// training users.
pub fn run_experiment(
    ds: &SessionDataset,
    ground_truth: Option<&BTreeMap<String, String>>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, EvalError> {
    let full_matrix = build_matrix(ds)?;
    let users: Vec<String> = full_matrix.user_ids().map(str::to_string).collect();
    let split = kfold_split(&users, cfg.kfolds, mix_seed(cfg.seed, SALT_SPLIT))?;
    let k = cfg.kmeans.k;

    // optional hyperparameter search on a full-dataset clustering
    let (hidden_layers, mut train_cfg) = if let Some(budget) = cfg.search_budget {
        let model = kmeans::fit(&full_matrix, &cfg.kmeans)?;
        let records = encode_users(
            ds,
            &model.assignments,
            k,
            cfg.d,
            mix_seed(cfg.seed, SALT_SEARCH),
        )?;
        let report = random_search(
            &records,
            cfg.kfolds.min(5),
            &cfg.search_space,
            budget,
            mix_seed(cfg.seed, SALT_SEARCH),
        )?;
        match report.best_candidate() {
            Some(best) => (
                best.hidden_layers.clone(),
                TrainConfig {
                    learning_rate: best.learning_rate,
                    gamma: best.gamma,
                    ..cfg.train.clone()
                },
            ),
            None => (cfg.hidden_layers.clone(), cfg.train.clone()),
        }
    } else {
        (cfg.hidden_layers.clone(), cfg.train.clone())
    };

    let mut folds = Vec::with_capacity(split.k);
    for (fold, test_users) in split.folds.iter().enumerate() {
        let wrap = in_fold(fold);
        let fold_seed = mix_seed(cfg.seed, 1000 + fold as u64);

        let train_users: Vec<String> = users
            .iter()
            .filter(|u| !test_users.contains(u))
            .cloned()
            .collect();
        let train_ds = ds.subset(train_users.iter().map(String::as_str));
        let train_matrix = build_matrix(&train_ds).map_err(|e| wrap(e.into()))?;
        let cluster = kmeans::fit(
            &train_matrix,
            &KmeansConfig {
                seed: mix_seed(fold_seed, SALT_KMEANS),
                ..cfg.kmeans.clone()
            },
        )
        .map_err(|e| wrap(e.into()))?;

        // cluster-derived labels: stored assignments for training users,
        // nearest centroid for held-out users
        let mut labels: BTreeMap<String, usize> = cluster.assignments.clone();
        for user in test_users {
            let tuple = user_tuple(user, &ds.sessions_by_user(user))
                .map_err(|e| wrap(e.into()))?;
            labels.insert(user.clone(), cluster.assign_tuple(&tuple));
        }

        let records = encode_users(ds, &labels, k, cfg.d, mix_seed(fold_seed, SALT_ENCODE))
            .map_err(|e| wrap(e.into()))?;
        let row_of: BTreeMap<&str, usize> = records
            .users()
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let train_rows: Vec<usize> = train_users.iter().map(|u| row_of[u.as_str()]).collect();
        let test_rows: Vec<usize> = test_users.iter().map(|u| row_of[u.as_str()]).collect();
        let train_records = records.subset(&train_rows);
        let test_records = records.subset(&test_rows);

        let mut layer_sizes = vec![records.input_dim()];
        layer_sizes.extend(&hidden_layers);
        layer_sizes.push(k);
        train_cfg.seed = mix_seed(fold_seed, SALT_TRAIN);
        let trained = train(&train_records, &layer_sizes, &train_cfg)
            .map_err(|e| wrap(e.into()))?;

        let predict_all = |set: &crate::mlp::UserRecordMatrix| -> Result<Vec<usize>, EvalError> {
            (0..set.n_rows())
                .map(|i| {
                    predict_class(&trained.model, set.input_row(i))
                        .map(|(c, _)| c)
                        .map_err(EvalError::from)
                })
                .collect()
        };
        let train_pred = predict_all(&train_records).map_err(&wrap)?;
        let test_pred = predict_all(&test_records).map_err(&wrap)?;
        let train_accuracy =
            accuracy(&train_pred, train_records.labels()).map_err(&wrap)?;
        let test_accuracy = accuracy(&test_pred, test_records.labels()).map_err(&wrap)?;

        // forecasts for the held-out population under both label sources
        let test_ds = ds.subset(test_users.iter().map(String::as_str));
        let labels_cluster: BTreeMap<String, usize> = test_users
            .iter()
            .map(|u| (u.clone(), labels[u]))
            .collect();
        let labels_mlp: BTreeMap<String, usize> = test_users
            .iter()
            .zip(&test_pred)
            .map(|(u, &c)| (u.clone(), c))
            .collect();
        // common random numbers for the pair, so the difference between the
        // two curves reflects the labels, not Monte-Carlo noise
        let fc = cfg.forecast.clone();
        let pair_seed = mix_seed(fold_seed, SALT_FORECAST);
        let forecast_for = |lab: &BTreeMap<String, usize>| -> Result<_, EvalError> {
            let stats = cohort_stats_from_labels(&test_ds, lab, k)?;
            let limits = vec![fc.limits; stats.groups.len()];
            let forecast = aggregate_forecast(
                &stats,
                test_users.len(),
                &limits,
                fc.t_slots,
                fc.dt_hours,
                fc.draws,
                pair_seed,
            )?;
            Ok((stats, forecast))
        };
        let (_, forecast_cluster) = forecast_for(&labels_cluster).map_err(&wrap)?;
        let (stats_mlp, forecast_mlp) = forecast_for(&labels_mlp).map_err(&wrap)?;
        let agreement_mape =
            mape(&forecast_cluster.upper_kw, &forecast_mlp.upper_kw).map_err(&wrap)?;

        // simulated realized load: one sampled day per held-out user,
        // charged greedily at full rate
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(fold_seed, SALT_REALIZED));
        let mut realized = vec![0.0; fc.t_slots];
        for user in test_users {
            let sessions = ds.sessions_by_user(user);
            let s = sessions[rand::Rng::gen_range(&mut rng, 0..sessions.len())];
            let sampled = SampledSession {
                arrival_h: s.arrival_hours(),
                departure_h: s.arrival_hours() + s.stay_hours(),
                energy_kwh: s.energy_kwh,
            };
            let profile = greedy_profile(&sampled, fc.limits.r_max_kw, fc.t_slots, fc.dt_hours);
            for t in 0..fc.t_slots {
                realized[t] += profile[t];
            }
        }
        // score it against the load the forecast model expects under the
        // same greedy charging, not against the rate bound
        let expected = expected_greedy_load(
            &stats_mlp,
            test_users.len(),
            &vec![fc.limits; stats_mlp.groups.len()],
            fc.t_slots,
            fc.dt_hours,
            fc.draws,
            mix_seed(fold_seed, SALT_EXPECTED),
        );
        let fold_mape = mape(&realized, &expected).map_err(&wrap)?;

        // ground-truth accuracy through a majority cluster -> cohort mapping
        let gt_accuracy = match ground_truth {
            Some(gt) => {
                let mut votes: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
                for u in &train_users {
                    let cohort = gt[u].as_str();
                    *votes.entry(labels[u]).or_default().entry(cohort).or_default() += 1;
                }
                let mapping: BTreeMap<usize, &str> = votes
                    .into_iter()
                    .map(|(c, tally)| {
                        let best = tally.into_iter().max_by_key(|&(_, n)| n).unwrap().0;
                        (c, best)
                    })
                    .collect();
                let mapped: Vec<&str> = test_pred
                    .iter()
                    .map(|c| mapping.get(c).copied().unwrap_or(""))
                    .collect();
                let truth: Vec<&str> = test_users.iter().map(|u| gt[u].as_str()).collect();
                Some(accuracy(&mapped, &truth).map_err(&wrap)?)
            }
            None => None,
        };

        folds.push(FoldReport {
            fold,
            n_train_users: train_users.len(),
            n_test_users: test_users.len(),
            train_accuracy,
            test_accuracy,
            gt_accuracy,
            mape: fold_mape,
            agreement_mape,
        });
    }

    let mean_of = |f: fn(&FoldReport) -> f64| -> f64 {
        folds.iter().map(f).sum::<f64>() / folds.len() as f64
    };
    let mean_gt_accuracy = if folds.iter().all(|f| f.gt_accuracy.is_some()) {
        Some(folds.iter().map(|f| f.gt_accuracy.unwrap()).sum::<f64>() / folds.len() as f64)
    } else {
        None
    };

    Ok(ExperimentReport {
        kfolds: cfg.kfolds,
        k,
        n_users: users.len(),
        n_records: ds.len(),
        seed: cfg.seed,
        hyperparameters: ChosenHyperparameters {
            hidden_layers,
            learning_rate: train_cfg.learning_rate,
            gamma: train_cfg.gamma,
            epochs: train_cfg.epochs,
            d: cfg.d,
        },
        mean_train_accuracy: mean_of(|f| f.train_accuracy),
        mean_test_accuracy: mean_of(|f| f.test_accuracy),
        mean_gt_accuracy,
        mean_mape: mean_of(|f| f.mape),
        mean_agreement_mape: mean_of(|f| f.agreement_mape),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts_exact_matches() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[3, 1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 9]).unwrap(), 0.75);
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mape_matches_direct_evaluation() {
        assert_eq!(mape(&[5.0, 7.0], &[5.0, 7.0]).unwrap(), 0.0);
        // |100-110|/100 = 0.1, |200-180|/200 = 0.1 -> mean 0.1
        let m = mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap();
        assert!((m - 0.1).abs() < 1e-12);
        // zero slot excluded entirely
        assert_eq!(mape(&[0.0, 100.0], &[5.0, 100.0]).unwrap(), 0.0);
        assert!(matches!(
            mape(&[0.0, 0.0], &[1.0, 1.0]),
            Err(EvalError::AllSlotsExcluded)
        ));
    }

    #[test]
    fn ari_handles_identity_and_relabeling() {
        assert_eq!(
            adjusted_rand_index(&[1, 1, 2, 2, 3], &[1, 1, 2, 2, 3]).unwrap(),
            1.0
        );
        // permuted label names, same partition
        assert_eq!(
            adjusted_rand_index(&[1, 1, 2, 2, 3], &[7, 7, 9, 9, 8]).unwrap(),
            1.0
        );
    }

    #[test]
    fn ari_matches_contingency_oracle() {
        // brute-force contingency evaluation gives exactly -0.5 here
        let a = [1, 1, 2, 2];
        let b = [1, 2, 1, 2];
        let ari = adjusted_rand_index(&a, &b).unwrap();
        assert!((ari + 0.5).abs() < 1e-12, "ari = {ari}");

        // independent oracle: recompute from pair counts
        let n = a.len();
        let mut same_both = 0.0;
        let mut same_a = 0.0;
        let mut same_b = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                if sa {
                    same_a += 1.0;
                }
                if sb {
                    same_b += 1.0;
                }
                if sa && sb {
                    same_both += 1.0;
                }
            }
        }
        let pairs = (n * (n - 1)) as f64 / 2.0;
        let expected = same_a * same_b / pairs;
        let max_index = 0.5 * (same_a + same_b);
        let oracle = (same_both - expected) / (max_index - expected);
        assert!((ari - oracle).abs() < 1e-12);
    }

    #[test]
    fn scores_are_permutation_covariant() {
        let a = [0, 1, 2, 0, 1, 2, 0, 1];
        let b = [0, 1, 1, 0, 2, 2, 0, 1];
        let perm = [3usize, 6, 0, 7, 2, 5, 1, 4];
        let pa: Vec<i32> = perm.iter().map(|&i| a[i]).collect();
        let pb: Vec<i32> = perm.iter().map(|&i| b[i]).collect();
        assert_eq!(
            accuracy(&a, &b).unwrap(),
            accuracy(&pa, &pb).unwrap()
        );
        assert!(
            (adjusted_rand_index(&a, &b).unwrap() - adjusted_rand_index(&pa, &pb).unwrap()).abs()
                < 1e-12
        );
    }

    #[test]
    fn kfold_partitions_evenly() {
        let users: Vec<String> = (0..130).map(|i| format!("u{i:03}")).collect();
        let split = kfold_split(&users, 10, 3).unwrap();
        assert_eq!(split.folds.len(), 10);
        assert!(split.folds.iter().all(|f| f.len() == 13));
        let mut all: Vec<&String> = split.folds.iter().flatten().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 130);
    }

    #[test]
    fn kfold_singletons_when_k_equals_n() {
        let users: Vec<String> = (0..10).map(|i| format!("u{i}")).collect();
        let split = kfold_split(&users, 10, 0).unwrap();
        assert!(split.folds.iter().all(|f| f.len() == 1));
        assert!(matches!(
            kfold_split(&users, 11, 0),
            Err(EvalError::TooFewUsers { .. })
        ));
    }

    #[test]
    fn kfold_is_deterministic() {
        let users: Vec<String> = (0..23).map(|i| format!("u{i}")).collect();
        assert_eq!(
            kfold_split(&users, 4, 9).unwrap(),
            kfold_split(&users, 4, 9).unwrap()
        );
    }
}
