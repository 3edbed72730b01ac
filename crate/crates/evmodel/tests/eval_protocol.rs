//! End-to-end checks of the experiment protocol on small synthetic data.

use std::collections::BTreeMap;

use evmodel::eval::{self, ExperimentConfig, ForecastConfig};
use evmodel::forecast::{aggregate_forecast, cohort_stats_from_labels, RateLimits};
use evmodel::kmeans::KmeansConfig;
use evmodel::mlp::TrainConfig;
use evmodel::synth::{generate, CohortSpec};

fn two_cohorts() -> Vec<CohortSpec> {
    vec![
        CohortSpec {
            name: "early".into(),
            n_users: 12,
            sessions_per_user: 15,
            arrival_mean_h: 7.0,
            arrival_std_h: 0.3,
            departure_mean_h: 15.0,
            departure_std_h: 0.3,
            energy_slope_kwh_per_h: 1.5,
            energy_intercept_kwh: 0.5,
            energy_noise_std_kwh: 0.2,
            seed: 1,
        },
        CohortSpec {
            name: "late".into(),
            n_users: 12,
            sessions_per_user: 15,
            arrival_mean_h: 12.0,
            arrival_std_h: 1.5,
            departure_mean_h: 21.0,
            departure_std_h: 1.5,
            energy_slope_kwh_per_h: 0.0,
            energy_intercept_kwh: 14.0,
            energy_noise_std_kwh: 1.5,
            seed: 2,
        },
    ]
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        kfolds: 3,
        kmeans: KmeansConfig {
            k: 2,
            ..Default::default()
        },
        d: 6,
        hidden_layers: vec![12],
        train: TrainConfig {
            epochs: 800,
            ..Default::default()
        },
        forecast: ForecastConfig {
            draws: 40,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn report_has_one_row_per_fold_with_consistent_means() {
    let data = generate(&two_cohorts(), 5).unwrap();
    let report = eval::run_experiment(&data.dataset, Some(&data.ground_truth), &small_config())
        .unwrap();

    assert_eq!(report.folds.len(), 3);
    assert_eq!(report.n_users, 24);
    for f in &report.folds {
        assert!((0.0..=1.0).contains(&f.train_accuracy));
        assert!((0.0..=1.0).contains(&f.test_accuracy));
        assert!(f.mape >= 0.0 && f.agreement_mape >= 0.0);
        assert!(f.gt_accuracy.is_some());
        assert_eq!(f.n_train_users + f.n_test_users, 24);
    }
    let mean = |sel: fn(&eval::FoldReport) -> f64| {
        report.folds.iter().map(sel).sum::<f64>() / report.folds.len() as f64
    };
    assert!((report.mean_train_accuracy - mean(|f| f.train_accuracy)).abs() < 1e-12);
    assert!((report.mean_test_accuracy - mean(|f| f.test_accuracy)).abs() < 1e-12);
    assert!((report.mean_mape - mean(|f| f.mape)).abs() < 1e-12);
    assert!((report.mean_agreement_mape - mean(|f| f.agreement_mape)).abs() < 1e-12);

    // csv shape: header + one row per fold
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "fold,train_acc,test_acc,mape");
}

#[test]
fn experiment_is_deterministic_for_a_seed() {
    let data = generate(&two_cohorts(), 5).unwrap();
    let a = eval::run_experiment(&data.dataset, None, &small_config()).unwrap();
    let b = eval::run_experiment(&data.dataset, None, &small_config()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn works_without_ground_truth() {
    let data = generate(&two_cohorts(), 5).unwrap();
    let report = eval::run_experiment(&data.dataset, None, &small_config()).unwrap();
    assert!(report.folds.iter().all(|f| f.gt_accuracy.is_none()));
    assert!(report.mean_gt_accuracy.is_none());
}

#[test]
fn truth_labeled_forecast_agrees_better_than_a_degraded_one() {
    // forecasts built from ground-truth labels should sit closer to the
    // cluster-label forecast than forecasts built from scrambled labels
    let data = generate(&two_cohorts(), 9).unwrap();
    let ds = &data.dataset;
    let matrix = evmodel::features::build_matrix(ds).unwrap();
    let model = evmodel::kmeans::fit(
        &matrix,
        &KmeansConfig {
            k: 2,
            ..Default::default()
        },
    )
    .unwrap();

    let names: Vec<String> = {
        let mut n: Vec<String> = data.ground_truth.values().cloned().collect();
        n.sort();
        n.dedup();
        n
    };
    let truth_labels: BTreeMap<String, usize> = data
        .ground_truth
        .iter()
        .map(|(u, c)| (u.clone(), names.iter().position(|n| n == c).unwrap()))
        .collect();
    // degradation that actually mixes cohorts inside each group (a pure
    // label permutation would leave the aggregate unchanged)
    let degraded_labels: BTreeMap<String, usize> = truth_labels
        .keys()
        .enumerate()
        .map(|(i, u)| (u.clone(), i % 2))
        .collect();

    let forecast_of = |labels: &BTreeMap<String, usize>| {
        let stats = cohort_stats_from_labels(ds, labels, 2).unwrap();
        let limits = vec![RateLimits::default(); stats.groups.len()];
        aggregate_forecast(&stats, 24, &limits, 96, 0.25, 60, 77).unwrap()
    };

    let from_cluster = forecast_of(&model.assignments);
    let from_truth = forecast_of(&truth_labels);
    let from_degraded = forecast_of(&degraded_labels);

    let close = eval::mape(&from_cluster.upper_kw, &from_truth.upper_kw).unwrap();
    let far = eval::mape(&from_cluster.upper_kw, &from_degraded.upper_kw).unwrap();
    assert!(
        close < far,
        "truth-label agreement ({close}) should beat degraded ({far})"
    );
}
