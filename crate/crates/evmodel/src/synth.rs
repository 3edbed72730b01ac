//! Labeled synthetic charging datasets.
//!
//! Four behavior archetypes: a tight commuter cohort with energy tracking
//! stay duration, a fleet cohort with spread schedules but stable energy, a
//! cohort with a fixed arrival and fluctuating departure, and a near-random
//! cohort. Ground-truth cohort labels ride along so clustering and
//! classification can be verified end to end.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{ChargingSession, SessionDataset};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid cohort spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
}

/// Generation parameters for one behavior cohort. Times are normal draws in
/// decimal hours; energy is `slope * stay_hours + intercept + noise`,
/// floored at 0.1 kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub name: String,
    pub n_users: usize,
    pub sessions_per_user: usize,
    pub arrival_mean_h: f64,
    pub arrival_std_h: f64,
    pub departure_mean_h: f64,
    pub departure_std_h: f64,
    pub energy_slope_kwh_per_h: f64,
    pub energy_intercept_kwh: f64,
    pub energy_noise_std_kwh: f64,
    /// Per-cohort stream salt, mixed into the generation seed.
    pub seed: u64,
}

impl CohortSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let fail = |reason: &str| SynthError::InvalidSpec {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.n_users < 1 {
            return Err(fail("n_users must be >= 1"));
        }
        if self.sessions_per_user < 1 {
            return Err(fail("sessions_per_user must be >= 1"));
        }
        if self.arrival_std_h < 0.0 || self.departure_std_h < 0.0 || self.energy_noise_std_kwh < 0.0
        {
            return Err(fail("standard deviations must be >= 0"));
        }
        if self.departure_mean_h <= self.arrival_mean_h {
            return Err(fail("departure mean must be after arrival mean"));
        }
        Ok(())
    }
}

/// A dataset plus the cohort each user was generated from.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub dataset: SessionDataset,
    pub ground_truth: BTreeMap<String, String>,
}

impl LabeledDataset {
    /// `user_id,cohort` CSV.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("user_id,cohort\n");
        for (user, cohort) in &self.ground_truth {
            out.push_str(&format!("{user},{cohort}\n"));
        }
        out
    }
}

/// Parse a `user_id,cohort` labels CSV back into a map.
pub fn parse_labels_csv(text: &str) -> Result<BTreeMap<String, String>, SynthError> {
    let bad = |reason: &str| SynthError::InvalidSpec {
        name: "labels".into(),
        reason: reason.to_string(),
    };
    let mut lines = text.lines();
    match lines.next() {
        Some("user_id,cohort") => {}
        other => {
            return Err(bad(&format!(
                "expected header `user_id,cohort`, got `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let mut labels = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (user, cohort) = line
            .split_once(',')
            .ok_or_else(|| bad(&format!("line {}: missing comma", i + 2)))?;
        labels.insert(user.trim().to_string(), cohort.trim().to_string());
    }
    Ok(labels)
}

/// The four default archetypes at the standard benchmark scale: 130 users,
/// 100 sessions each.
pub fn default_archetypes() -> Vec<CohortSpec> {
    vec![
        CohortSpec {
            name: "commuter".into(),
            n_users: 40,
            sessions_per_user: 100,
            arrival_mean_h: 8.0,
            arrival_std_h: 0.25,
            departure_mean_h: 17.0,
            departure_std_h: 0.25,
            energy_slope_kwh_per_h: 1.5,
            energy_intercept_kwh: 0.5,
            energy_noise_std_kwh: 0.1,
            seed: 1,
        },
        CohortSpec {
            name: "fleet".into(),
            n_users: 30,
            sessions_per_user: 100,
            arrival_mean_h: 9.5,
            arrival_std_h: 2.2,
            departure_mean_h: 16.0,
            departure_std_h: 2.2,
            energy_slope_kwh_per_h: 0.0,
            energy_intercept_kwh: 15.0,
            energy_noise_std_kwh: 0.8,
            seed: 2,
        },
        CohortSpec {
            name: "steady_arrival".into(),
            n_users: 30,
            sessions_per_user: 100,
            arrival_mean_h: 7.5,
            arrival_std_h: 0.15,
            departure_mean_h: 15.0,
            departure_std_h: 2.0,
            energy_slope_kwh_per_h: 1.2,
            energy_intercept_kwh: 2.0,
            energy_noise_std_kwh: 2.0,
            seed: 3,
        },
        CohortSpec {
            name: "random".into(),
            n_users: 30,
            sessions_per_user: 100,
            arrival_mean_h: 10.5,
            arrival_std_h: 3.0,
            departure_mean_h: 19.0,
            departure_std_h: 1.8,
            energy_slope_kwh_per_h: 0.0,
            energy_intercept_kwh: 9.0,
            energy_noise_std_kwh: 6.0,
            seed: 4,
        },
    ]
}

fn is_weekend(d: NaiveDate) -> bool {
    matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Generate one labeled dataset. Sessions land on consecutive weekdays
/// starting 2017-03-01; draws are rounded to minute resolution before the
/// `departure > arrival` check so every stored session is valid as written.
/// Byte-identical output for a fixed seed.
pub fn generate(specs: &[CohortSpec], seed: u64) -> Result<LabeledDataset, SynthError> {
    for spec in specs {
        spec.validate()?;
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2017, 3, 1).unwrap();

    let mut sessions = Vec::new();
    let mut ground_truth = BTreeMap::new();
    let mut user_no = 0usize;

    for spec in specs {
        let stream = master.gen::<u64>() ^ spec.seed;
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        for _ in 0..spec.n_users {
            user_no += 1;
            let user_id = format!("u{user_no:03}");
            ground_truth.insert(user_id.clone(), spec.name.clone());

            let mut day = start;
            for _ in 0..spec.sessions_per_user {
                while is_weekend(day) {
                    day += Duration::days(1);
                }
                let (arr_min, dep_min) = draw_window(spec, &mut rng);
                let duration_h = (dep_min - arr_min) as f64 / 60.0;
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * spec.energy_noise_std_kwh;
                let energy = (spec.energy_slope_kwh_per_h * duration_h
                    + spec.energy_intercept_kwh
                    + noise)
                    .max(0.1);

                let midnight = day.and_hms_opt(0, 0, 0).unwrap();
                let session = ChargingSession::new(
                    &user_id,
                    midnight + Duration::minutes(arr_min),
                    midnight + Duration::minutes(dep_min),
                    energy,
                    None,
                    None,
                )
                .expect("generated session satisfies invariants");
                sessions.push(session);
                day += Duration::days(1);
            }
        }
    }

    Ok(LabeledDataset {
        dataset: SessionDataset::from_sessions(sessions),
        ground_truth,
    })
}

/// Arrival/departure in minutes since midnight; departure may pass midnight.
/// Resamples until the arrival lands inside the day and the rounded
/// departure is strictly later.
fn draw_window(spec: &CohortSpec, rng: &mut ChaCha8Rng) -> (i64, i64) {
    for _ in 0..10_000 {
        let arr_h =
            spec.arrival_mean_h + rng.sample::<f64, _>(StandardNormal) * spec.arrival_std_h;
        let dep_h =
            spec.departure_mean_h + rng.sample::<f64, _>(StandardNormal) * spec.departure_std_h;
        let arr_min = (arr_h * 60.0).round() as i64;
        let dep_min = (dep_h * 60.0).round() as i64;
        if (0..24 * 60).contains(&arr_min) && dep_min > arr_min {
            return (arr_min, dep_min);
        }
    }
    // pathological spec; fall back to the means
    let arr_min = ((spec.arrival_mean_h * 60.0).round() as i64).clamp(0, 24 * 60 - 1);
    let dep_min = (spec.departure_mean_h * 60.0).round() as i64;
    (arr_min, dep_min.max(arr_min + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_matrix, user_tuple};

    fn flat_spec() -> CohortSpec {
        CohortSpec {
            name: "flat".into(),
            n_users: 3,
            sessions_per_user: 5,
            arrival_mean_h: 8.0,
            arrival_std_h: 0.0,
            departure_mean_h: 17.0,
            departure_std_h: 0.0,
            energy_slope_kwh_per_h: 1.0,
            energy_intercept_kwh: 1.0,
            energy_noise_std_kwh: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn zero_stds_make_identical_sessions() {
        let out = generate(&[flat_spec()], 1).unwrap();
        let sessions = out.dataset.sessions_by_user("u001");
        assert_eq!(sessions.len(), 5);
        for s in &sessions {
            assert!((s.arrival_hours() - 8.0).abs() < 1e-12);
            assert!((s.departure_hours() - 17.0).abs() < 1e-12);
            assert!((s.energy_kwh - 10.0).abs() < 1e-12);
        }
        let t = user_tuple("u001", &sessions).unwrap();
        assert_eq!(t.std_arrival, 0.0);
        assert_eq!(t.std_departure, 0.0);
        assert_eq!(t.cor, 0.0); // zero variance maps to 0
    }

    #[test]
    fn default_archetypes_match_benchmark_scale() {
        let specs = default_archetypes();
        assert_eq!(specs.len(), 4);
        let out = generate(&specs, 42).unwrap();
        assert_eq!(out.dataset.n_users(), 130);
        assert_eq!(out.dataset.len(), 13_000);
        assert_eq!(out.ground_truth.len(), 130);
    }

    #[test]
    fn noiseless_linear_cohort_has_perfect_correlation() {
        let spec = CohortSpec {
            name: "linear".into(),
            n_users: 4,
            sessions_per_user: 30,
            arrival_mean_h: 9.0,
            arrival_std_h: 1.0,
            departure_mean_h: 16.0,
            departure_std_h: 1.0,
            energy_slope_kwh_per_h: 1.5,
            energy_intercept_kwh: 0.0,
            energy_noise_std_kwh: 0.0,
            seed: 0,
        };
        let out = generate(&[spec], 3).unwrap();
        let matrix = build_matrix(&out.dataset).unwrap();
        for (_, t) in matrix.rows() {
            assert!((t.cor - 1.0).abs() < 1e-9, "cor = {}", t.cor);
        }
    }

    #[test]
    fn commuter_users_track_duration_and_random_users_do_not() {
        let out = generate(&default_archetypes(), 42).unwrap();
        let matrix = build_matrix(&out.dataset).unwrap();
        for (user, t) in matrix.rows() {
            match out.ground_truth[user].as_str() {
                "commuter" => assert!(t.cor > 0.95, "{user}: cor {}", t.cor),
                "random" => assert!(t.cor.abs() < 0.3, "{user}: cor {}", t.cor),
                _ => {}
            }
        }
    }

    #[test]
    fn generation_is_byte_identical_for_a_seed() {
        let a = generate(&default_archetypes(), 7).unwrap();
        let b = generate(&default_archetypes(), 7).unwrap();
        assert_eq!(a.dataset.to_csv(), b.dataset.to_csv());
        assert_eq!(a.labels_csv(), b.labels_csv());
    }

    #[test]
    fn labels_csv_round_trips() {
        let out = generate(&[flat_spec()], 2).unwrap();
        let parsed = parse_labels_csv(&out.labels_csv()).unwrap();
        assert_eq!(parsed, out.ground_truth);
        assert!(parse_labels_csv("wrong,header\n").is_err());
    }

    #[test]
    fn sessions_land_on_weekdays_only() {
        let out = generate(&[flat_spec()], 5).unwrap();
        for s in out.dataset.sessions() {
            assert!(!is_weekend(s.arrival.date()));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = flat_spec();
        spec.departure_mean_h = spec.arrival_mean_h;
        assert!(matches!(
            generate(&[spec], 0),
            Err(SynthError::InvalidSpec { .. })
        ));
        let mut spec = flat_spec();
        spec.n_users = 0;
        assert!(generate(&[spec], 0).is_err());
        let mut spec = flat_spec();
        spec.arrival_std_h = -1.0;
        assert!(generate(&[spec], 0).is_err());
    }
}
