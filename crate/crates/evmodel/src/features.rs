//! Per-user behavioral features and the normalized clustering matrix.
//!
//! Each user with at least two sessions is summarized by a 5-dimensional
//! tuple: mean and standard deviation of arrival and departure time of day
//! (decimal hours), plus the Pearson correlation between stay duration and
//! session energy. The tuples are z-scored per dimension to form the matrix
//! that clustering operates on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::SessionDataset;

/// Feature-space dimension: mean/std arrival, mean/std departure, correlation.
pub const FEATURE_DIM: usize = 5;

/// Smallest allowed z-score scale; keeps zero-variance dimensions finite.
pub const SCALE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("zero variance input, correlation undefined")]
    DegenerateInput,
    #[error("user `{user}` has {have} session(s), need at least 2")]
    InsufficientData { user: String, have: usize },
    #[error("no user has at least 2 sessions")]
    EmptyMatrix,
    #[error("duplicate user `{0}` in feature rows")]
    DuplicateUser(String),
}

/// The 5-dimensional behavior summary of one user.
///
/// Time statistics are in decimal hours of day; standard deviations use the
/// population formula. `cor` is 0 when stay duration or energy has zero
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureTuple {
    pub mean_arrival: f64,
    pub mean_departure: f64,
    pub std_arrival: f64,
    pub std_departure: f64,
    pub cor: f64,
}

impl UserFeatureTuple {
    pub fn as_array(&self) -> [f64; FEATURE_DIM] {
        [
            self.mean_arrival,
            self.mean_departure,
            self.std_arrival,
            self.std_departure,
            self.cor,
        ]
    }

    pub fn from_array(v: [f64; FEATURE_DIM]) -> Self {
        Self {
            mean_arrival: v[0],
            mean_departure: v[1],
            std_arrival: v[2],
            std_departure: v[3],
            cor: v[4],
        }
    }
}

/// Per-dimension z-score parameters: `normalized = (raw - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: [f64; FEATURE_DIM],
    pub scale: [f64; FEATURE_DIM],
}

impl Normalization {
    pub fn apply(&self, raw: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|d| (raw[d] - self.shift[d]) / self.scale[d])
    }

    pub fn invert(&self, normalized: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|d| normalized[d] * self.scale[d] + self.shift[d])
    }
}

/// One row per qualifying user, plus the z-score parameters applied to them.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    rows: Vec<(String, UserFeatureTuple)>,
    normalization: Normalization,
    excluded: Vec<String>,
}

impl FeatureMatrix {
    /// Assemble a matrix from precomputed tuples, z-scoring them the same
    /// way [`build_matrix`] does.
    pub fn from_tuples(rows: Vec<(String, UserFeatureTuple)>) -> Result<Self, FeatureError> {
        if rows.is_empty() {
            return Err(FeatureError::EmptyMatrix);
        }
        let mut seen = std::collections::BTreeSet::new();
        for (user, _) in &rows {
            if !seen.insert(user.clone()) {
                return Err(FeatureError::DuplicateUser(user.clone()));
            }
        }
        let normalization = fit_normalization(&rows);
        Ok(Self {
            rows,
            normalization,
            excluded: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(String, UserFeatureTuple)] {
        &self.rows
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(u, _)| u.as_str())
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    /// Users that were dropped for having fewer than 2 sessions.
    pub fn excluded_users(&self) -> &[String] {
        &self.excluded
    }

    /// Row `i` mapped into normalized (clustering) space.
    pub fn normalized_row(&self, i: usize) -> [f64; FEATURE_DIM] {
        self.normalization.apply(&self.rows[i].1.as_array())
    }

    pub fn normalized_rows(&self) -> Vec<[f64; FEATURE_DIM]> {
        (0..self.rows.len()).map(|i| self.normalized_row(i)).collect()
    }

    /// Un-normalized rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("user_id,mean_arrival,mean_departure,std_arrival,std_departure,cor\n");
        for (user, t) in &self.rows {
            out.push_str(&format!(
                "{user},{},{},{},{},{}\n",
                t.mean_arrival, t.mean_departure, t.std_arrival, t.std_departure, t.cor
            ));
        }
        out
    }
}

/// Sample Pearson correlation coefficient, clamped into `[-1, 1]`.
///
/// Returns [`FeatureError::DegenerateInput`] when either sequence has zero
/// variance. Panics if the sequences differ in length or are shorter than 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FeatureError> {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    assert!(x.len() >= 2, "pearson: need at least 2 points");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FeatureError::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Summarize one user's sessions into a [`UserFeatureTuple`].
///
/// Arrival/departure statistics are over plug-in/plug-out times of day;
/// the correlation pairs stay duration with delivered energy. Needs at least
/// 2 sessions.
pub fn user_tuple(
    user: &str,
    sessions: &[&crate::session::ChargingSession],
) -> Result<UserFeatureTuple, FeatureError> {
    if sessions.len() < 2 {
        return Err(FeatureError::InsufficientData {
            user: user.to_string(),
            have: sessions.len(),
        });
    }
    let arrivals: Vec<f64> = sessions.iter().map(|s| s.arrival_hours()).collect();
    let departures: Vec<f64> = sessions.iter().map(|s| s.departure_hours()).collect();
    let durations: Vec<f64> = sessions.iter().map(|s| s.stay_hours()).collect();
    let energies: Vec<f64> = sessions.iter().map(|s| s.energy_kwh).collect();
    // zero variance in either series carries no linear information
    let cor = match pearson(&durations, &energies) {
        Ok(c) => c,
        Err(FeatureError::DegenerateInput) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(UserFeatureTuple {
        mean_arrival: mean(&arrivals),
        mean_departure: mean(&departures),
        std_arrival: population_std(&arrivals),
        std_departure: population_std(&departures),
        cor,
    })
}

/// Build the clustering matrix: one tuple per user with >= 2 sessions,
/// z-scored per dimension (sample standard deviation, floored at
/// [`SCALE_FLOOR`]). Users with fewer sessions are excluded and reported.
pub fn build_matrix(ds: &SessionDataset) -> Result<FeatureMatrix, FeatureError> {
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for user in ds.user_ids() {
        let sessions = ds.sessions_by_user(user);
        match user_tuple(user, &sessions) {
            Ok(t) => rows.push((user.to_string(), t)),
            Err(FeatureError::InsufficientData { .. }) => excluded.push(user.to_string()),
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(FeatureError::EmptyMatrix);
    }

    let normalization = fit_normalization(&rows);
    Ok(FeatureMatrix {
        rows,
        normalization,
        excluded,
    })
}

fn fit_normalization(rows: &[(String, UserFeatureTuple)]) -> Normalization {
    let n = rows.len() as f64;
    let mut shift = [0.0; FEATURE_DIM];
    let mut scale = [0.0; FEATURE_DIM];
    for d in 0..FEATURE_DIM {
        let col: Vec<f64> = rows.iter().map(|(_, t)| t.as_array()[d]).collect();
        shift[d] = mean(&col);
        let var = if rows.len() >= 2 {
            col.iter().map(|x| (x - shift[d]) * (x - shift[d])).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        scale[d] = var.sqrt().max(SCALE_FLOOR);
    }
    Normalization { shift, scale }
}
