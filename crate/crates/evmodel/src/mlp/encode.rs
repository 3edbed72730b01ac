//! Fixed-length input encoding of per-user charging histories.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::session::SessionDataset;

use super::{Mat, MlpError};

/// One input row per labeled user: `d` sessions encoded as
/// `(arrival/24, departure/24, energy/e_scale)` triples, concatenated in
/// arrival-time order. All components lie in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct UserRecordMatrix {
    users: Vec<String>,
    inputs: Mat,
    labels: Vec<usize>,
    n_classes: usize,
    d: usize,
    e_scale: f64,
}

impl UserRecordMatrix {
    pub fn from_parts(
        users: Vec<String>,
        inputs: Mat,
        labels: Vec<usize>,
        n_classes: usize,
        d: usize,
        e_scale: f64,
    ) -> Self {
        assert_eq!(users.len(), inputs.rows);
        assert_eq!(users.len(), labels.len());
        assert!(labels.iter().all(|&l| l < n_classes));
        Self {
            users,
            inputs,
            labels,
            n_classes,
            d,
            e_scale,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.users.len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn days_per_user(&self) -> usize {
        self.d
    }

    /// Energy divisor used in the encoding (the dataset's max energy).
    pub fn e_scale(&self) -> f64 {
        self.e_scale
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// A copy containing only the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> UserRecordMatrix {
        let inputs = Mat::from_rows(rows.iter().map(|&i| self.inputs.row(i).to_vec()).collect());
        Self {
            users: rows.iter().map(|&i| self.users[i].clone()).collect(),
            inputs,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            d: self.d,
            e_scale: self.e_scale,
        }
    }
}

/// Encode one user's history: `d` sessions sampled from `sessions`
/// (without replacement when the user has at least `d`, with replacement
/// otherwise), sorted by arrival time of day, flattened into
/// `(arrival/24, departure/24, energy/e_scale)` triples.
pub fn encode_user_row(
    sessions: &[&crate::session::ChargingSession],
    d: usize,
    e_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    assert!(!sessions.is_empty() && d >= 1 && e_scale > 0.0);
    let picked: Vec<usize> = if sessions.len() >= d {
        rand::seq::index::sample(rng, sessions.len(), d).into_vec()
    } else {
        (0..d).map(|_| rng.gen_range(0..sessions.len())).collect()
    };
    let mut triples: Vec<[f64; 3]> = picked
        .into_iter()
        .map(|i| {
            let s = sessions[i];
            [
                s.arrival_hours() / 24.0,
                s.departure_hours() / 24.0,
                s.energy_kwh / e_scale,
            ]
        })
        .collect();
    triples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    triples.into_iter().flatten().collect()
}

/// Encode every labeled user into one row.
///
/// The energy divisor is the dataset's largest session energy (1 when the
/// dataset is all-zero). Rows are deterministic for a fixed seed.
pub fn encode_users(
    ds: &SessionDataset,
    labels: &BTreeMap<String, usize>,
    n_classes: usize,
    d: usize,
    seed: u64,
) -> Result<UserRecordMatrix, MlpError> {
    if d < 1 {
        return Err(MlpError::InvalidConfig("d must be >= 1".into()));
    }
    if labels.values().any(|&l| l >= n_classes) {
        return Err(MlpError::InvalidConfig(format!(
            "label out of range for {n_classes} classes"
        )));
    }
    let e_scale = {
        let max = ds.max_energy_kwh();
        if max > 0.0 {
            max
        } else {
            1.0
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = Vec::with_capacity(labels.len());
    let mut rows = Vec::with_capacity(labels.len());
    let mut out_labels = Vec::with_capacity(labels.len());

    for (user, &label) in labels {
        let sessions = ds.sessions_by_user(user);
        if sessions.is_empty() {
            return Err(MlpError::NoSessions(user.clone()));
        }
        users.push(user.clone());
        rows.push(encode_user_row(&sessions, d, e_scale, &mut rng));
        out_labels.push(label);
    }

    Ok(UserRecordMatrix::from_parts(
        users,
        Mat::from_rows(rows),
        out_labels,
        n_classes,
        d,
        e_scale,
    ))
}
