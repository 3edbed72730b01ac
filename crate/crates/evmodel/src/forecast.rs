//! Day-ahead aggregate EV load envelopes.
//!
//! Each behavior group contributes sampling statistics: normal arrival and
//! departure times, and an energy model linear in stay duration with
//! correlation-scaled noise. A forecast draws N EVs per Monte-Carlo
//! replicate (group membership multinomial in the group portions), builds
//! each EV's per-slot charging-rate envelope, and averages the aggregate
//! envelope and total energy across replicates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kmeans::ClusterModel;
use crate::session::SessionDataset;

/// Sampled sessions never get shorter than this.
const MIN_STAY_H: f64 = 10.0 / 60.0;

/// Sampled energies never drop below this.
const MIN_ENERGY_KWH: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("group portions sum to {sum}, expected 1")]
    InvalidPortions { sum: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Bi-directional charging rate limits: `r_min_kw <= 0 < r_max_kw`, the
/// negative bound being the reverse-flow (V2G) capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLimits {
    pub r_max_kw: f64,
    pub r_min_kw: f64,
}

impl Default for RateLimits {
    fn default() -> Self {
        Self {
            r_max_kw: 6.6,
            r_min_kw: -6.6,
        }
    }
}

impl RateLimits {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad_max = self.r_max_kw.is_nan() || self.r_max_kw <= 0.0;
        let bad_min = self.r_min_kw.is_nan() || self.r_min_kw > 0.0;
        if bad_max || bad_min {
            return Err(ForecastError::InvalidConfig(format!(
                "rate limits must satisfy r_min <= 0 < r_max, got [{}, {}]",
                self.r_min_kw, self.r_max_kw
            )));
        }
        Ok(())
    }
}

/// Sampling statistics of one behavior group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: usize,
    /// Fraction of the population in this group.
    pub beta: f64,
    pub n_users: usize,
    pub n_sessions: usize,
    pub mean_arrival_h: f64,
    pub std_arrival_h: f64,
    pub mean_departure_h: f64,
    pub std_departure_h: f64,
    /// Pearson correlation of stay duration and energy over member sessions.
    pub cor: f64,
    pub energy_slope_kwh_per_h: f64,
    pub energy_intercept_kwh: f64,
    pub residual_std_kwh: f64,
}

/// Per-group statistics plus portions; portions sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub groups: Vec<GroupStats>,
}

impl CohortStats {
    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.groups.is_empty() {
            return Err(ForecastError::InvalidConfig("no groups".into()));
        }
        let sum: f64 = self.groups.iter().map(|g| g.beta).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ForecastError::InvalidPortions { sum });
        }
        for g in &self.groups {
            if g.std_arrival_h < 0.0 || g.std_departure_h < 0.0 || g.residual_std_kwh < 0.0 {
                return Err(ForecastError::InvalidConfig(format!(
                    "group {} has a negative standard deviation",
                    g.group
                )));
            }
        }
        Ok(())
    }
}

/// One sampled EV: availability window and energy demand. `arrival_h` is in
/// `[0, 24)`; `departure_h` may pass midnight, in which case the portion
/// beyond the horizon simply does not overlap any slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledSession {
    pub arrival_h: f64,
    pub departure_h: f64,
    pub energy_kwh: f64,
}

impl SampledSession {
    pub fn stay_hours(&self) -> f64 {
        self.departure_h - self.arrival_h
    }
}

/// Aggregate day-ahead envelope: across-draw means of the per-slot upper and
/// lower aggregate rates, their across-draw spreads, and the mean total
/// energy demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayAheadForecast {
    pub t_slots: usize,
    pub dt_hours: f64,
    pub upper_kw: Vec<f64>,
    pub lower_kw: Vec<f64>,
    pub upper_std_kw: Vec<f64>,
    pub lower_std_kw: Vec<f64>,
    pub total_energy_kwh: f64,
    pub n_evs: usize,
    pub draws: usize,
    pub seed: u64,
}

impl DayAheadForecast {
    /// `slot,start_hhmm,upper_kw,lower_kw,upper_std,lower_std` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,start_hhmm,upper_kw,lower_kw,upper_std,lower_std\n");
        for t in 0..self.t_slots {
            let start_min = (t as f64 * self.dt_hours * 60.0).round() as u32;
            out.push_str(&format!(
                "{t},{:02}:{:02},{},{},{},{}\n",
                start_min / 60,
                start_min % 60,
                self.upper_kw[t],
                self.lower_kw[t],
                self.upper_std_kw[t],
                self.lower_std_kw[t]
            ));
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Group statistics from an explicit user -> group labeling. Groups without
/// members are omitted; portions are over labeled users.
pub fn cohort_stats_from_labels(
    ds: &SessionDataset,
    labels: &BTreeMap<String, usize>,
    k: usize,
) -> Result<CohortStats, ForecastError> {
    if labels.is_empty() {
        return Err(ForecastError::InvalidConfig("no labeled users".into()));
    }
    let total_users = labels.len() as f64;
    let mut groups = Vec::new();
    for g in 0..k {
        let members: Vec<&str> = labels
            .iter()
            .filter(|(_, &l)| l == g)
            .map(|(u, _)| u.as_str())
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut arrivals = Vec::new();
        let mut departures = Vec::new();
        let mut durations = Vec::new();
        let mut energies = Vec::new();
        for user in &members {
            for s in ds.sessions_by_user(user) {
                arrivals.push(s.arrival_hours());
                departures.push(s.departure_hours());
                durations.push(s.stay_hours());
                energies.push(s.energy_kwh);
            }
        }
        if arrivals.is_empty() {
            return Err(ForecastError::InvalidConfig(format!(
                "group {g} has users but no sessions"
            )));
        }

        // least squares of energy on duration, with a flat fallback when the
        // durations carry no variance
        let md = mean(&durations);
        let me = mean(&energies);
        let var_d: f64 = durations.iter().map(|d| (d - md) * (d - md)).sum();
        let cov: f64 = durations
            .iter()
            .zip(&energies)
            .map(|(d, e)| (d - md) * (e - me))
            .sum();
        let (slope, intercept) = if var_d > 1e-12 {
            let a = cov / var_d;
            (a, me - a * md)
        } else {
            (0.0, me)
        };
        let residuals: Vec<f64> = durations
            .iter()
            .zip(&energies)
            .map(|(d, e)| e - (slope * d + intercept))
            .collect();
        let cor = if durations.len() >= 2 {
            crate::features::pearson(&durations, &energies).unwrap_or(0.0)
        } else {
            0.0
        };

        groups.push(GroupStats {
            group: g,
            beta: members.len() as f64 / total_users,
            n_users: members.len(),
            n_sessions: arrivals.len(),
            mean_arrival_h: mean(&arrivals),
            std_arrival_h: population_std(&arrivals),
            mean_departure_h: mean(&departures),
            std_departure_h: population_std(&departures),
            cor,
            energy_slope_kwh_per_h: slope,
            energy_intercept_kwh: intercept,
            residual_std_kwh: population_std(&residuals),
        });
    }
    let stats = CohortStats { groups };
    stats.validate()?;
    Ok(stats)
}

/// Group statistics from a fitted cluster model's own assignments. Every one
/// of the model's k clusters must be non-empty.
pub fn cohort_stats_from_cluster(
    model: &ClusterModel,
    ds: &SessionDataset,
) -> Result<CohortStats, ForecastError> {
    let stats = cohort_stats_from_labels(ds, &model.assignments, model.k)?;
    for g in 0..model.k {
        if !stats.groups.iter().any(|s| s.group == g) {
            return Err(ForecastError::EmptyCluster(g));
        }
    }
    Ok(stats)
}

/// Draw one EV session from a group's statistics.
///
/// Arrival draws wrap into `[0, 24)`; the pair is resampled until the
/// departure is at least 10 minutes later (after 100 tries the departure
/// falls back to arrival plus the group's mean stay). The energy is the
/// linear duration model plus noise scaled by `sqrt(1 - cor^2)`, clamped so
/// the session can always be served at the rate limit inside the 24 h
/// horizon (a departure past midnight contributes no capacity beyond it).
pub fn sample_session(
    stats: &GroupStats,
    limits: &RateLimits,
    rng: &mut ChaCha8Rng,
) -> SampledSession {
    let mut arrival = 0.0;
    let mut departure = 0.0;
    let mut ok = false;
    for _ in 0..100 {
        let a: f64 =
            stats.mean_arrival_h + rng.sample::<f64, _>(StandardNormal) * stats.std_arrival_h;
        let d: f64 =
            stats.mean_departure_h + rng.sample::<f64, _>(StandardNormal) * stats.std_departure_h;
        arrival = a.rem_euclid(24.0);
        departure = d;
        if departure > arrival + MIN_STAY_H {
            ok = true;
            break;
        }
    }
    if !ok {
        let mean_stay = (stats.mean_departure_h - stats.mean_arrival_h).max(MIN_STAY_H);
        departure = arrival + mean_stay;
    }

    let duration = departure - arrival;
    let noise_scale = stats.residual_std_kwh * (1.0 - stats.cor * stats.cor).max(0.0).sqrt();
    let raw = stats.energy_slope_kwh_per_h * duration
        + stats.energy_intercept_kwh
        + rng.sample::<f64, _>(StandardNormal) * noise_scale;
    let cap = limits.r_max_kw * (departure.min(24.0) - arrival);
    let energy = raw.clamp(MIN_ENERGY_KWH.min(cap), cap);

    SampledSession {
        arrival_h: arrival,
        departure_h: departure,
        energy_kwh: energy,
    }
}

/// Per-slot charging-rate bounds of one EV: the rate limits over slots
/// overlapping its availability window, zero elsewhere, partial slots
/// prorated by overlap fraction. Returns `(upper, lower)`.
pub fn rate_envelope(
    session: &SampledSession,
    limits: &RateLimits,
    t_slots: usize,
    dt_hours: f64,
) -> (Vec<f64>, Vec<f64>) {
    debug_assert!(
        (t_slots as f64 * dt_hours - 24.0).abs() < 1e-9,
        "slots must cover 24 h"
    );
    let mut upper = vec![0.0; t_slots];
    let mut lower = vec![0.0; t_slots];
    for t in 0..t_slots {
        let lo = t as f64 * dt_hours;
        let hi = lo + dt_hours;
        let overlap = (hi.min(session.departure_h) - lo.max(session.arrival_h)).max(0.0);
        if overlap > 0.0 {
            let frac = overlap / dt_hours;
            upper[t] = limits.r_max_kw * frac;
            lower[t] = limits.r_min_kw * frac;
        }
    }
    (upper, lower)
}

/// Whether a rate profile within the limits can deliver the session's energy
/// over its stay.
pub fn check_energy_feasible(session: &SampledSession, limits: &RateLimits) -> bool {
    session.energy_kwh <= limits.r_max_kw * session.stay_hours()
}

/// Load shape of one EV charging greedily: full rate from arrival until its
/// energy is delivered (or it leaves), prorated into slots.
pub fn greedy_profile(
    session: &SampledSession,
    r_max_kw: f64,
    t_slots: usize,
    dt_hours: f64,
) -> Vec<f64> {
    let charge_end = session.arrival_h + (session.energy_kwh / r_max_kw).min(session.stay_hours());
    let mut profile = vec![0.0; t_slots];
    for (t, p) in profile.iter_mut().enumerate() {
        let lo = t as f64 * dt_hours;
        let hi = lo + dt_hours;
        let overlap = (hi.min(charge_end) - lo.max(session.arrival_h)).max(0.0);
        if overlap > 0.0 {
            *p = r_max_kw * overlap / dt_hours;
        }
    }
    profile
}

/// One Monte-Carlo replicate: the sampled EVs with their groups, the
/// aggregate envelope, and the total energy demand.
#[derive(Debug, Clone)]
pub struct DrawOutcome {
    pub sessions: Vec<(usize, SampledSession)>,
    pub upper_kw: Vec<f64>,
    pub lower_kw: Vec<f64>,
    pub energy_kwh: f64,
}

/// Sample `n_evs` EVs (group membership multinomial in the portions) and sum
/// their envelopes. `limits` gives one entry per group in `stats`.
pub fn simulate_draw(
    stats: &CohortStats,
    n_evs: usize,
    limits: &[RateLimits],
    t_slots: usize,
    dt_hours: f64,
    rng: &mut ChaCha8Rng,
) -> DrawOutcome {
    let mut upper = vec![0.0; t_slots];
    let mut lower = vec![0.0; t_slots];
    let mut energy = 0.0;
    let mut sessions = Vec::with_capacity(n_evs);
    for _ in 0..n_evs {
        let mut pick: f64 = rng.gen();
        let mut gi = stats.groups.len() - 1;
        for (i, g) in stats.groups.iter().enumerate() {
            if pick < g.beta {
                gi = i;
                break;
            }
            pick -= g.beta;
        }
        let session = sample_session(&stats.groups[gi], &limits[gi], rng);
        let (u, l) = rate_envelope(&session, &limits[gi], t_slots, dt_hours);
        for t in 0..t_slots {
            upper[t] += u[t];
            lower[t] += l[t];
        }
        energy += session.energy_kwh;
        sessions.push((stats.groups[gi].group, session));
    }
    DrawOutcome {
        sessions,
        upper_kw: upper,
        lower_kw: lower,
        energy_kwh: energy,
    }
}

/// Monte-Carlo day-ahead forecast: across-draw mean envelope, per-slot
/// spread, and mean total energy. Deterministic for a fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_forecast(
    stats: &CohortStats,
    n_evs: usize,
    limits: &[RateLimits],
    t_slots: usize,
    dt_hours: f64,
    draws: usize,
    seed: u64,
) -> Result<DayAheadForecast, ForecastError> {
    stats.validate()?;
    if n_evs < 1 {
        return Err(ForecastError::InvalidConfig("n_evs must be >= 1".into()));
    }
    if draws < 1 {
        return Err(ForecastError::InvalidConfig("draws must be >= 1".into()));
    }
    if t_slots < 1 || dt_hours.is_nan() || dt_hours <= 0.0 || (t_slots as f64 * dt_hours - 24.0).abs() > 1e-9 {
        return Err(ForecastError::InvalidConfig(format!(
            "{t_slots} slots of {dt_hours} h must cover exactly 24 h"
        )));
    }
    if limits.len() != stats.groups.len() {
        return Err(ForecastError::InvalidConfig(format!(
            "{} rate limits for {} groups",
            limits.len(),
            stats.groups.len()
        )));
    }
    for l in limits {
        l.validate()?;
    }

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let draw_seeds: Vec<u64> = (0..draws).map(|_| master.gen()).collect();

    let mut upper_sum = vec![0.0; t_slots];
    let mut upper_sq = vec![0.0; t_slots];
    let mut lower_sum = vec![0.0; t_slots];
    let mut lower_sq = vec![0.0; t_slots];
    let mut energy_sum = 0.0;
    for s in draw_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let draw = simulate_draw(stats, n_evs, limits, t_slots, dt_hours, &mut rng);
        for t in 0..t_slots {
            upper_sum[t] += draw.upper_kw[t];
            upper_sq[t] += draw.upper_kw[t] * draw.upper_kw[t];
            lower_sum[t] += draw.lower_kw[t];
            lower_sq[t] += draw.lower_kw[t] * draw.lower_kw[t];
        }
        energy_sum += draw.energy_kwh;
    }

    let n = draws as f64;
    let std_of = |sum: &[f64], sq: &[f64], t: usize| {
        let m = sum[t] / n;
        (sq[t] / n - m * m).max(0.0).sqrt()
    };
    let upper_std_kw = (0..t_slots).map(|t| std_of(&upper_sum, &upper_sq, t)).collect();
    let lower_std_kw = (0..t_slots).map(|t| std_of(&lower_sum, &lower_sq, t)).collect();

    Ok(DayAheadForecast {
        t_slots,
        dt_hours,
        upper_kw: upper_sum.iter().map(|s| s / n).collect(),
        lower_kw: lower_sum.iter().map(|s| s / n).collect(),
        upper_std_kw,
        lower_std_kw,
        total_energy_kwh: energy_sum / n,
        n_evs,
        draws,
        seed,
    })
}
