//! Charging-session records: parsing, validation, and per-user indexing.
//!
//! The CSV schema is `user_id,arrival,departure,energy_kwh[,charge_start,charge_end]`
//! with ISO-8601 timestamps at minute resolution (`YYYY-MM-DDTHH:MM`). A
//! [`SessionDataset`] is immutable after construction and is the single input
//! to every downstream module.

use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};
use thiserror::Error;

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M";
const HEADER_SHORT: [&str; 4] = ["user_id", "arrival", "departure", "energy_kwh"];
const HEADER_LONG: [&str; 6] = [
    "user_id",
    "arrival",
    "departure",
    "energy_kwh",
    "charge_start",
    "charge_end",
];

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("bad CSV header: expected `user_id,arrival,departure,energy_kwh[,charge_start,charge_end]`, got `{0}`")]
    BadHeader(String),
    #[error("invalid session: {reason}")]
    InvalidSession { reason: String },
    #[error("{} row(s) rejected; first: {}", .0.len(), .0[0])]
    RejectedRows(Vec<RowIssue>),
    #[error("CSV read error: {0}")]
    Csv(#[from] csv::Error),
}

/// A problem with one input row, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowIssue {
    /// A field could not be parsed at all.
    Malformed { line: u64, detail: String },
    /// Fields parsed but the session violates an invariant.
    Invalid { line: u64, reason: String },
}

impl RowIssue {
    pub fn line(&self) -> u64 {
        match self {
            RowIssue::Malformed { line, .. } | RowIssue::Invalid { line, .. } => *line,
        }
    }
}

impl std::fmt::Display for RowIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowIssue::Malformed { line, detail } => write!(f, "line {line}: malformed row: {detail}"),
            RowIssue::Invalid { line, reason } => write!(f, "line {line}: invalid session: {reason}"),
        }
    }
}

/// One plug-in-to-plug-out event.
///
/// Guarantees after construction:
/// - `departure > arrival` (strictly);
/// - `energy_kwh` is finite and non-negative;
/// - optional charge window, when present, lies within `[arrival, departure]`
///   with `charge_start <= charge_end`;
/// - all timestamps are truncated to minute resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingSession {
    pub user_id: String,
    pub arrival: NaiveDateTime,
    pub departure: NaiveDateTime,
    pub energy_kwh: f64,
    pub charge_start: Option<NaiveDateTime>,
    pub charge_end: Option<NaiveDateTime>,
}

fn to_minute(t: NaiveDateTime) -> NaiveDateTime {
    t.with_second(0).unwrap().with_nanosecond(0).unwrap()
}

impl ChargingSession {
    pub fn new(
        user_id: impl Into<String>,
        arrival: NaiveDateTime,
        departure: NaiveDateTime,
        energy_kwh: f64,
        charge_start: Option<NaiveDateTime>,
        charge_end: Option<NaiveDateTime>,
    ) -> Result<Self, SessionError> {
        let arrival = to_minute(arrival);
        let departure = to_minute(departure);
        let charge_start = charge_start.map(to_minute);
        let charge_end = charge_end.map(to_minute);
        let invalid = |reason: String| SessionError::InvalidSession { reason };

        if departure <= arrival {
            return Err(invalid(format!(
                "departure {departure} not after arrival {arrival}"
            )));
        }
        if !energy_kwh.is_finite() || energy_kwh < 0.0 {
            return Err(invalid(format!("energy_kwh {energy_kwh} must be >= 0")));
        }
        for (name, t) in [("charge_start", charge_start), ("charge_end", charge_end)] {
            if let Some(t) = t {
                if t < arrival || t > departure {
                    return Err(invalid(format!(
                        "{name} {t} outside [{arrival}, {departure}]"
                    )));
                }
            }
        }
        if let (Some(cs), Some(ce)) = (charge_start, charge_end) {
            if cs > ce {
                return Err(invalid(format!("charge_start {cs} after charge_end {ce}")));
            }
        }
        Ok(Self {
            user_id: user_id.into(),
            arrival,
            departure,
            energy_kwh,
            charge_start,
            charge_end,
        })
    }

    /// Plug-in time of day in decimal hours, in `[0, 24)`.
    pub fn arrival_hours(&self) -> f64 {
        time_of_day_hours(self.arrival)
    }

    /// Plug-out time of day in decimal hours, in `[0, 24)`.
    pub fn departure_hours(&self) -> f64 {
        time_of_day_hours(self.departure)
    }

    /// Elapsed stay duration in hours. Strictly positive; overnight sessions
    /// are counted in full, not modulo 24 h.
    pub fn stay_hours(&self) -> f64 {
        (self.departure - self.arrival).num_minutes() as f64 / 60.0
    }
}

fn time_of_day_hours(t: NaiveDateTime) -> f64 {
    (t.hour() * 60 + t.minute()) as f64 / 60.0
}

/// How [`parse_sessions`] treats bad rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Any bad row fails the whole parse; all issues are in the error.
    Strict,
    /// Bad rows are skipped; issues are reported alongside the dataset.
    Lenient,
}

/// Result of a lenient or clean parse: the dataset plus any skipped rows.
#[derive(Debug)]
pub struct ParseOutcome {
    pub dataset: SessionDataset,
    pub issues: Vec<RowIssue>,
}

/// An immutable collection of sessions indexed by user.
///
/// Every session is reachable through exactly one `user_index` entry and
/// per-user order follows input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionDataset {
    sessions: Vec<ChargingSession>,
    user_index: BTreeMap<String, Vec<usize>>,
}

impl SessionDataset {
    pub fn from_sessions(sessions: Vec<ChargingSession>) -> Self {
        let mut user_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, s) in sessions.iter().enumerate() {
            user_index.entry(s.user_id.clone()).or_default().push(i);
        }
        Self {
            sessions,
            user_index,
        }
    }

    pub fn sessions(&self) -> &[ChargingSession] {
        &self.sessions
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.user_index.len()
    }

    /// User ids in sorted order.
    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.user_index.keys().map(String::as_str)
    }

    /// All sessions of `user_id` in input order; empty for an unknown user.
    pub fn sessions_by_user(&self, user_id: &str) -> Vec<&ChargingSession> {
        self.user_index
            .get(user_id)
            .map(|idx| idx.iter().map(|&i| &self.sessions[i]).collect())
            .unwrap_or_default()
    }

    /// A new dataset restricted to the given users.
    pub fn subset<'a>(&self, users: impl IntoIterator<Item = &'a str>) -> SessionDataset {
        let mut keep: Vec<usize> = users
            .into_iter()
            .filter_map(|u| self.user_index.get(u))
            .flatten()
            .copied()
            .collect();
        keep.sort_unstable();
        Self::from_sessions(keep.into_iter().map(|i| self.sessions[i].clone()).collect())
    }

    /// Largest session energy in the dataset, 0 when empty.
    pub fn max_energy_kwh(&self) -> f64 {
        self.sessions
            .iter()
            .map(|s| s.energy_kwh)
            .fold(0.0, f64::max)
    }

    /// Serialize back to the input CSV schema. The optional charge-window
    /// columns are emitted only when some session carries them.
    pub fn to_csv(&self) -> String {
        let long = self
            .sessions
            .iter()
            .any(|s| s.charge_start.is_some() || s.charge_end.is_some());
        let mut out = String::new();
        out.push_str(if long {
            "user_id,arrival,departure,energy_kwh,charge_start,charge_end\n"
        } else {
            "user_id,arrival,departure,energy_kwh\n"
        });
        let fmt_opt = |t: Option<NaiveDateTime>| {
            t.map(|t| t.format(TS_FORMAT).to_string()).unwrap_or_default()
        };
        for s in &self.sessions {
            out.push_str(&format!(
                "{},{},{},{}",
                s.user_id,
                s.arrival.format(TS_FORMAT),
                s.departure.format(TS_FORMAT),
                s.energy_kwh
            ));
            if long {
                out.push_str(&format!(
                    ",{},{}",
                    fmt_opt(s.charge_start),
                    fmt_opt(s.charge_end)
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Parse the session CSV schema.
///
/// In [`ParseMode::Strict`] any bad row yields [`SessionError::RejectedRows`]
/// carrying every issue found. In [`ParseMode::Lenient`] bad rows are skipped
/// and reported in the [`ParseOutcome`]; the resulting dataset never contains
/// a session violating [`ChargingSession`] invariants.
pub fn parse_sessions(csv_text: &str, mode: ParseMode) -> Result<ParseOutcome, SessionError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(csv_text.as_bytes());

    let header = reader.headers()?.clone();
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    let long = if fields == HEADER_SHORT {
        false
    } else if fields == HEADER_LONG {
        true
    } else {
        return Err(SessionError::BadHeader(fields.join(",")));
    };

    let mut sessions = Vec::new();
    let mut issues = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, long, line) {
            Ok(s) => sessions.push(s),
            Err(issue) => issues.push(issue),
        }
    }

    match mode {
        ParseMode::Strict if !issues.is_empty() => Err(SessionError::RejectedRows(issues)),
        _ => Ok(ParseOutcome {
            dataset: SessionDataset::from_sessions(sessions),
            issues,
        }),
    }
}

fn parse_row(record: &csv::StringRecord, long: bool, line: u64) -> Result<ChargingSession, RowIssue> {
    let expected = if long { 6 } else { 4 };
    if record.len() != expected {
        return Err(RowIssue::Malformed {
            line,
            detail: format!("expected {expected} fields, got {}", record.len()),
        });
    }
    let malformed = |detail: String| RowIssue::Malformed { line, detail };

    let user_id = record[0].trim();
    if user_id.is_empty() {
        return Err(malformed("empty user_id".into()));
    }
    let ts = |field: &str, name: &str| {
        NaiveDateTime::parse_from_str(field.trim(), TS_FORMAT)
            .map_err(|e| malformed(format!("{name} `{field}`: {e}")))
    };
    let arrival = ts(&record[1], "arrival")?;
    let departure = ts(&record[2], "departure")?;
    let energy: f64 = record[3]
        .trim()
        .parse()
        .map_err(|e| malformed(format!("energy_kwh `{}`: {e}", &record[3])))?;
    let opt_ts = |field: &str, name: &str| -> Result<Option<NaiveDateTime>, RowIssue> {
        let field = field.trim();
        if field.is_empty() {
            Ok(None)
        } else {
            ts(field, name).map(Some)
        }
    };
    let (charge_start, charge_end) = if long {
        (
            opt_ts(&record[4], "charge_start")?,
            opt_ts(&record[5], "charge_end")?,
        )
    } else {
        (None, None)
    };

    ChargingSession::new(user_id, arrival, departure, energy, charge_start, charge_end).map_err(
        |e| RowIssue::Invalid {
            line,
            reason: e.to_string(),
        },
    )
}
