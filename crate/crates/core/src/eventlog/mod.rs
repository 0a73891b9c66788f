//! Timestamped clinical event logs: ingestion, cleaning, and synthesis.

mod clean;
mod csv_io;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use clean::{clean, CleanReport, BOUNDARY_KINDS};
pub use csv_io::{ingest, ingest_path, write_csv, write_csv_path, IngestReport, CSV_HEADER};
pub use synth::{default_templates, synthesize, ArrivalSpec, LosParams, Noise, SynthOutput, SynthSpec, SynthTemplate};

/// Attribute marking events inserted by cleaning.
pub const INFERRED_ATTR: &str = "inferred";
/// Attribute carrying a procedure's duration in minutes.
pub const DURATION_ATTR: &str = "duration_min";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Entrance,
    Transfer,
    Checkup,
    Test,
    SurgeryCc,
    SurgeryPci,
    Discharge,
    Other,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Entrance => "entrance",
            EventKind::Transfer => "transfer",
            EventKind::Checkup => "checkup",
            EventKind::Test => "test",
            EventKind::SurgeryCc => "surgery_cc",
            EventKind::SurgeryPci => "surgery_pci",
            EventKind::Discharge => "discharge",
            EventKind::Other => "other",
        }
    }

    /// Parses a wire name; anything unrecognised is `Other`.
    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "entrance" => EventKind::Entrance,
            "transfer" => EventKind::Transfer,
            "checkup" => EventKind::Checkup,
            "test" => EventKind::Test,
            "surgery_cc" => EventKind::SurgeryCc,
            "surgery_pci" => EventKind::SurgeryPci,
            "discharge" => EventKind::Discharge,
            _ => EventKind::Other,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub case_id: String,
    pub timestamp: DateTime<Utc>,
    /// Empty only for discharge events, which inherit the last department.
    pub department: String,
    pub kind: EventKind,
    pub attrs: BTreeMap<String, String>,
}

impl RawEvent {
    pub fn new(
        case_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        department: impl Into<String>,
        kind: EventKind,
    ) -> Self {
        RawEvent {
            case_id: case_id.into(),
            timestamp,
            department: department.into(),
            kind,
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    pub fn is_inferred(&self) -> bool {
        self.attrs.contains_key(INFERRED_ATTR)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningFlags {
    pub resorted: bool,
    pub reconstructed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalCase {
    pub case_id: String,
    pub events: Vec<RawEvent>,
    #[serde(default)]
    pub flags: CleaningFlags,
}

impl ClinicalCase {
    pub fn new(case_id: impl Into<String>, events: Vec<RawEvent>) -> Self {
        ClinicalCase {
            case_id: case_id.into(),
            events,
            flags: CleaningFlags::default(),
        }
    }

    pub fn arrival(&self) -> Option<DateTime<Utc>> {
        self.events.first().map(|e| e.timestamp)
    }

    /// Hours from the first to the last event.
    pub fn span_hours(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => (b.timestamp - a.timestamp).num_seconds() as f64 / 3600.0,
            _ => 0.0,
        }
    }

    /// Department codes of consecutive runs of events, discharge excluded.
    pub fn department_runs(&self) -> Vec<&str> {
        let mut runs: Vec<&str> = Vec::new();
        for e in self.events.iter().filter(|e| e.kind != EventKind::Discharge) {
            if runs.last() != Some(&e.department.as_str()) {
                runs.push(&e.department);
            }
        }
        runs
    }
}

/// Parses an ISO-8601 / RFC 3339 instant, truncated to whole seconds.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let t = DateTime::parse_from_rfc3339(s.trim()).ok()?.with_timezone(&Utc);
    DateTime::from_timestamp(t.timestamp(), 0)
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Table 2-style single patient trajectory used in docs and tests.
#[doc(hidden)]
pub fn sample_trajectory_csv() -> &'static str {
    include_str!("sample_trajectory.csv")
}
