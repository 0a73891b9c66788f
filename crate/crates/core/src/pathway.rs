//! Encoding of cleaned cases as state-code strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{ClinicalCase, EventKind, RawEvent};

/// Coarse state set used by the class-blind model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasicState {
    #[serde(rename = "AD")]
    Admission,
    #[serde(rename = "CD")]
    Cardiology,
    #[serde(rename = "IC")]
    IntensiveCare,
    #[serde(rename = "OR")]
    OperatingRoom,
    #[serde(rename = "CC")]
    Catheterization,
    #[serde(rename = "AD_OD")]
    OtherDepartment,
}

impl BasicState {
    pub const ALL: [BasicState; 6] = [
        BasicState::Admission,
        BasicState::Cardiology,
        BasicState::IntensiveCare,
        BasicState::OperatingRoom,
        BasicState::Catheterization,
        BasicState::OtherDepartment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BasicState::Admission => "AD",
            BasicState::Cardiology => "CD",
            BasicState::IntensiveCare => "IC",
            BasicState::OperatingRoom => "OR",
            BasicState::Catheterization => "CC",
            BasicState::OtherDepartment => "AD_OD",
        }
    }

    pub fn index(self) -> usize {
        BasicState::ALL.iter().position(|&s| s == self).unwrap()
    }

    /// States served by the angiography resource.
    pub fn uses_angiography(self) -> bool {
        matches!(self, BasicState::OperatingRoom | BasicState::Catheterization)
    }
}

impl fmt::Display for BasicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Department to state-letter mapping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeMap {
    pub departments: BTreeMap<String, char>,
    /// Coronary catheterization pseudo-state.
    pub cc_code: char,
    /// Operating room (PCI) pseudo-state.
    pub or_code: char,
    pub admission_code: char,
    /// Department hosting synthesized procedures.
    pub procedure_department: String,
    pub basic_states: BTreeMap<char, BasicState>,
}

impl Default for CodeMap {
    fn default() -> Self {
        let departments = [
            ("AD", 'A'),
            ("IC#1", 'F'),
            ("IC#2", 'F'),
            ("CD#1", 'E'),
            ("CD#2", 'D'),
            ("SD#1", 'I'),
            ("SD#2", 'I'),
            ("OD", 'N'),
        ]
        .into_iter()
        .map(|(d, c)| (d.to_string(), c))
        .collect();
        let basic_states = [
            ('A', BasicState::Admission),
            ('F', BasicState::IntensiveCare),
            ('I', BasicState::OperatingRoom),
            ('C', BasicState::Catheterization),
            ('E', BasicState::Cardiology),
            ('D', BasicState::Cardiology),
            ('N', BasicState::OtherDepartment),
        ]
        .into_iter()
        .collect();
        CodeMap {
            departments,
            cc_code: 'C',
            or_code: 'I',
            admission_code: 'A',
            procedure_department: "SD#1".to_string(),
            basic_states,
        }
    }
}

impl CodeMap {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCodeMap(m));
        for (dept, &c) in &self.departments {
            if dept.is_empty() {
                return bad("empty department name".into());
            }
            if !c.is_ascii_uppercase() {
                return bad(format!("code `{c}` for `{dept}` is not an uppercase letter"));
            }
        }
        for (name, c) in [("cc", self.cc_code), ("or", self.or_code), ("admission", self.admission_code)] {
            if !c.is_ascii_uppercase() {
                return bad(format!("{name} code `{c}` is not an uppercase letter"));
            }
        }
        if self.cc_code == self.or_code {
            return bad("cc_code and or_code must differ".into());
        }
        if self.admission_code == self.cc_code || self.admission_code == self.or_code {
            return bad("admission_code must differ from the procedure codes".into());
        }
        if !self.departments.values().any(|&c| c == self.admission_code) {
            return bad(format!("admission code `{}` is not mapped by any department", self.admission_code));
        }
        for c in self.alphabet() {
            if !self.basic_states.contains_key(&c) {
                return bad(format!("letter `{c}` has no basic state"));
            }
        }
        Ok(())
    }

    pub fn alphabet(&self) -> BTreeSet<char> {
        let mut set: BTreeSet<char> = self.departments.values().copied().collect();
        set.insert(self.cc_code);
        set.insert(self.or_code);
        set
    }

    pub fn contains(&self, c: char) -> bool {
        c == self.cc_code || c == self.or_code || self.departments.values().any(|&d| d == c)
    }

    /// Basic state of a letter; unknown letters fall into "other departments".
    pub fn basic(&self, c: char) -> BasicState {
        self.basic_states.get(&c).copied().unwrap_or(BasicState::OtherDepartment)
    }

    pub fn is_procedure(&self, c: char) -> bool {
        c == self.cc_code || c == self.or_code
    }

    /// Departments that map to `c`, in name order.
    pub fn departments_for(&self, c: char) -> Vec<&str> {
        self.departments
            .iter()
            .filter(|(_, &v)| v == c)
            .map(|(d, _)| d.as_str())
            .collect()
    }

    fn state_of(&self, department: &str, kind: EventKind) -> Result<char> {
        match kind {
            EventKind::SurgeryCc => Ok(self.cc_code),
            EventKind::SurgeryPci => Ok(self.or_code),
            _ => self
                .departments
                .get(department)
                .copied()
                .ok_or_else(|| Error::UnmappedDepartment(department.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Features {
    /// Sequence length in codes.
    pub los_feat: u32,
    /// Coronary catheterizations.
    pub noc: u32,
    /// Surgeries (PCI).
    pub nos: u32,
}

impl Features {
    pub const NAMES: [&'static str; 3] = ["LoS", "NoC", "NoS"];

    pub fn of(codes: &str, cc_code: char, or_code: char) -> Self {
        let mut f = Features::default();
        for c in codes.chars() {
            f.los_feat += 1;
            if c == cc_code {
                f.noc += 1;
            }
            if c == or_code {
                f.nos += 1;
            }
        }
        f
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.los_feat as f64, self.noc as f64, self.nos as f64]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathwaySequence {
    pub case_id: String,
    pub codes: String,
    pub features: Features,
    /// Enter and leave instants of each code position.
    pub state_times: Vec<(DateTime<Utc>, DateTime<Utc>)>,
}

impl PathwaySequence {
    pub fn arrival(&self) -> DateTime<Utc> {
        self.state_times[0].0
    }

    /// Residence time per code position, in hours.
    pub fn durations_hours(&self) -> Vec<f64> {
        self.state_times
            .iter()
            .map(|(a, b)| (*b - *a).num_seconds() as f64 / 3600.0)
            .collect()
    }

    pub fn total_los_hours(&self) -> f64 {
        let first = self.state_times.first().map(|s| s.0);
        let last = self.state_times.last().map(|s| s.1);
        match (first, last) {
            (Some(a), Some(b)) => (b - a).num_seconds() as f64 / 3600.0,
            _ => 0.0,
        }
    }
}

/// Encodes a cleaned case, one code per maximal run of identical states.
///
/// Procedure events map to the CC/OR pseudo-states wherever they are hosted.
/// Discharge events only close the final state.
pub fn encode(case: &ClinicalCase, map: &CodeMap) -> Result<PathwaySequence> {
    let mut codes = String::new();
    let mut enters: Vec<DateTime<Utc>> = Vec::new();
    let mut last: Option<char> = None;
    for e in case.events.iter().filter(|e| e.kind != EventKind::Discharge) {
        let c = map.state_of(&e.department, e.kind)?;
        if last != Some(c) {
            codes.push(c);
            enters.push(e.timestamp);
            last = Some(c);
        }
    }
    if codes.is_empty() {
        return Err(Error::EmptyCase(case.case_id.clone()));
    }
    let end = case.events.last().map(|e| e.timestamp).unwrap_or(enters[0]);
    let state_times = enters
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, enters.get(i + 1).copied().unwrap_or(end)))
        .collect();
    Ok(PathwaySequence {
        case_id: case.case_id.clone(),
        features: Features::of(&codes, map.cc_code, map.or_code),
        codes,
        state_times,
    })
}

/// Non-discharge events of a case grouped by the code position they fall in.
pub fn position_events<'a>(case: &'a ClinicalCase, map: &CodeMap) -> Result<Vec<Vec<&'a RawEvent>>> {
    let mut groups: Vec<Vec<&RawEvent>> = Vec::new();
    let mut last: Option<char> = None;
    for e in case.events.iter().filter(|e| e.kind != EventKind::Discharge) {
        let c = map.state_of(&e.department, e.kind)?;
        if last != Some(c) {
            groups.push(Vec::new());
            last = Some(c);
        }
        groups.last_mut().expect("pushed above").push(e);
    }
    Ok(groups)
}

pub fn encode_all(cases: &[ClinicalCase], map: &CodeMap) -> Result<Vec<PathwaySequence>> {
    cases.iter().map(|c| encode(c, map)).collect()
}

pub fn features(seq: &PathwaySequence) -> Features {
    seq.features
}

/// Writes `case_id,codes,los_feat,noc,nos`.
pub fn write_encoded_csv<W: Write>(seqs: &[PathwaySequence], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["case_id", "codes", "los_feat", "noc", "nos"])?;
    for s in seqs {
        w.write_record([
            s.case_id.clone(),
            s.codes.clone(),
            s.features.los_feat.to_string(),
            s.features.noc.to_string(),
            s.features.nos.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{clean, ingest, sample_trajectory_csv, RawEvent};

    fn t(h: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_388_534_400 + h * 3600, 0).unwrap()
    }

    fn visits(depts: &[(&str, EventKind)]) -> ClinicalCase {
        let mut events: Vec<RawEvent> = depts
            .iter()
            .enumerate()
            .map(|(i, (d, k))| RawEvent::new("c", t(i as i64), *d, *k))
            .collect();
        let last = events.last().unwrap().department.clone();
        events.push(RawEvent::new("c", t(depts.len() as i64 + 3), last, EventKind::Discharge));
        ClinicalCase::new("c", events)
    }

    fn small_map() -> CodeMap {
        let mut m = CodeMap::default();
        m.departments = [("AD", 'A'), ("IC", 'F'), ("OR", 'I'), ("CD", 'E')]
            .into_iter()
            .map(|(d, c)| (d.to_string(), c))
            .collect();
        m
    }

    #[test]
    fn encodes_worked_example() {
        let case = visits(&[
            ("AD", EventKind::Entrance),
            ("IC", EventKind::Transfer),
            ("OR", EventKind::SurgeryPci),
            ("IC", EventKind::Transfer),
            ("CD", EventKind::Transfer),
        ]);
        let seq = encode(&case, &small_map()).unwrap();
        assert_eq!(seq.codes, "AFIFE");
        assert_eq!(seq.state_times.len(), 5);
        assert_eq!(seq.state_times[4].1, t(8));
    }

    #[test]
    fn runs_collapse() {
        let case = visits(&[
            ("AD", EventKind::Entrance),
            ("IC", EventKind::Transfer),
            ("IC", EventKind::Checkup),
            ("CD", EventKind::Transfer),
        ]);
        assert_eq!(encode(&case, &small_map()).unwrap().codes, "AFE");
    }

    #[test]
    fn minimal_case() {
        let case = visits(&[("AD", EventKind::Entrance)]);
        let seq = encode(&case, &small_map()).unwrap();
        assert_eq!(seq.codes, "A");
        assert_eq!(seq.total_los_hours(), 4.0);
    }

    #[test]
    fn errors() {
        let case = visits(&[("AD", EventKind::Entrance), ("XX", EventKind::Transfer)]);
        match encode(&case, &small_map()) {
            Err(Error::UnmappedDepartment(d)) => assert_eq!(d, "XX"),
            other => panic!("{other:?}"),
        }
        let empty = ClinicalCase::new("e", vec![RawEvent::new("e", t(0), "AD", EventKind::Discharge)]);
        assert!(matches!(encode(&empty, &small_map()), Err(Error::EmptyCase(_))));
    }

    #[test]
    fn feature_counts() {
        assert_eq!(Features::of("ACIFE", 'C', 'I'), Features { los_feat: 5, noc: 1, nos: 1 });
        assert_eq!(Features::of("A", 'C', 'I'), Features { los_feat: 1, noc: 0, nos: 0 });
        assert_eq!(Features::of("ACIFICIFE", 'C', 'I'), Features { los_feat: 9, noc: 2, nos: 3 });
    }

    #[test]
    fn sample_trajectory_encoding() {
        let (cases, _) = ingest(sample_trajectory_csv().as_bytes()).unwrap();
        let (cases, _) = clean(&cases);
        let seq = encode(&cases[0], &CodeMap::default()).unwrap();
        assert_eq!(seq.codes, "AFCFEDIFE");
        assert_eq!(seq.features, Features { los_feat: 9, noc: 1, nos: 1 });
        // 18:43 on Jan 1 to 11:57 on Jan 24.
        assert!((seq.total_los_hours() - (22.0 * 24.0 + 17.0 + 14.0 / 60.0)).abs() < 1e-9);
        let spans: f64 = seq.durations_hours().iter().sum();
        assert!((spans - seq.total_los_hours()).abs() < 1e-9);
    }

    #[test]
    fn default_map_is_valid() {
        CodeMap::default().validate().unwrap();
        let mut m = CodeMap::default();
        m.or_code = 'C';
        assert!(m.validate().is_err());
        let mut m = CodeMap::default();
        m.admission_code = 'Z';
        assert!(m.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn procedure_counts_bounded(codes in "[ACDEFIN]{1,30}") {
                let f = Features::of(&codes, 'C', 'I');
                prop_assert!(f.noc + f.nos <= f.los_feat);
            }
        }
    }
}
