//! Synthetic event logs built from weighted pathway templates.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_distr::{Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use super::{ClinicalCase, EventKind, RawEvent, DURATION_ATTR};
use crate::error::{Error, Result};
use crate::pathway::CodeMap;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LosParams {
    pub mean: f64,
    pub sd: f64,
}

impl LosParams {
    pub const fn new(mean: f64, sd: f64) -> Self {
        LosParams { mean, sd }
    }

    /// Lognormal with this mean and standard deviation.
    pub fn lognormal(&self) -> Result<LogNormal<f64>> {
        if !(self.mean > 0.0) || !(self.sd >= 0.0) {
            return Err(Error::InvalidSynthSpec(format!(
                "LoS mean {} / sd {} must be positive / nonnegative",
                self.mean, self.sd
            )));
        }
        let sigma2 = (1.0 + (self.sd / self.mean).powi(2)).ln();
        LogNormal::new(self.mean.ln() - sigma2 / 2.0, sigma2.sqrt())
            .map_err(|e| Error::InvalidSynthSpec(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTemplate {
    pub codes: String,
    pub weight: f64,
    /// Hours spent in each template position.
    pub los: Vec<LosParams>,
}

impl SynthTemplate {
    pub fn new(codes: &str, weight: f64, los: &[(f64, f64)]) -> Self {
        SynthTemplate {
            codes: codes.to_string(),
            weight,
            los: los.iter().map(|&(m, s)| LosParams::new(m, s)).collect(),
        }
    }

    /// Every position gets the same stay distribution.
    pub fn uniform(codes: &str, weight: f64, los: LosParams) -> Self {
        SynthTemplate {
            codes: codes.to_string(),
            weight,
            los: vec![los; codes.chars().count()],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub p_insert: f64,
    pub p_delete: f64,
    pub p_swap: f64,
}

impl Noise {
    pub const fn uniform(p: f64) -> Self {
        Noise { p_insert: p, p_delete: p, p_swap: p }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrivalSpec {
    pub daily_mean: f64,
    pub daily_sd: f64,
    pub hour_weights: [f64; 24],
}

impl Default for ArrivalSpec {
    /// Patients per day 1.57 / 1.48 (mean / sd), daytime-weighted entrances.
    fn default() -> Self {
        ArrivalSpec {
            daily_mean: 1.57,
            daily_sd: 1.48,
            hour_weights: [
                2.0, 1.5, 1.2, 1.0, 1.0, 1.2, 1.8, 2.6, 3.6, 4.6, 5.4, 5.8, //
                5.8, 5.6, 5.4, 5.2, 5.0, 4.8, 4.6, 4.2, 3.8, 3.2, 2.8, 2.4,
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_cases: usize,
    pub templates: Vec<SynthTemplate>,
    pub noise: Noise,
    pub arrival: ArrivalSpec,
    /// Procedure duration in minutes, recorded on CC/PCI events.
    pub procedure_minutes: LosParams,
    pub start: DateTime<Utc>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_cases: 3434,
            templates: default_templates(),
            noise: Noise::uniform(0.03),
            arrival: ArrivalSpec::default(),
            procedure_minutes: LosParams::new(43.92, 28.71),
            start: DateTime::from_timestamp(1_388_534_400, 0).unwrap(),
            seed: 42,
        }
    }
}

/// Four pathway classes with clearly different stays.
pub fn default_templates() -> Vec<SynthTemplate> {
    vec![
        SynthTemplate::new(
            "AFIFE",
            0.35,
            &[(2.0, 1.5), (18.0, 20.0), (2.0, 1.0), (30.0, 40.0), (100.0, 120.0)],
        ),
        SynthTemplate::new("AFE", 0.25, &[(3.0, 2.0), (24.0, 30.0), (60.0, 60.0)]),
        SynthTemplate::new(
            "ACFIFDE",
            0.2,
            &[
                (2.0, 1.0),
                (3.0, 2.0),
                (40.0, 50.0),
                (2.0, 1.0),
                (60.0, 70.0),
                (150.0, 180.0),
                (120.0, 150.0),
            ],
        ),
        SynthTemplate::new(
            "AEFNINFEDE",
            0.2,
            &[
                (2.0, 1.0),
                (30.0, 30.0),
                (24.0, 30.0),
                (48.0, 50.0),
                (2.0, 1.0),
                (72.0, 80.0),
                (24.0, 30.0),
                (100.0, 120.0),
                (100.0, 120.0),
                (80.0, 90.0),
            ],
        ),
    ]
}

impl SynthSpec {
    pub fn validate(&self, map: &CodeMap) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthSpec(m));
        if self.templates.is_empty() {
            return bad("template list is empty".into());
        }
        let mut total = 0.0;
        for t in &self.templates {
            if !(t.weight >= 0.0) || !t.weight.is_finite() {
                return bad(format!("template `{}` has invalid weight {}", t.codes, t.weight));
            }
            total += t.weight;
            let letters: Vec<char> = t.codes.chars().collect();
            if letters.first() != Some(&map.admission_code) {
                return bad(format!("template `{}` must start with the admission code", t.codes));
            }
            if let Some(c) = letters.iter().find(|&&c| !map.contains(c)) {
                return bad(format!("template `{}` uses unmapped code `{c}`", t.codes));
            }
            if letters.windows(2).any(|w| w[0] == w[1]) {
                return bad(format!("template `{}` repeats a code consecutively", t.codes));
            }
            if t.los.len() != letters.len() {
                return bad(format!("template `{}` needs one LoS entry per code", t.codes));
            }
            for l in &t.los {
                l.lognormal()?;
            }
        }
        if !(total > 0.0) {
            return bad("template weights sum to zero".into());
        }
        for (name, p) in [
            ("p_insert", self.noise.p_insert),
            ("p_delete", self.noise.p_delete),
            ("p_swap", self.noise.p_swap),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if !(self.arrival.daily_mean > 0.0) || !(self.arrival.daily_sd >= 0.0) {
            return bad("daily arrival mean must be positive and sd nonnegative".into());
        }
        if self.arrival.hour_weights.iter().any(|w| !(*w >= 0.0))
            || self.arrival.hour_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("hour weights must be nonnegative with a positive sum".into());
        }
        self.procedure_minutes.lognormal()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub cases: Vec<ClinicalCase>,
    /// Generating template index of every case.
    pub ground_truth: BTreeMap<String, usize>,
}

/// Daily arrival counts: negative binomial when overdispersed, else Poisson.
struct DailyCounts {
    gamma: Option<Gamma<f64>>,
    mean: f64,
}

impl DailyCounts {
    fn new(mean: f64, sd: f64) -> Result<Self> {
        let var = sd * sd;
        let gamma = if var > mean {
            let scale = (var - mean) / mean;
            Some(Gamma::new(mean / scale, scale).map_err(|e| Error::InvalidSynthSpec(e.to_string()))?)
        } else {
            None
        };
        Ok(DailyCounts { gamma, mean })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let lambda = match &self.gamma {
            Some(g) => g.sample(rng),
            None => self.mean,
        };
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0)
    }
}

type Stay = (char, LosParams);

fn apply_noise<R: Rng>(stays: &[Stay], noise: &Noise, alphabet: &[char], rng: &mut R) -> Vec<Stay> {
    let mut out: Vec<Stay> = Vec::with_capacity(stays.len() + 2);
    let mut i = 0;
    while i < stays.len() {
        let (u_del, u_swap, u_ins): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let letter = alphabet[rng.random_range(0..alphabet.len())];
        // The admission position is never mutated.
        if i > 0 && u_del < noise.p_delete {
            i += 1;
            continue;
        }
        if i > 0 && i + 1 < stays.len() && u_swap < noise.p_swap {
            out.push(stays[i + 1]);
            out.push(stays[i]);
            i += 2;
        } else {
            out.push(stays[i]);
            i += 1;
        }
        if u_ins < noise.p_insert {
            let los = out.last().unwrap().1;
            out.push((letter, los));
        }
    }
    out.dedup_by(|b, a| a.0 == b.0);
    out
}

/// Builds `n_cases` synthetic cases; fully determined by `spec.seed`.
pub fn synthesize(spec: &SynthSpec, map: &CodeMap) -> Result<SynthOutput> {
    map.validate()?;
    spec.validate(map)?;

    let mut rng = rng::seeded(spec.seed);
    let picker = WeightedIndex::new(spec.templates.iter().map(|t| t.weight))
        .map_err(|e| Error::InvalidSynthSpec(e.to_string()))?;
    let hours = WeightedIndex::new(spec.arrival.hour_weights.iter().copied())
        .map_err(|e| Error::InvalidSynthSpec(e.to_string()))?;
    let counts = DailyCounts::new(spec.arrival.daily_mean, spec.arrival.daily_sd)?;
    let procedure = spec.procedure_minutes.lognormal()?;
    let noise_alphabet: Vec<char> = map
        .alphabet()
        .into_iter()
        .filter(|&c| c != map.admission_code)
        .collect();
    let stays: Vec<Vec<Stay>> = spec
        .templates
        .iter()
        .map(|t| t.codes.chars().zip(t.los.iter().copied()).collect())
        .collect();

    let mut cases = Vec::with_capacity(spec.n_cases);
    let mut ground_truth = BTreeMap::new();
    let mut day: i64 = 0;
    while cases.len() < spec.n_cases {
        let n = counts.sample(&mut rng);
        let mut offsets: Vec<i64> = (0..n)
            .map(|_| {
                let h = hours.sample(&mut rng) as f64;
                ((h + rng.random::<f64>()) * 3600.0) as i64
            })
            .collect();
        offsets.sort_unstable();
        for off in offsets {
            if cases.len() == spec.n_cases {
                break;
            }
            let arrival = spec.start + Duration::days(day) + Duration::seconds(off);
            let which = picker.sample(&mut rng);
            let path = apply_noise(&stays[which], &spec.noise, &noise_alphabet, &mut rng);
            let case_id = format!("P{:06}", cases.len() + 1);
            let case = expand(&case_id, arrival, &path, map, &procedure, &mut rng)?;
            ground_truth.insert(case_id, which);
            cases.push(case);
        }
        day += 1;
    }
    Ok(SynthOutput { cases, ground_truth })
}

fn expand<R: Rng>(
    case_id: &str,
    arrival: DateTime<Utc>,
    path: &[Stay],
    map: &CodeMap,
    procedure: &LogNormal<f64>,
    rng: &mut R,
) -> Result<ClinicalCase> {
    let mut events = Vec::new();
    let mut now = arrival;
    let mut department = String::new();
    for (pos, (letter, los)) in path.iter().enumerate() {
        let hours = los.lognormal()?.sample(rng);
        let stay = Duration::seconds(((hours * 3600.0).round() as i64).max(1));
        let (kind, dept) = if *letter == map.cc_code || *letter == map.or_code {
            let kind = if *letter == map.cc_code { EventKind::SurgeryCc } else { EventKind::SurgeryPci };
            (kind, map.procedure_department.clone())
        } else {
            let options = map.departments_for(*letter);
            let dept = options[rng.random_range(0..options.len())].to_string();
            let kind = if pos == 0 { EventKind::Entrance } else { EventKind::Transfer };
            (kind, dept)
        };
        let mut event = RawEvent::new(case_id, now, &dept, kind);
        if matches!(kind, EventKind::SurgeryCc | EventKind::SurgeryPci) {
            event = event.with_attr(DURATION_ATTR, format!("{:.1}", procedure.sample(rng).max(1.0)));
        }
        events.push(event);
        if !matches!(kind, EventKind::SurgeryCc | EventKind::SurgeryPci) {
            let checkups = ((hours / 24.0) as usize).min(3);
            let mut at: Vec<i64> = (0..checkups)
                .map(|_| rng.random_range(0..stay.num_seconds()))
                .collect();
            at.sort_unstable();
            for s in at {
                events.push(RawEvent::new(case_id, now + Duration::seconds(s), &dept, EventKind::Checkup));
            }
        }
        department = dept;
        now += stay;
    }
    events.push(RawEvent::new(case_id, now, department, EventKind::Discharge));
    Ok(ClinicalCase::new(case_id, events))
}
