//! Fit and queue statistics for simulated against observed flows.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simengine::{Flow, PatientLine, ReplicationSummary, SimResult};

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sample Kolmogorov-Smirnov distance, exact over the merged support.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Quantile of sorted data by linear interpolation between order
/// statistics, `h = (n - 1) p`.
pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn quantile(v: &[f64], p: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(quantile_sorted(&sorted(v), p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub percentile: f64,
    pub obs: f64,
    pub sim: f64,
}

/// Paired quantiles at the given percentiles (each in (0, 100)).
pub fn qq_points(observed: &[f64], simulated: &[f64], percentiles: &[f64]) -> Result<Vec<QqPoint>> {
    if observed.is_empty() || simulated.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(p) = percentiles.iter().find(|&&p| !(p > 0.0 && p < 100.0)) {
        return Err(Error::Invalid(format!("percentile {p} is outside (0, 100)")));
    }
    let (o, s) = (sorted(observed), sorted(simulated));
    Ok(percentiles
        .iter()
        .map(|&p| QqPoint {
            percentile: p,
            obs: quantile_sorted(&o, p / 100.0),
            sim: quantile_sorted(&s, p / 100.0),
        })
        .collect())
}

pub fn default_percentiles() -> Vec<f64> {
    (1..=99).map(f64::from).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(v: &[f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::EmptySample);
        }
        let s = sorted(v);
        Ok(FiveNumber {
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueCell {
    pub servers: usize,
    pub scale: f64,
    pub replications: usize,
    pub pct_queued: FiveNumber,
    pub mean_wait: FiveNumber,
}

fn cell_key(servers: usize, scale: f64) -> (usize, u64) {
    (servers, scale.to_bits())
}

/// Five-number summaries per `(servers, scale)` cell, ordered by servers
/// then scale.
pub fn queue_summary(summaries: &[ReplicationSummary]) -> Result<Vec<QueueCell>> {
    let mut cells: BTreeMap<(usize, u64), Vec<&ReplicationSummary>> = BTreeMap::new();
    for s in summaries {
        cells.entry(cell_key(s.servers, s.scale)).or_default().push(s);
    }
    let mut out: Vec<QueueCell> = cells
        .into_values()
        .map(|rs| {
            let pct: Vec<f64> = rs.iter().map(|r| r.pct_queued).collect();
            let wait: Vec<f64> = rs.iter().map(|r| r.mean_wait).collect();
            Ok(QueueCell {
                servers: rs[0].servers,
                scale: rs[0].scale,
                replications: rs.len(),
                pct_queued: FiveNumber::of(&pct)?,
                mean_wait: FiveNumber::of(&wait)?,
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.servers.cmp(&b.servers).then(a.scale.total_cmp(&b.scale)));
    Ok(out)
}

/// Simulated target LoS of one patient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LosRecord {
    pub servers: usize,
    pub scale: f64,
    pub replication: usize,
    pub cluster: Option<usize>,
    pub los: f64,
}

/// Everything the evaluator needs from one simulated grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub patients: Vec<LosRecord>,
    pub summaries: Vec<ReplicationSummary>,
}

impl ResultSet {
    pub fn push(&mut self, r: &SimResult) {
        let (servers, scale) = (r.scenario.n_angiography, r.scenario.background_scale);
        for p in r.patients.iter().filter(|p| p.flow == Flow::Target && p.completed && !p.warmup) {
            self.patients.push(LosRecord {
                servers,
                scale,
                replication: r.replication,
                cluster: p.cluster,
                los: p.total_los,
            });
        }
        self.summaries.push(r.summary());
    }

    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a SimResult>) -> Self {
        let mut s = ResultSet::default();
        for r in results {
            s.push(r);
        }
        s
    }

    /// Adds target patients from a patient JSON-lines stream.
    pub fn push_line(&mut self, line: &PatientLine) {
        let p = &line.patient;
        if p.flow == Flow::Target && p.completed && !p.warmup {
            self.patients.push(LosRecord {
                servers: line.servers,
                scale: line.scale,
                replication: line.replication,
                cluster: p.cluster,
                los: p.total_los,
            });
        }
    }

    fn cells(&self) -> BTreeSet<(usize, u64)> {
        self.summaries.iter().map(|s| cell_key(s.servers, s.scale)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareOptions {
    /// Restrict class-aware patients to these clusters.
    pub clusters: Option<Vec<usize>>,
    /// Average per-replication KS instead of pooling replications.
    pub per_replication: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks_class_aware: f64,
    pub ks_baseline: f64,
    pub ks_reduction: f64,
    pub n_observed: usize,
    pub n_class_aware: usize,
    pub n_baseline: usize,
    pub clusters: Option<Vec<usize>>,
    /// Share of observed cases in `clusters`, when set by the caller.
    pub coverage: Option<f64>,
    pub per_replication: bool,
    pub qq_points: Vec<QqPoint>,
    pub queue_summary: Vec<QueueCell>,
}

fn ks_of(observed: &[f64], recs: &[&LosRecord], per_replication: bool) -> Result<f64> {
    if !per_replication {
        let los: Vec<f64> = recs.iter().map(|r| r.los).collect();
        return ks_statistic(observed, &los);
    }
    let mut groups: BTreeMap<(usize, u64, usize), Vec<f64>> = BTreeMap::new();
    for r in recs {
        groups.entry((r.servers, r.scale.to_bits(), r.replication)).or_default().push(r.los);
    }
    if groups.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut total = 0.0;
    for v in groups.values() {
        total += ks_statistic(observed, v)?;
    }
    Ok(total / groups.len() as f64)
}

/// Scores class-aware and baseline simulations against observed total LoS.
///
/// The QQ data pair observed quantiles with pooled class-aware quantiles;
/// queue statistics come from the class-aware grid.
pub fn compare(observed: &[f64], class_aware: &ResultSet, baseline: &ResultSet, opts: &CompareOptions) -> Result<EvalReport> {
    if observed.is_empty() {
        return Err(Error::EmptySample);
    }
    if class_aware.cells() != baseline.cells() {
        return Err(Error::GridMismatch(
            "class-aware and baseline results cover different scenario cells".into(),
        ));
    }
    let aware: Vec<&LosRecord> = class_aware
        .patients
        .iter()
        .filter(|r| match (&opts.clusters, r.cluster) {
            (None, _) => true,
            (Some(keep), Some(c)) => keep.contains(&c),
            (Some(_), None) => false,
        })
        .collect();
    let base: Vec<&LosRecord> = baseline.patients.iter().collect();
    let ks_class_aware = ks_of(observed, &aware, opts.per_replication)?;
    let ks_baseline = ks_of(observed, &base, opts.per_replication)?;
    let ks_reduction = if ks_baseline > 0.0 {
        (ks_baseline - ks_class_aware) / ks_baseline
    } else {
        0.0
    };
    let aware_los: Vec<f64> = aware.iter().map(|r| r.los).collect();
    Ok(EvalReport {
        ks_class_aware,
        ks_baseline,
        ks_reduction,
        n_observed: observed.len(),
        n_class_aware: aware.len(),
        n_baseline: base.len(),
        clusters: opts.clusters.clone(),
        coverage: None,
        per_replication: opts.per_replication,
        qq_points: qq_points(observed, &aware_los, &default_percentiles())?,
        queue_summary: queue_summary(&class_aware.summaries)?,
    })
}

/// Writes `percentile,obs,sim`.
pub fn write_qq_csv<W: Write>(w: W, points: &[QqPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["percentile", "obs", "sim"])?;
    for p in points {
        w.write_record([p.percentile.to_string(), p.obs.to_string(), p.sim.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `servers,scale,stat,min,q1,med,q3,max`, one row per statistic.
pub fn write_boxplot_csv<W: Write>(w: W, cells: &[QueueCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["servers", "scale", "stat", "min", "q1", "med", "q3", "max"])?;
    for c in cells {
        for (stat, f) in [("pct_queued", &c.pct_queued), ("mean_wait", &c.mean_wait)] {
            w.write_record([
                c.servers.to_string(),
                c.scale.to_string(),
                stat.to_string(),
                f.min.to_string(),
                f.q1.to_string(),
                f.median.to_string(),
                f.q3.to_string(),
                f.max.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
