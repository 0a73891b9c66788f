//! Discrete-event simulation of target and background patient flows sharing
//! a capacity-limited angiography resource.
//!
//! Time is measured in fractional hours from the start of day 0. Each day
//! both generators emit arrivals; every patient walks a state chain, and
//! states that need angiography queue FIFO for one of the servers. After the
//! horizon no new patients arrive and the run continues until everyone has
//! been discharged.

mod engine;
mod output;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use engine::run_replication;
pub use output::{read_summaries, write_patients_jsonl, write_summary_jsonl, write_trace_csv, PatientLine};

use crate::cpmodel::FlowDistributions;
use crate::error::{Error, Result};

/// How target patients move between states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetModel {
    /// Cluster drawn per patient, positioned-state chain of that cluster.
    ClassAware,
    /// Basic-state chain shared by everyone.
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub horizon_days: usize,
    pub n_angiography: usize,
    pub background_scale: f64,
    pub target_scale: f64,
    /// Background arrivals per day as a multiple of the fitted target rate,
    /// before `background_scale` is applied.
    pub background_volume: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub warmup_days: usize,
    /// Background patients queue for angiography too.
    pub background_competes: bool,
    pub target_model: TargetModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            horizon_days: 60,
            n_angiography: 3,
            background_scale: 1.0,
            target_scale: 1.0,
            background_volume: 15.0,
            replications: 100,
            base_seed: 42,
            warmup_days: 0,
            background_competes: true,
            target_model: TargetModel::ClassAware,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.into()));
        if self.horizon_days < 1 {
            return bad("horizon_days must be at least 1");
        }
        if self.n_angiography < 1 {
            return bad("n_angiography must be at least 1");
        }
        if !(self.background_scale > 0.0 && self.target_scale > 0.0) {
            return bad("flow scales must be positive");
        }
        if !(self.background_volume >= 0.0) || !self.background_volume.is_finite() {
            return bad("background_volume must be a nonnegative number");
        }
        if self.replications < 1 {
            return bad("replications must be at least 1");
        }
        if self.warmup_days >= self.horizon_days {
            return bad("warmup_days must be shorter than the horizon");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Target,
    Background,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub state: Arc<str>,
    pub enter: f64,
    pub leave: f64,
    /// Angiography queueing time; absent for states without a request.
    pub wait: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: u64,
    pub flow: Flow,
    pub cluster: Option<usize>,
    pub arrival: f64,
    pub trajectory: Vec<Visit>,
    pub total_los: f64,
    pub completed: bool,
    /// Arrived during warm-up; excluded from statistics.
    pub warmup: bool,
}

impl PatientRecord {
    pub fn total_wait(&self) -> f64 {
        self.trajectory.iter().filter_map(|v| v.wait).sum()
    }

    pub fn requested(&self) -> bool {
        self.trajectory.iter().any(|v| v.wait.is_some())
    }

    pub fn queued(&self) -> bool {
        self.trajectory.iter().any(|v| v.wait.is_some_and(|w| w > 0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time: f64,
    pub holders: usize,
    pub queue_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceTrace {
    pub name: String,
    pub capacity: usize,
    pub points: Vec<TracePoint>,
}

impl ResourceTrace {
    pub fn max_holders(&self) -> usize {
        self.points.iter().map(|p| p.holders).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub generated: usize,
    pub completed: usize,
    pub in_system_at_end: usize,
    /// Patients (outside warm-up) that waited for angiography at least once.
    pub queued_count: usize,
    /// Patients (outside warm-up) that requested angiography at least once.
    pub requesters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: ScenarioConfig,
    pub replication: usize,
    pub seed: u64,
    pub patients: Vec<PatientRecord>,
    pub resources: Vec<ResourceTrace>,
    pub counters: Counters,
    /// Summed angiography wait of requesters outside warm-up, hours.
    pub total_wait: f64,
}

/// Queue statistics of one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub servers: usize,
    pub scale: f64,
    pub replication: usize,
    pub seed: u64,
    pub counters: Counters,
    pub max_holders: usize,
    /// Percentage of angiography requesters that had to queue.
    pub pct_queued: f64,
    /// Mean angiography wait per requester, hours.
    pub mean_wait: f64,
}

impl SimResult {
    pub fn summary(&self) -> ReplicationSummary {
        let c = &self.counters;
        let (pct, mean) = if c.requesters == 0 {
            (0.0, 0.0)
        } else {
            (
                100.0 * c.queued_count as f64 / c.requesters as f64,
                self.total_wait / c.requesters as f64,
            )
        };
        ReplicationSummary {
            servers: self.scenario.n_angiography,
            scale: self.scenario.background_scale,
            replication: self.replication,
            seed: self.seed,
            counters: c.clone(),
            max_holders: self.resources.iter().map(ResourceTrace::max_holders).max().unwrap_or(0),
            pct_queued: pct,
            mean_wait: mean,
        }
    }

    /// Total LoS of completed target patients outside warm-up.
    pub fn target_los(&self) -> impl Iterator<Item = f64> + '_ {
        self.patients
            .iter()
            .filter(|p| p.flow == Flow::Target && p.completed && !p.warmup)
            .map(|p| p.total_los)
    }
}

/// Runs every replication of a scenario, mapping each result through `f`.
///
/// Replications run in parallel on the current rayon pool; the output is
/// ordered by replication index.
pub fn run_scenario_with<T, F>(dists: &FlowDistributions, scenario: &ScenarioConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SimResult) -> T + Sync,
{
    scenario.validate()?;
    dists.validate()?;
    (0..scenario.replications)
        .into_par_iter()
        .map(|r| run_replication(dists, scenario, r).map(&f))
        .collect()
}

pub fn run_scenario(dists: &FlowDistributions, scenario: &ScenarioConfig) -> Result<Vec<SimResult>> {
    run_scenario_with(dists, scenario, |r| r)
}

/// Server counts crossed with background scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub n_angiography: Vec<usize>,
    pub scales: Vec<f64>,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        ScenarioGrid {
            n_angiography: vec![2, 3, 4, 5],
            scales: vec![0.5, 1.0, 1.5, 2.0],
        }
    }
}

impl ScenarioGrid {
    /// Cell scenarios in row-major order (servers outer, scales inner).
    pub fn cells(&self, base: &ScenarioConfig) -> Vec<ScenarioConfig> {
        self.n_angiography
            .iter()
            .flat_map(|&n| {
                self.scales.iter().map(move |&s| ScenarioConfig {
                    n_angiography: n,
                    background_scale: s,
                    ..base.clone()
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angiography.is_empty() || self.scales.is_empty() {
            return Err(Error::InvalidScenario("scenario grid is empty".into()));
        }
        Ok(())
    }
}

/// Runs all cells × replications as one parallel batch; results are grouped
/// per cell in grid order, replications ascending.
pub fn run_grid_with<T, F>(
    dists: &FlowDistributions,
    base: &ScenarioConfig,
    grid: &ScenarioGrid,
    f: F,
) -> Result<Vec<(ScenarioConfig, Vec<T>)>>
where
    T: Send,
    F: Fn(SimResult) -> T + Sync,
{
    grid.validate()?;
    dists.validate()?;
    let cells = grid.cells(base);
    for c in &cells {
        c.validate()?;
    }
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.replications).map(move |r| (i, r)))
        .collect();
    let mut flat: Vec<T> = jobs
        .into_par_iter()
        .map(|(i, r)| run_replication(dists, &cells[i], r).map(&f))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cells.len());
    for c in cells.into_iter().rev() {
        let tail = flat.split_off(flat.len() - c.replications);
        out.push((c, tail));
    }
    out.reverse();
    Ok(out)
}
