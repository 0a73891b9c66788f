use std::collections::{BTreeMap, BTreeSet};

use chrono::{NaiveDate, Timelike};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{AlignedSequence, CpGraph, Node};
use crate::cluster::ClusterModel;
use crate::error::{Error, Result};
use crate::eventlog::{ClinicalCase, DURATION_ATTR};
use crate::pathway::{position_events, BasicState, CodeMap, PathwaySequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Pool residence times by letter within a cluster instead of by positioned state.
    pub los_by_department: bool,
    /// Sample residence times from a lognormal fitted to each pool.
    pub lognormal_los: bool,
    pub bold_coverage: f64,
    /// Service pool used when the log records no surgery durations at all.
    pub fallback_service_minutes: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            los_by_department: false,
            lognormal_los: false,
            bold_coverage: 0.70,
            fallback_service_minutes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub label: String,
    /// Entering this state requires the angiography resource.
    pub angiography: bool,
    pub los_hours: Vec<f64>,
    pub service_minutes: Vec<f64>,
    /// `[mu, sigma]` of log hours when lognormal sampling is enabled.
    pub lognormal: Option<[f64; 2]>,
}

/// Absorbing Markov chain over named states; column `states.len()` is END.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateChain {
    pub name: String,
    pub states: Vec<ChainState>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

fn bootstrap<R: Rng + ?Sized>(pool: &[f64], rng: &mut R) -> f64 {
    pool[rng.random_range(0..pool.len())]
}

fn normalize(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

impl StateChain {
    pub fn end(&self) -> usize {
        self.states.len()
    }

    pub fn first<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        draw_index(&self.initial, rng)
    }

    pub fn next<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        draw_index(&self.transition[state], rng)
    }

    pub fn sample_los<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> f64 {
        let s = &self.states[state];
        match s.lognormal {
            Some([mu, sigma]) => LogNormal::new(mu, sigma).map(|d| d.sample(rng)).unwrap_or(0.0),
            None => bootstrap(&s.los_hours, rng),
        }
    }

    /// Service time in hours.
    pub fn sample_service<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> f64 {
        bootstrap(&self.states[state].service_minutes, rng) / 60.0
    }

    /// Checks stochastic rows, nonempty pools and that END is reachable from
    /// every state.
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        let bad = |m: String| Error::Invalid(format!("{}: {m}", self.name));
        if self.initial.len() != n + 1 || self.transition.len() != n {
            return Err(bad("transition matrix shape does not match the state list".into()));
        }
        for (i, row) in std::iter::once(&self.initial).chain(&self.transition).enumerate() {
            if row.len() != n + 1 || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(bad(format!("row {i} is malformed")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(bad(format!("row {i} sums to {sum}")));
            }
        }
        for s in &self.states {
            if s.los_hours.is_empty() && s.lognormal.is_none() {
                return Err(Error::EmptyPool {
                    cluster: self.name.clone(),
                    state: s.label.clone(),
                    pool: "LoS",
                });
            }
            if s.angiography && s.service_minutes.is_empty() {
                return Err(Error::EmptyPool {
                    cluster: self.name.clone(),
                    state: s.label.clone(),
                    pool: "service",
                });
            }
            if s.los_hours.iter().chain(&s.service_minutes).any(|&d| !(d >= 0.0) || !d.is_finite()) {
                return Err(bad(format!("state {} has a negative or non-finite duration", s.label)));
            }
        }
        // Backward search from END over positive-probability edges.
        let mut reaches = vec![false; n + 1];
        reaches[n] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                if !reaches[i] && self.transition[i].iter().zip(&reaches).any(|(&p, &r)| p > 0.0 && r) {
                    reaches[i] = true;
                    changed = true;
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| !reaches[i]) {
            return Err(Error::UnreachableEnd {
                chain: self.name.clone(),
                state: self.states[i].label.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowDistributions {
    /// Arrival-hour weights, 24 bins summing to 1.
    pub hour_pdf: Vec<f64>,
    /// Probability of each arrival count per day, indexed by count.
    pub daily_count: Vec<f64>,
    pub cluster_cat: BTreeMap<usize, f64>,
    /// Positioned-state chain per retained cluster.
    pub clusters: BTreeMap<usize, StateChain>,
    /// Basic-state chain fitted over every case.
    pub background: StateChain,
    pub options: FitOptions,
}

impl FlowDistributions {
    pub fn daily_mean(&self) -> f64 {
        self.daily_count.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Arrival count for one day, scaled with stochastic rounding.
    pub fn sample_count<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> usize {
        let n = draw_index(&self.daily_count, rng);
        let u: f64 = rng.random();
        (scale * n as f64 + u).floor() as usize
    }

    /// Arrival instant in hours since the start of day 0.
    pub fn sample_time<R: Rng + ?Sized>(&self, day: usize, rng: &mut R) -> f64 {
        let h = draw_index(&self.hour_pdf, rng);
        let jitter: f64 = rng.random();
        day as f64 * 24.0 + h as f64 + jitter
    }

    pub fn sample_cluster<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let keys: Vec<usize> = self.cluster_cat.keys().copied().collect();
        let weights: Vec<f64> = self.cluster_cat.values().copied().collect();
        keys[draw_index(&weights, rng)]
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: &[f64]| -> Result<()> {
            let sum: f64 = v.iter().sum();
            if v.is_empty() || v.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("{name} is not a probability vector")));
            }
            Ok(())
        };
        if self.hour_pdf.len() != 24 {
            return Err(Error::Invalid("hour_pdf must have 24 bins".into()));
        }
        check("hour_pdf", &self.hour_pdf)?;
        check("daily_count", &self.daily_count)?;
        if !self.cluster_cat.is_empty() {
            check("cluster_cat", &self.cluster_cat.values().copied().collect::<Vec<_>>())?;
        }
        for c in self.cluster_cat.keys() {
            if !self.clusters.contains_key(c) {
                return Err(Error::Invalid(format!("cluster {c} has no chain")));
            }
        }
        for chain in self.clusters.values() {
            chain.validate()?;
        }
        self.background.validate()
    }
}

/// Sorted arrival instants (hours since day 0) for one simulated day.
pub fn sample_arrivals<R: Rng + ?Sized>(dist: &FlowDistributions, day: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let n = dist.sample_count(scale, rng);
    let mut times: Vec<f64> = (0..n).map(|_| dist.sample_time(day, rng)).collect();
    times.sort_by(f64::total_cmp);
    times
}

fn lognormal_fit(pool: &[f64]) -> Option<[f64; 2]> {
    let logs: Vec<f64> = pool.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / (n - 1.0);
    Some([mu, var.sqrt().max(1e-9)])
}

fn case_services(case: &ClinicalCase, map: &CodeMap) -> Result<Vec<Vec<f64>>> {
    Ok(position_events(case, map)?
        .into_iter()
        .map(|evs| {
            evs.iter()
                .filter_map(|e| e.attrs.get(DURATION_ATTR))
                .filter_map(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite() && *v >= 0.0)
                .collect()
        })
        .collect())
}

/// Builds a chain from `(state sequence, durations, services)` walks.
fn chain_from_walks<K: Ord + Copy>(
    name: String,
    states: &[K],
    label: impl Fn(K) -> String,
    angiography: impl Fn(K) -> bool,
    walks: &[(Vec<K>, Vec<f64>, Vec<Vec<f64>>)],
    shared_los: Option<&dyn Fn(K) -> Vec<f64>>,
    fallback_service: &[f64],
    opts: &FitOptions,
) -> Result<StateChain> {
    let index: BTreeMap<K, usize> = states.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let n = states.len();
    let mut initial = vec![0.0; n + 1];
    let mut counts = vec![vec![0.0; n + 1]; n];
    let mut los = vec![Vec::new(); n];
    let mut service = vec![Vec::new(); n];
    for (walk, durations, services) in walks {
        match walk.first() {
            None => initial[n] += 1.0,
            Some(k) => initial[index[k]] += 1.0,
        }
        for (pos, k) in walk.iter().enumerate() {
            let i = index[k];
            let next = walk.get(pos + 1).map_or(n, |nk| index[nk]);
            counts[i][next] += 1.0;
            los[i].push(durations[pos]);
            service[i].extend(&services[pos]);
        }
    }
    let mut out = Vec::with_capacity(n);
    for (i, &k) in states.iter().enumerate() {
        let los_hours = match shared_los {
            Some(f) => f(k),
            None => std::mem::take(&mut los[i]),
        };
        let angio = angiography(k);
        let mut service_minutes = if angio { std::mem::take(&mut service[i]) } else { Vec::new() };
        if angio && service_minutes.is_empty() {
            service_minutes = fallback_service.to_vec();
        }
        if los_hours.is_empty() || (angio && service_minutes.is_empty()) {
            return Err(Error::EmptyPool {
                cluster: name.clone(),
                state: label(k),
                pool: if los_hours.is_empty() { "LoS" } else { "service" },
            });
        }
        out.push(ChainState {
            label: label(k),
            angiography: angio,
            lognormal: if opts.lognormal_los { lognormal_fit(&los_hours) } else { None },
            los_hours,
            service_minutes,
        });
    }
    if initial.iter().sum::<f64>() == 0.0 {
        initial[n] = 1.0;
    }
    let chain = StateChain {
        name,
        states: out,
        initial: normalize(&initial),
        transition: counts.iter().map(|r| normalize(r)).collect(),
    };
    chain.validate()?;
    Ok(chain)
}

/// Fits every distribution the simulator samples from.
///
/// `seqs` and `cases` are matched by case id. Only members of retained
/// clusters with an alignment feed the per-cluster chains; the arrival
/// process and the basic-state chain use every sequence.
pub fn fit_distributions(
    cases: &[ClinicalCase],
    seqs: &[PathwaySequence],
    model: &ClusterModel,
    alignments: &[AlignedSequence],
    graphs: &[CpGraph],
    map: &CodeMap,
    opts: &FitOptions,
) -> Result<FlowDistributions> {
    if seqs.is_empty() {
        return Err(Error::NoSamples);
    }
    let case_by_id: BTreeMap<&str, &ClinicalCase> = cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    let mut services: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
    for s in seqs {
        let case = case_by_id
            .get(s.case_id.as_str())
            .ok_or_else(|| Error::Invalid(format!("sequence {} has no matching case", s.case_id)))?;
        let sv = case_services(case, map)?;
        if sv.len() != s.codes.chars().count() {
            return Err(Error::Invalid(format!("case {} does not match its encoding", s.case_id)));
        }
        services.insert(&s.case_id, sv);
    }
    let mut all_service: Vec<f64> = services.values().flatten().flatten().copied().collect();
    if all_service.is_empty() {
        all_service = opts.fallback_service_minutes.clone();
    }

    let mut hours = [0.0; 24];
    let mut per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for s in seqs {
        let t = s.arrival();
        hours[t.hour() as usize] += 1.0;
        *per_day.entry(t.date_naive()).or_default() += 1;
    }
    let first = *per_day.keys().next().expect("nonempty");
    let last = *per_day.keys().next_back().expect("nonempty");
    let span = (last - first).num_days() as usize + 1;
    let max = per_day.values().copied().max().unwrap_or(0);
    let mut pmf = vec![0.0; max + 1];
    pmf[0] = (span - per_day.len()) as f64;
    for &n in per_day.values() {
        pmf[n] += 1.0;
    }

    let retained = model.retained();
    let total: usize = retained.iter().map(|&c| model.sizes[c]).sum();
    let cluster_cat: BTreeMap<usize, f64> = retained
        .iter()
        .map(|&c| (c, model.sizes[c] as f64 / total as f64))
        .collect();

    let seq_by_id: BTreeMap<&str, &PathwaySequence> = seqs.iter().map(|s| (s.case_id.as_str(), s)).collect();
    let mut clusters = BTreeMap::new();
    for &c in &retained {
        let graph = graphs
            .iter()
            .find(|g| g.cluster == c)
            .ok_or_else(|| Error::Invalid(format!("cluster {c} has no pathway graph")))?;
        let states: Vec<_> = graph
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::State(s) => Some(*s),
                _ => None,
            })
            .collect();
        let mut walks = Vec::new();
        for a in alignments.iter().filter(|a| a.cluster == c) {
            let s = seq_by_id
                .get(a.case_id.as_str())
                .ok_or_else(|| Error::Invalid(format!("alignment {} has no sequence", a.case_id)))?;
            walks.push((a.path.clone(), s.durations_hours(), services[a.case_id.as_str()].clone()));
        }
        let mut by_letter: BTreeMap<char, Vec<f64>> = BTreeMap::new();
        for (walk, d, _) in &walks {
            for (p, h) in walk.iter().zip(d) {
                by_letter.entry(p.letter).or_default().push(*h);
            }
        }
        let shared = |p: super::PositionedState| by_letter.get(&p.letter).cloned().unwrap_or_default();
        let chain = chain_from_walks(
            format!("cluster {c}"),
            &states,
            |p| p.to_string(),
            |p| map.is_procedure(p.letter),
            &walks,
            if opts.los_by_department { Some(&shared) } else { None },
            &all_service,
            opts,
        )?;
        let observed: BTreeSet<_> = walks.iter().flat_map(|w| w.0.iter().copied()).collect();
        if observed.len() != states.len() {
            return Err(Error::Invalid(format!("pathway graph of cluster {c} does not match its alignments")));
        }
        clusters.insert(c, chain);
    }

    let mut walks = Vec::with_capacity(seqs.len());
    for s in seqs {
        let mut walk: Vec<BasicState> = Vec::new();
        let mut dur: Vec<f64> = Vec::new();
        let mut sv: Vec<Vec<f64>> = Vec::new();
        for ((c, d), v) in s.codes.chars().zip(s.durations_hours()).zip(&services[s.case_id.as_str()]) {
            let b = map.basic(c);
            if walk.last() == Some(&b) {
                *dur.last_mut().expect("parallel") += d;
                sv.last_mut().expect("parallel").extend(v);
            } else {
                walk.push(b);
                dur.push(d);
                sv.push(v.clone());
            }
        }
        walks.push((walk, dur, sv));
    }
    let present: BTreeSet<BasicState> = walks.iter().flat_map(|w| w.0.iter().copied()).collect();
    let basic: Vec<BasicState> = BasicState::ALL.into_iter().filter(|b| present.contains(b)).collect();
    let background = chain_from_walks(
        "basic states".into(),
        &basic,
        |b| b.to_string(),
        |b| b.uses_angiography(),
        &walks,
        None,
        &all_service,
        opts,
    )?;

    let dist = FlowDistributions {
        hour_pdf: normalize(&hours),
        daily_count: normalize(&pmf),
        cluster_cat,
        clusters,
        background,
        options: opts.clone(),
    };
    dist.validate()?;
    Ok(dist)
}
