use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use super::{Counters, Flow, PatientRecord, ResourceTrace, ScenarioConfig, SimResult, TargetModel, TracePoint, Visit};
use crate::cpmodel::{FlowDistributions, StateChain};
use crate::error::Result;
use crate::rng::{self, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    ServiceEnd(usize),
    Request(usize),
    Arrival(usize),
    StateEnd(usize),
    DayStart(usize),
}

impl Event {
    /// Same-instant order: releases, then requests, then arrivals.
    fn class(self) -> u8 {
        match self {
            Event::ServiceEnd(_) => 0,
            Event::Request(_) => 1,
            Event::Arrival(_) => 2,
            Event::StateEnd(_) => 3,
            Event::DayStart(_) => 4,
        }
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Scheduled {
    /// Bit pattern of a nonnegative f64; orders like the value.
    time: u64,
    class: u8,
    seq: u64,
    event: Event,
}

#[derive(Default)]
struct Calendar {
    heap: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    clock: f64,
}

impl Calendar {
    fn schedule(&mut self, time: f64, event: Event) {
        debug_assert!(time >= self.clock && time.is_finite(), "event at {time} before clock {}", self.clock);
        self.seq += 1;
        self.heap.push(Reverse(Scheduled {
            time: time.to_bits(),
            class: event.class(),
            seq: self.seq,
            event,
        }));
    }

    fn next(&mut self) -> Option<(f64, Event)> {
        let Reverse(s) = self.heap.pop()?;
        let t = f64::from_bits(s.time);
        debug_assert!(t >= self.clock);
        self.clock = t;
        Some((t, s.event))
    }
}

struct Resource {
    capacity: usize,
    holders: usize,
    queue: VecDeque<usize>,
    trace: Vec<TracePoint>,
}

impl Resource {
    fn record(&mut self, time: f64) {
        debug_assert!(self.holders <= self.capacity);
        self.trace.push(TracePoint {
            time,
            holders: self.holders,
            queue_len: self.queue.len(),
        });
    }

    /// Grants immediately when a server is free, otherwise queues.
    fn request(&mut self, pid: usize, time: f64) -> bool {
        let granted = self.holders < self.capacity;
        if granted {
            self.holders += 1;
        } else {
            self.queue.push_back(pid);
        }
        self.record(time);
        granted
    }

    /// Frees a server and hands it to the head of the queue, if any.
    fn release(&mut self, time: f64) -> Option<usize> {
        self.holders -= 1;
        let next = self.queue.pop_front();
        if next.is_some() {
            self.holders += 1;
        }
        self.record(time);
        next
    }
}

#[derive(Clone, Copy)]
enum ChainRef {
    Cluster(usize),
    Background,
}

struct Patient {
    rng: StreamRng,
    flow: Flow,
    chain: ChainRef,
    cluster: Option<usize>,
    arrival: f64,
    day: usize,
    state: usize,
    enter: f64,
    los: f64,
    wait: Option<f64>,
    competes: bool,
    visits: Vec<Visit>,
    done: Option<f64>,
}

const COUNT_STREAM: u64 = 0;

/// Stream id of patient `k` (1-based) or of the day's count draw (`k = 0`).
fn stream_id(flow: Flow, day: usize, k: u64) -> u64 {
    let f = match flow {
        Flow::Target => 0u64,
        Flow::Background => 1u64,
    };
    (f << 63) | ((day as u64) << 32) | k
}

struct Sim<'a> {
    dists: &'a FlowDistributions,
    scenario: &'a ScenarioConfig,
    replication: u64,
    labels: Vec<(ChainRef, Vec<Arc<str>>)>,
    cal: Calendar,
    res: Resource,
    patients: Vec<Patient>,
}

fn chain_of(dists: &FlowDistributions, c: ChainRef) -> &StateChain {
    match c {
        ChainRef::Cluster(k) => &dists.clusters[&k],
        ChainRef::Background => &dists.background,
    }
}

impl Sim<'_> {

    fn label(&self, c: ChainRef, state: usize) -> Arc<str> {
        let idx = match c {
            ChainRef::Background => 0,
            ChainRef::Cluster(k) => 1 + self.dists.clusters.keys().position(|&x| x == k).expect("known cluster"),
        };
        self.labels[idx].1[state].clone()
    }

    fn generate(&mut self, day: usize, flow: Flow) {
        let s = self.scenario;
        let scale = match flow {
            Flow::Target => s.target_scale,
            Flow::Background => s.background_volume * s.background_scale,
        };
        if scale == 0.0 {
            return;
        }
        let mut count_rng = rng::stream(s.base_seed, self.replication, stream_id(flow, day, COUNT_STREAM));
        let n = self.dists.sample_count(scale, &mut count_rng);
        for k in 0..n {
            let mut prng = rng::stream(s.base_seed, self.replication, stream_id(flow, day, k as u64 + 1));
            let arrival = self.dists.sample_time(day, &mut prng);
            let (chain, cluster) = match (flow, s.target_model) {
                (Flow::Target, TargetModel::ClassAware) if !self.dists.cluster_cat.is_empty() => {
                    let c = self.dists.sample_cluster(&mut prng);
                    (ChainRef::Cluster(c), Some(c))
                }
                _ => (ChainRef::Background, None),
            };
            let pid = self.patients.len();
            self.patients.push(Patient {
                rng: prng,
                flow,
                chain,
                cluster,
                arrival,
                day,
                state: 0,
                enter: arrival,
                los: 0.0,
                wait: None,
                competes: flow == Flow::Target || s.background_competes,
                visits: Vec::new(),
                done: None,
            });
            self.cal.schedule(arrival, Event::Arrival(pid));
        }
    }

    fn enter(&mut self, pid: usize, state: usize, now: f64) {
        let chain = self.patients[pid].chain;
        if state == chain_of(self.dists, chain).end() {
            self.patients[pid].done = Some(now);
            return;
        }
        let (los, angio) = {
            let c = chain_of(self.dists, chain);
            let p = &mut self.patients[pid];
            (c.sample_los(state, &mut p.rng), c.states[state].angiography)
        };
        let p = &mut self.patients[pid];
        p.state = state;
        p.enter = now;
        p.los = los.max(0.0);
        p.wait = None;
        if angio && p.competes {
            self.cal.schedule(now, Event::Request(pid));
        } else {
            self.cal.schedule(now + p.los, Event::StateEnd(pid));
        }
    }

    fn start_service(&mut self, pid: usize, now: f64) {
        let p = &mut self.patients[pid];
        let c = chain_of(self.dists, p.chain);
        let service = c.sample_service(p.state, &mut p.rng).max(0.0);
        p.wait = Some(now - p.enter);
        let leave = now + p.los.max(service);
        self.cal.schedule(now + service, Event::ServiceEnd(pid));
        self.cal.schedule(leave, Event::StateEnd(pid));
    }

    fn run(&mut self) {
        self.cal.schedule(0.0, Event::DayStart(0));
        while let Some((now, ev)) = self.cal.next() {
            match ev {
                Event::DayStart(d) => {
                    self.generate(d, Flow::Target);
                    self.generate(d, Flow::Background);
                    if d + 1 < self.scenario.horizon_days {
                        self.cal.schedule((d + 1) as f64 * 24.0, Event::DayStart(d + 1));
                    }
                }
                Event::Arrival(pid) => {
                    let chain = self.patients[pid].chain;
                    let first = {
                        let c = chain_of(self.dists, chain);
                        c.first(&mut self.patients[pid].rng)
                    };
                    self.enter(pid, first, now);
                }
                Event::Request(pid) => {
                    if self.res.request(pid, now) {
                        self.start_service(pid, now);
                    }
                }
                Event::ServiceEnd(_) => {
                    if let Some(next) = self.res.release(now) {
                        self.start_service(next, now);
                    }
                }
                Event::StateEnd(pid) => {
                    let chain = self.patients[pid].chain;
                    let state = self.patients[pid].state;
                    let label = self.label(chain, state);
                    let next = {
                        let c = chain_of(self.dists, chain);
                        c.next(state, &mut self.patients[pid].rng)
                    };
                    let p = &mut self.patients[pid];
                    p.visits.push(Visit {
                        state: label,
                        enter: p.enter,
                        leave: now,
                        wait: p.wait,
                    });
                    self.enter(pid, next, now);
                }
            }
        }
    }
}

/// Simulates one replication; the outcome depends only on the inputs and
/// `(base_seed, replication)`.
pub fn run_replication(dists: &FlowDistributions, scenario: &ScenarioConfig, replication: usize) -> Result<SimResult> {
    scenario.validate()?;
    let chain_labels = |c: &StateChain| c.states.iter().map(|s| Arc::<str>::from(s.label.as_str())).collect::<Vec<_>>();
    let mut labels = vec![(ChainRef::Background, chain_labels(&dists.background))];
    for (&k, c) in &dists.clusters {
        labels.push((ChainRef::Cluster(k), chain_labels(c)));
    }
    let mut sim = Sim {
        dists,
        scenario,
        replication: replication as u64,
        labels,
        cal: Calendar::default(),
        res: Resource {
            capacity: scenario.n_angiography,
            holders: 0,
            queue: VecDeque::new(),
            trace: Vec::new(),
        },
        patients: Vec::new(),
    };
    sim.run();

    let mut counters = Counters {
        generated: sim.patients.len(),
        ..Counters::default()
    };
    let mut total_wait = 0.0;
    let patients: Vec<PatientRecord> = sim
        .patients
        .into_iter()
        .enumerate()
        .map(|(id, p)| {
            let warmup = p.day < scenario.warmup_days;
            let completed = p.done.is_some();
            let rec = PatientRecord {
                id: id as u64,
                flow: p.flow,
                cluster: p.cluster,
                arrival: p.arrival,
                total_los: p.done.map_or(0.0, |t| t - p.arrival),
                trajectory: p.visits,
                completed,
                warmup,
            };
            if completed {
                counters.completed += 1;
            }
            if !warmup && rec.requested() {
                counters.requesters += 1;
                total_wait += rec.total_wait();
                if rec.queued() {
                    counters.queued_count += 1;
                }
            }
            rec
        })
        .collect();
    counters.in_system_at_end = counters.generated - counters.completed;
    Ok(SimResult {
        scenario: scenario.clone(),
        replication,
        seed: rng::replication_seed(scenario.base_seed, replication as u64),
        patients,
        resources: vec![ResourceTrace {
            name: "angiography".into(),
            capacity: scenario.n_angiography,
            points: sim.res.trace,
        }],
        counters,
        total_wait,
    })
}
