//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pathflow::analysis::{compare, queue_summary, CompareOptions, QueueCell, ResultSet};
use pathflow::classify::DecisionTree;
use pathflow::cluster::{adjusted_rand_index, kmedoids, levenshtein, select_k, ClusterModel, Coded};
use pathflow::cpmodel::{align, ChainState, FitOptions, FlowDistributions, StateChain, Template, TemplateSource};
use pathflow::eventlog::{clean, ingest, synthesize, write_csv, LosParams, Noise, SynthSpec, SynthTemplate};
use pathflow::pathway::{encode_all, CodeMap, PathwaySequence};
use pathflow::pipeline::{fit, mine, MineParams};
use pathflow::rng::seeded;
use pathflow::simengine::{
    run_grid_with, run_replication, ReplicationSummary, ScenarioConfig, ScenarioGrid, TargetModel,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn sequences(cases: &[pathflow::eventlog::ClinicalCase]) -> Vec<PathwaySequence> {
    let (cases, _) = clean(cases);
    encode_all(&cases, &CodeMap::default()).unwrap()
}

fn c1_alignment() -> Outcome {
    let t = Template::new(0, "AEFNINFEDE", TemplateSource::Config, &CodeMap::default()).unwrap();
    let cases = [
        ("AFIFDE", "A0F2I4F6D8E9"),
        ("AFINFE", "A0F2I4N5F6E7"),
        ("AFIFD", "A0F2I4F6D8"),
    ];
    let mut got = Vec::new();
    for (input, want) in cases {
        let a = align(input, input, &t);
        got.push(a.notation());
        if a.notation() != want {
            return outcome(false, format!("{input} -> {} (want {want})", a.notation()));
        }
    }
    outcome(true, got.join(" / "))
}

/// Plain recursion with memoization over suffixes.
fn oracle_distance(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&d) = memo.get(&(a.len(), b.len())) {
        return d;
    }
    let cost = usize::from(a[0] != b[0]);
    let d = (oracle_distance(&a[1..], b, memo) + 1)
        .min(oracle_distance(a, &b[1..], memo) + 1)
        .min(oracle_distance(&a[1..], &b[1..], memo) + cost);
    memo.insert((a.len(), b.len()), d);
    d
}

fn oracle(a: &str, b: &str) -> usize {
    oracle_distance(a.as_bytes(), b.as_bytes(), &mut HashMap::new())
}

fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |c| format!("{s}{c}")))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn c2_levenshtein() -> Outcome {
    let strings = all_strings(&['A', 'F', 'E'], 5);
    let mut pairs = 0usize;
    let mut mismatches = 0usize;
    for a in &strings {
        for b in &strings {
            pairs += 1;
            if levenshtein(a, b) != oracle(a, b) {
                mismatches += 1;
            }
        }
    }
    let alphabet: Vec<char> = CodeMap::default().alphabet().into_iter().collect();
    let mut rng = seeded(2);
    for _ in 0..10_000 {
        let mut word = || -> String {
            let n = rng.random_range(0..=12);
            (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        };
        let (a, b) = (word(), word());
        pairs += 1;
        if levenshtein(&a, &b) != oracle(&a, &b) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{pairs} pairs, {mismatches} mismatches"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn c3_clustering() -> Outcome {
    let planted = ["ACF", "ACN", "AECD", "ACEDFENDNFNF"];
    let weights = [1.0, 1.0, 1.0, 2.0];
    let mut aris = Vec::new();
    let mut picked_four = 0;
    for s in 0..20u64 {
        let spec = SynthSpec {
            n_cases: 400,
            templates: planted
                .iter()
                .zip(weights)
                .map(|(t, w)| SynthTemplate::uniform(t, w, LosParams::new(10.0, 5.0)))
                .collect(),
            noise: Noise::uniform(0.05),
            seed: 1000 + s,
            ..SynthSpec::default()
        };
        let out = synthesize(&spec, &CodeMap::default()).unwrap();
        let seqs = sequences(&out.cases);
        let chosen = select_k(&seqs, &(2..=8).collect::<Vec<_>>(), s).unwrap();
        let model = if chosen.k == 4 {
            picked_four += 1;
            chosen
        } else {
            kmedoids(&seqs, 4, s).unwrap()
        };
        let truth: Vec<usize> = seqs.iter().map(|q| out.ground_truth[q.id()]).collect();
        let got: Vec<usize> = seqs.iter().map(|q| model.cluster_of(q.id()).unwrap()).collect();
        aris.push(adjusted_rand_index(&truth, &got));
    }
    let med = median(aris);
    outcome(
        med >= 0.9 && picked_four >= 16,
        format!("median ARI {med:.3}, k=4 chosen in {picked_four}/20 seeds"),
    )
}

struct Plain(String, String);

impl Coded for Plain {
    fn id(&self) -> &str {
        &self.0
    }
    fn codes(&self) -> &str {
        &self.1
    }
}

fn c4_discard() -> Outcome {
    let groups = [("AFE", 30), ("AEFNINFEDE", 25), ("CCCCCCCCCCCC", 3), ("NNNNNNNNNNNNNNNN", 5)];
    let seqs: Vec<Plain> = groups
        .iter()
        .flat_map(|&(codes, n)| (0..n).map(move |i| Plain(format!("{codes}-{i}"), codes.to_string())))
        .collect();
    let mut ok = true;
    let mut flagged = Vec::new();
    for seed in 0..5 {
        let a = kmedoids(&seqs, 4, seed).unwrap();
        let b = kmedoids(&seqs, 4, seed).unwrap();
        ok &= a == b;
        for c in 0..a.k {
            ok &= a.is_discarded(c) == (a.sizes[c] < 5);
        }
        ok &= a.discarded.len() == 1;
        flagged.push(a.discarded.iter().map(|&c| a.sizes[c]).collect::<Vec<_>>());
    }
    outcome(ok, format!("discarded cluster sizes per seed {flagged:?}"))
}

fn poisson_pmf(lambda: f64, max: usize) -> Vec<f64> {
    let mut p = vec![(-lambda).exp()];
    for n in 1..=max {
        let prev = p[n - 1];
        p.push(prev * lambda / n as f64);
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|x| x / total).collect()
}

fn erlang_c_wait(lambda: f64, mu: f64, c: usize) -> f64 {
    let a = lambda / mu;
    let rho = a / c as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..c {
        term *= a / k as f64;
        sum += term;
    }
    let last = term * a / c as f64 / (1.0 - rho);
    let p_wait = last / (sum + last);
    p_wait / (c as f64 * mu - lambda)
}

fn c5_queueing() -> Outcome {
    let n = 20_000;
    let service: Vec<f64> = (0..n)
        .map(|i| -60.0 * (1.0 - (i as f64 + 0.5) / n as f64).ln())
        .collect();
    let chain = StateChain {
        name: "mmc".into(),
        states: vec![ChainState {
            label: "CC".into(),
            angiography: true,
            los_hours: vec![0.0],
            service_minutes: service,
            lognormal: None,
        }],
        initial: vec![1.0, 0.0],
        transition: vec![vec![0.0, 1.0]],
    };
    let dists = FlowDistributions {
        hour_pdf: vec![1.0 / 24.0; 24],
        daily_count: poisson_pmf(72.0, 200),
        cluster_cat: BTreeMap::from([(0, 1.0)]),
        clusters: BTreeMap::from([(0, chain.clone())]),
        background: chain,
        options: FitOptions::default(),
    };
    let warmup = 10;
    let horizon = 1500;
    let scenario = ScenarioConfig {
        horizon_days: horizon,
        n_angiography: 4,
        background_volume: 0.0,
        replications: 1,
        base_seed: 5,
        warmup_days: warmup,
        ..ScenarioConfig::default()
    };
    let r = run_replication(&dists, &scenario, 0).unwrap();
    let kept: Vec<_> = r.patients.iter().filter(|p| !p.warmup).collect();
    let mean_wait = kept.iter().map(|p| p.total_wait()).sum::<f64>() / kept.len() as f64;
    let sojourn = kept.iter().map(|p| p.total_los).sum::<f64>() / kept.len() as f64;

    let (t0, t1) = (warmup as f64 * 24.0, horizon as f64 * 24.0);
    let points = &r.resources[0].points;
    let mut area = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0].time.max(t0), w[1].time.min(t1));
        if b > a {
            area += (w[0].holders + w[0].queue_len) as f64 * (b - a);
        }
    }
    let in_system = area / (t1 - t0);
    let lambda = 3.0;
    let wq = erlang_c_wait(lambda, 1.0, 4);
    let little = lambda * sojourn;
    let wait_err = (mean_wait - wq).abs() / wq;
    let little_err = (in_system - little).abs() / little;
    outcome(
        r.patients.len() >= 100_000 && wait_err <= 0.10 && little_err <= 0.10,
        format!(
            "{} patients; Wq sim {mean_wait:.4} h vs Erlang-C {wq:.4} h ({:.1}%); L {in_system:.3} vs lambda*W {little:.3} ({:.1}%)",
            r.patients.len(),
            100.0 * wait_err,
            100.0 * little_err
        ),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_pathflow"))
        .args(args)
        .stderr(std::process::Stdio::null())
        .stdout(std::process::Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn same_files(a: &Path, b: &Path) -> bool {
    ["patients.jsonl", "summaries.jsonl", "traces/servers3_scale1_rep0.csv"]
        .iter()
        .all(|f| match (std::fs::read(a.join(f)), std::fs::read(b.join(f))) {
            (Ok(x), Ok(y)) => !x.is_empty() && x == y,
            _ => false,
        })
}

fn c6_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    let events = p("synth/events.csv");
    let dists = p("fit/distributions.json");
    if !(run_cli(&["--out", &p("synth"), "synth"])
        && run_cli(&["--out", &p("fit"), "fit", "--log", &events]))
    {
        return outcome(false, "could not prepare distributions");
    }
    for (name, jobs) in [("serial", "1"), ("parallel", "8"), ("again", "8")] {
        if !run_cli(&["--jobs", jobs, "--out", &p(name), "simulate", "--dists", &dists]) {
            return outcome(false, format!("simulate with --jobs {jobs} failed"));
        }
    }
    let serial = dir.path().join("serial");
    let same = same_files(&serial, &dir.path().join("parallel")) && same_files(&serial, &dir.path().join("again"));
    let lines = std::fs::read_to_string(serial.join("patients.jsonl")).map(|s| s.lines().count()).unwrap_or(0);
    outcome(same, format!("{lines} JSONL patient lines identical across --jobs 1, --jobs 8 and a rerun"))
}

fn default_grid() -> Vec<(ScenarioConfig, Vec<ReplicationSummary>)> {
    let map = CodeMap::default();
    let out = synthesize(&SynthSpec::default(), &map).unwrap();
    let mined = mine(&out.cases, &map, &MineParams::default()).unwrap();
    let dists = fit(&mined, &map, &FitOptions::default()).unwrap();
    run_grid_with(&dists, &ScenarioConfig::default(), &ScenarioGrid::default(), |r| r.summary()).unwrap()
}

fn c7_conservation(grid: &[(ScenarioConfig, Vec<ReplicationSummary>)]) -> Outcome {
    let mut reps = 0;
    let mut patients = 0;
    let mut violations = 0;
    for (cell, sums) in grid {
        for s in sums {
            reps += 1;
            patients += s.counters.generated;
            if s.counters.generated != s.counters.completed
                || s.counters.in_system_at_end != 0
                || s.max_holders > cell.n_angiography
            {
                violations += 1;
            }
        }
    }
    outcome(
        reps == 1600 && violations == 0,
        format!("{reps} replications, {patients} patients, {violations} violations"),
    )
}

fn c9_monotone(grid: &[(ScenarioConfig, Vec<ReplicationSummary>)]) -> Outcome {
    let cells: Vec<QueueCell> = grid
        .iter()
        .flat_map(|(_, sums)| queue_summary(sums).unwrap())
        .collect();
    let at = |n: usize, s: f64| cells.iter().find(|c| c.servers == n && c.scale == s).unwrap();
    let g = ScenarioGrid::default();
    let mut breaks = Vec::new();
    for &s in &g.scales {
        for w in g.n_angiography.windows(2) {
            let (a, b) = (at(w[0], s), at(w[1], s));
            if b.pct_queued.median > a.pct_queued.median || b.mean_wait.median > a.mean_wait.median {
                breaks.push(format!("servers {}->{} at scale {s}", w[0], w[1]));
            }
        }
    }
    for &n in &g.n_angiography {
        for w in g.scales.windows(2) {
            let (a, b) = (at(n, w[0]), at(n, w[1]));
            if b.pct_queued.median < a.pct_queued.median || b.mean_wait.median < a.mean_wait.median {
                breaks.push(format!("scale {}->{} at {n} servers", w[0], w[1]));
            }
        }
    }
    let corner = |n, s| at(n, s).pct_queued.median;
    outcome(
        breaks.is_empty(),
        if breaks.is_empty() {
            format!(
                "16 cells monotone; median %queued {:.1} (2 servers, x2) to {:.1} (5 servers, x0.5)",
                corner(2, 2.0),
                corner(5, 0.5)
            )
        } else {
            format!("violations: {}", breaks.join(", "))
        },
    )
}

fn c8_directional() -> Outcome {
    let map = CodeMap::default();
    let templates = vec![
        SynthTemplate::uniform("AFE", 0.4, LosParams::new(8.0, 6.0)),
        SynthTemplate::uniform("AFIFE", 0.35, LosParams::new(20.0, 15.0)),
        SynthTemplate::uniform("AEFNINFEDE", 0.25, LosParams::new(30.0, 25.0)),
    ];
    let trials = 50u64;
    let mut wins = 0;
    let mut reductions = Vec::new();
    for t in 0..trials {
        let spec = SynthSpec {
            n_cases: 1500,
            templates: templates.clone(),
            seed: 100 + t,
            ..SynthSpec::default()
        };
        let held = SynthSpec { seed: 10_000 + t, ..spec.clone() };
        let train = synthesize(&spec, &map).unwrap();
        let test = synthesize(&held, &map).unwrap();
        let mined = mine(&train.cases, &map, &MineParams { seed: t, ..MineParams::default() }).unwrap();
        let dists = fit(&mined, &map, &FitOptions::default()).unwrap();
        let observed: Vec<f64> = sequences(&test.cases).iter().map(|s| s.total_los_hours()).collect();
        let scenario = ScenarioConfig {
            n_angiography: 5,
            background_volume: 0.0,
            replications: 10,
            base_seed: t,
            ..ScenarioConfig::default()
        };
        let grid = ScenarioGrid {
            n_angiography: vec![5],
            scales: vec![1.0],
        };
        let run = |model| {
            let base = ScenarioConfig { target_model: model, ..scenario.clone() };
            let cells = run_grid_with(&dists, &base, &grid, |r| r).unwrap();
            ResultSet::from_results(&cells[0].1)
        };
        let report = compare(
            &observed,
            &run(TargetModel::ClassAware),
            &run(TargetModel::Baseline),
            &CompareOptions::default(),
        )
        .unwrap();
        if report.ks_class_aware < report.ks_baseline {
            wins += 1;
        }
        reductions.push(report.ks_reduction);
    }
    let med = median(reductions);
    outcome(
        wins as f64 >= 0.9 * trials as f64 && med >= 0.20,
        format!("class-aware better in {wins}/{trials} trials, median KS reduction {:.1}%", 100.0 * med),
    )
}

fn c10_round_trips() -> Outcome {
    let map = CodeMap::default();
    let out = synthesize(&SynthSpec::default(), &map).unwrap();
    let mut buf = Vec::new();
    write_csv(&out.cases, &mut buf).unwrap();
    let csv_ok = ingest(buf.as_slice()).map(|(back, _)| back == out.cases).unwrap_or(false);
    let mined = mine(&out.cases, &map, &MineParams::default()).unwrap();
    let model_ok = serde_json::from_str::<ClusterModel>(&serde_json::to_string(&mined.model).unwrap())
        .is_ok_and(|m| m == mined.model);
    let tree_ok = serde_json::from_str::<DecisionTree>(&serde_json::to_string(&mined.tree).unwrap())
        .is_ok_and(|t| t == mined.tree);
    let mut dists_ok = true;
    for opts in [
        FitOptions::default(),
        FitOptions {
            lognormal_los: true,
            los_by_department: true,
            ..FitOptions::default()
        },
    ] {
        let d = fit(&mined, &map, &opts).unwrap();
        dists_ok &= serde_json::from_str::<FlowDistributions>(&serde_json::to_string_pretty(&d).unwrap())
            .is_ok_and(|back| back == d);
    }
    outcome(
        csv_ok && model_ok && tree_ok && dists_ok,
        format!("event log {csv_ok}, cluster model {model_ok}, tree {tree_ok}, distributions {dists_ok}"),
    )
}

fn report(n: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let pass = o.pass && in_time;
    let budget = match limit {
        Some(l) if !in_time => format!(", over the {}s budget", l.as_secs_f64()),
        _ => String::new(),
    };
    println!(
        "criterion {n:>2} {:<4} {name}: {} [{:.2}s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64()
    );
    pass
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let mut ok = true;
    ok &= report(1, "alignment", secs(1), c1_alignment);
    ok &= report(2, "levenshtein oracle", secs(30), c2_levenshtein);
    ok &= report(3, "cluster recovery", secs(120), c3_clustering);
    ok &= report(4, "discard rule", None, c4_discard);
    ok &= report(5, "Erlang-C queue", secs(120), c5_queueing);
    ok &= report(6, "determinism", None, c6_determinism);
    let mut grid = Vec::new();
    ok &= report(7, "conservation and capacity", secs(600), || {
        grid = default_grid();
        c7_conservation(&grid)
    });
    ok &= report(8, "directional KS", secs(600), c8_directional);
    ok &= report(9, "capacity what-if shape", None, || c9_monotone(&grid));
    ok &= report(10, "round trips", None, c10_round_trips);
    if !ok {
        std::process::exit(1);
    }
}
