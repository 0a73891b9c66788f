use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use pathflow::analysis::{compare, write_boxplot_csv, write_qq_csv, CompareOptions, EvalReport, ResultSet};
use pathflow::cluster::ClusterModel;
use pathflow::cpmodel::{align_all, build_cp_graph, fit_distributions, AlignedSequence, FlowDistributions, Template};
use pathflow::eventlog::{clean, ingest_path, synthesize, write_csv, ClinicalCase};
use pathflow::pathway::{encode_all, write_encoded_csv, PathwaySequence};
use pathflow::pipeline::{self, Mined};
use pathflow::simengine::{
    read_summaries, run_grid_with, write_patients_jsonl, write_summary_jsonl, write_trace_csv, PatientLine, TargetModel,
};
use serde::Serialize;

use crate::config::{PipelineConfig, TraceMode};
use crate::Usage;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Usage(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn require(arg: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    arg.or_else(|| fallback.clone())
        .ok_or_else(|| Usage(format!("no {what} given")).into())
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        return Err(Usage(format!("directory {} does not exist", path.display())).into());
    }
    Ok(())
}

fn load_log(path: &Path) -> Result<Vec<ClinicalCase>> {
    if !path.is_file() {
        return Err(Usage(format!("event log {} does not exist", path.display())).into());
    }
    let (cases, report) = ingest_path(path)?;
    info!("read {} rows, {} duplicates, {} cases", report.rows, report.duplicates, cases.len());
    if cases.is_empty() {
        return Err(Usage(format!("event log {} contains no cases", path.display())).into());
    }
    Ok(cases)
}

pub fn synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let output = synthesize(&cfg.synth, &cfg.code_map)?;
    let mut w = create(&out.join("events.csv"))?;
    write_csv(&output.cases, &mut w)?;
    w.flush()?;
    write_json(&out.join("ground_truth.json"), &output.ground_truth)?;
    info!("wrote {} synthetic cases to {}", output.cases.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct AlignmentRow<'a> {
    case_id: &'a str,
    cluster: usize,
    notation: String,
    path: String,
}

fn write_graphs(mined: &Mined, out: &Path) -> Result<()> {
    for g in &mined.graphs {
        write_json(&out.join(format!("graphs/cluster_{}.json", g.cluster)), g)?;
        write_text(&out.join(format!("graphs/cluster_{}.dot", g.cluster)), &g.to_dot())?;
    }
    Ok(())
}

pub fn mine(cfg: &PipelineConfig, log: Option<PathBuf>, out: &Path) -> Result<()> {
    let path = require(log, &cfg.io.log, "event log (--log)")?;
    let raw = load_log(&path)?;
    let mined = pipeline::mine(&raw, &cfg.code_map, &cfg.mine_params()?)?;
    write_json(&out.join("clean_report.json"), &mined.clean_report)?;
    let mut w = create(&out.join("cleaned_events.csv"))?;
    write_csv(&mined.cases, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("encoded.csv"))?;
    write_encoded_csv(&mined.sequences, &mut w)?;
    w.flush()?;
    write_json(&out.join("cluster_model.json"), &mined.model)?;
    write_json(&out.join("tree.json"), &mined.tree)?;
    write_text(&out.join("tree.dot"), &mined.tree.to_dot())?;
    write_json(&out.join("templates.json"), &mined.templates)?;
    let mut w = csv::Writer::from_writer(create(&out.join("alignments.csv"))?);
    for a in &mined.alignments {
        w.serialize(AlignmentRow {
            case_id: &a.case_id,
            cluster: a.cluster,
            notation: a.notation(),
            path: a.to_string(),
        })?;
    }
    w.flush()?;
    write_graphs(&mined, out)?;
    eprintln!("{}", mined.model);
    Ok(())
}

/// Rebuilds the mining state from a log and a saved model directory.
fn reload(cfg: &PipelineConfig, raw: &[ClinicalCase], dir: &Path) -> Result<Mined> {
    require_dir(dir)?;
    let model: ClusterModel = read_json(&dir.join("cluster_model.json"))?;
    let templates: Vec<Template> = read_json(&dir.join("templates.json"))?;
    let tree = read_json(&dir.join("tree.json"))?;
    let (cases, clean_report) = clean(raw);
    let sequences: Vec<PathwaySequence> = encode_all(&cases, &cfg.code_map)?;
    if let Some(s) = sequences.iter().find(|s| model.cluster_of(&s.case_id).is_none()) {
        anyhow::bail!("case {} is not in the saved cluster model", s.case_id);
    }
    let alignments: Vec<AlignedSequence> = align_all(&sequences, |id| model.cluster_of(id), &templates);
    let graphs = templates
        .iter()
        .map(|t| {
            let m: Vec<_> = alignments.iter().filter(|a| a.cluster == t.cluster).cloned().collect();
            build_cp_graph(&m, t, cfg.distributions.bold_coverage)
        })
        .collect::<pathflow::Result<_>>()?;
    Ok(Mined {
        cases,
        clean_report,
        sequences,
        model,
        tree,
        templates,
        alignments,
        graphs,
    })
}

pub fn fit(cfg: &PipelineConfig, log: Option<PathBuf>, model: Option<PathBuf>, out: &Path) -> Result<()> {
    let path = require(log, &cfg.io.log, "event log (--log)")?;
    let raw = load_log(&path)?;
    let mined = match model.or_else(|| cfg.io.model_dir.clone()) {
        Some(dir) => reload(cfg, &raw, &dir)?,
        None => pipeline::mine(&raw, &cfg.code_map, &cfg.mine_params()?)?,
    };
    let dists = fit_distributions(
        &mined.cases,
        &mined.sequences,
        &mined.model,
        &mined.alignments,
        &mined.graphs,
        &cfg.code_map,
        &cfg.distributions,
    )?;
    write_json(&out.join("distributions.json"), &dists)?;
    info!("fitted daily mean {:.3}", dists.daily_mean());
    Ok(())
}

struct Rendered {
    patients: Vec<u8>,
    summary: Vec<u8>,
    trace: Option<Vec<u8>>,
}

pub fn simulate(cfg: &PipelineConfig, dists: Option<PathBuf>, baseline: bool, out: &Path) -> Result<()> {
    let path = require(dists, &cfg.io.dists, "distributions file (--dists)")?;
    let dists: FlowDistributions = read_json(&path)?;
    let model = if baseline { TargetModel::Baseline } else { TargetModel::ClassAware };
    let base = cfg.scenario_config(model);
    let grid = cfg.grid();
    let include_bg = cfg.output.background_patients;
    let traces = cfg.output.traces;
    let cells = run_grid_with(&dists, &base, &grid, |r| -> pathflow::Result<Rendered> {
        let mut patients = Vec::new();
        write_patients_jsonl(&mut patients, &r, include_bg)?;
        let mut summary = Vec::new();
        write_summary_jsonl(&mut summary, &r.summary())?;
        let keep = match traces {
            TraceMode::None => false,
            TraceMode::First => r.replication == 0,
            TraceMode::All => true,
        };
        let trace = if keep {
            let mut t = Vec::new();
            write_trace_csv(&mut t, &r.resources[0])?;
            Some(t)
        } else {
            None
        };
        Ok(Rendered { patients, summary, trace })
    })?;
    let mut pw = create(&out.join("patients.jsonl"))?;
    let mut sw = create(&out.join("summaries.jsonl"))?;
    let mut records = 0;
    for (cell, reps) in cells {
        for (r, rendered) in reps.into_iter().enumerate() {
            let rendered = rendered?;
            pw.write_all(&rendered.patients)?;
            sw.write_all(&rendered.summary)?;
            if let Some(t) = rendered.trace {
                let name = format!("traces/servers{}_scale{}_rep{r}.csv", cell.n_angiography, cell.background_scale);
                write_text(&out.join(name), std::str::from_utf8(&t)?)?;
            }
            records += 1;
        }
    }
    pw.flush()?;
    sw.flush()?;
    write_json(&out.join("scenario.json"), &serde_json::json!({ "base": base, "grid": grid }))?;
    info!("wrote {records} replication records to {}", out.display());
    Ok(())
}

fn read_results(dir: &Path) -> Result<ResultSet> {
    require_dir(dir)?;
    let mut set = ResultSet::default();
    let path = dir.join("patients.jsonl");
    let file = File::open(&path).map_err(|e| Usage(format!("cannot open {}: {e}", path.display())))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PatientLine =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        set.push_line(&p);
    }
    let path = dir.join("summaries.jsonl");
    let file = File::open(&path).map_err(|e| Usage(format!("cannot open {}: {e}", path.display())))?;
    set.summaries = read_summaries(BufReader::new(file))?;
    Ok(set)
}

pub fn evaluate(
    cfg: &PipelineConfig,
    observed: Option<PathBuf>,
    class_aware: Option<PathBuf>,
    baseline: Option<PathBuf>,
    model: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let obs_path = require(observed, &cfg.io.log, "observed event log (--observed)")?;
    let aware_dir = require(class_aware, &cfg.io.class_aware_dir, "class-aware results (--class-aware)")?;
    let base_dir = require(baseline, &cfg.io.baseline_dir, "baseline results (--baseline)")?;
    require_dir(&aware_dir)?;
    require_dir(&base_dir)?;
    let raw = load_log(&obs_path)?;
    let (cases, _) = clean(&raw);
    let seqs = encode_all(&cases, &cfg.code_map)?;
    let aware = read_results(&aware_dir)?;
    let base = read_results(&base_dir)?;

    let mut opts = CompareOptions {
        clusters: None,
        per_replication: cfg.analysis.per_replication,
    };
    let mut observed: Vec<f64> = seqs.iter().map(|s| s.total_los_hours()).collect();
    let mut coverage = None;
    if cfg.analysis.top_clusters > 0 {
        let dir = require(model, &cfg.io.model_dir, "cluster model (--model) for top-cluster filtering")?;
        require_dir(&dir)?;
        let model: ClusterModel = read_json(&dir.join("cluster_model.json"))?;
        let top: Vec<usize> = model.by_size().into_iter().take(cfg.analysis.top_clusters).collect();
        let kept: Vec<f64> = seqs
            .iter()
            .filter(|s| top.contains(&model.nearest(&s.codes)))
            .map(|s| s.total_los_hours())
            .collect();
        coverage = Some(kept.len() as f64 / observed.len() as f64);
        observed = kept;
        opts.clusters = Some(top);
    }
    let mut report: EvalReport = compare(&observed, &aware, &base, &opts)?;
    report.coverage = coverage;
    write_json(&out.join("eval_report.json"), &report)?;
    let mut w = create(&out.join("qq.csv"))?;
    write_qq_csv(&mut w, &report.qq_points)?;
    w.flush()?;
    let mut w = create(&out.join("boxplot.csv"))?;
    write_boxplot_csv(&mut w, &report.queue_summary)?;
    w.flush()?;
    println!(
        "KS class-aware {:.4}  baseline {:.4}  reduction {:.1}%",
        report.ks_class_aware,
        report.ks_baseline,
        100.0 * report.ks_reduction
    );
    Ok(())
}

pub fn render_report(r: &EvalReport) -> String {
    let mut s = String::from("# Simulation evaluation\n\n");
    let _ = writeln!(s, "| | KS vs observed LoS |\n|---|---|");
    let _ = writeln!(s, "| class-aware | {:.4} |", r.ks_class_aware);
    let _ = writeln!(s, "| baseline | {:.4} |", r.ks_baseline);
    let _ = writeln!(s, "\nReduction: {:.1}%", 100.0 * r.ks_reduction);
    let _ = writeln!(
        s,
        "Observed stays: {}; simulated: {} class-aware, {} baseline.",
        r.n_observed, r.n_class_aware, r.n_baseline
    );
    if let (Some(c), Some(cov)) = (&r.clusters, r.coverage) {
        let _ = writeln!(s, "Clusters compared: {c:?} ({:.0}% of observed cases).", 100.0 * cov);
    }
    let _ = writeln!(s, "\n## Angiography queue (medians over replications)\n");
    let _ = writeln!(s, "| servers | scale | % queued | mean wait (h) |\n|---|---|---|---|");
    for c in &r.queue_summary {
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} | {:.3} |",
            c.servers, c.scale, c.pct_queued.median, c.mean_wait.median
        );
    }
    s
}

pub fn report(eval: Option<PathBuf>, out: &Path) -> Result<()> {
    let dir = eval.unwrap_or_else(|| out.to_path_buf());
    require_dir(&dir)?;
    let r: EvalReport = read_json(&dir.join("eval_report.json"))?;
    let text = render_report(&r);
    write_text(&out.join("report.md"), &text)?;
    print!("{text}");
    Ok(())
}
