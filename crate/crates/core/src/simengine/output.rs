use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Flow, PatientRecord, ReplicationSummary, ResourceTrace, SimResult};
use crate::error::{Error, Result};

/// One line of the patient JSON-lines stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientLine {
    pub servers: usize,
    pub scale: f64,
    pub replication: usize,
    pub patient: PatientRecord,
}

/// Writes one JSON object per patient; background patients only on request.
pub fn write_patients_jsonl<W: Write>(mut w: W, result: &SimResult, include_background: bool) -> Result<()> {
    for p in &result.patients {
        if p.flow == Flow::Background && !include_background {
            continue;
        }
        let line = PatientLine {
            servers: result.scenario.n_angiography,
            scale: result.scenario.background_scale,
            replication: result.replication,
            patient: p.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_summary_jsonl<W: Write>(mut w: W, summary: &ReplicationSummary) -> Result<()> {
    serde_json::to_writer(&mut w, summary)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_summaries<R: BufRead>(r: R) -> Result<Vec<ReplicationSummary>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `time,holders,queue_len`.
pub fn write_trace_csv<W: Write>(w: W, trace: &ResourceTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["time", "holders", "queue_len"])?;
    for p in &trace.points {
        w.write_record([p.time.to_string(), p.holders.to_string(), p.queue_len.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
