use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};

use super::{format_timestamp, parse_timestamp, ClinicalCase, EventKind, RawEvent};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["case_id", "timestamp", "department", "event_kind", "attrs"];

const ATTR_ESCAPE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'%')
    .add(b',')
    .add(b';')
    .add(b'=')
    .add(b'&')
    .add(b'+');

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub duplicates: usize,
}

fn encode_attrs(attrs: &BTreeMap<String, String>) -> String {
    attrs
        .iter()
        .map(|(k, v)| {
            format!(
                "{}={}",
                utf8_percent_encode(k, ATTR_ESCAPE),
                utf8_percent_encode(v, ATTR_ESCAPE)
            )
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_attrs(s: &str, row: usize) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in s.split(';').filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::MalformedRow {
            row,
            message: format!("attribute `{part}` is not of the form k=v"),
        })?;
        let decode = |x: &str| {
            percent_decode_str(x)
                .decode_utf8()
                .map(|c| c.into_owned())
                .map_err(|e| Error::MalformedRow {
                    row,
                    message: format!("attribute is not valid UTF-8 after decoding: {e}"),
                })
        };
        out.insert(decode(k)?, decode(v)?);
    }
    Ok(out)
}

/// Reads an event-log CSV and groups rows into cases.
///
/// Cases appear in order of first occurrence; rows keep their file order
/// within a case. Exact duplicate rows are dropped and counted.
pub fn ingest<R: Read>(source: R) -> Result<(Vec<ClinicalCase>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != CSV_HEADER {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("expected header `{}`, got `{}`", CSV_HEADER.join(","), got.join(",")),
        });
    }

    let mut report = IngestReport::default();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cases: Vec<ClinicalCase> = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::MalformedRow { row, message: e.to_string() }
        })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        report.rows += 1;
        if !seen.insert(record.iter().map(str::to_string).collect()) {
            report.duplicates += 1;
            continue;
        }

        let case_id = record[0].trim();
        if case_id.is_empty() {
            return Err(Error::MalformedRow { row, message: "empty case_id".into() });
        }
        let timestamp = parse_timestamp(&record[1]).ok_or_else(|| Error::MalformedRow {
            row,
            message: format!("unparseable timestamp `{}`", &record[1]),
        })?;
        let kind = EventKind::parse(&record[3]);
        let department = record[2].trim().to_string();
        if department.is_empty() && kind != EventKind::Discharge {
            return Err(Error::MalformedRow {
                row,
                message: format!("empty department on a `{kind}` event"),
            });
        }
        let attrs = decode_attrs(&record[4], row)?;

        let event = RawEvent {
            case_id: case_id.to_string(),
            timestamp,
            department,
            kind,
            attrs,
        };
        let slot = *index.entry(case_id.to_string()).or_insert_with(|| {
            cases.push(ClinicalCase::new(case_id, Vec::new()));
            cases.len() - 1
        });
        cases[slot].events.push(event);
    }

    if report.duplicates > 0 {
        log::warn!("dropped {} duplicate event rows", report.duplicates);
    }
    Ok((cases, report))
}

pub fn ingest_path(path: impl AsRef<Path>) -> Result<(Vec<ClinicalCase>, IngestReport)> {
    ingest(BufReader::new(File::open(path)?))
}

pub fn write_csv<W: Write>(cases: &[ClinicalCase], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(CSV_HEADER)?;
    for case in cases {
        for e in &case.events {
            writer.write_record([
                e.case_id.as_str(),
                &format_timestamp(&e.timestamp),
                &e.department,
                e.kind.as_str(),
                &encode_attrs(&e.attrs),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv_path(cases: &[ClinicalCase], path: impl AsRef<Path>) -> Result<()> {
    write_csv(cases, BufWriter::new(File::create(path)?))
}
