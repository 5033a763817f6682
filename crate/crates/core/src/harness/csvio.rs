//! CSV persistence. Floats are written in shortest round-trip form, so
//! reading a file back reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Algorithm;
use super::stats::{RegretTrace, SummaryStats};
use crate::design::{ActionSet, Design};
use crate::error::HarnessError;
use crate::policies::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub algorithm: Algorithm,
    pub rep: usize,
    pub round: usize,
    pub joint_cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub round: usize,
    pub mean: f64,
    pub std: f64,
    pub m: usize,
    pub normalized: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub algorithm: Algorithm,
    pub rep: usize,
    pub phase: u32,
    pub stage: Stage,
    pub eps: f64,
    pub pulls_total: u64,
    pub min_active: usize,
    pub max_active: usize,
}

/// A replication/algorithm pair that did not produce a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub algorithm: Algorithm,
    pub rep: usize,
    pub error: String,
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl Iterator<Item = T>) -> Result<(), HarnessError> {
    let mut w = writer(path)?;
    // serde writes the header with the first row, so empty files need it by hand
    let mut empty = true;
    for row in rows {
        w.serialize(row)?;
        empty = false;
    }
    if empty {
        w.write_record(header)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(Into::into)
}

pub const TRACE_HEADER: [&str; 4] = ["algorithm", "rep", "round", "joint_cum_regret"];
pub const SUMMARY_HEADER: [&str; 6] = ["algorithm", "round", "mean", "std", "m", "normalized"];
pub const EVENT_HEADER: [&str; 8] = [
    "algorithm",
    "rep",
    "phase",
    "stage",
    "eps",
    "pulls_total",
    "min_active",
    "max_active",
];
pub const FAILURE_HEADER: [&str; 3] = ["algorithm", "rep", "error"];

/// Writes traces sorted by algorithm then replication, rounds numbered from 1.
pub fn write_traces(path: impl AsRef<Path>, traces: &[RegretTrace]) -> Result<(), HarnessError> {
    let mut sorted: Vec<&RegretTrace> = traces.iter().collect();
    sorted.sort_by_key(|t| (t.algorithm, t.rep));
    let rows = sorted.into_iter().flat_map(|t| {
        t.cumulative.iter().enumerate().map(move |(i, &v)| TraceRow {
            algorithm: t.algorithm,
            rep: t.rep,
            round: i + 1,
            joint_cum_regret: v,
        })
    });
    write_rows(path.as_ref(), &TRACE_HEADER, rows)
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<RegretTrace>, HarnessError> {
    let rows: Vec<TraceRow> = read_rows(path.as_ref())?;
    let mut grouped: BTreeMap<(Algorithm, usize), Vec<f64>> = BTreeMap::new();
    for row in rows {
        let values = grouped.entry((row.algorithm, row.rep)).or_default();
        if row.round != values.len() + 1 {
            return Err(HarnessError::Validation(format!(
                "{} rep {}: expected round {}, found {}",
                row.algorithm,
                row.rep,
                values.len() + 1,
                row.round
            )));
        }
        values.push(row.joint_cum_regret);
    }
    grouped
        .into_iter()
        .map(|((alg, rep), values)| RegretTrace::new(alg, rep, values))
        .collect()
}

pub fn write_summary(path: impl AsRef<Path>, summary: &SummaryStats) -> Result<(), HarnessError> {
    let rows = summary.series.iter().flat_map(|(&alg, s)| {
        s.mean.iter().zip(&s.std).enumerate().map(move |(i, (&mean, &std))| SummaryRow {
            algorithm: alg,
            round: i + 1,
            mean,
            std,
            m: summary.m,
            normalized: summary.normalized as u8,
        })
    });
    write_rows(path.as_ref(), &SUMMARY_HEADER, rows)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>, HarnessError> {
    read_rows(path.as_ref())
}

pub fn write_events(path: impl AsRef<Path>, events: &[EventRow]) -> Result<(), HarnessError> {
    write_rows(path.as_ref(), &EVENT_HEADER, events.iter())
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<EventRow>, HarnessError> {
    read_rows(path.as_ref())
}

pub fn write_failures(path: impl AsRef<Path>, failures: &[FailureRow]) -> Result<(), HarnessError> {
    write_rows(path.as_ref(), &FAILURE_HEADER, failures.iter())
}

/// Reads one action per row. A first row that does not parse as numbers is taken as a header.
pub fn read_actions_csv(path: impl AsRef<Path>) -> Result<ActionSet, HarnessError> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(HarnessError::Config(format!(
                    "{} line {}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    ActionSet::from_rows(rows).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

/// Writes one action per row without a header.
pub fn write_actions_csv(out: impl Write, set: &ActionSet) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for (_, x) in set.iter() {
        w.write_record(x.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::io("<actions>", e))
}

pub fn write_design_csv(out: impl Write, design: &Design) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "weight"])?;
    for (id, weight) in design.iter() {
        w.write_record([id.to_string(), weight.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io("<design>", e))
}
