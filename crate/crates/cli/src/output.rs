//! Versioned CSV outputs.
//!
//! Every file starts with a `# feather-<kind> v<N>` line followed by a
//! header row. Readers reject files whose kind or version they do not know.
//!
//! | kind | one row per |
//! |------|-------------|
//! | `steps` | decode step |
//! | `summary` | run (sweeps add `axis` and `value`) |
//! | `decisions` | policy decision |
//! | `requests` | request |
//! | `overhead` | benchmark measurement |

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use feather_core::simcore::{DecisionRecord, RequestRecord, StepRecord};
use feather_core::Metrics;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Steps,
    Summary,
    Decisions,
    Requests,
    Overhead,
}

impl Schema {
    pub fn kind(self) -> &'static str {
        match self {
            Schema::Steps => "steps",
            Schema::Summary => "summary",
            Schema::Decisions => "decisions",
            Schema::Requests => "requests",
            Schema::Overhead => "overhead",
        }
    }

    pub fn header_line(self) -> String {
        format!("# feather-{} v{SCHEMA_VERSION}", self.kind())
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Schema::Steps => "steps.csv",
            Schema::Summary => "summary.csv",
            Schema::Decisions => "decisions.csv",
            Schema::Requests => "requests.csv",
            Schema::Overhead => "overhead.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub start: f64,
    pub end: f64,
    pub duration: f64,
    pub batch_size: usize,
    pub prefix_groups: usize,
    pub tokens: u64,
    pub unique_kv_tokens: u64,
    pub admitted: usize,
    pub prefill_tokens: u64,
    pub prefill_duration: f64,
    pub scheduler_duration: f64,
    pub decode_duration: f64,
    pub reward: f64,
    pub completions: usize,
    pub scheduler_ops: u64,
    pub evictions: u64,
}

impl From<&StepRecord<f64>> for StepRow {
    fn from(s: &StepRecord<f64>) -> Self {
        Self {
            step: s.index,
            start: s.start,
            end: s.end,
            duration: s.duration(),
            batch_size: s.batch_size,
            prefix_groups: s.prefix_groups,
            tokens: s.tokens,
            unique_kv_tokens: s.unique_kv_tokens,
            admitted: s.admitted,
            prefill_tokens: s.prefill_tokens,
            prefill_duration: s.prefill_duration,
            scheduler_duration: s.scheduler_duration,
            decode_duration: s.decode_duration,
            reward: s.reward,
            completions: s.completions,
            scheduler_ops: s.scheduler_ops,
            evictions: s.evictions,
        }
    }
}

/// One run. `axis` and `value` are empty outside sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub value: String,
    pub scheduler: String,
    pub seed: u64,
    pub requests: usize,
    pub total_tokens: u64,
    pub makespan: f64,
    pub throughput: f64,
    pub decode_throughput: f64,
    pub mean_tbt: f64,
    pub mean_latency: f64,
    pub mean_ttft: f64,
    pub steps: u64,
    pub mean_batch_size: f64,
    pub mean_prefix_groups: f64,
    pub scheduler_ops: u64,
    pub evictions: u64,
    pub prefill_tokens: u64,
}

impl SummaryRow {
    pub fn new(scheduler: &str, seed: u64, m: &Metrics) -> Self {
        Self {
            axis: String::new(),
            value: String::new(),
            scheduler: scheduler.to_string(),
            seed,
            requests: m.requests,
            total_tokens: m.total_tokens,
            makespan: m.makespan,
            throughput: m.throughput,
            decode_throughput: m.decode_throughput,
            mean_tbt: m.mean_tbt,
            mean_latency: m.mean_latency,
            mean_ttft: m.mean_ttft,
            steps: m.steps,
            mean_batch_size: m.mean_batch_size,
            mean_prefix_groups: m.mean_prefix_groups,
            scheduler_ops: m.scheduler_ops,
            evictions: m.evictions,
            prefill_tokens: m.prefill_tokens,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {:.1} tok/s over {:.3}s, {} steps, mean batch {:.1}, mean groups {:.2}, tbt {:.2}ms, ttft {:.3}s",
            self.scheduler,
            self.throughput,
            self.makespan,
            self.steps,
            self.mean_batch_size,
            self.mean_prefix_groups,
            self.mean_tbt * 1e3,
            self.mean_ttft,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub step: u64,
    pub batch_size: usize,
    pub chunk_loss: u32,
    pub peers: usize,
    pub b: u8,
    pub delta: u8,
    pub w: u8,
    pub action: String,
}

impl From<&DecisionRecord> for DecisionRow {
    fn from(d: &DecisionRecord) -> Self {
        let o = &d.decision.observation;
        let s = d.decision.state;
        Self {
            step: d.step,
            batch_size: o.batch_size,
            chunk_loss: o.chunk_loss,
            peers: o.peers,
            b: s.b,
            delta: s.delta,
            w: s.w,
            action: d.decision.action.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub id: u64,
    pub arrival: f64,
    pub admitted: f64,
    pub first_token: f64,
    pub finish: f64,
    pub tokens: u64,
}

impl From<&RequestRecord<f64>> for RequestRow {
    fn from(r: &RequestRecord<f64>) -> Self {
        Self {
            id: r.id.0,
            arrival: r.arrival,
            admitted: r.admitted,
            first_token: r.first_token,
            finish: r.finish,
            tokens: r.tokens,
        }
    }
}

/// Counted operations of one function at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    /// `cht`, `lpm` or `dfsw`.
    pub structure: String,
    pub function: String,
    pub waiting: usize,
    pub chunks: usize,
    pub tokens: usize,
    pub calls: u64,
    pub ops: u64,
    pub ops_per_call: f64,
    pub wall_ns: u64,
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Csv { path: path.to_path_buf(), msg: e.to_string() }
}

/// Serialize `rows` under `schema`'s version line.
pub fn write_csv<T: Serialize>(out: &mut impl Write, schema: Schema, rows: &[T]) -> Result<(), csv::Error> {
    writeln!(out, "{}", schema.header_line())?;
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, schema: Schema, rows: &[T]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, schema, rows).map_err(|e| csv_err(path, e))?;
    std::fs::write(path, buf).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Parse a file written by [`write_csv`], checking the version line.
pub fn read_csv<T: DeserializeOwned>(input: impl BufRead, schema: Schema) -> Result<Vec<T>, String> {
    let mut input = input;
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| e.to_string())?;
    let first = first.trim_end();
    if first != schema.header_line() {
        let prefix = format!("# feather-{} v", schema.kind());
        return Err(match first.strip_prefix(&prefix) {
            Some(v) => format!("unsupported {} schema version {v} (expected {SCHEMA_VERSION})", schema.kind()),
            None => format!("missing `{}` line, found `{first}`", schema.header_line()),
        });
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| e.to_string())
}

pub fn read_csv_file<T: DeserializeOwned>(path: &Path, schema: Schema) -> Result<Vec<T>, CliError> {
    let f = std::fs::File::open(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    read_csv(BufReader::new(f), schema).map_err(|e| csv_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64) -> DecisionRow {
        DecisionRow { step: i, batch_size: 3, chunk_loss: 1, peers: 4, b: 2, delta: 1, w: 2, action: "add".into() }
    }

    #[test]
    fn round_trip() {
        let rows = vec![row(0), row(1)];
        let mut buf = Vec::new();
        write_csv(&mut buf, Schema::Decisions, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# feather-decisions v1\nstep,batch_size,"), "{text}");
        let back: Vec<DecisionRow> = read_csv(&buf[..], Schema::Decisions).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn rejects_other_versions_and_kinds() {
        let mut buf = Vec::new();
        write_csv(&mut buf, Schema::Decisions, &[row(0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let v2 = text.replacen("v1", "v2", 1);
        let e = read_csv::<DecisionRow>(v2.as_bytes(), Schema::Decisions).unwrap_err();
        assert!(e.contains("version 2"), "{e}");
        let e = read_csv::<DecisionRow>(text.as_bytes(), Schema::Steps).unwrap_err();
        assert!(e.contains("missing"), "{e}");
        let e = read_csv::<DecisionRow>(&b"step,batch_size\n"[..], Schema::Decisions).unwrap_err();
        assert!(e.contains("missing"), "{e}");
    }
}
