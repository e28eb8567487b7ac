//! Per-episode result records and the line-delimited results file.

use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use adapt_core::Strategy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESULTS_FILE: &str = "results.jsonl";
/// Fields that vary between otherwise identical runs.
const VOLATILE_FIELDS: [&str; 2] = ["wall_time_secs", "finished_at_ms"];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: not a run record: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: String,
    pub target: String,
    /// Recipe depth of the target.
    pub depth: u32,
    pub strategy: Strategy,
    pub d_max: u32,
    pub gold_reward: bool,
    pub self_reported_success: bool,
    pub k_max: u32,
    pub total_calls: u32,
    pub executor_calls: u32,
    pub planner_calls: u32,
    /// HTTP attempts including retries.
    pub transport_attempts: u32,
    pub trials: u32,
    pub call_ceiling: u32,
    pub wall_time_secs: f64,
    /// Unix time in milliseconds.
    pub finished_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn within_budget(&self) -> bool {
        self.total_calls <= self.call_ceiling
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RecordError + '_ {
    move |source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every record of a results file. A missing file holds no records.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, RecordError> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(err) => return Err(io_error(path)(err)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|source| RecordError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })
        })
        .collect()
}

/// Appends records one line at a time, flushing after each so that an
/// interrupted run loses at most the line being written.
pub struct RecordWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl RecordWriter {
    /// Opens `path` for appending. A trailing partial line left by a crash
    /// is cut off first.
    pub fn append(path: &Path) -> Result<Self, RecordError> {
        if let Ok(bytes) = fs::read(path) {
            let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            if keep < bytes.len() {
                tracing::warn!(path = %path.display(), "dropping incomplete last record");
                let file = OpenOptions::new().write(true).open(path).map_err(io_error(path))?;
                file.set_len(keep as u64).map_err(io_error(path))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_error(path))?;
        Ok(RecordWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &RunRecord) -> Result<(), RecordError> {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(self.out, "{line}").map_err(io_error(&self.path))?;
        self.out.flush().map_err(io_error(&self.path))
    }
}

/// Results-file text with timing fields removed and lines sorted by task
/// id, so runs of the same configuration compare byte for byte.
pub fn canonicalize(records: &[RunRecord]) -> String {
    let mut lines: Vec<(String, String)> = records
        .iter()
        .map(|record| {
            let mut value = serde_json::to_value(record).expect("record serializes");
            if let Some(fields) = value.as_object_mut() {
                for field in VOLATILE_FIELDS {
                    fields.remove(field);
                }
            }
            (record.task_id.clone(), value.to_string())
        })
        .collect();
    lines.sort();
    lines.into_iter().map(|(_, line)| line + "\n").collect()
}
