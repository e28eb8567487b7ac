//! Experiment harness: runs a strategy over a task set, writes one JSON line
//! per episode, resumes interrupted runs and aggregates the results.

pub mod config;
pub mod metrics;
pub mod record;
pub mod runner;

pub use config::{parse_backend_spec, ConfigError, RunConfig};
pub use metrics::{summarize, DepthRow, MetricsSummary, SummaryError};
pub use record::{canonicalize, read_records, RecordError, RecordWriter, RunRecord, RESULTS_FILE};
pub use runner::{load_inputs, run_experiment, run_tasks, RunError};
