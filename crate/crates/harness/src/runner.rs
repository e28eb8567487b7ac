//! Runs one strategy over a task set on a bounded worker pool.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use adapt_core::{run_episode, AgentConfig, BackendConfig, Backends, EpisodeResult, LlmError};
use crossbeam_channel::unbounded;
use textcraft::{generate_tasks, load_recipes, mini_book, read_tasks, RecipeBook, RecipeError, TaskError, TaskInstance, TextCraftEnv};
use thiserror::Error;
use tracing::{info, warn};

use crate::config::{ConfigError, RunConfig};
use crate::record::{read_records, RecordError, RecordWriter, RunRecord, RESULTS_FILE};

pub const TRACE_DIR: &str = "traces";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Recipes(#[from] RecipeError),
    #[error(transparent)]
    Tasks(#[from] TaskError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("task id `{0}` appears more than once")]
    DuplicateTaskId(String),
    #[error("{path} already holds a record for `{task_id}` from a different setup ({found}); use another output directory")]
    ResumeMismatch {
        path: PathBuf,
        task_id: String,
        found: String,
    },
}

/// The recipe book and tasks a configuration refers to.
pub fn load_inputs(cfg: &RunConfig) -> Result<(Arc<RecipeBook>, Vec<TaskInstance>), RunError> {
    let book = match &cfg.recipes_dir {
        Some(dir) => {
            let (book, report) = load_recipes(dir)?;
            info!(?report, "loaded recipes");
            book
        }
        None => mini_book(),
    };
    let tasks = match &cfg.tasks {
        Some(path) => read_tasks(path)?,
        None => generate_tasks(&book, cfg.seed, cfg.min_depth, cfg.max_depth)?,
    };
    let mut seen = BTreeSet::new();
    for task in &tasks {
        if !seen.insert(task.id.as_str()) {
            return Err(RunError::DuplicateTaskId(task.id.clone()));
        }
    }
    Ok((Arc::new(book), tasks))
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn trace_file_name(task_id: &str) -> String {
    let safe: String = task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

fn backend(cfg: &BackendConfig, seed: u64) -> BackendConfig {
    let mut cfg = cfg.clone();
    cfg.scripted.rng_seed = cfg.scripted.rng_seed.wrapping_add(seed);
    cfg
}

struct Job<'a> {
    index: usize,
    task: &'a TaskInstance,
}

struct Shared<'a> {
    cfg: &'a RunConfig,
    agent: AgentConfig,
    book: Arc<RecipeBook>,
}

impl Shared<'_> {
    fn episode(&self, job: &Job) -> Result<EpisodeResult, String> {
        let build = |backend_cfg: &BackendConfig| -> Result<_, LlmError> {
            backend(backend_cfg, self.cfg.seed).build(Some(&self.book), job.index as u64)
        };
        let backends = Backends {
            executor: build(&self.cfg.executor_backend).map_err(|e| e.to_string())?,
            planner: build(&self.cfg.planner_backend).map_err(|e| e.to_string())?,
        };
        let mut env = TextCraftEnv::new(self.book.clone(), job.task.clone());
        env.reset();
        Ok(run_episode(
            self.cfg.strategy,
            &job.task.goal(),
            &mut env,
            &self.agent,
            &backends,
        ))
    }

    fn run(&self, job: &Job) -> RunRecord {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| self.episode(job))).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(format!("episode panicked: {message}"))
        });
        let mut record = RunRecord {
            task_id: job.task.id.clone(),
            target: job.task.target.clone(),
            depth: job.task.depth,
            strategy: self.cfg.strategy,
            d_max: self.agent.controller.d_max,
            gold_reward: false,
            self_reported_success: false,
            k_max: 0,
            total_calls: 0,
            executor_calls: 0,
            planner_calls: 0,
            transport_attempts: 0,
            trials: 0,
            call_ceiling: self.agent.call_ceiling(),
            wall_time_secs: 0.0,
            finished_at_ms: 0,
            trace_path: None,
            error: None,
        };
        match outcome {
            Ok(result) => {
                record.gold_reward = result.gold_reward;
                record.self_reported_success = result.self_reported_success;
                record.k_max = result.k_max;
                record.total_calls = result.ledger.total_calls;
                record.executor_calls = result.ledger.executor_calls;
                record.planner_calls = result.ledger.planner_calls;
                record.transport_attempts = result.ledger.transport_attempts();
                record.trials = result.trials;
                if self.agent.controller.record_tree {
                    match self.write_trace(job.task, &result) {
                        Ok(path) => record.trace_path = Some(path),
                        Err(err) => warn!(task = %job.task.id, %err, "trace not written"),
                    }
                }
            }
            Err(err) => {
                warn!(task = %job.task.id, %err, "episode failed");
                record.error = Some(err);
            }
        }
        record.wall_time_secs = started.elapsed().as_secs_f64();
        record.finished_at_ms = unix_ms();
        record
    }

    fn write_trace(&self, task: &TaskInstance, result: &EpisodeResult) -> std::io::Result<String> {
        let relative = Path::new(TRACE_DIR).join(trace_file_name(&task.id));
        let trace = serde_json::json!({ "task": task, "episode": result });
        let text = serde_json::to_string_pretty(&trace).expect("trace serializes");
        fs::write(self.cfg.out_dir.join(&relative), text)?;
        Ok(relative.to_string_lossy().into_owned())
    }
}

/// Runs every task not already recorded in the output directory and
/// returns the records of all tasks, in task order.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<RunRecord>, RunError> {
    cfg.validate()?;
    let (book, tasks) = load_inputs(cfg)?;
    run_tasks(cfg, book, &tasks)
}

pub fn run_tasks(cfg: &RunConfig, book: Arc<RecipeBook>, tasks: &[TaskInstance]) -> Result<Vec<RunRecord>, RunError> {
    let agent = cfg.agent();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(&cfg.out_dir).map_err(io(&cfg.out_dir))?;
    if agent.controller.record_tree {
        let traces = cfg.out_dir.join(TRACE_DIR);
        fs::create_dir_all(&traces).map_err(io(&traces))?;
    }
    let results_path = cfg.out_dir.join(RESULTS_FILE);
    let mut writer = RecordWriter::append(&results_path)?;

    let mut done: BTreeMap<String, RunRecord> = BTreeMap::new();
    for record in read_records(&results_path)? {
        if record.strategy != cfg.strategy || record.d_max != agent.controller.d_max {
            return Err(RunError::ResumeMismatch {
                path: results_path,
                task_id: record.task_id,
                found: format!("{} at d_max {}", record.strategy, record.d_max),
            });
        }
        done.insert(record.task_id.clone(), record);
    }
    let pending: Vec<Job> = tasks
        .iter()
        .enumerate()
        .filter(|(_, task)| !done.contains_key(&task.id))
        .map(|(index, task)| Job { index, task })
        .collect();
    info!(
        total = tasks.len(),
        already_recorded = tasks.len() - pending.len(),
        strategy = %cfg.strategy,
        d_max = agent.controller.d_max,
        "starting run"
    );

    let shared = Shared { cfg, agent, book };
    let workers = cfg.parallelism.min(pending.len()).max(1);
    let (job_tx, job_rx) = unbounded::<Job>();
    let (result_tx, result_rx) = unbounded::<RunRecord>();
    let mut write_error = None;
    thread::scope(|scope| {
        for _ in 0..workers {
            let jobs = job_rx.clone();
            let results = result_tx.clone();
            let shared = &shared;
            scope.spawn(move || {
                for job in jobs.iter() {
                    if results.send(shared.run(&job)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);
        for job in pending {
            job_tx.send(job).expect("workers are alive while jobs remain");
        }
        drop(job_tx);

        for record in result_rx.iter() {
            info!(task = %record.task_id, gold = record.gold_reward, calls = record.total_calls, "episode done");
            if let Err(err) = writer.write(&record) {
                write_error = Some(err);
                break;
            }
            done.insert(record.task_id.clone(), record);
        }
        // Dropping the receiver makes the workers stop after their current episode.
        drop(result_rx);
    });
    if let Some(err) = write_error {
        return Err(err.into());
    }
    Ok(tasks.iter().filter_map(|task| done.remove(&task.id)).collect())
}
