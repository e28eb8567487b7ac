use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adapt_core::Strategy;
use adapt_harness::{
    parse_backend_spec, read_records, run_experiment, summarize, ConfigError, MetricsSummary, RunConfig, RunError,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use textcraft::{
    assign_standard_splits, build_task, generate_tasks, load_recipes, mini_book, oracle_solve, write_tasks, RecipeBook,
    Split, TextCraftEnv,
};
use tracing_subscriber::EnvFilter;

/// Runs and evaluates as-needed decomposition agents on TextCraft.
#[derive(Parser)]
#[command(name = "adapt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy over a task set.
    Run(RunArgs),
    /// Print metrics for one or more results files.
    Summarize {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Build task instances and write them as JSON lines.
    GenTasks(GenTasksArgs),
    /// Print and replay the gold trajectory for one target.
    Oracle {
        target: String,
        #[arg(long)]
        recipes: Option<PathBuf>,
    },
    /// Run once per maximum depth 1..=MAX and emit a CSV curve.
    SweepDepth {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 4)]
        max: u32,
        /// Where to write the CSV; stdout by default.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    d_max: Option<u32>,
    /// Task file (JSON lines).
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `scripted[:<competence>]`, `http_chat:<model>@<url>`,
    /// `http_completion:<model>@<url>` or a TOML backend file.
    #[arg(long)]
    backend_executor: Option<String>,
    #[arg(long)]
    backend_planner: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitFilter {
    All,
    Dev,
    Test,
}

#[derive(Args)]
struct GenTasksArgs {
    /// Output file; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Data-pack directory; the bundled miniature book by default.
    #[arg(long)]
    recipes: Option<PathBuf>,
    /// Build only these targets instead of every item in the depth range.
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    #[arg(long, default_value_t = 1)]
    min_depth: u32,
    #[arg(long, default_value_t = 4)]
    max_depth: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = textcraft::task::DEFAULT_MAX_DISTRACTORS)]
    max_distractors: usize,
    /// Assign dev/test splits and keep only the chosen one.
    #[arg(long, value_enum, default_value_t = SplitFilter::All)]
    split: SplitFilter,
}

enum Failure {
    /// Bad configuration or arguments.
    Usage(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(err: RunError) -> Self {
        match err {
            RunError::Config(err) => Failure::Usage(err.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(err: ConfigError) -> Self {
        Failure::Usage(err.to_string())
    }
}

fn runtime(err: impl ToString) -> Failure {
    Failure::Runtime(err.to_string())
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::new(Strategy::Adapt),
        };
        if let Some(strategy) = self.strategy {
            cfg.strategy = strategy;
        }
        if let Some(d_max) = self.d_max {
            cfg.controller.d_max = d_max;
        }
        if let Some(tasks) = &self.tasks {
            cfg.tasks = Some(tasks.clone());
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(parallelism) = self.parallelism {
            cfg.parallelism = parallelism;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(spec) = &self.backend_executor {
            cfg.executor_backend = parse_backend_spec(spec)?;
        }
        if let Some(spec) = &self.backend_planner {
            cfg.planner_backend = parse_backend_spec(spec)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_book(dir: Option<&Path>) -> Result<RecipeBook, Failure> {
    match dir {
        Some(dir) => Ok(load_recipes(dir).map_err(runtime)?.0),
        None => Ok(mini_book()),
    }
}

fn run_and_summarize(cfg: &RunConfig) -> Result<MetricsSummary, Failure> {
    let records = run_experiment(cfg)?;
    let summary = summarize(&records).map_err(runtime)?;
    let path = cfg.out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(summary)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let summary = run_and_summarize(&cfg)?;
    println!("{} at d_max {} -> {}", cfg.strategy, cfg.controller.d_max, cfg.out_dir.display());
    print!("{summary}");
    Ok(())
}

fn cmd_summarize(paths: &[PathBuf], json: bool) -> Result<(), Failure> {
    let mut records = Vec::new();
    for path in paths {
        if !path.is_file() {
            return Err(runtime(format!("{} is not a file", path.display())));
        }
        records.extend(read_records(path).map_err(runtime)?);
    }
    let summary = summarize(&records).map_err(runtime)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    } else {
        print!("{summary}");
    }
    Ok(())
}

fn cmd_gen_tasks(args: &GenTasksArgs) -> Result<(), Failure> {
    if args.min_depth > args.max_depth {
        return Err(Failure::Usage(format!(
            "depth range {}..={} is empty",
            args.min_depth, args.max_depth
        )));
    }
    let book = load_book(args.recipes.as_deref())?;
    let mut tasks = if args.targets.is_empty() {
        generate_tasks(&book, args.seed, args.min_depth, args.max_depth).map_err(runtime)?
    } else {
        args.targets
            .iter()
            .map(|t| build_task(t, &book, args.seed, args.max_distractors))
            .collect::<Result<Vec<_>, _>>()
            .map_err(runtime)?
    };
    if args.split != SplitFilter::All {
        assign_standard_splits(&mut tasks, args.seed);
        let keep = if args.split == SplitFilter::Dev { Split::Dev } else { Split::Test };
        tasks.retain(|t| t.split == keep);
    }
    match &args.out {
        Some(path) => {
            write_tasks(path, &tasks).map_err(runtime)?;
            eprintln!("wrote {} tasks to {}", tasks.len(), path.display());
        }
        None => {
            let mut stdout = io::stdout().lock();
            for task in &tasks {
                writeln!(stdout, "{}", serde_json::to_string(task).expect("task serializes")).map_err(runtime)?;
            }
        }
    }
    Ok(())
}

fn cmd_oracle(target: &str, recipes: Option<&Path>) -> Result<(), Failure> {
    let book = std::sync::Arc::new(load_book(recipes)?);
    let actions = oracle_solve(&book, target).map_err(runtime)?;
    let task = build_task(target, &book, 0, 0).map_err(runtime)?;
    let mut env = TextCraftEnv::new(book, task);
    println!("{}", env.reset());
    for action in &actions {
        println!("> {action}");
        println!("{}", env.step(&action.to_string()));
    }
    println!("{} actions, goal reached: {}", actions.len(), env.done());
    if env.done() {
        Ok(())
    } else {
        Err(runtime("gold trajectory did not reach the goal"))
    }
}

#[derive(Serialize)]
struct SweepRow {
    d_max: u32,
    strategy: Strategy,
    episodes: usize,
    success_rate: f64,
    self_reported_rate: f64,
    heuristic_gap: f64,
    mean_llm_calls: f64,
    mean_k_max: f64,
}

fn cmd_sweep(args: &RunArgs, max: u32, csv_path: Option<&Path>) -> Result<(), Failure> {
    if max == 0 {
        return Err(Failure::Usage("--max must be at least 1".into()));
    }
    let base = args.resolve()?;
    let out: Box<dyn Write> = match csv_path {
        Some(path) => Box::new(fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?),
        None => Box::new(io::stdout()),
    };
    let mut csv = csv::Writer::from_writer(out);
    for d_max in 1..=max {
        let mut cfg = base.clone();
        cfg.controller.d_max = d_max;
        cfg.out_dir = base.out_dir.join(format!("d_max_{d_max}"));
        let summary = run_and_summarize(&cfg)?;
        eprintln!("d_max {d_max}: success {:.1}%", summary.success_rate);
        csv.serialize(SweepRow {
            d_max,
            strategy: cfg.strategy,
            episodes: summary.episodes,
            success_rate: summary.success_rate,
            self_reported_rate: summary.self_reported_rate,
            heuristic_gap: summary.heuristic_gap,
            mean_llm_calls: summary.mean_llm_calls,
            mean_k_max: summary.mean_k_max,
        })
        .map_err(runtime)?;
    }
    csv.flush().map_err(runtime)?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .with_ansi(io::stderr().is_terminal())
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Summarize { results, json } => cmd_summarize(results, *json),
        Command::GenTasks(args) => cmd_gen_tasks(args),
        Command::Oracle { target, recipes } => cmd_oracle(target, recipes.as_deref()),
        Command::SweepDepth { run, max, csv } => cmd_sweep(run, *max, csv.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
