//! Run configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use adapt_core::llm::ScriptedPolicyConfig;
use adapt_core::{
    AgentConfig, BackendConfig, BackendKind, ControllerConfig, ExecutorConfig, LlmError, PlannerConfig, Strategy,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TEXTCRAFT: &str = "textcraft";
/// Variable consulted for an API key by backends given on the command line.
pub const API_KEY_ENV: &str = "ADAPT_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid backend: {0}")]
    Backend(#[from] LlmError),
}

fn default_environment() -> String {
    TEXTCRAFT.into()
}
fn default_parallelism() -> usize {
    1
}
fn default_min_depth() -> u32 {
    1
}
fn default_max_depth() -> u32 {
    4
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_retry_temperature() -> f64 {
    adapt_core::baselines::DEFAULT_RETRY_TEMPERATURE
}
fn scripted_backend() -> BackendConfig {
    BackendConfig::scripted(ScriptedPolicyConfig::default())
}

/// One experiment: a task set, a strategy and the two model backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_environment")]
    pub environment: String,
    /// Line-delimited task file. Without one, a task per craftable item with
    /// depth in `min_depth..=max_depth` is generated from the recipe book.
    #[serde(default)]
    pub tasks: Option<PathBuf>,
    /// Data-pack directory holding `recipes/` and `tags/items/`; the bundled
    /// miniature book is used when absent.
    #[serde(default)]
    pub recipes_dir: Option<PathBuf>,
    #[serde(default = "default_min_depth")]
    pub min_depth: u32,
    #[serde(default = "default_max_depth")]
    pub max_depth: u32,
    pub strategy: Strategy,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub executor: ExecutorConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default = "PlannerConfig::detailed")]
    pub detailed_planner: PlannerConfig,
    #[serde(default = "default_retry_temperature")]
    pub retry_temperature: f64,
    #[serde(default = "scripted_backend")]
    pub executor_backend: BackendConfig,
    #[serde(default = "scripted_backend")]
    pub planner_backend: BackendConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Seeds task generation and shifts the scripted misreport schedule.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn new(strategy: Strategy) -> Self {
        RunConfig {
            environment: default_environment(),
            tasks: None,
            recipes_dir: None,
            min_depth: default_min_depth(),
            max_depth: default_max_depth(),
            strategy,
            controller: ControllerConfig::default(),
            executor: ExecutorConfig::default(),
            planner: PlannerConfig::default(),
            detailed_planner: PlannerConfig::detailed(),
            retry_temperature: default_retry_temperature(),
            executor_backend: scripted_backend(),
            planner_backend: scripted_backend(),
            parallelism: default_parallelism(),
            out_dir: default_out_dir(),
            seed: 0,
        }
    }

    /// Reads and validates a config file. Relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.tasks.as_mut().map(anchor);
        cfg.recipes_dir.as_mut().map(anchor);
        anchor(&mut cfg.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.environment != TEXTCRAFT {
            return invalid(format!("unknown environment `{}`", self.environment));
        }
        if self.parallelism == 0 {
            return invalid("parallelism must be at least 1".into());
        }
        if self.controller.d_max == 0 {
            return invalid("d_max must be at least 1".into());
        }
        if self.executor.max_iterations == 0 {
            return invalid("executor.max_iterations must be at least 1".into());
        }
        if self.min_depth == 0 || self.min_depth > self.max_depth {
            return invalid(format!("depth range {}..={} is empty", self.min_depth, self.max_depth));
        }
        for (name, path) in [("tasks", &self.tasks), ("recipes_dir", &self.recipes_dir)] {
            if let Some(path) = path {
                if !path.exists() {
                    return invalid(format!("{name} path {} does not exist", path.display()));
                }
            }
        }
        self.planner.validate().map_err(ConfigError::Invalid)?;
        self.detailed_planner.validate().map_err(ConfigError::Invalid)?;
        self.executor_backend.validate()?;
        self.planner_backend.validate()?;
        Ok(())
    }

    pub fn agent(&self) -> AgentConfig {
        AgentConfig {
            controller: self.controller.clone(),
            executor: self.executor.clone(),
            planner: self.planner.clone(),
            detailed_planner: self.detailed_planner.clone(),
            retry_temperature: self.retry_temperature,
        }
    }
}

/// Parses a backend given on the command line: a TOML file holding one
/// backend table, `scripted[:<competence>]`, or `<kind>:<model>@<url>` with
/// kind `http_chat` or `http_completion`.
pub fn parse_backend_spec(spec: &str) -> Result<BackendConfig, ConfigError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: BackendConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })?;
        cfg.validate()?;
        return Ok(cfg);
    }
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let cfg = match kind {
        "scripted" => {
            let mut policy = ScriptedPolicyConfig::default();
            if !rest.is_empty() {
                policy.competence = rest
                    .parse()
                    .map_err(|_| ConfigError::Invalid(format!("bad scripted competence `{rest}`")))?;
            }
            BackendConfig::scripted(policy)
        }
        "http_chat" | "http_completion" => {
            let (model, url) = rest
                .split_once('@')
                .filter(|(m, u)| !m.is_empty() && !u.is_empty())
                .ok_or_else(|| ConfigError::Invalid(format!("expected `{kind}:<model>@<url>`, got `{spec}`")))?;
            let kind = if kind == "http_chat" {
                BackendKind::HttpChat
            } else {
                BackendKind::HttpCompletion
            };
            let mut cfg = BackendConfig::http(kind, model, url);
            if std::env::var_os(API_KEY_ENV).is_some() {
                cfg.api_key_env = Some(API_KEY_ENV.into());
            }
            cfg
        }
        _ => return Err(ConfigError::Invalid(format!("unknown backend `{spec}`"))),
    };
    cfg.validate()?;
    Ok(cfg)
}
