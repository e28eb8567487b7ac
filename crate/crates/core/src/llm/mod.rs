//! Text generation over remote chat/completion APIs and scripted policies,
//! with per-episode call accounting.

mod canned;
mod http;
mod scripted;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use textcraft::RecipeBook;
use thiserror::Error;

use crate::env::ContextMap;

pub use canned::CannedBackend;
pub use http::HttpBackend;
pub use scripted::{
    misreports_episode, parse_goal, scripted_executor_step, scripted_planner_plan, Goal, GoalVerb, PlannerStyle,
    ScriptError, ScriptedBackend, ScriptedPolicyConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// Structured view of the turn being generated. Remote models only see the
/// rendered messages; scripted policies read this instead of re-parsing prompts.
#[derive(Debug, Clone, PartialEq)]
pub enum Turn {
    Executor {
        task: String,
        context: ContextMap,
        /// `(action, observation)` pairs issued so far in this executor run.
        history: Vec<(String, String)>,
    },
    Planner {
        task: String,
        context: ContextMap,
        detailed: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub messages: Vec<Message>,
    /// `None` uses the backend's configured default.
    pub temperature: Option<f64>,
    pub max_tokens: u32,
    pub stop: Vec<String>,
    pub turn: Option<Turn>,
}

impl GenRequest {
    pub fn user(prompt: impl Into<String>) -> Self {
        GenRequest {
            messages: vec![Message {
                role: Role::User,
                text: prompt.into(),
            }],
            temperature: None,
            max_tokens: 256,
            stop: Vec::new(),
            turn: None,
        }
    }

    pub fn prompt_chars(&self) -> usize {
        self.messages.iter().map(|m| m.text.chars().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u32,
    pub completion: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenResponse {
    pub text: String,
    pub token_counts: Option<TokenCounts>,
    pub latency: Duration,
}

/// A response plus how many transport attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub response: GenResponse,
    pub attempts: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited {
        attempts: u32,
        retry_after: Option<Duration>,
    },
    #[error("server answered with status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed server response: {0}")]
    MalformedServerResponse(String),
    #[error("episode call ceiling of {ceiling} reached")]
    BudgetExhausted { ceiling: u32 },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("scripted backend: {0}")]
    Scripted(String),
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, request: &GenRequest) -> Result<Completion, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Executor,
    Planner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: u32,
    pub module: Module,
    pub depth: u32,
    pub attempts: u32,
    pub prompt_chars: usize,
    pub response_chars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-episode call counters. One logical call increments exactly one of the
/// module counters and `total_calls`, however many transport attempts it took.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallLedger {
    pub executor_calls: u32,
    pub planner_calls: u32,
    pub total_calls: u32,
    pub records: Vec<CallRecord>,
    pub ceiling: Option<u32>,
}

impl CallLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_ceiling(ceiling: u32) -> Self {
        CallLedger {
            ceiling: Some(ceiling),
            ..Self::default()
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.ceiling.is_some_and(|c| self.total_calls >= c)
    }

    pub fn transport_attempts(&self) -> u32 {
        self.records.iter().map(|r| r.attempts).sum()
    }

    fn record(&mut self, mut record: CallRecord) {
        match record.module {
            Module::Executor => self.executor_calls += 1,
            Module::Planner => self.planner_calls += 1,
        }
        self.total_calls += 1;
        record.call_id = self.total_calls;
        self.records.push(record);
    }
}

/// Issues one logical call and books it in `ledger`. Fails without calling
/// the model once the ledger's ceiling is reached.
pub fn generate(
    model: &dyn LanguageModel,
    request: &GenRequest,
    ledger: &mut CallLedger,
    module: Module,
    depth: u32,
) -> Result<GenResponse, LlmError> {
    if let (true, Some(ceiling)) = (ledger.is_exhausted(), ledger.ceiling) {
        return Err(LlmError::BudgetExhausted { ceiling });
    }
    let mut record = CallRecord {
        call_id: 0,
        module,
        depth,
        attempts: 1,
        prompt_chars: request.prompt_chars(),
        response_chars: 0,
        error: None,
    };
    let result = model.complete(request);
    let outcome = match result {
        Ok(completion) => {
            record.attempts = completion.attempts;
            record.response_chars = completion.response.text.chars().count();
            Ok(completion.response)
        }
        Err(err) => {
            record.attempts = match &err {
                LlmError::TransportError { attempts, .. } | LlmError::RateLimited { attempts, .. } => *attempts,
                _ => 1,
            };
            record.error = Some(err.to_string());
            Err(err)
        }
    };
    ledger.record(record);
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    HttpCompletion,
    Scripted,
}

fn default_temperature() -> f64 {
    0.0
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_temperature")]
    pub default_temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub scripted: ScriptedPolicyConfig,
}

impl BackendConfig {
    pub fn scripted(policy: ScriptedPolicyConfig) -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            model_name: "scripted".into(),
            endpoint_url: None,
            default_temperature: default_temperature(),
            request_timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            api_key_env: None,
            backoff_base_ms: default_backoff_ms(),
            scripted: policy,
        }
    }

    pub fn http(kind: BackendKind, model_name: &str, endpoint_url: &str) -> Self {
        BackendConfig {
            kind,
            model_name: model_name.into(),
            endpoint_url: Some(endpoint_url.into()),
            ..Self::scripted(ScriptedPolicyConfig::default())
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let is_http = self.kind != BackendKind::Scripted;
        if is_http != self.endpoint_url.is_some() {
            return Err(LlmError::Config(
                "endpoint_url is required for http backends and only for them".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.default_temperature) {
            return Err(LlmError::Config(format!(
                "default_temperature {} outside [0, 2]",
                self.default_temperature
            )));
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return Err(LlmError::Config("request_timeout_secs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.scripted.misreport_rate) {
            return Err(LlmError::Config("misreport_rate outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Builds a model. Scripted policies need the recipe book and the
    /// episode's position in the run.
    pub fn build(
        &self,
        book: Option<&Arc<RecipeBook>>,
        episode_index: u64,
    ) -> Result<Arc<dyn LanguageModel>, LlmError> {
        self.validate()?;
        match self.kind {
            BackendKind::Scripted => {
                let book = book.ok_or_else(|| LlmError::Config("scripted backend needs a recipe book".into()))?;
                Ok(Arc::new(ScriptedBackend::new(
                    book.clone(),
                    self.scripted.clone(),
                    episode_index,
                )))
            }
            BackendKind::HttpChat | BackendKind::HttpCompletion => Ok(Arc::new(HttpBackend::new(self.clone())?)),
        }
    }
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_counts_logical_calls() {
        let model = CannedBackend::new(["a", "b"]);
        let mut ledger = CallLedger::new();
        generate(&model, &GenRequest::user("x"), &mut ledger, Module::Executor, 1).unwrap();
        generate(&model, &GenRequest::user("y"), &mut ledger, Module::Planner, 1).unwrap();
        assert_eq!(ledger.total_calls, 2);
        assert_eq!(ledger.executor_calls, 1);
        assert_eq!(ledger.planner_calls, 1);
        assert_eq!(
            ledger.records.iter().map(|r| r.call_id).collect::<Vec<_>>(),
            vec![1, 2]
        );
    }

    #[test]
    fn ceiling_blocks_further_calls() {
        let model = CannedBackend::new(["a", "b", "c"]);
        let mut ledger = CallLedger::with_ceiling(2);
        for _ in 0..2 {
            generate(&model, &GenRequest::user("x"), &mut ledger, Module::Executor, 1).unwrap();
        }
        let err = generate(&model, &GenRequest::user("x"), &mut ledger, Module::Executor, 1).unwrap_err();
        assert_eq!(err, LlmError::BudgetExhausted { ceiling: 2 });
        assert_eq!(ledger.total_calls, 2);
        assert_eq!(model.requests().len(), 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = BackendConfig::http(BackendKind::HttpChat, "m", "http://localhost:1");
        assert!(cfg.validate().is_ok());
        cfg.endpoint_url = None;
        assert!(cfg.validate().is_err());
        let mut scripted = BackendConfig::scripted(ScriptedPolicyConfig::default());
        assert!(scripted.validate().is_ok());
        scripted.default_temperature = 2.5;
        assert!(scripted.validate().is_err());
        let scripted = BackendConfig::scripted(ScriptedPolicyConfig::default());
        assert!(matches!(scripted.build(None, 0), Err(LlmError::Config(_))));
    }
}
