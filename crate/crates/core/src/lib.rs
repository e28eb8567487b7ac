//! As-needed recursive decomposition for LLM agents.
//!
//! An executor model works on a task until it declares success or failure.
//! Only on failure does a planner model split the task into steps joined by
//! an AND/OR execution order, and each step is attempted the same way one
//! level deeper, up to a maximum depth. Baseline strategies, a scripted
//! stand-in for the models and an HTTP client for real ones are included.

pub mod baselines;
pub mod controller;
pub mod env;
pub mod executor;
pub mod llm;
pub mod logic;
pub mod planner;
pub mod prompt;

pub use baselines::{
    call_ceiling, run_episode, run_executor_only, run_plan_and_execute, run_try_again, AgentConfig, Strategy,
};
pub use controller::{compute_k_max, run_adapt, Backends, Controller, ControllerConfig, EpisodeResult, SkipReason, TaskNode};
pub use env::{propagate_context, ContextMap, ContextPolicy, Environment};
pub use executor::{parse_step, run_executor, ExecutionOutcome, ExecutorConfig, Termination};
pub use llm::{generate, BackendConfig, BackendKind, CallLedger, GenRequest, LanguageModel, LlmError, Module};
pub use logic::{format_logic, parse_logic, LogicExpr};
pub use planner::{make_plan, parse_plan, Plan, PlanError, PlannerConfig};
