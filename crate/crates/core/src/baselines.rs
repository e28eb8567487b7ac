//! Comparison strategies run under the same call budget as decomposition:
//! a single long executor run, plan-once-then-execute, and repeated trials.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{compute_k_max, run_adapt, Backends, ControllerConfig, EpisodeResult, SkipReason, TaskNode};
use crate::env::{ContextMap, Environment};
use crate::executor::{run_executor, ExecutorConfig};
use crate::llm::CallLedger;
use crate::logic::evaluate_layers_lazy;
use crate::planner::{make_plan, PlannerConfig};

pub const DEFAULT_RETRY_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ExecutorOnly,
    PlanAndExecute,
    TryAgain,
    Adapt,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::ExecutorOnly,
        Strategy::PlanAndExecute,
        Strategy::TryAgain,
        Strategy::Adapt,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ExecutorOnly => "executor_only",
            Strategy::PlanAndExecute => "plan_and_execute",
            Strategy::TryAgain => "try_again",
            Strategy::Adapt => "adapt",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|strategy| strategy.to_string() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// Everything a strategy needs besides the environment and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub controller: ControllerConfig,
    pub executor: ExecutorConfig,
    pub planner: PlannerConfig,
    pub detailed_planner: PlannerConfig,
    pub retry_temperature: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            controller: ControllerConfig::default(),
            executor: ExecutorConfig::default(),
            planner: PlannerConfig::default(),
            detailed_planner: PlannerConfig::detailed(),
            retry_temperature: DEFAULT_RETRY_TEMPERATURE,
        }
    }
}

impl AgentConfig {
    pub fn with_d_max(d_max: u32) -> Self {
        let mut cfg = Self::default();
        cfg.controller.d_max = d_max;
        cfg
    }

    /// Per-episode logical call ceiling shared by every strategy.
    pub fn call_ceiling(&self) -> u32 {
        call_ceiling(self.controller.d_max, self.executor.max_iterations)
    }
}

/// `d_max` executor budgets plus one planner call per level.
pub fn call_ceiling(d_max: u32, max_iterations: u32) -> u32 {
    d_max.saturating_mul(max_iterations).saturating_add(d_max)
}

fn episode(root: TaskNode, env: &dyn Environment, ledger: CallLedger, trials: u32) -> EpisodeResult {
    EpisodeResult {
        gold_reward: env.gold_reward(),
        self_reported_success: root.node_result,
        k_max: compute_k_max(&root),
        root,
        ledger,
        trials,
    }
}

/// One executor run whose iteration budget is scaled by `d_max`.
pub fn run_executor_only(
    task: &str,
    env: &mut dyn Environment,
    cfg: &AgentConfig,
    backends: &Backends,
    mut ledger: CallLedger,
) -> EpisodeResult {
    let mut executor = cfg.executor.clone();
    executor.max_iterations = executor.max_iterations.saturating_mul(cfg.controller.d_max);
    let context = cfg.controller.context_policy.context(&*env, &ContextMap::new());
    let outcome = run_executor(task, env, &executor, &*backends.executor, &mut ledger, 1, &context);
    let root = TaskNode {
        task: task.to_string(),
        depth: 1,
        node_result: outcome.completed,
        outcome: Some(outcome),
        plan: None,
        plan_error: None,
        children: Vec::new(),
        skipped: None,
    };
    episode(root, env, ledger, 1)
}

/// Plans once with the detailed template, then runs each step once at
/// depth 2 in the order given by the plan's layered schedule.
pub fn run_plan_and_execute(
    task: &str,
    env: &mut dyn Environment,
    cfg: &AgentConfig,
    backends: &Backends,
    mut ledger: CallLedger,
) -> EpisodeResult {
    let policy = cfg.controller.context_policy;
    let mut carried = ContextMap::new();
    let mut root = TaskNode {
        task: task.to_string(),
        depth: 1,
        outcome: None,
        plan: None,
        plan_error: None,
        children: Vec::new(),
        node_result: false,
        skipped: None,
    };
    let context = policy.context(&*env, &carried);
    let plan = match make_plan(
        task,
        &*env,
        &context,
        &cfg.detailed_planner,
        &*backends.planner,
        &mut ledger,
        1,
    ) {
        Ok(plan) => plan,
        Err(err) => {
            root.plan_error = Some(err.to_string());
            return episode(root, env, ledger, 1);
        }
    };

    let mut children: Vec<TaskNode> = plan
        .steps
        .iter()
        .map(|s| TaskNode::skipped(&s.description, 2, SkipReason::NotReached))
        .collect();
    let layers = plan.order.layer_split();
    let mut memo: BTreeMap<u32, bool> = BTreeMap::new();
    let evaluation = evaluate_layers_lazy(&layers, &mut |id| {
        if let Some(value) = memo.get(&id) {
            return Ok(*value);
        }
        let slot = id as usize - 1;
        let step_task = children[slot].task.clone();
        if env.gold_reward() {
            children[slot] = TaskNode::skipped(&step_task, 2, SkipReason::Vacuous);
        } else if ledger.is_exhausted() {
            children[slot] = TaskNode::skipped(&step_task, 2, SkipReason::BudgetExhausted);
            return Err(SkipReason::BudgetExhausted);
        } else {
            let context = policy.context(&*env, &carried);
            let outcome = run_executor(
                &step_task,
                &mut *env,
                &cfg.executor,
                &*backends.executor,
                &mut ledger,
                2,
                &context,
            );
            if outcome.completed {
                carried = outcome.salient_context.clone();
            }
            children[slot] = TaskNode {
                task: step_task,
                depth: 2,
                node_result: outcome.completed,
                outcome: Some(outcome),
                plan: None,
                plan_error: None,
                children: Vec::new(),
                skipped: None,
            };
        }
        let value = children[slot].node_result;
        memo.insert(id, value);
        Ok(value)
    });
    if evaluation.aborted.is_some() {
        for child in children.iter_mut().filter(|c| c.skipped == Some(SkipReason::NotReached)) {
            child.skipped = Some(SkipReason::BudgetExhausted);
        }
    }
    root.node_result = evaluation.value;
    root.children = children;
    root.plan = Some(plan);
    episode(root, env, ledger, 1)
}

/// Up to `d_max` independent full-task executor runs from a reset
/// environment. The first uses the configured temperature, later ones the
/// retry temperature. Stops at the first gold success and reports it, else
/// the last trial.
pub fn run_try_again(
    task: &str,
    env: &mut dyn Environment,
    cfg: &AgentConfig,
    backends: &Backends,
    mut ledger: CallLedger,
) -> EpisodeResult {
    let mut last = None;
    let mut trials = 0;
    for trial in 0..cfg.controller.d_max.max(1) {
        if ledger.is_exhausted() {
            break;
        }
        env.reset();
        trials += 1;
        let mut executor = cfg.executor.clone();
        if trial > 0 {
            executor.temperature = Some(cfg.retry_temperature);
        }
        let context = cfg.controller.context_policy.context(&*env, &ContextMap::new());
        let outcome = run_executor(task, env, &executor, &*backends.executor, &mut ledger, 1, &context);
        let root = TaskNode {
            task: task.to_string(),
            depth: 1,
            node_result: outcome.completed,
            outcome: Some(outcome),
            plan: None,
            plan_error: None,
            children: Vec::new(),
            skipped: None,
        };
        let success = env.gold_reward();
        last = Some(root);
        if success {
            break;
        }
    }
    let root = last.unwrap_or_else(|| TaskNode::skipped(task, 1, SkipReason::BudgetExhausted));
    episode(root, env, ledger, trials)
}

/// Runs one episode of `strategy` on a fresh environment, enforcing the
/// shared call ceiling.
pub fn run_episode(
    strategy: Strategy,
    task: &str,
    env: &mut dyn Environment,
    cfg: &AgentConfig,
    backends: &Backends,
) -> EpisodeResult {
    let ledger = CallLedger::with_ceiling(cfg.call_ceiling());
    match strategy {
        Strategy::ExecutorOnly => run_executor_only(task, env, cfg, backends, ledger),
        Strategy::PlanAndExecute => run_plan_and_execute(task, env, cfg, backends, ledger),
        Strategy::TryAgain => run_try_again(task, env, cfg, backends, ledger),
        Strategy::Adapt => run_adapt(
            task,
            env,
            &cfg.controller,
            &cfg.executor,
            &cfg.planner,
            backends,
            ledger,
        ),
    }
}
