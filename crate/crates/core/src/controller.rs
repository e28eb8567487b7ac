//! Recursive as-needed decomposition: run the executor, and only when it
//! reports failure ask the planner for sub-tasks and recurse on them one
//! level deeper, combining their results with the plan's execution order.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::env::{ContextMap, ContextPolicy, Environment};
use crate::executor::{run_executor, ExecutionOutcome, ExecutorConfig};
use crate::llm::{CallLedger, LanguageModel};
use crate::planner::{make_plan, Plan, PlannerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub d_max: u32,
    pub context_policy: ContextPolicy,
    /// Keep the full task tree in episode traces.
    pub record_tree: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            d_max: 3,
            context_policy: ContextPolicy::TextCraft,
            record_tree: true,
        }
    }
}

/// Executor and planner models for one episode; they may differ.
#[derive(Clone)]
pub struct Backends {
    pub executor: Arc<dyn LanguageModel>,
    pub planner: Arc<dyn LanguageModel>,
}

impl Backends {
    pub fn shared(model: Arc<dyn LanguageModel>) -> Self {
        Backends {
            executor: model.clone(),
            planner: model,
        }
    }
}

/// Why a node finished without running its executor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Deeper than `d_max`.
    DepthLimit,
    /// The episode goal was already reached; counted as success.
    Vacuous,
    /// Short-circuited by the execution order.
    NotReached,
    /// The episode's call ceiling was hit.
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub task: String,
    pub depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ExecutionOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_error: Option<String>,
    /// One per plan step, in step order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TaskNode>,
    pub node_result: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReason>,
}

impl TaskNode {
    pub fn skipped(task: &str, depth: u32, reason: SkipReason) -> Self {
        TaskNode {
            task: task.to_string(),
            depth,
            outcome: None,
            plan: None,
            plan_error: None,
            children: Vec::new(),
            node_result: reason == SkipReason::Vacuous,
            skipped: Some(reason),
        }
    }

    pub fn executed(&self) -> bool {
        self.outcome.as_ref().is_some_and(|o| o.llm_calls_used > 0)
    }

    /// Re-derives this node's result from its own record: the executor
    /// verdict when there is no plan, otherwise the execution order over the
    /// recorded child results.
    pub fn recompute_result(&self) -> bool {
        match (&self.plan, self.skipped) {
            (_, Some(reason)) => reason == SkipReason::Vacuous,
            (None, None) => self.outcome.as_ref().is_some_and(|o| o.completed),
            (Some(plan), None) => {
                if self.outcome.as_ref().is_some_and(|o| o.completed) {
                    return true;
                }
                plan.order
                    .evaluate_lazy::<()>(&mut |id| Ok(self.children[id as usize - 1].node_result))
                    .value
            }
        }
    }

    /// Pre-order walk.
    pub fn walk(&self) -> Vec<&TaskNode> {
        let mut out = vec![self];
        for child in &self.children {
            out.extend(child.walk());
        }
        out
    }
}

/// Deepest executor call on the branches that produced a success, or on
/// any branch when the root failed. Zero if no executor ran.
pub fn compute_k_max(root: &TaskNode) -> u32 {
    fn success_depth(node: &TaskNode) -> u32 {
        let own = if node.executed() { node.depth } else { 0 };
        node.children
            .iter()
            .filter(|c| c.node_result && c.skipped.is_none())
            .map(success_depth)
            .fold(own, u32::max)
    }
    if root.node_result {
        success_depth(root)
    } else {
        root.walk()
            .into_iter()
            .filter(|n| n.executed())
            .map(|n| n.depth)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub root: TaskNode,
    pub gold_reward: bool,
    pub self_reported_success: bool,
    pub k_max: u32,
    pub ledger: CallLedger,
    /// Independent attempts made (only try-again makes more than one).
    pub trials: u32,
}

/// State of one episode's recursion.
pub struct Controller<'a> {
    pub cfg: &'a ControllerConfig,
    pub executor: &'a ExecutorConfig,
    pub planner: &'a PlannerConfig,
    pub backends: &'a Backends,
    pub env: &'a mut dyn Environment,
    pub ledger: &'a mut CallLedger,
    carried: ContextMap,
}

impl<'a> Controller<'a> {
    pub fn new(
        cfg: &'a ControllerConfig,
        executor: &'a ExecutorConfig,
        planner: &'a PlannerConfig,
        backends: &'a Backends,
        env: &'a mut dyn Environment,
        ledger: &'a mut CallLedger,
    ) -> Self {
        Controller {
            cfg,
            executor,
            planner,
            backends,
            env,
            ledger,
            carried: ContextMap::new(),
        }
    }

    pub fn context(&self) -> ContextMap {
        self.cfg.context_policy.context(&*self.env, &self.carried)
    }

    pub fn adapt_run(&mut self, task: &str, depth: u32) -> TaskNode {
        if depth > self.cfg.d_max {
            return TaskNode::skipped(task, depth, SkipReason::DepthLimit);
        }
        if self.ledger.is_exhausted() {
            return TaskNode::skipped(task, depth, SkipReason::BudgetExhausted);
        }
        let context = self.context();
        let outcome = run_executor(
            task,
            &mut *self.env,
            self.executor,
            &*self.backends.executor,
            self.ledger,
            depth,
            &context,
        );
        debug!(task, depth, termination = ?outcome.termination, "executor finished");
        let mut node = TaskNode {
            task: task.to_string(),
            depth,
            outcome: None,
            plan: None,
            plan_error: None,
            children: Vec::new(),
            node_result: outcome.completed,
            skipped: None,
        };
        if outcome.completed {
            self.carried = outcome.salient_context.clone();
            node.outcome = Some(outcome);
            return node;
        }
        node.outcome = Some(outcome);

        let context = self.context();
        let plan = match make_plan(
            task,
            &*self.env,
            &context,
            self.planner,
            &*self.backends.planner,
            self.ledger,
            depth,
        ) {
            Ok(plan) => plan,
            Err(err) => {
                info!(task, depth, %err, "no plan; node fails");
                node.plan_error = Some(err.to_string());
                return node;
            }
        };

        let mut children: Vec<TaskNode> = plan
            .steps
            .iter()
            .map(|s| TaskNode::skipped(&s.description, depth + 1, SkipReason::NotReached))
            .collect();
        let mut memo: BTreeMap<u32, bool> = BTreeMap::new();
        let evaluation = plan.order.evaluate_lazy(&mut |id| {
            if let Some(value) = memo.get(&id) {
                return Ok(*value);
            }
            let slot = id as usize - 1;
            let step_task = children[slot].task.clone();
            if self.env.gold_reward() {
                children[slot] = TaskNode::skipped(&step_task, depth + 1, SkipReason::Vacuous);
            } else if depth < self.cfg.d_max && self.ledger.is_exhausted() {
                children[slot] = TaskNode::skipped(&step_task, depth + 1, SkipReason::BudgetExhausted);
                return Err(SkipReason::BudgetExhausted);
            } else {
                children[slot] = self.adapt_run(&step_task, depth + 1);
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
        node.node_result = evaluation.value;
        node.children = children;
        node.plan = Some(plan);
        node
    }
}

/// One full episode of recursive decomposition on `task`.
pub fn run_adapt(
    task: &str,
    env: &mut dyn Environment,
    cfg: &ControllerConfig,
    executor: &ExecutorConfig,
    planner: &PlannerConfig,
    backends: &Backends,
    mut ledger: CallLedger,
) -> EpisodeResult {
    let root = Controller::new(cfg, executor, planner, backends, env, &mut ledger).adapt_run(task, 1);
    EpisodeResult {
        gold_reward: env.gold_reward(),
        self_reported_success: root.node_result,
        k_max: compute_k_max(&root),
        root,
        ledger,
        trials: 1,
    }
}
