//! Think-act-observe loop for one (sub-)task, ending in the model's own
//! verdict on whether the task is done.

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::env::{ContextMap, Environment};
use crate::llm::{generate, CallLedger, GenRequest, LanguageModel, LlmError, Module, Turn};
use crate::prompt::{render, render_context, EXECUTOR_DEMOS, EXECUTOR_TEMPLATE};

pub const PARSE_FAILURE_OBSERVATION: &str = "Could not parse action.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorConfig {
    pub max_iterations: u32,
    pub template: String,
    pub demos: String,
    pub thought_prefix: String,
    pub action_prefix: String,
    pub completed_marker: String,
    pub failed_marker: String,
    /// `None` defers to the backend default.
    pub temperature: Option<f64>,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            max_iterations: 20,
            template: EXECUTOR_TEMPLATE.to_string(),
            demos: EXECUTOR_DEMOS.to_string(),
            thought_prefix: "think:".into(),
            action_prefix: "action:".into(),
            completed_marker: "task completed".into(),
            failed_marker: "task failed".into(),
            temperature: None,
            max_tokens: 256,
            stop: vec!["\nObservation:".into()],
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        let (done, failed) = (self.completed_marker.trim(), self.failed_marker.trim());
        if done.is_empty() || failed.is_empty() || done.eq_ignore_ascii_case(failed) {
            return Err("completion and failure markers must be non-empty and distinct".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Thought,
    Action,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub kind: StepKind,
    pub text: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DeclaredCompleted,
    DeclaredFailed,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    /// The model's own verdict; true iff it declared completion.
    pub completed: bool,
    pub trajectory: Vec<TrajectoryStep>,
    pub llm_calls_used: u32,
    pub salient_context: ContextMap,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Set when a generation carried both markers.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ambiguous_verdict: bool,
}

impl ExecutionOutcome {
    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.trajectory
            .iter()
            .filter(|s| s.kind == StepKind::Action)
            .map(|s| s.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedStep {
    pub thought: Option<String>,
    pub action: Option<String>,
    pub verdict: Option<Verdict>,
    /// Both markers appeared; the earlier one was taken.
    pub ambiguous: bool,
}

impl ParsedStep {
    pub fn is_empty(&self) -> bool {
        self.thought.is_none() && self.action.is_none() && self.verdict.is_none()
    }
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let prefix = prefix.trim();
    if prefix.is_empty() {
        return None;
    }
    let head = line.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &line[prefix.len()..])
}

/// Splits one generation into thought, action and verdict. Markers are
/// searched case-insensitively outside action lines; the earliest wins.
pub fn parse_step(text: &str, cfg: &ExecutorConfig) -> ParsedStep {
    let done_marker = cfg.completed_marker.to_lowercase();
    let fail_marker = cfg.failed_marker.to_lowercase();
    let mut parsed = ParsedStep::default();
    let mut thoughts: Vec<&str> = Vec::new();
    let mut first: Option<Verdict> = None;
    let mut seen_done = false;
    let mut seen_fail = false;

    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let action = strip_prefix_ci(line, &cfg.action_prefix).or_else(|| line.strip_prefix('>'));
        if let Some(action) = action {
            let action = action.trim();
            if parsed.action.is_none() && !action.is_empty() {
                parsed.action = Some(action.to_string());
            }
            continue;
        }
        let body = strip_prefix_ci(line, &cfg.thought_prefix).unwrap_or(line).trim();
        if !body.is_empty() {
            thoughts.push(body);
        }
        let lower = line.to_lowercase();
        let done_at = lower.find(&done_marker);
        let fail_at = lower.find(&fail_marker);
        seen_done |= done_at.is_some();
        seen_fail |= fail_at.is_some();
        if first.is_none() {
            first = match (done_at, fail_at) {
                (Some(d), Some(f)) if f < d => Some(Verdict::Failed),
                (Some(_), _) => Some(Verdict::Completed),
                (None, Some(_)) => Some(Verdict::Failed),
                (None, None) => None,
            };
        }
    }
    if !thoughts.is_empty() {
        parsed.thought = Some(thoughts.join(" "));
    }
    parsed.verdict = first;
    parsed.ambiguous = seen_done && seen_fail;
    parsed
}

fn render_trajectory(trajectory: &[TrajectoryStep], cfg: &ExecutorConfig) -> String {
    let mut text = String::new();
    for step in trajectory {
        match step.kind {
            StepKind::Thought => text.push_str(&format!("{} {}\n", cfg.thought_prefix, step.text)),
            StepKind::Action => text.push_str(&format!("{} {}\n", cfg.action_prefix, step.text)),
            StepKind::Observation => text.push_str(&format!("{}\n", step.text)),
        }
    }
    text
}

/// Runs the executor loop on `task` without resetting `env`, so the state
/// left by earlier sub-tasks carries over.
#[allow(clippy::too_many_arguments)]
pub fn run_executor(
    task: &str,
    env: &mut dyn Environment,
    cfg: &ExecutorConfig,
    model: &dyn LanguageModel,
    ledger: &mut CallLedger,
    depth: u32,
    incoming: &ContextMap,
) -> ExecutionOutcome {
    let context_text = render_context(&env.briefing(), incoming);
    let mut trajectory: Vec<TrajectoryStep> = Vec::new();
    let mut history: Vec<(String, String)> = Vec::new();
    let mut calls = 0;
    let mut ambiguous = false;
    let mut error = None;
    let mut termination = Termination::BudgetExhausted;

    for iteration in 0..cfg.max_iterations {
        let prompt = render(
            &cfg.template,
            &[
                ("demos", cfg.demos.trim_end()),
                ("context", &context_text),
                ("task", task),
                ("trajectory", &render_trajectory(&trajectory, cfg)),
            ],
        );
        let mut request = GenRequest::user(prompt);
        request.temperature = cfg.temperature;
        request.max_tokens = cfg.max_tokens;
        request.stop = cfg.stop.clone();
        request.turn = Some(Turn::Executor {
            task: task.to_string(),
            context: incoming.clone(),
            history: history.clone(),
        });

        let response = generate(model, &request, ledger, Module::Executor, depth);
        if !matches!(response, Err(LlmError::BudgetExhausted { .. })) {
            calls += 1;
        }
        let text = match response {
            Ok(response) => response.text,
            Err(err) => {
                warn!(%err, task, "executor aborted");
                error = Some(err.to_string());
                break;
            }
        };

        let parsed = parse_step(&text, cfg);
        if let Some(thought) = &parsed.thought {
            trajectory.push(TrajectoryStep {
                kind: StepKind::Thought,
                text: thought.clone(),
                iteration,
            });
        }
        if let Some(verdict) = parsed.verdict {
            if parsed.ambiguous {
                warn!(task, generation = %text, "generation carries both verdict markers");
                ambiguous = true;
            }
            termination = match verdict {
                Verdict::Completed => Termination::DeclaredCompleted,
                Verdict::Failed => Termination::DeclaredFailed,
            };
            break;
        }
        match parsed.action {
            Some(action) => {
                let observation = env.step(&action);
                debug!(task, %action, %observation, "executor step");
                trajectory.push(TrajectoryStep {
                    kind: StepKind::Action,
                    text: action.clone(),
                    iteration,
                });
                trajectory.push(TrajectoryStep {
                    kind: StepKind::Observation,
                    text: observation.clone(),
                    iteration,
                });
                history.push((action, observation));
            }
            None => trajectory.push(TrajectoryStep {
                kind: StepKind::Observation,
                text: PARSE_FAILURE_OBSERVATION.into(),
                iteration,
            }),
        }
    }

    let mut salient_context = incoming.clone();
    if let Some((action, observation)) = history.last() {
        salient_context.insert("last_action".into(), action.clone());
        salient_context.insert("last_observation".into(), observation.clone());
    }
    ExecutionOutcome {
        completed: termination == Termination::DeclaredCompleted,
        trajectory,
        llm_calls_used: calls,
        salient_context,
        termination,
        error,
        ambiguous_verdict: ambiguous,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExecutorConfig {
        ExecutorConfig::default()
    }

    #[test]
    fn parses_verdicts_and_actions() {
        let p = parse_step("think: I have the mug. task completed", &cfg());
        assert_eq!(p.verdict, Some(Verdict::Completed));
        assert_eq!(p.thought.as_deref(), Some("I have the mug. task completed"));

        let p = parse_step("action: get 4 diamond", &cfg());
        assert_eq!(p.action.as_deref(), Some("get 4 diamond"));
        assert_eq!(p.verdict, None);

        assert!(parse_step("", &cfg()).is_empty());
        assert_eq!(parse_step("> inventory", &cfg()).action.as_deref(), Some("inventory"));
        assert_eq!(parse_step("Task Completed!", &cfg()).verdict, Some(Verdict::Completed));
        assert_eq!(parse_step("THINK: nope, Task Failed.", &cfg()).verdict, Some(Verdict::Failed));
    }

    #[test]
    fn thought_and_action_together() {
        let p = parse_step("think: need logs\naction: get 1 oak log", &cfg());
        assert_eq!(p.thought.as_deref(), Some("need logs"));
        assert_eq!(p.action.as_deref(), Some("get 1 oak log"));
    }

    #[test]
    fn verdict_takes_priority_over_action() {
        let p = parse_step("action: inventory\nthink: task completed", &cfg());
        assert_eq!(p.verdict, Some(Verdict::Completed));
        assert_eq!(p.action.as_deref(), Some("inventory"));
    }

    #[test]
    fn markers_inside_action_lines_are_ignored() {
        let p = parse_step("action: craft task completed banner", &cfg());
        assert_eq!(p.verdict, None);
    }

    #[test]
    fn first_marker_wins_and_is_flagged() {
        let p = parse_step("think: task failed? no, task completed", &cfg());
        assert_eq!(p.verdict, Some(Verdict::Failed));
        assert!(p.ambiguous);
        let p = parse_step("think: task completed\nthink: task failed", &cfg());
        assert_eq!(p.verdict, Some(Verdict::Completed));
        assert!(p.ambiguous);
    }

    #[test]
    fn bare_text_is_not_an_action() {
        let p = parse_step("get 4 diamond", &cfg());
        assert_eq!(p.action, None);
        assert_eq!(p.thought.as_deref(), Some("get 4 diamond"));
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let mut bad = cfg();
        bad.failed_marker = "Task Completed".into();
        assert!(bad.validate().is_err());
        let mut bad = cfg();
        bad.max_iterations = 0;
        assert!(bad.validate().is_err());
    }
}
