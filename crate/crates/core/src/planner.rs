//! Decomposition of a failed task into steps plus an execution order.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::env::{ContextMap, Environment};
use crate::llm::{generate, CallLedger, GenRequest, LanguageModel, LlmError, Module, Turn};
use crate::logic::{parse_logic, LogicError, LogicExpr};
use crate::prompt::{
    render, render_context, DETAILED_PLANNER_DEMOS, DETAILED_PLANNER_TEMPLATE, PLANNER_DEMOS, PLANNER_TEMPLATE,
};

/// Longest step description kept verbatim.
pub const MAX_STEP_CHARS: usize = 500;
const ORDER_PREFIX: &str = "execution order:";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no `Step <n>:` lines found")]
    NoSteps,
    #[error("step numbers must run 1..n in order; expected {expected}, found {found}")]
    NonContiguous { expected: u32, found: u32 },
    #[error(transparent)]
    Order(#[from] LogicError),
    #[error("plan restates the task as its only step")]
    Degenerate,
    #[error("no usable plan after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: Box<PlanError> },
    #[error(transparent)]
    Backend(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step_id: u32,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub order: LogicExpr,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Plan {
    pub fn step(&self, id: u32) -> Option<&PlanStep> {
        self.steps.get(id.checked_sub(1)? as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub template: String,
    pub demos: String,
    /// Soft bounds on the number of steps; plans outside are kept with a warning.
    pub min_steps: usize,
    pub max_steps: usize,
    pub max_parse_retries: u32,
    /// Asks for fully executable plans (used by plan-and-execute).
    pub detailed: bool,
    pub temperature: Option<f64>,
    pub max_tokens: u32,
    pub stop: Vec<String>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            template: PLANNER_TEMPLATE.to_string(),
            demos: PLANNER_DEMOS.to_string(),
            min_steps: 3,
            max_steps: 5,
            max_parse_retries: 1,
            detailed: false,
            temperature: None,
            max_tokens: 512,
            stop: Vec::new(),
        }
    }
}

impl PlannerConfig {
    pub fn detailed() -> Self {
        PlannerConfig {
            template: DETAILED_PLANNER_TEMPLATE.to_string(),
            demos: DETAILED_PLANNER_DEMOS.to_string(),
            min_steps: 1,
            max_steps: 20,
            detailed: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return Err(format!(
                "step range {}..={} is invalid",
                self.min_steps, self.max_steps
            ));
        }
        Ok(())
    }
}

fn truncate(text: &str) -> String {
    if text.chars().count() <= MAX_STEP_CHARS {
        return text.to_string();
    }
    let mut short: String = text.chars().take(MAX_STEP_CHARS).collect();
    short.push_str("...");
    short
}

/// Parses `Step <i>: <description>` lines and the last `Execution Order:`
/// line. Without an order line the steps are joined by AND.
pub fn parse_plan(raw: &str) -> Result<Plan, PlanError> {
    let mut steps = Vec::new();
    let mut order_text = None;
    for line in raw.lines().map(str::trim) {
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix(ORDER_PREFIX) {
            order_text = Some(line[line.len() - rest.len()..].trim().to_string());
            continue;
        }
        let Some(rest) = lower.strip_prefix("step") else {
            continue;
        };
        let rest = rest.trim_start();
        let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
        let after = rest[digits.len()..].trim_start();
        if digits.is_empty() || !after.starts_with(':') {
            continue;
        }
        let found: u32 = digits.parse().map_err(|_| PlanError::NoSteps)?;
        let expected = steps.len() as u32 + 1;
        if found != expected {
            return Err(PlanError::NonContiguous { expected, found });
        }
        let description = line[line.len() - after.len() + 1..].trim();
        steps.push(PlanStep {
            step_id: found,
            description: truncate(description),
        });
    }
    if steps.is_empty() {
        return Err(PlanError::NoSteps);
    }
    let mut warnings = Vec::new();
    let order = match order_text {
        Some(text) => parse_logic(&text)?,
        None => {
            warnings.push("no execution order given; running all steps in sequence".to_string());
            LogicExpr::all_steps(steps.len() as u32)
        }
    };
    order.validate(steps.len())?;
    Ok(Plan {
        steps,
        order,
        raw_text: raw.to_string(),
        warnings,
    })
}

fn same_task(a: &str, b: &str) -> bool {
    let norm = |s: &str| s.trim().trim_end_matches('.').trim().to_lowercase();
    norm(a) == norm(b)
}

/// Asks the planner model for a plan, retrying unusable output up to
/// `max_parse_retries` times. Every attempt is one counted planner call.
pub fn make_plan(
    task: &str,
    env: &dyn Environment,
    context: &ContextMap,
    cfg: &PlannerConfig,
    model: &dyn LanguageModel,
    ledger: &mut CallLedger,
    depth: u32,
) -> Result<Plan, PlanError> {
    let prompt = render(
        &cfg.template,
        &[
            ("demos", cfg.demos.trim_end()),
            ("context", &render_context(&env.briefing(), context)),
            ("task", task),
        ],
    );
    let mut request = GenRequest::user(prompt);
    request.temperature = cfg.temperature;
    request.max_tokens = cfg.max_tokens;
    request.stop = cfg.stop.clone();
    request.turn = Some(Turn::Planner {
        task: task.to_string(),
        context: context.clone(),
        detailed: cfg.detailed,
    });

    let attempts = cfg.max_parse_retries + 1;
    let mut last = PlanError::NoSteps;
    for attempt in 1..=attempts {
        let text = generate(model, &request, ledger, Module::Planner, depth)?.text;
        let parsed = parse_plan(&text).and_then(|plan| {
            if plan.steps.len() == 1 && same_task(&plan.steps[0].description, task) {
                Err(PlanError::Degenerate)
            } else {
                Ok(plan)
            }
        });
        match parsed {
            Ok(mut plan) => {
                let n = plan.steps.len();
                if n < cfg.min_steps || n > cfg.max_steps {
                    plan.warnings.push(format!(
                        "{n} steps, outside the expected {}..={}",
                        cfg.min_steps, cfg.max_steps
                    ));
                }
                for warning in &plan.warnings {
                    info!(task, %warning, "plan accepted with warning");
                }
                return Ok(plan);
            }
            Err(err) => {
                info!(task, attempt, %err, "unusable plan");
                last = err;
            }
        }
    }
    Err(PlanError::Exhausted {
        attempts,
        last: Box::new(last),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use LogicExpr::{And, Leaf};

    #[test]
    fn parses_simple_plan() {
        let plan = parse_plan("Step 1: A\nStep 2: B\nExecution Order: Step 1 AND Step 2").unwrap();
        assert_eq!(
            plan.steps.iter().map(|s| s.description.as_str()).collect::<Vec<_>>(),
            vec!["A", "B"]
        );
        assert_eq!(plan.order, And(vec![Leaf(1), Leaf(2)]));
        assert!(plan.warnings.is_empty());
    }

    #[test]
    fn missing_order_defaults_to_and() {
        let plan = parse_plan("Here is my plan.\nStep 1: a\nStep 2: b\nStep 3: c").unwrap();
        assert_eq!(plan.order, LogicExpr::all_steps(3));
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn dangling_reference_fails() {
        let err = parse_plan("Step 1: a\nStep 2: b\nExecution Order: Step 1 AND Step 9").unwrap_err();
        assert!(matches!(err, PlanError::Order(LogicError::DanglingReference { step: 9, .. })));
    }

    #[test]
    fn structural_failures() {
        assert_eq!(parse_plan("nothing to see"), Err(PlanError::NoSteps));
        assert_eq!(
            parse_plan("Step 1: a\nStep 3: c"),
            Err(PlanError::NonContiguous { expected: 2, found: 3 })
        );
        assert!(matches!(
            parse_plan("Step 1: a\nExecution Order: Step 1 AND"),
            Err(PlanError::Order(LogicError::MalformedExpression { .. }))
        ));
    }

    #[test]
    fn prefixes_are_case_insensitive_and_descriptions_kept() {
        let plan = parse_plan("STEP 1: Obtain 6 Planks \nexecution order: step 1").unwrap();
        assert_eq!(plan.steps[0].description, "Obtain 6 Planks");
        assert_eq!(plan.order, Leaf(1));
    }

    #[test]
    fn long_descriptions_are_truncated() {
        let long = "x".repeat(MAX_STEP_CHARS + 20);
        let plan = parse_plan(&format!("Step 1: {long}\nStep 2: y")).unwrap();
        assert_eq!(plan.steps[0].description.chars().count(), MAX_STEP_CHARS + 3);
        assert!(plan.steps[0].description.ends_with("..."));
    }
}
