//! Deterministic stand-ins for the executor and planner models, driven by
//! the recipe book. Executor competence is the number of craft actions the
//! policy will carry out inside one sub-task; fetching is free.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use textcraft::{derive_actions, parse_inventory, Action, Granularity, IngredientRef, RecipeBook};
use thiserror::Error;
use tracing::debug;

use super::{timed, Completion, GenRequest, GenResponse, LanguageModel, LlmError, Turn};
use crate::env::ContextMap;
use crate::logic::LogicExpr;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("cannot map `{0}` to a target item")]
    UnknownGoalForm(String),
    #[error("no recipe known for `{0}`")]
    NoRecipeKnown(String),
    #[error("`{0}` is a single environment action and cannot be broken down")]
    AtomicTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerStyle {
    #[default]
    RecipeDecomposer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedPolicyConfig {
    #[serde(default = "default_competence")]
    pub competence: u32,
    #[serde(default)]
    pub planner_style: PlannerStyle,
    /// Phase of the misreport schedule.
    #[serde(default)]
    pub rng_seed: u64,
    /// Share of episodes in which failed verdicts are reported as completed.
    #[serde(default)]
    pub misreport_rate: f64,
}

fn default_competence() -> u32 {
    1
}

impl Default for ScriptedPolicyConfig {
    fn default() -> Self {
        ScriptedPolicyConfig {
            competence: default_competence(),
            planner_style: PlannerStyle::default(),
            rng_seed: 0,
            misreport_rate: 0.0,
        }
    }
}

impl ScriptedPolicyConfig {
    pub fn with_competence(competence: u32) -> Self {
        ScriptedPolicyConfig {
            competence,
            ..Self::default()
        }
    }
}

/// Low-discrepancy schedule: episode `i` misreports when `floor((i+1)·p)`
/// exceeds `floor(i·p)` (shifted by `seed`), so any window of `1/p`
/// consecutive episodes contains exactly one misreporting episode.
pub fn misreports_episode(rate: f64, seed: u64, episode_index: u64) -> bool {
    let per_million = (rate.clamp(0.0, 1.0) * 1_000_000.0).round() as u128;
    let i = episode_index as u128 + seed as u128;
    ((i + 1) * per_million) / 1_000_000 > (i * per_million) / 1_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalVerb {
    Craft,
    Obtain,
    /// `fetch X directly`: take from the environment without crafting.
    FetchDirectly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    pub verb: GoalVerb,
    pub target: IngredientRef,
    pub count: u32,
}

/// Reads task text of the forms `craft|make|obtain|get|fetch|acquire [N] X
/// [using ...] [directly]`.
pub fn parse_goal(book: &RecipeBook, task: &str) -> Result<Goal, ScriptError> {
    let unknown = || ScriptError::UnknownGoalForm(task.to_string());
    let text = task.trim().trim_end_matches('.').trim().to_lowercase();
    let (verb, rest) = text.split_once(char::is_whitespace).ok_or_else(unknown)?;
    let mut verb = match verb {
        "craft" | "make" => GoalVerb::Craft,
        "obtain" | "get" | "fetch" | "acquire" => GoalVerb::Obtain,
        _ => return Err(unknown()),
    };
    let mut rest = rest.trim();
    if let Some((head, _)) = rest.split_once(" using ") {
        rest = head.trim();
    }
    if let Some(head) = rest.strip_suffix(" directly") {
        rest = head.trim();
        verb = GoalVerb::FetchDirectly;
    }
    let (count, name) = match rest.split_once(char::is_whitespace) {
        Some((n, name)) if n.chars().all(|c| c.is_ascii_digit()) => (n.parse().map_err(|_| unknown())?, name),
        Some(("a" | "an" | "some", name)) => (1, name),
        _ => (1, rest),
    };
    if count == 0 {
        return Err(unknown());
    }
    let target = book.resolve(name).ok_or_else(unknown)?;
    Ok(Goal { verb, target, count })
}

fn context_inventory(context: &ContextMap) -> textcraft::Inventory {
    context.get("inventory").map(|s| parse_inventory(s)).unwrap_or_default()
}

/// Next generation of the scripted executor for one executor turn.
///
/// The policy derives a full action list from the inventory it was handed,
/// then replays it one action per turn. When the list needs more craft
/// actions than `competence` it only fetches raw materials and gives up.
pub fn scripted_executor_step(
    book: &RecipeBook,
    policy: &ScriptedPolicyConfig,
    misreport: bool,
    task: &str,
    context: &ContextMap,
    history: &[(String, String)],
) -> Result<String, ScriptError> {
    let goal = parse_goal(book, task)?;
    let failed = |reason: &str| {
        if misreport {
            format!("think: {reason} I think I have it anyway. task completed")
        } else {
            format!("think: {reason} task failed")
        }
    };
    if history.last().is_some_and(|(_, obs)| obs.starts_with("Could not")) {
        return Ok(failed("That action did not work."));
    }

    let inventory = context_inventory(context);
    let (script, crafts) = if goal.verb == GoalVerb::FetchDirectly {
        let held = match &goal.target {
            IngredientRef::Item(item) => inventory.get(item).copied().unwrap_or(0),
            IngredientRef::Tag(_) => 0,
        };
        let script = if held >= goal.count {
            Vec::new()
        } else {
            vec![Action::Get {
                item: goal.target.name().to_string(),
                count: goal.count - held,
            }]
        };
        (script, 0)
    } else {
        let Ok(actions) = derive_actions(book, &goal.target, goal.count, &inventory, Granularity::Merged) else {
            return Ok(failed(&format!("I do not know how to make {}.", goal.target)));
        };
        let crafts = actions.iter().filter(|a| a.is_craft()).count() as u32;
        if crafts <= policy.competence {
            (actions, crafts)
        } else {
            let gets = actions.into_iter().filter(|a| !a.is_craft()).collect();
            (gets, crafts)
        }
    };

    if let Some(action) = script.get(history.len()) {
        return Ok(format!("action: {action}"));
    }
    if crafts > policy.competence {
        return Ok(failed(&format!(
            "This needs {crafts} crafting steps, more than I can manage."
        )));
    }
    Ok(format!(
        "think: I now have {} {}. task completed",
        goal.count, goal.target
    ))
}

fn render_plan(steps: &[String], order: &LogicExpr) -> String {
    let mut text = String::new();
    for (i, step) in steps.iter().enumerate() {
        text.push_str(&format!("Step {}: {step}\n", i + 1));
    }
    text.push_str(&format!("Execution Order: {order}"));
    text
}

/// Plan text of the scripted planner.
///
/// The decomposer emits one `obtain` step per ingredient of the target's
/// recipe plus a final `craft` step, joined by AND. For `obtain X` with a
/// craftable X the decomposition is offered as the alternative to fetching X
/// directly; fetching directly is itself never broken down. The detailed
/// form lists every craft of the merged derivation.
pub fn scripted_planner_plan(
    book: &RecipeBook,
    _policy: &ScriptedPolicyConfig,
    task: &str,
    context: &ContextMap,
    detailed: bool,
) -> Result<String, ScriptError> {
    let goal = parse_goal(book, task)?;
    let no_recipe = || ScriptError::NoRecipeKnown(goal.target.to_string());

    if detailed {
        let inventory = context_inventory(context);
        let actions = derive_actions(book, &goal.target, goal.count, &inventory, Granularity::Merged)
            .map_err(|_| no_recipe())?;
        let mut steps: Vec<String> = actions.iter().filter(|a| a.is_craft()).map(ToString::to_string).collect();
        if steps.is_empty() {
            steps.push(format!("fetch {} {} directly", goal.count, goal.target));
        }
        return Ok(render_plan(&steps, &LogicExpr::all_steps(steps.len() as u32)));
    }

    if goal.verb == GoalVerb::FetchDirectly {
        return Err(ScriptError::AtomicTask(task.to_string()));
    }
    let item = book.preferred_item(&goal.target).ok_or_else(no_recipe)?;
    let fetch = format!("fetch {} {} directly", goal.count, goal.target);
    if book.is_raw(item) {
        return Ok(render_plan(&[fetch], &LogicExpr::Leaf(1)));
    }
    let recipe = book.best_recipe(item).ok_or_else(no_recipe)?;
    let instances = goal.count.div_ceil(recipe.output_count);
    let mut steps: Vec<String> = recipe
        .ingredients
        .iter()
        .map(|ing| format!("obtain {} {}", ing.count * instances, ing.target))
        .collect();
    let inputs = recipe
        .ingredients
        .iter()
        .map(|ing| format!("{} {}", ing.count * instances, ing.target))
        .collect::<Vec<_>>()
        .join(", ");
    steps.push(format!(
        "craft {} {} using {inputs}",
        recipe.output_count * instances,
        recipe.output
    ));

    match goal.verb {
        GoalVerb::Craft => {
            let order = LogicExpr::all_steps(steps.len() as u32);
            Ok(render_plan(&steps, &order))
        }
        GoalVerb::Obtain | GoalVerb::FetchDirectly => {
            let decomposition: Vec<LogicExpr> = (2..=steps.len() as u32 + 1).map(LogicExpr::Leaf).collect();
            let order = LogicExpr::Or(vec![LogicExpr::Leaf(1), LogicExpr::And(decomposition)]);
            steps.insert(0, fetch);
            Ok(render_plan(&steps, &order))
        }
    }
}

/// Scripted model serving both executor and planner turns.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    book: Arc<RecipeBook>,
    policy: ScriptedPolicyConfig,
    misreport: bool,
}

impl ScriptedBackend {
    pub fn new(book: Arc<RecipeBook>, policy: ScriptedPolicyConfig, episode_index: u64) -> Self {
        let misreport = misreports_episode(policy.misreport_rate, policy.rng_seed, episode_index);
        ScriptedBackend {
            book,
            policy,
            misreport,
        }
    }

    fn respond(&self, turn: &Turn) -> String {
        let result = match turn {
            Turn::Executor { task, context, history } => {
                scripted_executor_step(&self.book, &self.policy, self.misreport, task, context, history)
            }
            Turn::Planner { task, context, detailed } => {
                scripted_planner_plan(&self.book, &self.policy, task, context, *detailed)
            }
        };
        result.unwrap_or_else(|err| {
            debug!(%err, "scripted policy cannot handle turn");
            match turn {
                Turn::Executor { .. } => format!("think: {err}. task failed"),
                Turn::Planner { .. } => format!("I cannot plan this: {err}."),
            }
        })
    }
}

impl LanguageModel for ScriptedBackend {
    fn complete(&self, request: &GenRequest) -> Result<Completion, LlmError> {
        let turn = request
            .turn
            .as_ref()
            .ok_or_else(|| LlmError::Scripted("request carries no structured turn".into()))?;
        let (text, latency) = timed(|| self.respond(turn));
        Ok(Completion {
            response: GenResponse {
                text,
                token_counts: None,
                latency,
            },
            attempts: 1,
        })
    }
}
