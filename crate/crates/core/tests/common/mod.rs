#![allow(dead_code)]

use std::sync::{Arc, Mutex};
use std::time::Duration;

use adapt_core::llm::{
    Completion, GenRequest, GenResponse, LanguageModel, LlmError, ScriptedBackend, ScriptedPolicyConfig, Turn,
};
use adapt_core::{Backends, Environment, LogicExpr};
use textcraft::{build_task, RecipeBook, TextCraftEnv};

/// Two-action toy world: `finish` reaches the goal, anything else is echoed.
#[derive(Debug, Default)]
pub struct FlagEnv {
    pub done: bool,
    pub steps: Vec<String>,
}

impl Environment for FlagEnv {
    fn reset(&mut self) -> String {
        self.done = false;
        "Goal: finish.".into()
    }

    fn briefing(&self) -> String {
        "Commands: finish".into()
    }

    fn step(&mut self, action: &str) -> String {
        self.steps.push(action.to_string());
        if action == "finish" {
            self.done = true;
            "Finished.".into()
        } else {
            format!("Nothing happens after {action}.")
        }
    }

    fn gold_reward(&self) -> bool {
        self.done
    }
}

/// Answers each request with a closure over the structured turn and keeps
/// every request.
pub struct FnModel<F> {
    reply: Mutex<F>,
    pub requests: Mutex<Vec<GenRequest>>,
}

impl<F> FnModel<F>
where
    F: FnMut(&GenRequest) -> String + Send,
{
    pub fn new(reply: F) -> Self {
        FnModel {
            reply: Mutex::new(reply),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<GenRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl<F> LanguageModel for FnModel<F>
where
    F: FnMut(&GenRequest) -> String + Send,
{
    fn complete(&self, request: &GenRequest) -> Result<Completion, LlmError> {
        self.requests.lock().unwrap().push(request.clone());
        let text = (self.reply.lock().unwrap())(request);
        Ok(Completion {
            response: GenResponse {
                text,
                token_counts: None,
                latency: Duration::ZERO,
            },
            attempts: 1,
        })
    }
}

pub fn is_planner(request: &GenRequest) -> bool {
    matches!(request.turn, Some(Turn::Planner { .. }))
}

pub fn history_len(request: &GenRequest) -> usize {
    match &request.turn {
        Some(Turn::Executor { history, .. }) => history.len(),
        _ => 0,
    }
}

pub fn executor_task(request: &GenRequest) -> Option<&str> {
    match &request.turn {
        Some(Turn::Executor { task, .. }) => Some(task),
        _ => None,
    }
}

pub fn book() -> Arc<RecipeBook> {
    Arc::new(textcraft::mini_book())
}

pub fn scripted(book: &Arc<RecipeBook>, competence: u32) -> Backends {
    Backends::shared(Arc::new(ScriptedBackend::new(
        book.clone(),
        ScriptedPolicyConfig::with_competence(competence),
        0,
    )))
}

pub fn env_for(book: &Arc<RecipeBook>, target: &str) -> TextCraftEnv {
    let task = build_task(target, book, 0, 10).unwrap();
    let mut env = TextCraftEnv::new(book.clone(), task);
    env.reset();
    env
}

/// Step ids a left-to-right short-circuit evaluation touches, given each
/// step's result.
pub fn visited(expr: &LogicExpr, result: &dyn Fn(u32) -> bool, out: &mut Vec<u32>) -> bool {
    match expr {
        LogicExpr::Leaf(id) => {
            out.push(*id);
            result(*id)
        }
        LogicExpr::And(children) => children.iter().all(|c| visited(c, result, out)),
        LogicExpr::Or(children) => children.iter().any(|c| visited(c, result, out)),
    }
}
