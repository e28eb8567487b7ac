//! Environment interface and the rules deciding which state is handed to
//! each executor call.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use textcraft::{render_inventory, TextCraftEnv};
use thiserror::Error;

pub type ContextMap = BTreeMap<String, String>;

/// A text environment shared by every sub-task of one episode.
pub trait Environment: Send {
    /// Restores the initial state and returns the opening observation.
    fn reset(&mut self) -> String;
    /// Standing information shown with every task (e.g. the command list).
    fn briefing(&self) -> String;
    fn step(&mut self, action: &str) -> String;
    /// Environment-judged success of the episode's goal.
    fn gold_reward(&self) -> bool;
    /// Rendered inventory, for environments that have one.
    fn inventory(&self) -> Option<String> {
        None
    }
}

impl Environment for TextCraftEnv {
    fn reset(&mut self) -> String {
        TextCraftEnv::reset(self)
    }

    fn briefing(&self) -> String {
        self.command_listing()
    }

    fn step(&mut self, action: &str) -> String {
        TextCraftEnv::step(self, action)
    }

    fn gold_reward(&self) -> bool {
        self.done()
    }

    fn inventory(&self) -> Option<String> {
        Some(render_inventory(&self.state().inventory))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("unknown context propagation policy `{0}`")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ContextPolicy {
    /// Current inventory only.
    #[default]
    TextCraft,
    /// Whatever the last successful sub-task reported.
    Generic,
}

impl ContextPolicy {
    /// Context for the next executor call. `carried` is the salient context
    /// of the most recent successful sub-task; failed ones never update it.
    pub fn context(&self, env: &dyn Environment, carried: &ContextMap) -> ContextMap {
        match self {
            ContextPolicy::TextCraft => {
                let mut map = ContextMap::new();
                map.insert("inventory".into(), env.inventory().unwrap_or_default());
                map
            }
            ContextPolicy::Generic => carried.clone(),
        }
    }
}

/// Looks up a policy by id and applies it.
pub fn propagate_context(policy: &str, env: &dyn Environment, carried: &ContextMap) -> Result<ContextMap, ContextError> {
    Ok(policy.parse::<ContextPolicy>()?.context(env, carried))
}

impl FromStr for ContextPolicy {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "textcraft" => Ok(ContextPolicy::TextCraft),
            "generic" => Ok(ContextPolicy::Generic),
            other => Err(ContextError::UnknownPolicy(other.to_string())),
        }
    }
}

impl TryFrom<String> for ContextPolicy {
    type Error = ContextError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ContextPolicy> for String {
    fn from(policy: ContextPolicy) -> Self {
        policy.to_string()
    }
}

impl fmt::Display for ContextPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextPolicy::TextCraft => "textcraft",
            ContextPolicy::Generic => "generic",
        })
    }
}
