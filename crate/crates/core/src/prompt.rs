//! Plain-text prompt templates with `{name}` placeholders.

use textcraft::game::EMPTY_INVENTORY;

use crate::env::ContextMap;

pub const EXECUTOR_TEMPLATE: &str = include_str!("../templates/executor.txt");
pub const EXECUTOR_DEMOS: &str = include_str!("../templates/executor_demos.txt");
pub const PLANNER_TEMPLATE: &str = include_str!("../templates/planner.txt");
pub const PLANNER_DEMOS: &str = include_str!("../templates/planner_demos.txt");
pub const DETAILED_PLANNER_TEMPLATE: &str = include_str!("../templates/planner_detailed.txt");
pub const DETAILED_PLANNER_DEMOS: &str = include_str!("../templates/planner_detailed_demos.txt");

/// Substitutes `{name}` placeholders in one pass; substituted text is never
/// rescanned and unknown placeholders are left as they are.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = values.iter().find_map(|(name, value)| {
            let key_len = name.len() + 2;
            (tail.len() >= key_len && tail[1..].starts_with(name) && tail[key_len - 1..].starts_with('}'))
                .then_some((key_len, *value))
        });
        match hit {
            Some((len, value)) => {
                out.push_str(value);
                rest = &tail[len..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Briefing followed by one `Key: value` line per context entry.
pub fn render_context(briefing: &str, context: &ContextMap) -> String {
    let mut text = briefing.trim_end().to_string();
    for (key, value) in context {
        if !text.is_empty() {
            text.push('\n');
        }
        let mut label: Vec<char> = key.replace('_', " ").chars().collect();
        if let Some(first) = label.first_mut() {
            *first = first.to_ascii_uppercase();
        }
        let label: String = label.into_iter().collect();
        let value = if key == "inventory" && value.trim().is_empty() {
            EMPTY_INVENTORY
        } else {
            value.as_str()
        };
        text.push_str(&format!("{label}: {value}"));
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_known_placeholders_once() {
        let out = render("{a} and {b} but {c}", &[("a", "{b}"), ("b", "x")]);
        assert_eq!(out, "{b} and x but {c}");
        assert_eq!(render("no braces", &[("a", "1")]), "no braces");
        assert_eq!(render("{a", &[("a", "1")]), "{a");
    }

    #[test]
    fn context_lines() {
        let ctx: ContextMap = [("inventory".to_string(), String::new())].into();
        assert_eq!(
            render_context("Crafting commands:\ncraft 4 stick using 2 planks\n", &ctx),
            "Crafting commands:\ncraft 4 stick using 2 planks\nInventory: You are not carrying anything."
        );
        let ctx: ContextMap = [("last_action".to_string(), "get 1 oak log".to_string())].into();
        assert_eq!(render_context("", &ctx), "Last action: get 1 oak log");
    }

    #[test]
    fn shipped_templates_have_placeholders() {
        for name in ["{task}", "{context}", "{demos}", "{trajectory}"] {
            assert!(EXECUTOR_TEMPLATE.contains(name), "{name}");
        }
        for template in [PLANNER_TEMPLATE, DETAILED_PLANNER_TEMPLATE] {
            for name in ["{task}", "{context}", "{demos}"] {
                assert!(template.contains(name), "{name}");
            }
        }
    }
}
