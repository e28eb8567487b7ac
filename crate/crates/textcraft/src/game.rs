//! Episodic crafting state machine.
//!
//! Every failure is reported as an observation string; nothing in this module
//! panics or errors on untrusted action text.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::names::normalize_name;
use crate::recipe::{IngredientRef, RecipeBook};
use crate::task::TaskInstance;

pub type Inventory = BTreeMap<String, u32>;

pub const EMPTY_INVENTORY: &str = "You are not carrying anything.";
pub const PARSE_FAILURE: &str = "Could not parse action";
pub const MISSING_INGREDIENTS: &str = "Could not craft: missing ingredients";
pub const NO_MATCHING_RECIPE: &str = "Could not craft: no matching recipe";

/// `[oak planks] (4) [stick] (2)`; the empty inventory renders as an empty string.
pub fn render_inventory(inventory: &Inventory) -> String {
    inventory
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(item, n)| format!("[{item}] ({n})"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inverse of [`render_inventory`]. Malformed fragments are ignored.
pub fn parse_inventory(text: &str) -> Inventory {
    let mut inventory = Inventory::new();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let Some(close) = rest[open..].find(']').map(|i| open + i) else {
            break;
        };
        let name = normalize_name(&rest[open + 1..close]);
        let after = &rest[close + 1..];
        let count = after
            .trim_start()
            .strip_prefix('(')
            .and_then(|s| s.split_once(')'))
            .and_then(|(n, _)| n.trim().parse::<u32>().ok());
        if let Some(count) = count {
            if count > 0 && !name.is_empty() {
                *inventory.entry(name).or_default() += count;
            }
        }
        rest = after;
    }
    inventory
}

/// A parsed agent command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Craft {
        count: Option<u32>,
        item: String,
        ingredients: Vec<(u32, String)>,
    },
    Get {
        count: u32,
        item: String,
    },
    Inventory,
}

fn split_count(text: &str) -> (Option<u32>, String) {
    let text = text.trim();
    match text.split_once(char::is_whitespace) {
        Some((head, tail)) if head.chars().all(|c| c.is_ascii_digit()) => {
            (head.parse().ok(), normalize_name(tail))
        }
        _ => (None, normalize_name(text)),
    }
}

/// `craft [count] <item> using <count> <item>(, <count> <item>)*` | `get [count] <item>` | `inventory`.
pub fn parse_command(text: &str) -> Option<Command> {
    let text = text.trim().trim_end_matches('.').trim().to_lowercase();
    if text == "inventory" {
        return Some(Command::Inventory);
    }
    let (verb, rest) = text.split_once(char::is_whitespace)?;
    match verb {
        "get" => {
            let (count, item) = split_count(rest);
            let count = count.unwrap_or(1);
            (count > 0 && !item.is_empty()).then_some(Command::Get { count, item })
        }
        "craft" => {
            let (head, tail) = rest.split_once(" using ")?;
            let (count, item) = split_count(head);
            if item.is_empty() || count == Some(0) {
                return None;
            }
            let mut ingredients = Vec::new();
            for part in tail.split(',') {
                let (n, name) = split_count(part);
                let n = n.filter(|n| *n > 0)?;
                if name.is_empty() {
                    return None;
                }
                ingredients.push((n, name));
            }
            Some(Command::Craft {
                count,
                item,
                ingredients,
            })
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GameState {
    pub inventory: Inventory,
    pub allowed_commands: Vec<String>,
    pub target: String,
    pub done: bool,
    /// Actions that changed the inventory.
    pub step_count: u32,
}

impl GameState {
    pub fn new(target: &str, allowed_commands: Vec<String>) -> Self {
        GameState {
            inventory: Inventory::new(),
            allowed_commands,
            target: normalize_name(target),
            done: false,
            step_count: 0,
        }
    }

    pub fn count(&self, item: &str) -> u32 {
        self.inventory.get(item).copied().unwrap_or(0)
    }

    /// Applies one action, mutating state only on success.
    pub fn step(&mut self, book: &RecipeBook, action: &str) -> String {
        let Some(command) = parse_command(action) else {
            return PARSE_FAILURE.to_string();
        };
        let was_done = self.done;
        let observation = match command {
            Command::Inventory => {
                let rendered = render_inventory(&self.inventory);
                if rendered.is_empty() {
                    format!("Inventory: {EMPTY_INVENTORY}")
                } else {
                    format!("Inventory: {rendered}")
                }
            }
            Command::Get { count, item } => match book.resolve(&item) {
                Some(IngredientRef::Item(name)) if book.is_raw(&name) => {
                    let slot = self.inventory.entry(name.clone()).or_default();
                    *slot = slot.saturating_add(count);
                    self.step_count += 1;
                    format!("Got {count} {name}")
                }
                _ => format!("Could not find {item}"),
            },
            Command::Craft {
                count,
                item,
                ingredients,
            } => match craft(book, &self.inventory, count, &item, &ingredients) {
                Ok((next, item, produced)) => {
                    self.inventory = next;
                    self.step_count += 1;
                    format!("Crafted {produced} {item}")
                }
                Err(failure) => failure.to_string(),
            },
        };
        self.done = self.count(&self.target) >= 1;
        if self.done && !was_done {
            format!("{observation}\nGoal reached: {} is in your inventory.", self.target)
        } else {
            observation
        }
    }
}

fn craft(
    book: &RecipeBook,
    inventory: &Inventory,
    count: Option<u32>,
    item: &str,
    declared: &[(u32, String)],
) -> Result<(Inventory, String, u32), &'static str> {
    let output = match book.resolve(item) {
        Some(IngredientRef::Item(name)) if !book.recipes_for(&name).is_empty() => name,
        _ => return Err(NO_MATCHING_RECIPE),
    };
    let offered = declared
        .iter()
        .map(|(n, name)| book.resolve(name).map(|r| (r, *n)))
        .collect::<Option<Vec<_>>>()
        .ok_or(NO_MATCHING_RECIPE)?;

    let mut shape_matched = false;
    for recipe in book.recipes_for(&output) {
        let mut sums = vec![0u32; recipe.ingredients.len()];
        let assigned = offered.iter().all(|(offer, n)| {
            let slot = recipe
                .ingredients
                .iter()
                .position(|slot| slot.target == *offer)
                .or_else(|| {
                    recipe
                        .ingredients
                        .iter()
                        .position(|slot| book.satisfies(&slot.target, offer))
                });
            match slot {
                Some(i) => {
                    sums[i] = sums[i].saturating_add(*n);
                    true
                }
                None => false,
            }
        });
        if !assigned {
            continue;
        }
        let first = recipe.ingredients[0].count;
        if sums[0] == 0 || sums[0] % first != 0 {
            continue;
        }
        let multiple = sums[0] / first;
        let consistent = recipe
            .ingredients
            .iter()
            .zip(&sums)
            .all(|(slot, sum)| slot.count.checked_mul(multiple) == Some(*sum));
        let Some(produced) = recipe.output_count.checked_mul(multiple) else {
            continue;
        };
        if !consistent || count.is_some_and(|c| c != produced) {
            continue;
        }
        shape_matched = true;
        if let Some(mut next) = consume(book, inventory, &offered) {
            let slot = next.entry(output.clone()).or_default();
            *slot = slot.saturating_add(produced);
            return Ok((next, output, produced));
        }
    }
    Err(if shape_matched {
        MISSING_INGREDIENTS
    } else {
        NO_MATCHING_RECIPE
    })
}

fn consume(book: &RecipeBook, inventory: &Inventory, offered: &[(IngredientRef, u32)]) -> Option<Inventory> {
    let mut next = inventory.clone();
    let take = |item: &str, n: u32, next: &mut Inventory| -> u32 {
        let have = next.get(item).copied().unwrap_or(0);
        let used = have.min(n);
        if used == have {
            next.remove(item);
        } else {
            next.insert(item.to_string(), have - used);
        }
        used
    };
    for (offer, n) in offered {
        if let IngredientRef::Item(item) = offer {
            if take(item, *n, &mut next) < *n {
                return None;
            }
        }
    }
    for (offer, n) in offered {
        if let IngredientRef::Tag(tag) = offer {
            let mut remaining = *n;
            for member in book.tag_members(tag)? {
                remaining -= take(member, remaining, &mut next);
                if remaining == 0 {
                    break;
                }
            }
            if remaining > 0 {
                return None;
            }
        }
    }
    Some(next)
}

/// One TextCraft episode bound to a task.
#[derive(Debug, Clone)]
pub struct TextCraftEnv {
    book: Arc<RecipeBook>,
    task: TaskInstance,
    state: GameState,
    actions_taken: u32,
}

impl TextCraftEnv {
    pub fn new(book: Arc<RecipeBook>, task: TaskInstance) -> Self {
        let state = GameState::new(&task.target, task.commands.clone());
        TextCraftEnv {
            book,
            task,
            state,
            actions_taken: 0,
        }
    }

    /// Empties the inventory and returns the opening observation.
    pub fn reset(&mut self) -> String {
        self.state = GameState::new(&self.task.target, self.task.commands.clone());
        self.actions_taken = 0;
        self.initial_observation()
    }

    pub fn initial_observation(&self) -> String {
        format!("{}\nGoal: {}.", self.command_listing(), self.task.goal())
    }

    /// The `Crafting commands:` block of the opening observation.
    pub fn command_listing(&self) -> String {
        let mut text = String::from("Crafting commands:\n");
        for command in &self.state.allowed_commands {
            text.push_str(command);
            text.push('\n');
        }
        text
    }

    pub fn step(&mut self, action: &str) -> String {
        self.actions_taken += 1;
        self.state.step(&self.book, action)
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn task(&self) -> &TaskInstance {
        &self.task
    }

    pub fn book(&self) -> &Arc<RecipeBook> {
        &self.book
    }

    pub fn done(&self) -> bool {
        self.state.done
    }

    pub fn actions_taken(&self) -> u32 {
        self.actions_taken
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::mini_book;

    fn state_with(target: &str, items: &[(&str, u32)]) -> GameState {
        let mut state = GameState::new(target, Vec::new());
        for (item, n) in items {
            state.inventory.insert(item.to_string(), *n);
        }
        state
    }

    #[test]
    fn parses_the_three_verbs() {
        assert_eq!(
            parse_command("get 4 diamond"),
            Some(Command::Get { count: 4, item: "diamond".into() })
        );
        assert_eq!(
            parse_command("get oak log"),
            Some(Command::Get { count: 1, item: "oak log".into() })
        );
        assert_eq!(parse_command("Inventory"), Some(Command::Inventory));
        assert_eq!(
            parse_command("craft 4 stick using 2 planks"),
            Some(Command::Craft {
                count: Some(4),
                item: "stick".into(),
                ingredients: vec![(2, "planks".into())],
            })
        );
        assert_eq!(
            parse_command("craft beehive using 6 planks, 3 honeycomb."),
            Some(Command::Craft {
                count: None,
                item: "beehive".into(),
                ingredients: vec![(6, "planks".into()), (3, "honeycomb".into())],
            })
        );
        assert_eq!(parse_command("craft stick using planks"), None);
        assert_eq!(parse_command("dance"), None);
        assert_eq!(parse_command(""), None);
        assert_eq!(parse_command("get 0 diamond"), None);
    }

    #[test]
    fn get_raw_item() {
        let book = mini_book();
        let mut state = state_with("beehive", &[]);
        assert_eq!(state.step(&book, "get 4 diamond"), "Got 4 diamond");
        assert_eq!(state.count("diamond"), 4);
    }

    #[test]
    fn get_craftable_or_unknown_fails() {
        let book = mini_book();
        let mut state = state_with("beehive", &[]);
        assert_eq!(state.step(&book, "get 1 stick"), "Could not find stick");
        assert_eq!(state.step(&book, "get 1 mithril"), "Could not find mithril");
        assert!(state.inventory.is_empty());
    }

    #[test]
    fn tag_slot_accepts_member() {
        let book = mini_book();
        let mut state = state_with("beehive", &[("oak planks", 2)]);
        assert_eq!(state.step(&book, "craft 4 stick using 2 planks"), "Crafted 4 stick");
        assert_eq!(state.count("stick"), 4);
        assert_eq!(state.count("oak planks"), 0);

        let mut state = state_with("beehive", &[("spruce planks", 2)]);
        assert_eq!(state.step(&book, "craft 4 stick using 2 spruce planks"), "Crafted 4 stick");
    }

    #[test]
    fn craft_multiples() {
        let book = mini_book();
        let mut state = state_with("beehive", &[("oak planks", 4)]);
        assert_eq!(state.step(&book, "craft 8 stick using 4 planks"), "Crafted 8 stick");
        let mut state = state_with("beehive", &[("oak planks", 4)]);
        assert_eq!(state.step(&book, "craft 4 stick using 4 planks"), NO_MATCHING_RECIPE);
        assert_eq!(state.step(&book, "craft 8 stick using 3 planks"), NO_MATCHING_RECIPE);
    }

    #[test]
    fn missing_ingredients_leave_state_untouched() {
        let book = mini_book();
        let mut state = state_with("beehive", &[]);
        let before = state.clone();
        assert_eq!(state.step(&book, "craft beehive using 6 planks, 3 honeycomb"), MISSING_INGREDIENTS);
        assert_eq!(state, before);
    }

    #[test]
    fn wrong_ingredients_have_no_matching_recipe() {
        let book = mini_book();
        let mut state = state_with("beehive", &[("honeycomb", 9)]);
        assert_eq!(state.step(&book, "craft 1 beehive using 9 honeycomb"), NO_MATCHING_RECIPE);
        assert_eq!(state.step(&book, "craft 1 honeycomb using 1 stick"), NO_MATCHING_RECIPE);
    }

    #[test]
    fn reward_fires_when_target_enters_inventory() {
        let book = mini_book();
        let mut state = state_with("beehive", &[("oak planks", 6), ("honeycomb", 3)]);
        let obs = state.step(&book, "craft 1 beehive using 6 oak planks, 3 honeycomb");
        assert_eq!(obs, "Crafted 1 beehive\nGoal reached: beehive is in your inventory.");
        assert!(state.done);
        assert_eq!(state.step(&book, "inventory"), "Inventory: [beehive] (1)");
    }

    #[test]
    fn inventory_rendering_round_trips() {
        let inv: Inventory = [("oak planks".to_string(), 4), ("stick".to_string(), 2)].into();
        let text = render_inventory(&inv);
        assert_eq!(text, "[oak planks] (4) [stick] (2)");
        assert_eq!(parse_inventory(&text), inv);
        assert!(parse_inventory("").is_empty());
        assert_eq!(render_inventory(&Inventory::new()), "");
    }

    #[test]
    fn empty_inventory_observation() {
        let book = mini_book();
        let mut state = state_with("beehive", &[]);
        assert_eq!(state.step(&book, "inventory"), "Inventory: You are not carrying anything.");
    }
}
