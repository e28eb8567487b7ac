//! Task instances: gold crafting commands plus sampled distractors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::names::normalize_name;
use crate::recipe::{DepthError, IngredientRef, RecipeBook};
use crate::solver::{RecipeTree, SolveError};

/// Upper bound on related recipes sampled per gold ingredient.
pub const RECIPES_PER_INGREDIENT: usize = 10;
pub const DEFAULT_MAX_DISTRACTORS: usize = 10;

/// Share of depth-2 items placed in the test split (77 of 297).
pub const DEPTH2_TEST_FRACTION: (usize, usize) = (77, 297);

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("`{0}` is a raw item; there is nothing to craft")]
    RawTarget(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub target: String,
    pub commands: Vec<String>,
    pub depth: u32,
    pub split: Split,
    pub seed: u64,
}

impl TaskInstance {
    pub fn goal(&self) -> String {
        format!("craft {}", self.target)
    }

    /// Gold craft commands for this task's target, in tree post-order.
    pub fn gold_commands(&self, book: &RecipeBook) -> Result<Vec<String>, TaskError> {
        let tree = RecipeTree::build(book, &self.target)?;
        Ok(tree.recipes().into_iter().map(|r| r.command()).collect())
    }
}

/// Builds the command list for `target`: every gold recipe-tree command plus up
/// to `max_distractors` related commands, shuffled. `get` commands are never listed.
pub fn build_task(
    target: &str,
    book: &RecipeBook,
    seed: u64,
    max_distractors: usize,
) -> Result<TaskInstance, TaskError> {
    let target = normalize_name(target);
    let depth = book.recipe_depth(&target)?;
    if depth == 0 {
        return Err(TaskError::RawTarget(target));
    }
    let tree = RecipeTree::build(book, &target)?;
    let gold = tree.recipes();
    let gold_ids: BTreeSet<&str> = gold.iter().map(|r| r.id.as_str()).collect();
    let gold_commands: Vec<String> = gold.iter().map(|r| r.command()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ingredients: Vec<&IngredientRef> = Vec::new();
    for recipe in &gold {
        for ing in &recipe.ingredients {
            if !ingredients.contains(&&ing.target) {
                ingredients.push(&ing.target);
            }
        }
    }

    let mut pool = BTreeSet::new();
    for ingredient in ingredients {
        let mut related: Vec<_> = book
            .recipes_touching(ingredient)
            .into_iter()
            .filter(|r| !gold_ids.contains(r.id.as_str()))
            .collect();
        related.shuffle(&mut rng);
        related.truncate(RECIPES_PER_INGREDIENT);
        pool.extend(related.into_iter().map(|r| r.command()));
    }
    let mut distractors: Vec<String> = pool
        .into_iter()
        .filter(|c| !gold_commands.contains(c))
        .collect();
    distractors.shuffle(&mut rng);
    distractors.truncate(max_distractors);

    let mut commands = gold_commands;
    commands.extend(distractors);
    commands.shuffle(&mut rng);

    Ok(TaskInstance {
        id: format!("{}-{}", target.replace(' ', "_"), seed),
        target,
        commands,
        depth,
        split: Split::Dev,
        seed,
    })
}

/// One task per craftable item with depth in `[min_depth, max_depth]`, sorted by target.
pub fn generate_tasks(
    book: &RecipeBook,
    seed: u64,
    min_depth: u32,
    max_depth: u32,
) -> Result<Vec<TaskInstance>, TaskError> {
    let mut tasks = Vec::new();
    for item in book.craftable_items() {
        match book.item_depth(item) {
            Some(depth) if depth >= min_depth.max(1) && depth <= max_depth => {
                tasks.push(build_task(item, book, seed, DEFAULT_MAX_DISTRACTORS)?);
            }
            _ => {}
        }
    }
    Ok(tasks)
}

/// Depth 3+ goes to test; a fixed share of depth-2 items (shuffled by `seed`)
/// goes to test with the rest in dev; shallower items stay in dev.
pub fn assign_standard_splits(tasks: &mut [TaskInstance], seed: u64) {
    let mut depth2: Vec<usize> = Vec::new();
    for (i, task) in tasks.iter_mut().enumerate() {
        task.split = Split::Dev;
        match task.depth {
            2 => depth2.push(i),
            d if d >= 3 => task.split = Split::Test,
            _ => {}
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    depth2.shuffle(&mut rng);
    let (num, den) = DEPTH2_TEST_FRACTION;
    let n_test = (depth2.len() * num + den / 2) / den;
    for &i in depth2.iter().take(n_test) {
        tasks[i].split = Split::Test;
    }
}

/// Count of craftable items per recipe depth.
pub fn depth_histogram(book: &RecipeBook) -> BTreeMap<u32, usize> {
    let mut histogram = BTreeMap::new();
    for item in book.craftable_items() {
        if let Some(depth) = book.item_depth(item) {
            *histogram.entry(depth).or_default() += 1;
        }
    }
    histogram
}

pub fn write_tasks(path: &Path, tasks: &[TaskInstance]) -> Result<(), TaskError> {
    let io = |source| TaskError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io)?;
    for task in tasks {
        let line = serde_json::to_string(task).expect("task serializes");
        writeln!(file, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_tasks(path: &Path) -> Result<Vec<TaskInstance>, TaskError> {
    let io = |source| TaskError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut tasks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let task = serde_json::from_str(&line).map_err(|source| TaskError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        tasks.push(task);
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::mini_book;

    #[test]
    fn beehive_task_is_reproducible() {
        let book = mini_book();
        let a = build_task("beehive", &book, 7, 10).unwrap();
        let b = build_task("beehive", &book, 7, 10).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.depth, 2);
        assert_eq!(a.id, "beehive-7");
        assert_eq!(a.goal(), "craft beehive");
        for gold in a.gold_commands(&book).unwrap() {
            assert!(a.commands.contains(&gold), "{gold}");
        }
        assert!(a.commands.iter().all(|c| c.starts_with("craft ")));
    }

    #[test]
    fn distractor_cap_is_respected() {
        let book = mini_book();
        let task = build_task("beehive", &book, 3, 2).unwrap();
        let gold = task.gold_commands(&book).unwrap();
        assert_eq!(task.commands.len(), gold.len() + 2);
        let zero = build_task("beehive", &book, 3, 0).unwrap();
        let mut sorted = zero.commands.clone();
        sorted.sort();
        let mut gold_sorted = gold;
        gold_sorted.sort();
        assert_eq!(sorted, gold_sorted);
    }

    #[test]
    fn empty_pool_yields_gold_only() {
        let recipes = [(
            "thing".to_string(),
            serde_json::json!({"type": "minecraft:crafting_shapeless",
                               "ingredients": [{"item": "dust"}], "result": {"item": "thing"}}),
        )]
        .into();
        let (book, _) = RecipeBook::from_records(recipes, BTreeMap::new()).unwrap();
        let task = build_task("thing", &book, 0, 10).unwrap();
        assert_eq!(task.commands, vec!["craft 1 thing using 1 dust"]);
    }

    #[test]
    fn raw_and_unknown_targets_are_rejected() {
        let book = mini_book();
        assert!(matches!(build_task("honeycomb", &book, 0, 10), Err(TaskError::RawTarget(_))));
        assert!(matches!(build_task("unobtainium", &book, 0, 10), Err(TaskError::Depth(_))));
    }

    #[test]
    fn standard_splits_put_deep_items_in_test() {
        let book = mini_book();
        let mut tasks = generate_tasks(&book, 0, 2, 4).unwrap();
        assign_standard_splits(&mut tasks, 0);
        for task in &tasks {
            if task.depth >= 3 {
                assert_eq!(task.split, Split::Test);
            }
        }
        let depth2 = tasks.iter().filter(|t| t.depth == 2).count();
        let depth2_test = tasks.iter().filter(|t| t.depth == 2 && t.split == Split::Test).count();
        assert_eq!(depth2_test, (depth2 * 77 + 148) / 297);
    }

    #[test]
    fn jsonl_round_trip() {
        let book = mini_book();
        let tasks = generate_tasks(&book, 1, 1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.jsonl");
        write_tasks(&path, &tasks).unwrap();
        assert_eq!(read_tasks(&path).unwrap(), tasks);
        let line = fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        let keys: BTreeSet<_> = first.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            ["commands", "depth", "id", "seed", "split", "target"].map(String::from).into()
        );
    }
}
