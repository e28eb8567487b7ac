//! TextCraft: a text-only crafting game over Minecraft-style recipes.
//!
//! Recipes are read from data-pack JSON (or the bundled miniature book), each
//! task lists the gold crafting commands for its target plus a few related
//! distractors, and the agent plays with `craft`, `get` and `inventory`.

pub mod game;
pub mod names;
pub mod recipe;
pub mod solver;
pub mod task;

pub use game::{parse_command, parse_inventory, render_inventory, Command, GameState, Inventory, TextCraftEnv};
pub use names::normalize_name;
pub use recipe::{
    load_recipes, mini_book, DepthError, Ingredient, IngredientRef, LoadReport, Recipe, RecipeBook, RecipeError,
};
pub use solver::{derive_actions, oracle_solve, Action, Granularity, RecipeTree, SolveError};
pub use task::{
    assign_standard_splits, build_task, depth_histogram, generate_tasks, read_tasks, write_tasks, Split, TaskError,
    TaskInstance,
};
