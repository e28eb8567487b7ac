//! Depth-first derivations over the recipe graph.
//!
//! Two granularities share one walk: the gold oracle crafts one recipe
//! instance at a time (the trajectory shape a human would type), while the
//! merged form folds repeated instances into a single multiple-craft command.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::game::Inventory;
use crate::recipe::{IngredientRef, Recipe, RecipeBook};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("no derivation for `{0}`")]
    NoSolution(String),
}

/// One environment command.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Get { item: String, count: u32 },
    Craft { item: String, count: u32, ingredients: Vec<(String, u32)> },
    Inventory,
}

impl Action {
    pub fn is_craft(&self) -> bool {
        matches!(self, Action::Craft { .. })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Get { item, count } => write!(f, "get {count} {item}"),
            Action::Craft { item, count, ingredients } => {
                write!(f, "craft {count} {item} using ")?;
                for (i, (name, n)) in ingredients.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{n} {name}")?;
                }
                Ok(())
            }
            Action::Inventory => f.write_str("inventory"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// One craft command per recipe instance, fetching raw inputs per instance.
    PerInstance,
    /// One craft command per shortfall, using recipe multiples.
    Merged,
}

struct Walk<'a> {
    book: &'a RecipeBook,
    inventory: Inventory,
    granularity: Granularity,
    actions: Vec<Action>,
}

impl Walk<'_> {
    /// Removes `qty` of `target` from the simulated inventory, producing any
    /// shortfall first. Returns the concrete items reserved.
    fn acquire(&mut self, target: &IngredientRef, qty: u32) -> Result<Vec<(String, u32)>, SolveError> {
        match target {
            IngredientRef::Item(item) => {
                self.ensure(item, qty)?;
                self.take(item, qty);
                Ok(vec![(item.clone(), qty)])
            }
            IngredientRef::Tag(tag) => {
                let members = self
                    .book
                    .tag_members(tag)
                    .ok_or_else(|| SolveError::NoSolution(tag.clone()))?;
                let mut reserved = Vec::new();
                let mut remaining = qty;
                for member in members {
                    if remaining == 0 {
                        break;
                    }
                    let have = self.inventory.get(member).copied().unwrap_or(0);
                    let used = have.min(remaining);
                    if used > 0 {
                        self.take(member, used);
                        reserved.push((member.clone(), used));
                        remaining -= used;
                    }
                }
                if remaining > 0 {
                    let member = self
                        .book
                        .best_member(tag)
                        .ok_or_else(|| SolveError::NoSolution(tag.clone()))?
                        .to_string();
                    self.ensure(&member, remaining)?;
                    self.take(&member, remaining);
                    match reserved.iter_mut().find(|(name, _)| *name == member) {
                        Some((_, n)) => *n += remaining,
                        None => reserved.push((member, remaining)),
                    }
                }
                Ok(reserved)
            }
        }
    }

    fn ensure(&mut self, item: &str, qty: u32) -> Result<(), SolveError> {
        while self.inventory.get(item).copied().unwrap_or(0) < qty {
            let have = self.inventory.get(item).copied().unwrap_or(0);
            let shortfall = qty - have;
            if self.book.is_raw(item) {
                self.actions.push(Action::Get {
                    item: item.to_string(),
                    count: shortfall,
                });
                *self.inventory.entry(item.to_string()).or_default() += shortfall;
                continue;
            }
            let recipe: &Recipe = self
                .book
                .best_recipe(item)
                .ok_or_else(|| SolveError::NoSolution(item.to_string()))?;
            let instances = match self.granularity {
                Granularity::PerInstance => 1,
                Granularity::Merged => shortfall.div_ceil(recipe.output_count),
            };
            let mut used = Vec::new();
            for ing in &recipe.ingredients {
                for (name, n) in self.acquire(&ing.target, ing.count * instances)? {
                    match used.iter_mut().find(|(u, _): &&mut (String, u32)| *u == name) {
                        Some((_, total)) => *total += n,
                        None => used.push((name, n)),
                    }
                }
            }
            let produced = recipe.output_count * instances;
            self.actions.push(Action::Craft {
                item: item.to_string(),
                count: produced,
                ingredients: used,
            });
            *self.inventory.entry(item.to_string()).or_default() += produced;
        }
        Ok(())
    }

    fn take(&mut self, item: &str, qty: u32) {
        if qty == 0 {
            return;
        }
        let slot = self.inventory.get_mut(item).expect("reserved item present");
        *slot -= qty;
        if *slot == 0 {
            self.inventory.remove(item);
        }
    }
}

/// Actions that bring `qty` of `target` into an inventory starting at `inventory`.
/// Items already held are reused.
pub fn derive_actions(
    book: &RecipeBook,
    target: &IngredientRef,
    qty: u32,
    inventory: &Inventory,
    granularity: Granularity,
) -> Result<Vec<Action>, SolveError> {
    if book.ref_depth(target).is_none() {
        return Err(SolveError::NoSolution(target.name().to_string()));
    }
    let mut walk = Walk {
        book,
        inventory: inventory.clone(),
        granularity,
        actions: Vec::new(),
    };
    match target {
        IngredientRef::Item(item) => walk.ensure(item, qty)?,
        IngredientRef::Tag(_) => {
            walk.acquire(target, qty)?;
        }
    }
    Ok(walk.actions)
}

/// Gold trajectory for one unit of `target` from an empty inventory.
pub fn oracle_solve(book: &RecipeBook, target: &str) -> Result<Vec<Action>, SolveError> {
    let item = crate::names::normalize_name(target);
    if !book.is_known_item(&item) {
        return Err(SolveError::NoSolution(item));
    }
    derive_actions(
        book,
        &IngredientRef::Item(item),
        1,
        &Inventory::new(),
        Granularity::PerInstance,
    )
}

/// Minimal-depth recipe tree for an item, resolving tags to their preferred member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipeTree {
    pub item: String,
    pub recipe: Option<Recipe>,
    pub children: Vec<RecipeTree>,
}

impl RecipeTree {
    pub fn build(book: &RecipeBook, item: &str) -> Result<Self, SolveError> {
        if book.is_raw(item) {
            return Ok(RecipeTree {
                item: item.to_string(),
                recipe: None,
                children: Vec::new(),
            });
        }
        let recipe = book
            .best_recipe(item)
            .ok_or_else(|| SolveError::NoSolution(item.to_string()))?;
        let children = recipe
            .ingredients
            .iter()
            .map(|ing| {
                let child = book
                    .preferred_item(&ing.target)
                    .ok_or_else(|| SolveError::NoSolution(ing.target.name().to_string()))?;
                RecipeTree::build(book, child)
            })
            .collect::<Result<_, _>>()?;
        Ok(RecipeTree {
            item: item.to_string(),
            recipe: Some(recipe.clone()),
            children,
        })
    }

    pub fn height(&self) -> u32 {
        match &self.recipe {
            None => 0,
            Some(_) => 1 + self.children.iter().map(RecipeTree::height).max().unwrap_or(0),
        }
    }

    /// Recipes of every craft node, post-order, deduplicated.
    pub fn recipes(&self) -> Vec<&Recipe> {
        fn visit<'a>(node: &'a RecipeTree, seen: &mut BTreeSet<String>, out: &mut Vec<&'a Recipe>) {
            for child in &node.children {
                visit(child, seen, out);
            }
            if let Some(recipe) = &node.recipe {
                if seen.insert(recipe.id.clone()) {
                    out.push(recipe);
                }
            }
        }
        let mut out = Vec::new();
        visit(self, &mut BTreeSet::new(), &mut out);
        out
    }
}
