//! Recipe graph: ingestion of data-pack recipe/tag records, tag resolution and
//! minimal-depth bookkeeping.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tracing::warn;

use crate::names::normalize_name;

const MINI_BOOK: &str = include_str!("../data/minibook.json");

const SHAPED: &str = "crafting_shaped";
const SHAPELESS: &str = "crafting_shapeless";

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context} references unknown tag `{tag}`")]
    UnresolvedTagReference { context: String, tag: String },
    #[error("no recipes directory found under {0}")]
    MissingRecipeDir(PathBuf),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DepthError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("`{0}` cannot be derived from raw items")]
    NoDerivation(String),
}

/// A recipe slot: a concrete item or any member of a tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IngredientRef {
    Item(String),
    Tag(String),
}

impl IngredientRef {
    pub fn name(&self) -> &str {
        match self {
            IngredientRef::Item(name) | IngredientRef::Tag(name) => name,
        }
    }
}

impl fmt::Display for IngredientRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ingredient {
    pub target: IngredientRef,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Recipe {
    /// Record id (file stem) the recipe was loaded from.
    pub id: String,
    pub output: String,
    pub output_count: u32,
    pub ingredients: Vec<Ingredient>,
}

impl Recipe {
    /// Renders the recipe as a crafting command, e.g. `craft 4 stick using 2 planks`.
    pub fn command(&self) -> String {
        let ingredients = self
            .ingredients
            .iter()
            .map(|ing| format!("{} {}", ing.count, ing.target))
            .collect::<Vec<_>>()
            .join(", ");
        format!("craft {} {} using {}", self.output_count, self.output, ingredients)
    }
}

/// Outcome counters from ingesting a directory or bundle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub loaded: usize,
    /// Records of other recipe types (smelting, special crafting, ...).
    pub skipped_other_types: usize,
    /// `(record id, reason)` for crafting records that could not be parsed.
    pub malformed: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct RecipeBook {
    recipes: BTreeMap<String, Vec<Recipe>>,
    tags: BTreeMap<String, BTreeSet<String>>,
    items: BTreeSet<String>,
    depths: BTreeMap<String, u32>,
}

#[derive(Deserialize)]
struct Bundle {
    recipes: BTreeMap<String, Value>,
    tags: BTreeMap<String, Value>,
}

/// The bundled miniature recipe book used by tests and default runs.
pub fn mini_book() -> RecipeBook {
    let bundle: Bundle = serde_json::from_str(MINI_BOOK).expect("bundled recipe book is valid JSON");
    let (book, report) = RecipeBook::from_records(bundle.recipes, bundle.tags)
        .expect("bundled recipe book resolves");
    debug_assert!(report.malformed.is_empty());
    book
}

/// Raw JSON of the bundled book, `{"recipes": {...}, "tags": {...}}`.
pub fn mini_book_source() -> &'static str {
    MINI_BOOK
}

/// Reads a data-pack style directory: `recipes/*.json` plus `tags/items/*.json`.
/// Also accepts a pack root containing `data/minecraft/`.
pub fn load_recipes(dir: &Path) -> Result<(RecipeBook, LoadReport), RecipeError> {
    let base = [dir.to_path_buf(), dir.join("data").join("minecraft")]
        .into_iter()
        .find(|candidate| candidate.join("recipes").is_dir())
        .ok_or_else(|| RecipeError::MissingRecipeDir(dir.to_path_buf()))?;

    let mut malformed = Vec::new();
    let recipes = read_json_dir(&base.join("recipes"), &mut malformed)?;
    let tag_dir = base.join("tags").join("items");
    let tags = if tag_dir.is_dir() {
        read_json_dir(&tag_dir, &mut malformed)?
    } else {
        BTreeMap::new()
    };
    let (book, mut report) = RecipeBook::from_records(recipes, tags)?;
    malformed.extend(report.malformed);
    report.malformed = malformed;
    Ok((book, report))
}

fn read_json_dir(
    dir: &Path,
    malformed: &mut Vec<(String, String)>,
) -> Result<BTreeMap<String, Value>, RecipeError> {
    let io_err = |source| RecipeError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = BTreeMap::new();
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.extension().is_some_and(|ext| ext == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    for path in paths {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(&path).map_err(|source| RecipeError::Io {
            path: path.clone(),
            source,
        })?;
        match serde_json::from_str(&text) {
            Ok(value) => {
                out.insert(id, value);
            }
            Err(err) => {
                warn!(record = %id, "skipping unparsable record: {err}");
                malformed.push((id, format!("invalid json: {err}")));
            }
        }
    }
    Ok(out)
}

impl RecipeBook {
    /// Builds a book from already-decoded recipe and tag records keyed by id.
    pub fn from_records(
        recipe_records: BTreeMap<String, Value>,
        tag_records: BTreeMap<String, Value>,
    ) -> Result<(Self, LoadReport), RecipeError> {
        let mut tags = resolve_tags(&tag_records)?;
        let mut report = LoadReport::default();
        let mut recipes: BTreeMap<String, Vec<Recipe>> = BTreeMap::new();

        for (id, record) in &recipe_records {
            let kind = record
                .get("type")
                .and_then(Value::as_str)
                .map(normalize_name)
                .unwrap_or_default();
            let kind = kind.replace(' ', "_");
            if kind != SHAPED && kind != SHAPELESS {
                report.skipped_other_types += 1;
                continue;
            }
            match parse_recipe(id, record, kind == SHAPED, &mut tags) {
                Ok(recipe) => {
                    report.loaded += 1;
                    recipes.entry(recipe.output.clone()).or_default().push(recipe);
                }
                Err(RecordProblem::Malformed(reason)) => {
                    warn!(record = %id, "skipping malformed recipe: {reason}");
                    report.malformed.push((id.clone(), reason));
                }
                Err(RecordProblem::UnknownTag(tag)) => {
                    return Err(RecipeError::UnresolvedTagReference {
                        context: format!("recipe `{id}`"),
                        tag,
                    })
                }
            }
        }

        let mut items = BTreeSet::new();
        for (output, list) in &recipes {
            items.insert(output.clone());
            for recipe in list {
                for ing in &recipe.ingredients {
                    if let IngredientRef::Item(name) = &ing.target {
                        items.insert(name.clone());
                    }
                }
            }
        }
        for members in tags.values() {
            items.extend(members.iter().cloned());
        }

        let mut book = RecipeBook {
            recipes,
            tags,
            items,
            depths: BTreeMap::new(),
        };
        book.depths = book.compute_depths();
        Ok((book, report))
    }

    /// Least fixpoint of `depth(x) = min over recipes (1 + max ingredient depth)`,
    /// which is the height of the shallowest acyclic derivation. Items caught
    /// in cycles without a raw base never receive a depth.
    fn compute_depths(&self) -> BTreeMap<String, u32> {
        let mut depth: BTreeMap<String, u32> = self
            .items
            .iter()
            .filter(|item| !self.recipes.contains_key(*item))
            .map(|item| (item.clone(), 0))
            .collect();
        loop {
            let mut changed = false;
            for (output, list) in &self.recipes {
                for recipe in list {
                    let Some(candidate) = self.recipe_height(recipe, &depth) else {
                        continue;
                    };
                    if depth.get(output).is_none_or(|current| candidate < *current) {
                        depth.insert(output.clone(), candidate);
                        changed = true;
                    }
                }
            }
            if !changed {
                return depth;
            }
        }
    }

    fn recipe_height(&self, recipe: &Recipe, depth: &BTreeMap<String, u32>) -> Option<u32> {
        let mut deepest = 0;
        for ing in &recipe.ingredients {
            deepest = deepest.max(self.ref_depth_in(&ing.target, depth)?);
        }
        Some(deepest + 1)
    }

    fn ref_depth_in(&self, target: &IngredientRef, depth: &BTreeMap<String, u32>) -> Option<u32> {
        match target {
            IngredientRef::Item(name) => depth.get(name).copied(),
            IngredientRef::Tag(tag) => self
                .tags
                .get(tag)?
                .iter()
                .filter_map(|member| depth.get(member).copied())
                .min(),
        }
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(String::as_str)
    }

    pub fn tags(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.tags
    }

    pub fn tag_members(&self, tag: &str) -> Option<&BTreeSet<String>> {
        self.tags.get(tag)
    }

    pub fn recipes_for(&self, item: &str) -> &[Recipe] {
        self.recipes.get(item).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_recipes(&self) -> impl Iterator<Item = &Recipe> {
        self.recipes.values().flatten()
    }

    /// Items that have at least one crafting recipe.
    pub fn craftable_items(&self) -> impl Iterator<Item = &str> {
        self.recipes.keys().map(String::as_str)
    }

    pub fn is_known_item(&self, item: &str) -> bool {
        self.items.contains(item)
    }

    /// Known items without any crafting-table recipe; these are obtainable via `get`.
    pub fn is_raw(&self, item: &str) -> bool {
        self.items.contains(item) && !self.recipes.contains_key(item)
    }

    pub fn item_depth(&self, item: &str) -> Option<u32> {
        self.depths.get(item).copied()
    }

    pub fn ref_depth(&self, target: &IngredientRef) -> Option<u32> {
        self.ref_depth_in(target, &self.depths)
    }

    /// Number of crafting layers between raw items and `item`.
    pub fn recipe_depth(&self, item: &str) -> Result<u32, DepthError> {
        let name = normalize_name(item);
        if let Some(depth) = self.depths.get(&name) {
            return Ok(*depth);
        }
        if self.items.contains(&name) {
            Err(DepthError::NoDerivation(name))
        } else if let Some(depth) = self.ref_depth(&IngredientRef::Tag(name.clone())) {
            Ok(depth)
        } else if self.tags.contains_key(&name) {
            Err(DepthError::NoDerivation(name))
        } else {
            Err(DepthError::UnknownItem(name))
        }
    }

    /// First recipe (in record order) achieving the item's minimal depth.
    pub fn best_recipe(&self, item: &str) -> Option<&Recipe> {
        let target = self.item_depth(item)?;
        self.recipes_for(item)
            .iter()
            .find(|recipe| self.recipe_height(recipe, &self.depths) == Some(target))
    }

    /// Shallowest derivable tag member, ties broken lexicographically.
    pub fn best_member(&self, tag: &str) -> Option<&str> {
        self.tags
            .get(tag)?
            .iter()
            .filter_map(|member| self.item_depth(member).map(|d| (d, member)))
            .min()
            .map(|(_, member)| member.as_str())
    }

    /// Concrete item that would be produced to satisfy `target`.
    pub fn preferred_item<'a>(&'a self, target: &'a IngredientRef) -> Option<&'a str> {
        match target {
            IngredientRef::Item(name) => Some(name.as_str()),
            IngredientRef::Tag(tag) => self.best_member(tag),
        }
    }

    /// Whether an item or tag named by the agent satisfies a recipe slot.
    pub fn satisfies(&self, slot: &IngredientRef, offered: &IngredientRef) -> bool {
        match (slot, offered) {
            (IngredientRef::Item(a), IngredientRef::Item(b)) => a == b,
            (IngredientRef::Tag(a), IngredientRef::Tag(b)) => a == b,
            (IngredientRef::Tag(tag), IngredientRef::Item(item)) => {
                self.tags.get(tag).is_some_and(|members| members.contains(item))
            }
            (IngredientRef::Item(_), IngredientRef::Tag(_)) => false,
        }
    }

    /// Maps free text to an item or tag. Items win over tags of the same name;
    /// a trailing plural `s` is tolerated.
    pub fn resolve(&self, name: &str) -> Option<IngredientRef> {
        let name = normalize_name(name);
        let lookup = |candidate: &str| {
            if self.items.contains(candidate) {
                Some(IngredientRef::Item(candidate.to_string()))
            } else if self.tags.contains_key(candidate) {
                Some(IngredientRef::Tag(candidate.to_string()))
            } else {
                None
            }
        };
        lookup(&name).or_else(|| name.strip_suffix('s').and_then(lookup))
    }

    /// Recipes that produce `item` or consume it (directly or via a tag).
    pub fn recipes_touching(&self, target: &IngredientRef) -> Vec<&Recipe> {
        let produced: BTreeSet<&str> = match target {
            IngredientRef::Item(name) => [name.as_str()].into_iter().collect(),
            IngredientRef::Tag(tag) => self
                .tags
                .get(tag)
                .map(|m| m.iter().map(String::as_str).collect())
                .unwrap_or_default(),
        };
        self.all_recipes()
            .filter(|recipe| {
                produced.contains(recipe.output.as_str())
                    || recipe.ingredients.iter().any(|ing| {
                        ing.target == *target
                            || match (&ing.target, target) {
                                (IngredientRef::Tag(_), IngredientRef::Item(_)) => {
                                    self.satisfies(&ing.target, target)
                                }
                                _ => false,
                            }
                    })
            })
            .collect()
    }
}

fn resolve_tags(
    records: &BTreeMap<String, Value>,
) -> Result<BTreeMap<String, BTreeSet<String>>, RecipeError> {
    let raw: BTreeMap<String, Vec<String>> = records
        .iter()
        .map(|(id, record)| {
            let values = record
                .get("values")
                .and_then(Value::as_array)
                .map(|values| {
                    values
                        .iter()
                        .filter_map(|v| match v {
                            Value::String(s) => Some(s.clone()),
                            Value::Object(o) => o.get("id").and_then(Value::as_str).map(str::to_string),
                            _ => None,
                        })
                        .collect()
                })
                .unwrap_or_default();
            (normalize_name(id), values)
        })
        .collect();

    fn expand(
        tag: &str,
        raw: &BTreeMap<String, Vec<String>>,
        stack: &mut Vec<String>,
        out: &mut BTreeSet<String>,
    ) -> Result<(), RecipeError> {
        if stack.iter().any(|seen| seen == tag) {
            return Ok(());
        }
        stack.push(tag.to_string());
        for value in &raw[tag] {
            if value.starts_with('#') {
                let nested = normalize_name(value);
                if !raw.contains_key(&nested) {
                    return Err(RecipeError::UnresolvedTagReference {
                        context: format!("tag `{tag}`"),
                        tag: nested,
                    });
                }
                expand(&nested, raw, stack, out)?;
            } else {
                out.insert(normalize_name(value));
            }
        }
        stack.pop();
        Ok(())
    }

    let mut resolved = BTreeMap::new();
    for tag in raw.keys() {
        let mut members = BTreeSet::new();
        expand(tag, &raw, &mut Vec::new(), &mut members)?;
        resolved.insert(tag.clone(), members);
    }
    Ok(resolved)
}

enum RecordProblem {
    Malformed(String),
    UnknownTag(String),
}

fn malformed(reason: impl Into<String>) -> RecordProblem {
    RecordProblem::Malformed(reason.into())
}

fn parse_recipe(
    id: &str,
    record: &Value,
    shaped: bool,
    tags: &mut BTreeMap<String, BTreeSet<String>>,
) -> Result<Recipe, RecordProblem> {
    let (output, output_count) = parse_result(record.get("result").ok_or_else(|| malformed("missing result"))?)?;

    let mut slots: Vec<(IngredientRef, u32)> = Vec::new();
    let mut add = |target: IngredientRef| match slots.iter_mut().find(|(t, _)| *t == target) {
        Some((_, count)) => *count += 1,
        None => slots.push((target, 1)),
    };

    if shaped {
        let pattern = record
            .get("pattern")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("shaped recipe without pattern"))?;
        let key = record
            .get("key")
            .and_then(Value::as_object)
            .ok_or_else(|| malformed("shaped recipe without key"))?;
        for row in pattern {
            let row = row.as_str().ok_or_else(|| malformed("pattern row is not a string"))?;
            for symbol in row.chars().filter(|c| *c != ' ') {
                let entry = key
                    .get(&symbol.to_string())
                    .ok_or_else(|| malformed(format!("pattern symbol `{symbol}` missing from key")))?;
                add(parse_ingredient(entry, tags)?);
            }
        }
    } else {
        let list = record
            .get("ingredients")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("shapeless recipe without ingredients"))?;
        for entry in list {
            add(parse_ingredient(entry, tags)?);
        }
    }

    if slots.is_empty() {
        return Err(malformed("recipe has no ingredients"));
    }
    Ok(Recipe {
        id: id.to_string(),
        output,
        output_count,
        ingredients: slots
            .into_iter()
            .map(|(target, count)| Ingredient { target, count })
            .collect(),
    })
}

fn parse_result(result: &Value) -> Result<(String, u32), RecordProblem> {
    let (name, count) = match result {
        Value::String(name) => (name.as_str(), 1),
        Value::Object(obj) => {
            let name = obj
                .get("item")
                .or_else(|| obj.get("id"))
                .and_then(Value::as_str)
                .ok_or_else(|| malformed("result has no item"))?;
            let count = match obj.get("count") {
                None => 1,
                Some(v) => v.as_u64().ok_or_else(|| malformed("result count is not an integer"))?,
            };
            (name, count)
        }
        _ => return Err(malformed("result is neither string nor object")),
    };
    if count == 0 || count > u32::MAX as u64 {
        return Err(malformed("result count out of range"));
    }
    Ok((normalize_name(name), count as u32))
}

fn parse_ingredient(
    entry: &Value,
    tags: &mut BTreeMap<String, BTreeSet<String>>,
) -> Result<IngredientRef, RecordProblem> {
    match entry {
        Value::Object(obj) => {
            if let Some(item) = obj.get("item").and_then(Value::as_str) {
                Ok(IngredientRef::Item(normalize_name(item)))
            } else if let Some(tag) = obj.get("tag").and_then(Value::as_str) {
                let tag = normalize_name(tag);
                if tags.contains_key(&tag) {
                    Ok(IngredientRef::Tag(tag))
                } else {
                    Err(RecordProblem::UnknownTag(tag))
                }
            } else {
                Err(malformed("ingredient has neither item nor tag"))
            }
        }
        Value::Array(alternatives) => {
            let mut members = BTreeSet::new();
            for alt in alternatives {
                match parse_ingredient(alt, tags)? {
                    IngredientRef::Item(item) => {
                        members.insert(item);
                    }
                    IngredientRef::Tag(tag) => members.extend(tags[&tag].iter().cloned()),
                }
            }
            match members.len() {
                0 => Err(malformed("empty ingredient alternatives")),
                1 => Ok(IngredientRef::Item(members.into_iter().next().unwrap())),
                _ => {
                    // Alternatives become an anonymous tag named after its members.
                    let name = members.iter().cloned().collect::<Vec<_>>().join(" or ");
                    tags.entry(name.clone()).or_insert(members);
                    Ok(IngredientRef::Tag(name))
                }
            }
        }
        _ => Err(malformed("ingredient is not an object or list")),
    }
}
