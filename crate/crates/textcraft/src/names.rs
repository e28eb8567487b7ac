//! Item-name normalization shared by the recipe loader and the action parser.

/// Lowercases, strips a namespace (`minecraft:`) or tag marker (`#`), renders
/// underscores as spaces and collapses runs of whitespace.
///
/// `"minecraft:oak_planks"` becomes `"oak planks"`.
pub fn normalize_name(raw: &str) -> String {
    let trimmed = raw.trim();
    let trimmed = trimmed.strip_prefix('#').unwrap_or(trimmed);
    let bare = match trimmed.rsplit_once(':') {
        Some((_, name)) => name,
        None => trimmed,
    };
    bare.replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}
