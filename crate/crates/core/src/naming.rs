//! Turning IRIs into human and SQL-friendly names.

/// The part of an IRI after its last `/`, `#` or `:` separator. A trailing
/// separator is ignored, so `http://ex.org/car/` yields `car`.
pub fn local_name(iri: &str) -> &str {
    let trimmed = iri.trim_end_matches(['/', '#']);
    match trimmed.rfind(['/', '#', ':']) {
        Some(idx) if idx + 1 < trimmed.len() => &trimmed[idx + 1..],
        _ => trimmed,
    }
}

/// Splits a name into words on non-alphanumeric separators and camelCase
/// boundaries (`WLTPCo2Emission` -> `WLTP`, `Co2`, `Emission`).
pub fn split_words(name: &str) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in name.split(|c: char| !c.is_alphanumeric()) {
        if chunk.is_empty() {
            continue;
        }
        let chars: Vec<char> = chunk.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_uppercase() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                let boundary = prev.is_lowercase()
                    || prev.is_ascii_digit()
                    || (prev.is_uppercase() && next_lower);
                if boundary && !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
            }
            current.push(c);
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

const RESERVED: &[&str] = &[
    "abort", "action", "add", "all", "alter", "and", "as", "asc", "between", "by", "case",
    "check", "collate", "column", "commit", "constraint", "create", "cross", "default",
    "delete", "desc", "distinct", "drop", "else", "end", "escape", "except", "exists",
    "foreign", "from", "full", "group", "having", "in", "index", "inner", "insert",
    "intersect", "into", "is", "join", "key", "left", "like", "limit", "natural", "not",
    "null", "of", "offset", "on", "or", "order", "outer", "primary", "references", "right",
    "select", "set", "table", "then", "to", "union", "unique", "update", "using", "values",
    "when", "where", "with",
];

/// Lowercase snake_case SQL identifier for a display name or IRI local name.
pub fn sql_identifier(name: &str) -> String {
    let words = split_words(name);
    let mut ident = words
        .iter()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join("_");
    if ident.is_empty() {
        ident = "unnamed".to_string();
    }
    if ident.starts_with(|c: char| c.is_ascii_digit()) {
        ident.insert_str(0, "n_");
    }
    if RESERVED.contains(&ident.as_str()) {
        ident.push('_');
    }
    ident
}

/// Identifier used for an entity row: the subject IRI's last path segment.
pub fn entity_slug(iri: &str) -> &str {
    local_name(iri)
}
