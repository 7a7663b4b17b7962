//! Rule-based verbalization of entity capsules into passages.
//!
//! Namespace prefixes are stripped from every IRI, each fact becomes a
//! `subject predicate object` sentence (`is` for type facts, `has`
//! otherwise), and every non-type fact is followed by its reverse
//! formulation `object is predicate of subject`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::naming::{entity_slug, local_name, split_words};
use crate::passage::{Passage, SourceKind};
use crate::rdf::{EntityCapsule, Term, RDF_TYPE};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CasingMode {
    #[default]
    Natural,
    /// Everything lowercased.
    Lowercase,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CasingConfig {
    pub mode: CasingMode,
    /// Lowercase token -> fixed rendering, e.g. `bmw` -> `BMW`.
    pub acronyms: BTreeMap<String, String>,
}

impl CasingConfig {
    pub fn with_acronyms<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        CasingConfig {
            mode: CasingMode::Natural,
            acronyms: pairs
                .into_iter()
                .map(|(k, v)| (k.into().to_lowercase(), v.into()))
                .collect(),
        }
    }

    pub fn lowercase() -> Self {
        CasingConfig {
            mode: CasingMode::Lowercase,
            acronyms: BTreeMap::new(),
        }
    }

    fn render_token(&self, token: &str, title: bool) -> String {
        if self.mode == CasingMode::Lowercase {
            return token.to_lowercase();
        }
        if let Some(fixed) = self.acronyms.get(&token.to_lowercase()) {
            return fixed.clone();
        }
        if title {
            capitalize_first(token)
        } else {
            token.to_lowercase()
        }
    }
}

/// Per-corpus facts the verbalizer needs beyond a single capsule.
#[derive(Debug, Clone)]
pub struct VerbalizerContext {
    pub type_predicates: Vec<String>,
    /// IRIs that have a capsule of their own. Such objects are rendered as
    /// names; other IRI objects are rendered as plain lowercase values.
    pub known_entities: HashSet<String>,
}

impl Default for VerbalizerContext {
    fn default() -> Self {
        VerbalizerContext {
            type_predicates: vec![RDF_TYPE.to_string()],
            known_entities: HashSet::new(),
        }
    }
}

impl VerbalizerContext {
    pub fn for_capsules(capsules: &[EntityCapsule], type_predicates: Vec<String>) -> Self {
        VerbalizerContext {
            type_predicates,
            known_entities: capsules
                .iter()
                .filter_map(|c| c.subject.as_iri().map(str::to_string))
                .collect(),
        }
    }

    fn is_type(&self, predicate: &str) -> bool {
        self.type_predicates.iter().any(|t| t == predicate)
    }
}

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() => c.to_uppercase().chain(chars).collect(),
        _ => s.to_string(),
    }
}

/// Display name of an entity or type: last path segment, split on `-`, `_`
/// and camelCase, acronyms applied, remaining words title-cased.
pub fn label_from_iri(iri: &str, casing: &CasingConfig) -> String {
    render_words(entity_slug(iri), casing, true)
}

/// Rendering of an IRI used as a plain value (no capsule of its own).
pub fn value_from_iri(iri: &str, casing: &CasingConfig) -> String {
    render_words(entity_slug(iri), casing, false)
}

fn render_words(name: &str, casing: &CasingConfig, title: bool) -> String {
    let words = split_words(name);
    if words.is_empty() {
        return name.to_string();
    }
    words
        .iter()
        .map(|w| casing.render_token(w, title))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `ns1:enginePerformance` -> `engine performance`.
pub fn predicate_to_phrase(predicate_iri: &str) -> String {
    let words = split_words(local_name(predicate_iri));
    if words.is_empty() {
        return local_name(predicate_iri).to_string();
    }
    words
        .iter()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn object_text(object: &Term, ctx: &VerbalizerContext, casing: &CasingConfig) -> String {
    match object {
        Term::Literal { lexical, .. } => lexical.clone(),
        Term::BlankNode { lexical } => lexical.clone(),
        Term::Iri { lexical } if ctx.known_entities.contains(lexical) => {
            label_from_iri(lexical, casing)
        }
        Term::Iri { lexical } => value_from_iri(lexical, casing),
    }
}

fn finish_sentence(body: String, casing: &CasingConfig) -> String {
    let mut sentence = match casing.mode {
        CasingMode::Natural => capitalize_first(&body),
        CasingMode::Lowercase => body.to_lowercase(),
    };
    if !sentence.ends_with(['.', '!', '?']) {
        sentence.push('.');
    }
    sentence
}

/// The sentences for one capsule, in triple order.
pub fn verbalize_sentences(
    capsule: &EntityCapsule,
    ctx: &VerbalizerContext,
    casing: &CasingConfig,
) -> Vec<String> {
    let subject = match &capsule.subject {
        Term::Iri { lexical } => label_from_iri(lexical, casing),
        other => other.lexical().to_string(),
    };
    let mut sentences = Vec::with_capacity(capsule.triples.len() * 2);
    for triple in &capsule.triples {
        if ctx.is_type(triple.predicate_iri()) {
            let type_label = match &triple.object {
                Term::Iri { lexical } => label_from_iri(lexical, casing),
                other => other.lexical().to_string(),
            };
            sentences.push(finish_sentence(format!("{subject} is {type_label}"), casing));
            continue;
        }
        let phrase = predicate_to_phrase(triple.predicate_iri());
        let object = object_text(&triple.object, ctx, casing);
        sentences.push(finish_sentence(format!("{subject} has {phrase} {object}"), casing));
        sentences.push(finish_sentence(format!("{object} is {phrase} of {subject}"), casing));
    }
    sentences
}

pub fn verbalize_capsule(
    capsule: &EntityCapsule,
    ctx: &VerbalizerContext,
    casing: &CasingConfig,
) -> Passage {
    Passage {
        id: entity_slug(capsule.subject.lexical()).to_string(),
        text: verbalize_sentences(capsule, ctx, casing).join(" "),
        source_kind: SourceKind::KgCapsule,
        subject_iri: capsule.subject.as_iri().map(str::to_string),
    }
}

/// Verbalizes a whole corpus. Passage ids are subject slugs; a slug that
/// repeats (same last segment under different paths) gets a `#n` suffix in
/// capsule order so ids stay unique.
pub fn verbalize_all(
    capsules: &[EntityCapsule],
    type_predicates: Vec<String>,
    casing: &CasingConfig,
) -> Vec<Passage> {
    let ctx = VerbalizerContext::for_capsules(capsules, type_predicates);
    let mut seen: HashMap<String, usize> = HashMap::new();
    capsules
        .iter()
        .map(|capsule| {
            let mut passage = verbalize_capsule(capsule, &ctx, casing);
            let n = seen.entry(passage.id.clone()).or_insert(0);
            *n += 1;
            if *n > 1 {
                passage.id = format!("{}#{}", passage.id, n);
            }
            passage
        })
        .collect()
}
