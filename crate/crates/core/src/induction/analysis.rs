//! Entity typing, relation cardinalities and literal collection over capsules.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{InductionConfig, InductionError, MultiTypePolicy};
use crate::naming::entity_slug;
use crate::rdf::{EntityCapsule, Term};

/// Exact relation cardinalities for one (predicate, subject type, object type).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CardinalityReport {
    pub predicate_iri: String,
    pub subject_type: String,
    pub object_type: String,
    pub max_objects_per_subject: usize,
    pub max_subjects_per_object: usize,
}

/// Where the foreign key for an entity relation lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FkPlacement {
    SubjectSide,
    ObjectSide,
    JoinTable,
}

impl CardinalityReport {
    pub fn placement(&self) -> FkPlacement {
        if self.max_objects_per_subject == 1 {
            FkPlacement::SubjectSide
        } else if self.max_subjects_per_object == 1 {
            FkPlacement::ObjectSide
        } else {
            FkPlacement::JoinTable
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct RelationKey {
    pub predicate: String,
    pub subject_type: String,
    pub object_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct LiteralKey {
    pub subject_type: String,
    pub predicate: String,
}

/// Everything induction and population need to know about the capsules.
#[derive(Debug, Default)]
pub(crate) struct KgAnalysis {
    /// Distinct type IRIs in first-appearance order.
    pub types: Vec<String>,
    /// Entities (subject IRIs) of each type, in capsule order.
    pub entities_by_type: HashMap<String, Vec<String>>,
    pub entity_type: HashMap<String, String>,
    /// Distinct (subject, object) pairs per relation, first-appearance order.
    pub relations: Vec<(RelationKey, Vec<(String, String)>)>,
    /// Distinct (subject, value) pairs per literal-valued predicate of a type.
    pub literals: Vec<(LiteralKey, Vec<(String, String)>)>,
}

impl KgAnalysis {
    pub fn from_capsules(
        capsules: &[EntityCapsule],
        config: &InductionConfig,
    ) -> Result<Self, InductionError> {
        let is_type = |p: &str| config.type_predicates.iter().any(|t| t == p);
        let mut analysis = KgAnalysis::default();

        // Pass 1: every capsule subject is a named entity with exactly one type.
        for capsule in capsules {
            let subject = match &capsule.subject {
                Term::Iri { lexical } => lexical.clone(),
                other => {
                    return Err(InductionError::BlankNodeSubject {
                        label: other.lexical().to_string(),
                    })
                }
            };
            let types: BTreeSet<&str> = capsule
                .triples
                .iter()
                .filter(|t| is_type(t.predicate_iri()))
                .map(|t| t.object.lexical())
                .collect();
            let chosen = match types.len() {
                0 => return Err(InductionError::UntypedEntity { iri: subject }),
                1 => types.first().unwrap().to_string(),
                _ => match config.multi_type_policy {
                    MultiTypePolicy::Reject => {
                        return Err(InductionError::MultiTypedEntity {
                            iri: subject,
                            types: types.iter().map(|s| s.to_string()).collect(),
                        })
                    }
                    MultiTypePolicy::FirstLexicographic => types.first().unwrap().to_string(),
                },
            };
            if analysis.entity_type.contains_key(&subject) {
                // group_capsules never produces duplicate subjects, but callers may.
                continue;
            }
            if !analysis.entities_by_type.contains_key(&chosen) {
                analysis.types.push(chosen.clone());
            }
            analysis
                .entities_by_type
                .entry(chosen.clone())
                .or_default()
                .push(subject.clone());
            analysis.entity_type.insert(subject, chosen);
        }

        // Pass 2: classify every non-type fact as relation or literal value.
        let mut relation_index: HashMap<RelationKey, usize> = HashMap::new();
        let mut literal_index: HashMap<LiteralKey, usize> = HashMap::new();
        let mut seen_rel: HashSet<(usize, String, String)> = HashSet::new();
        let mut seen_lit: HashSet<(usize, String, String)> = HashSet::new();
        for capsule in capsules {
            let subject = capsule.subject.lexical();
            let subject_type = &analysis.entity_type[subject];
            for triple in &capsule.triples {
                let predicate = triple.predicate_iri();
                if is_type(predicate) {
                    continue;
                }
                let entity_object = triple
                    .object
                    .as_iri()
                    .and_then(|o| analysis.entity_type.get(o).map(|t| (o, t)));
                if let Some((object, object_type)) = entity_object {
                    let key = RelationKey {
                        predicate: predicate.to_string(),
                        subject_type: subject_type.clone(),
                        object_type: object_type.clone(),
                    };
                    let idx = *relation_index.entry(key.clone()).or_insert_with(|| {
                        analysis.relations.push((key, Vec::new()));
                        analysis.relations.len() - 1
                    });
                    if seen_rel.insert((idx, subject.to_string(), object.to_string())) {
                        analysis.relations[idx]
                            .1
                            .push((subject.to_string(), object.to_string()));
                    }
                } else {
                    let key = LiteralKey {
                        subject_type: subject_type.clone(),
                        predicate: predicate.to_string(),
                    };
                    let idx = *literal_index.entry(key.clone()).or_insert_with(|| {
                        analysis.literals.push((key, Vec::new()));
                        analysis.literals.len() - 1
                    });
                    let value = literal_value(&triple.object);
                    if seen_lit.insert((idx, subject.to_string(), value.clone())) {
                        analysis.literals[idx].1.push((subject.to_string(), value));
                    }
                }
            }
        }
        Ok(analysis)
    }

    pub fn cardinalities(&self) -> Vec<CardinalityReport> {
        self.relations
            .iter()
            .map(|(key, pairs)| {
                let mut per_subject: HashMap<&str, usize> = HashMap::new();
                let mut per_object: HashMap<&str, usize> = HashMap::new();
                for (s, o) in pairs {
                    *per_subject.entry(s).or_default() += 1;
                    *per_object.entry(o).or_default() += 1;
                }
                CardinalityReport {
                    predicate_iri: key.predicate.clone(),
                    subject_type: key.subject_type.clone(),
                    object_type: key.object_type.clone(),
                    max_objects_per_subject: per_subject.values().copied().max().unwrap_or(1),
                    max_subjects_per_object: per_object.values().copied().max().unwrap_or(1),
                }
            })
            .collect()
    }
}

/// Value stored for a non-entity object: the literal's lexical form, or the
/// slug of an IRI that has no capsule of its own.
pub(crate) fn literal_value(object: &Term) -> String {
    match object {
        Term::Literal { lexical, .. } => lexical.clone(),
        Term::Iri { lexical } => entity_slug(lexical).to_string(),
        Term::BlankNode { lexical } => format!("_:{lexical}"),
    }
}

/// Cardinality analysis over capsules.
pub fn analyze_cardinalities(
    capsules: &[EntityCapsule],
    config: &InductionConfig,
) -> Result<Vec<CardinalityReport>, InductionError> {
    Ok(KgAnalysis::from_capsules(capsules, config)?.cardinalities())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::{group_capsules, parse_ntriples_str};

    fn capsules(src: &str) -> Vec<EntityCapsule> {
        group_capsules(&parse_ntriples_str(src).unwrap())
    }

    const TYPE: &str = "<http://www.w3.org/1999/02/22-rdf-syntax-ns#type>";

    #[test]
    fn single_relation_is_one_to_one() {
        let src = format!(
            "<e:a> {TYPE} <t:Car> .\n<e:b> {TYPE} <t:Engine> .\n<e:a> <p:engine> <e:b> .\n"
        );
        let reports = analyze_cardinalities(&capsules(&src), &InductionConfig::default()).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].max_objects_per_subject, 1);
        assert_eq!(reports[0].max_subjects_per_object, 1);
        assert_eq!(reports[0].placement(), FkPlacement::SubjectSide);
    }

    #[test]
    fn untyped_entities_are_rejected() {
        let src = format!("<e:a> {TYPE} <t:Car> .\n<e:b> <p:x> \"1\" .\n<e:a> <p:engine> <e:b> .\n");
        let err = analyze_cardinalities(&capsules(&src), &InductionConfig::default()).unwrap_err();
        assert_eq!(err, InductionError::UntypedEntity { iri: "e:b".into() });
    }

    #[test]
    fn multi_typed_entities_follow_policy() {
        let src = format!("<e:a> {TYPE} <t:Car> .\n<e:a> {TYPE} <t:Auto> .\n");
        let caps = capsules(&src);
        let err = analyze_cardinalities(&caps, &InductionConfig::default()).unwrap_err();
        assert!(matches!(err, InductionError::MultiTypedEntity { .. }));
        let config = InductionConfig {
            multi_type_policy: MultiTypePolicy::FirstLexicographic,
            ..Default::default()
        };
        let analysis = KgAnalysis::from_capsules(&caps, &config).unwrap();
        assert_eq!(analysis.entity_type["e:a"], "t:Auto");
    }

    #[test]
    fn blank_subjects_are_rejected() {
        let src = format!("_:b {TYPE} <t:Car> .\n");
        let err = analyze_cardinalities(&capsules(&src), &InductionConfig::default()).unwrap_err();
        assert_eq!(err, InductionError::BlankNodeSubject { label: "b".into() });
    }

    #[test]
    fn opaque_iris_are_literal_values() {
        let src = format!("<e:a> {TYPE} <t:Car> .\n<e:a> <p:fuel> <http://ex.org/fuel-type/gasoline> .\n");
        let analysis = KgAnalysis::from_capsules(&capsules(&src), &InductionConfig::default()).unwrap();
        assert!(analysis.relations.is_empty());
        assert_eq!(analysis.literals[0].1, vec![("e:a".into(), "gasoline".into())]);
    }
}
