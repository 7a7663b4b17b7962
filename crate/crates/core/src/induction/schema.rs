//! Relational schema derived from the analysed knowledge graph.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::analysis::{CardinalityReport, FkPlacement, KgAnalysis};
use super::column_type::{infer_column_type, SqlType};
use super::{ddl, InductionConfig, InductionError, RenameConfig};
use crate::naming::{entity_slug, local_name, sql_identifier};
use crate::rdf::EntityCapsule;

pub const PRIMARY_KEY_COLUMN: &str = "id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TableKind {
    Entity,
    Join,
    /// Auxiliary table for a literal predicate with several values per entity.
    MultiValue,
}

/// What a column is populated from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ColumnSource {
    PrimaryKey,
    Literal {
        predicate: String,
    },
    #[serde(rename_all = "camelCase")]
    ForeignKey {
        predicate: String,
        object_type: String,
    },
    #[serde(rename_all = "camelCase")]
    InverseForeignKey {
        predicate: String,
        subject_type: String,
    },
    JoinSubject,
    JoinObject,
    Owner,
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnDef {
    pub name: String,
    pub sql_type: SqlType,
    pub nullable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_suffix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fk_target: Option<String>,
    pub source: ColumnSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableDef {
    pub name: String,
    pub kind: TableKind,
    /// Single-column key for entity tables. Join and multi-value tables have none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<String>,
    pub columns: Vec<ColumnDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_type_iri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_predicate_iri: Option<String>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InducedSchema {
    pub tables: Vec<TableDef>,
    /// Applied renames, original name -> display name. Column renames are
    /// keyed `table.column` using original names.
    pub renames: BTreeMap<String, String>,
    /// Applied comment overrides keyed `table.column` (original names).
    pub comments: BTreeMap<String, String>,
    pub cardinalities: Vec<CardinalityReport>,
    pub generated_ddl: String,
}

impl InducedSchema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn entity_table_for_type(&self, type_iri: &str) -> Option<&TableDef> {
        self.tables
            .iter()
            .find(|t| t.kind == TableKind::Entity && t.source_type_iri.as_deref() == Some(type_iri))
    }

    pub fn entity_table_count(&self) -> usize {
        self.tables.iter().filter(|t| t.kind == TableKind::Entity).count()
    }
}

/// Hands out unique names, trying preferred spellings before numbering.
#[derive(Default)]
struct NameAllocator {
    taken: HashSet<String>,
}

impl NameAllocator {
    fn reserve(&mut self, name: &str) {
        self.taken.insert(name.to_string());
    }

    fn allocate(&mut self, preferred: &str, alternates: &[String]) -> String {
        for candidate in std::iter::once(preferred.to_string()).chain(alternates.iter().cloned()) {
            if self.taken.insert(candidate.clone()) {
                return candidate;
            }
        }
        let mut n = 2;
        loop {
            let candidate = format!("{preferred}_{n}");
            if self.taken.insert(candidate.clone()) {
                return candidate;
            }
            n += 1;
        }
    }
}

fn text_column(name: String, nullable: bool, source: ColumnSource) -> ColumnDef {
    ColumnDef {
        name,
        sql_type: SqlType::Text,
        nullable,
        unit_suffix: None,
        comment: None,
        fk_target: None,
        source,
    }
}

fn typed_column<S: AsRef<str>>(
    name: String,
    values: &[S],
    null_count: usize,
    source: ColumnSource,
) -> ColumnDef {
    let inferred = infer_column_type(values, null_count);
    ColumnDef {
        name,
        sql_type: inferred.sql_type,
        nullable: inferred.nullable,
        comment: inferred.unit_suffix.as_ref().map(|u| format!("unit: {u}")),
        unit_suffix: inferred.unit_suffix,
        fk_target: None,
        source,
    }
}

pub fn induce_schema(
    capsules: &[EntityCapsule],
    config: &InductionConfig,
    overrides: &RenameConfig,
) -> Result<InducedSchema, InductionError> {
    let analysis = KgAnalysis::from_capsules(capsules, config)?;
    induce_from_analysis(&analysis, overrides)
}

pub(crate) fn induce_from_analysis(
    analysis: &KgAnalysis,
    overrides: &RenameConfig,
) -> Result<InducedSchema, InductionError> {
    let cardinalities = analysis.cardinalities();

    let mut table_names = NameAllocator::default();
    let mut type_table: HashMap<&str, String> = HashMap::new();
    let mut tables: Vec<TableDef> = Vec::new();
    let mut column_names: Vec<NameAllocator> = Vec::new();
    let mut table_index: HashMap<String, usize> = HashMap::new();

    for type_iri in &analysis.types {
        let name = table_names.allocate(&sql_identifier(local_name(type_iri)), &[]);
        let entities = &analysis.entities_by_type[type_iri];
        let mut seen = HashSet::new();
        for entity in entities {
            if !seen.insert(entity_slug(entity)) {
                return Err(InductionError::DuplicateKey {
                    table: name.clone(),
                    key: entity_slug(entity).to_string(),
                });
            }
        }
        let mut alloc = NameAllocator::default();
        alloc.reserve(PRIMARY_KEY_COLUMN);
        type_table.insert(type_iri, name.clone());
        table_index.insert(name.clone(), tables.len());
        tables.push(TableDef {
            name: name.clone(),
            kind: TableKind::Entity,
            primary_key: Some(PRIMARY_KEY_COLUMN.to_string()),
            columns: vec![ColumnDef {
                comment: Some("entity identifier".into()),
                ..text_column(PRIMARY_KEY_COLUMN.into(), false, ColumnSource::PrimaryKey)
            }],
            source_type_iri: Some(type_iri.clone()),
            source_predicate_iri: None,
        });
        column_names.push(alloc);
    }

    let mut aux_tables: Vec<TableDef> = Vec::new();

    // Literal-valued predicates: scalar column, or an auxiliary table when
    // any entity carries more than one value.
    for (key, pairs) in &analysis.literals {
        let owner = &type_table[key.subject_type.as_str()];
        let idx = table_index[owner];
        let entity_count = analysis.entities_by_type[&key.subject_type].len();
        let mut per_subject: HashMap<&str, usize> = HashMap::new();
        for (s, _) in pairs {
            *per_subject.entry(s).or_default() += 1;
        }
        let values: Vec<&str> = pairs.iter().map(|(_, v)| v.as_str()).collect();
        let column = sql_identifier(local_name(&key.predicate));
        if per_subject.values().all(|&n| n == 1) {
            let name = column_names[idx].allocate(&column, &[]);
            let null_count = entity_count - per_subject.len();
            tables[idx].columns.push(typed_column(
                name,
                &values,
                null_count,
                ColumnSource::Literal {
                    predicate: key.predicate.clone(),
                },
            ));
        } else {
            let name = table_names.allocate(&format!("{owner}_{column}"), &[]);
            let owner_col = format!("{owner}_id");
            aux_tables.push(TableDef {
                name,
                kind: TableKind::MultiValue,
                primary_key: None,
                columns: vec![
                    ColumnDef {
                        fk_target: Some(owner.clone()),
                        ..text_column(owner_col, false, ColumnSource::Owner)
                    },
                    typed_column("value".into(), &values, 0, ColumnSource::Value),
                ],
                source_type_iri: Some(key.subject_type.clone()),
                source_predicate_iri: Some(key.predicate.clone()),
            });
        }
    }

    // Entity relations, placed by cardinality.
    for ((key, pairs), report) in analysis.relations.iter().zip(&cardinalities) {
        let subject_table = type_table[key.subject_type.as_str()].clone();
        let object_table = type_table[key.object_type.as_str()].clone();
        let predicate_col = sql_identifier(local_name(&key.predicate));
        match report.placement() {
            FkPlacement::SubjectSide => {
                let idx = table_index[&subject_table];
                let covered: HashSet<&str> = pairs.iter().map(|(s, _)| s.as_str()).collect();
                let total = analysis.entities_by_type[&key.subject_type].len();
                let name = column_names[idx]
                    .allocate(&predicate_col, &[format!("{predicate_col}_{object_table}")]);
                tables[idx].columns.push(ColumnDef {
                    fk_target: Some(object_table.clone()),
                    ..text_column(
                        name,
                        covered.len() < total,
                        ColumnSource::ForeignKey {
                            predicate: key.predicate.clone(),
                            object_type: key.object_type.clone(),
                        },
                    )
                });
            }
            FkPlacement::ObjectSide => {
                let idx = table_index[&object_table];
                let covered: HashSet<&str> = pairs.iter().map(|(_, o)| o.as_str()).collect();
                let total = analysis.entities_by_type[&key.object_type].len();
                let preferred = format!("{subject_table}_id");
                let name = column_names[idx]
                    .allocate(&preferred, &[format!("{subject_table}_{predicate_col}")]);
                tables[idx].columns.push(ColumnDef {
                    fk_target: Some(subject_table.clone()),
                    comment: Some(format!(
                        "{subject_table} row whose {} is this row",
                        predicate_col.replace('_', " ")
                    )),
                    ..text_column(
                        name,
                        covered.len() < total,
                        ColumnSource::InverseForeignKey {
                            predicate: key.predicate.clone(),
                            subject_type: key.subject_type.clone(),
                        },
                    )
                });
            }
            FkPlacement::JoinTable => {
                let name = table_names.allocate(&format!("{subject_table}_{predicate_col}"), &[]);
                let (left, right) = if subject_table == object_table {
                    ("subject_id".to_string(), "object_id".to_string())
                } else {
                    (format!("{subject_table}_id"), format!("{object_table}_id"))
                };
                aux_tables.push(TableDef {
                    name,
                    kind: TableKind::Join,
                    primary_key: None,
                    columns: vec![
                        ColumnDef {
                            fk_target: Some(subject_table.clone()),
                            ..text_column(left, false, ColumnSource::JoinSubject)
                        },
                        ColumnDef {
                            fk_target: Some(object_table.clone()),
                            ..text_column(right, false, ColumnSource::JoinObject)
                        },
                    ],
                    source_type_iri: Some(key.subject_type.clone()),
                    source_predicate_iri: Some(key.predicate.clone()),
                });
            }
        }
    }

    tables.extend(aux_tables);
    let (renames, comments) = apply_overrides(&mut tables, overrides)?;
    let mut schema = InducedSchema {
        tables,
        renames,
        comments,
        cardinalities,
        generated_ddl: String::new(),
    };
    schema.generated_ddl = ddl::emit_ddl(&schema);
    Ok(schema)
}

/// Renames and comments actually applied, keyed by original name.
type Applied = (BTreeMap<String, String>, BTreeMap<String, String>);

fn apply_overrides(tables: &mut [TableDef], overrides: &RenameConfig) -> Result<Applied, InductionError> {
    let mut applied_renames = BTreeMap::new();
    let mut applied_comments = BTreeMap::new();

    // Comments and column renames address original names, so resolve them
    // before any table is renamed.
    for (key, text) in &overrides.comments {
        let (table, column) = split_column_key(key)?;
        let col = find_column(tables, &table, &column, key)?;
        let text = text.replace(['\n', '\r'], " ");
        col.comment = Some(match &col.unit_suffix {
            Some(unit) => format!("{text} (unit: {unit})"),
            None => text.clone(),
        });
        applied_comments.insert(format!("{table}.{column}"), text);
    }

    for (key, display) in &overrides.renames {
        if !key.contains('.') {
            continue;
        }
        let (table, column) = split_column_key(key)?;
        let new_name = sql_identifier(display);
        let tdef = tables
            .iter_mut()
            .find(|t| t.name == table)
            .ok_or_else(|| InductionError::UnknownOverrideTarget { key: key.clone() })?;
        if tdef.columns.iter().any(|c| c.name == new_name && c.name != column) {
            return Err(InductionError::RenameCollision {
                name: format!("{table}.{new_name}"),
            });
        }
        let was_pk = tdef.primary_key.as_deref() == Some(column.as_str());
        let col = tdef
            .columns
            .iter_mut()
            .find(|c| c.name == column)
            .ok_or_else(|| InductionError::UnknownOverrideTarget { key: key.clone() })?;
        col.name = new_name.clone();
        if was_pk {
            tdef.primary_key = Some(new_name.clone());
        }
        applied_renames.insert(format!("{table}.{column}"), new_name);
    }

    let mut table_renames: Vec<(String, String)> = Vec::new();
    for (key, display) in &overrides.renames {
        if key.contains('.') {
            continue;
        }
        let original = sql_identifier(key);
        if !tables.iter().any(|t| t.name == original) {
            return Err(InductionError::UnknownOverrideTarget { key: key.clone() });
        }
        table_renames.push((original, sql_identifier(display)));
    }
    let renamed: HashMap<&str, &str> = table_renames
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let mut final_names = HashSet::new();
    for t in tables.iter() {
        let name = renamed.get(t.name.as_str()).copied().unwrap_or(&t.name);
        if !final_names.insert(name.to_string()) {
            return Err(InductionError::RenameCollision {
                name: name.to_string(),
            });
        }
    }
    for t in tables.iter_mut() {
        if let Some(new) = renamed.get(t.name.as_str()) {
            t.name = new.to_string();
        }
        for c in &mut t.columns {
            if let Some(target) = c.fk_target.as_ref().and_then(|f| renamed.get(f.as_str())) {
                c.fk_target = Some(target.to_string());
            }
        }
    }
    for (original, display) in table_renames {
        applied_renames.insert(original, display);
    }
    Ok((applied_renames, applied_comments))
}

fn split_column_key(key: &str) -> Result<(String, String), InductionError> {
    match key.split_once('.') {
        Some((t, c)) if !t.is_empty() && !c.is_empty() => Ok((sql_identifier(t), sql_identifier(c))),
        _ => Err(InductionError::UnknownOverrideTarget {
            key: key.to_string(),
        }),
    }
}

fn find_column<'a>(
    tables: &'a mut [TableDef],
    table: &str,
    column: &str,
    key: &str,
) -> Result<&'a mut ColumnDef, InductionError> {
    tables
        .iter_mut()
        .find(|t| t.name == table)
        .and_then(|t| t.columns.iter_mut().find(|c| c.name == column))
        .ok_or_else(|| InductionError::UnknownOverrideTarget {
            key: key.to_string(),
        })
}
