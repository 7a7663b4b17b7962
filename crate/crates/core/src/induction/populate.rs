//! Row insertion into an embedded SQLite database.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rusqlite::types::Value;
use rusqlite::{params_from_iter, Connection};
use serde::{Deserialize, Serialize};

use super::analysis::{KgAnalysis, LiteralKey, RelationKey};
use super::column_type::{split_numeric, SqlType};
use super::schema::{ColumnDef, ColumnSource, InducedSchema, TableDef, TableKind};
use super::{InductionConfig, InductionError};
use crate::naming::entity_slug;
use crate::rdf::EntityCapsule;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PopulationSummary {
    pub row_counts: BTreeMap<String, usize>,
}

impl PopulationSummary {
    pub fn total_rows(&self) -> usize {
        self.row_counts.values().sum()
    }
}

/// Converts a raw lexical form to the column's storage value.
pub fn convert_value(column: &ColumnDef, raw: &str) -> Option<Value> {
    match column.sql_type {
        SqlType::Text => Some(Value::Text(raw.to_string())),
        SqlType::Int | SqlType::Real => {
            let parts = split_numeric(raw)?;
            if parts.suffix != column.unit_suffix.as_deref().unwrap_or("") {
                return None;
            }
            if column.sql_type == SqlType::Int {
                parts.number.parse::<i64>().ok().map(Value::Integer)
            } else {
                parts.number.parse::<f64>().ok().map(Value::Real)
            }
        }
    }
}

/// Creates the schema in `conn` and inserts one row per capsule, plus join
/// and multi-value rows. Runs in a single transaction.
pub fn insert_rows(
    conn: &mut Connection,
    capsules: &[EntityCapsule],
    schema: &InducedSchema,
    config: &InductionConfig,
) -> Result<PopulationSummary, InductionError> {
    let analysis = KgAnalysis::from_capsules(capsules, config)?;
    populate(conn, &analysis, schema)
}

/// Writes a fresh database file at `path` (replacing any existing file).
pub fn build_database(
    path: &Path,
    capsules: &[EntityCapsule],
    schema: &InducedSchema,
    config: &InductionConfig,
) -> Result<PopulationSummary, InductionError> {
    if path.exists() {
        std::fs::remove_file(path).map_err(|e| InductionError::Io(e.to_string()))?;
    }
    let mut conn = Connection::open(path)?;
    insert_rows(&mut conn, capsules, schema, config)
}

pub(crate) fn populate(
    conn: &mut Connection,
    analysis: &KgAnalysis,
    schema: &InducedSchema,
) -> Result<PopulationSummary, InductionError> {
    let relations: HashMap<&RelationKey, &Vec<(String, String)>> =
        analysis.relations.iter().map(|(k, v)| (k, v)).collect();
    let literals: HashMap<&LiteralKey, &Vec<(String, String)>> =
        analysis.literals.iter().map(|(k, v)| (k, v)).collect();

    let tx = conn.transaction()?;
    // Foreign keys are checked at commit, so table order does not matter.
    tx.execute_batch("PRAGMA defer_foreign_keys = ON;")?;
    tx.execute_batch(&schema.generated_ddl)?;
    let mut summary = PopulationSummary {
        row_counts: BTreeMap::new(),
    };

    for table in &schema.tables {
        let rows = match table.kind {
            TableKind::Entity => entity_rows(table, analysis, &relations, &literals)?,
            TableKind::Join => join_rows(table, schema, &relations),
            TableKind::MultiValue => multi_value_rows(table, &literals)?,
        };
        let cols: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
        let placeholders = vec!["?"; cols.len()].join(", ");
        let sql = format!(
            "INSERT INTO {} ({}) VALUES ({placeholders})",
            table.name,
            cols.join(", ")
        );
        let mut stmt = tx.prepare(&sql)?;
        for row in &rows {
            stmt.execute(params_from_iter(row.iter()))?;
        }
        summary.row_counts.insert(table.name.clone(), rows.len());
    }
    tx.commit()?;
    Ok(summary)
}

fn entity_rows(
    table: &TableDef,
    analysis: &KgAnalysis,
    relations: &HashMap<&RelationKey, &Vec<(String, String)>>,
    literals: &HashMap<&LiteralKey, &Vec<(String, String)>>,
) -> Result<Vec<Vec<Value>>, InductionError> {
    let type_iri = table.source_type_iri.as_deref().unwrap_or_default();
    let entities = analysis
        .entities_by_type
        .get(type_iri)
        .map(Vec::as_slice)
        .unwrap_or_default();
    let row_of: HashMap<&str, usize> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let mut rows: Vec<Vec<Value>> = entities
        .iter()
        .map(|_| vec![Value::Null; table.columns.len()])
        .collect();

    for (ci, column) in table.columns.iter().enumerate() {
        match &column.source {
            ColumnSource::PrimaryKey => {
                for (ri, e) in entities.iter().enumerate() {
                    rows[ri][ci] = Value::Text(entity_slug(e).to_string());
                }
            }
            ColumnSource::Literal { predicate } => {
                let key = LiteralKey {
                    subject_type: type_iri.to_string(),
                    predicate: predicate.clone(),
                };
                for (s, raw) in literals.get(&key).copied().into_iter().flatten() {
                    rows[row_of[s.as_str()]][ci] = convert_value(column, raw).ok_or_else(|| {
                        InductionError::ValueParseFailure {
                            entity: s.clone(),
                            column: column.name.clone(),
                            value: raw.clone(),
                        }
                    })?;
                }
            }
            ColumnSource::ForeignKey {
                predicate,
                object_type,
            } => {
                let key = RelationKey {
                    predicate: predicate.clone(),
                    subject_type: type_iri.to_string(),
                    object_type: object_type.clone(),
                };
                for (s, o) in relations.get(&key).copied().into_iter().flatten() {
                    rows[row_of[s.as_str()]][ci] = Value::Text(entity_slug(o).to_string());
                }
            }
            ColumnSource::InverseForeignKey {
                predicate,
                subject_type,
            } => {
                let key = RelationKey {
                    predicate: predicate.clone(),
                    subject_type: subject_type.clone(),
                    object_type: type_iri.to_string(),
                };
                for (s, o) in relations.get(&key).copied().into_iter().flatten() {
                    rows[row_of[o.as_str()]][ci] = Value::Text(entity_slug(s).to_string());
                }
            }
            _ => {}
        }
    }
    Ok(rows)
}

fn join_rows(
    table: &TableDef,
    schema: &InducedSchema,
    relations: &HashMap<&RelationKey, &Vec<(String, String)>>,
) -> Vec<Vec<Value>> {
    let object_type = table
        .columns
        .iter()
        .find(|c| c.source == ColumnSource::JoinObject)
        .and_then(|c| c.fk_target.as_deref())
        .and_then(|t| schema.table(t))
        .and_then(|t| t.source_type_iri.clone())
        .unwrap_or_default();
    let key = RelationKey {
        predicate: table.source_predicate_iri.clone().unwrap_or_default(),
        subject_type: table.source_type_iri.clone().unwrap_or_default(),
        object_type,
    };
    relations
        .get(&key)
        .copied()
        .into_iter()
        .flatten()
        .map(|(s, o)| {
            vec![
                Value::Text(entity_slug(s).to_string()),
                Value::Text(entity_slug(o).to_string()),
            ]
        })
        .collect()
}

fn multi_value_rows(
    table: &TableDef,
    literals: &HashMap<&LiteralKey, &Vec<(String, String)>>,
) -> Result<Vec<Vec<Value>>, InductionError> {
    let key = LiteralKey {
        subject_type: table.source_type_iri.clone().unwrap_or_default(),
        predicate: table.source_predicate_iri.clone().unwrap_or_default(),
    };
    let value_col = &table.columns[1];
    literals
        .get(&key)
        .copied()
        .into_iter()
        .flatten()
        .map(|(s, raw)| {
            let value =
                convert_value(value_col, raw).ok_or_else(|| InductionError::ValueParseFailure {
                    entity: s.clone(),
                    column: format!("{}.{}", table.name, value_col.name),
                    value: raw.clone(),
                })?;
            Ok(vec![Value::Text(entity_slug(s).to_string()), value])
        })
        .collect()
}
