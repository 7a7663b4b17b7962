//! Relational database induction from typed entity capsules.
//!
//! One entity table per type value, one column per literal-valued predicate,
//! and foreign keys placed by relation cardinality: functional relations put
//! the key on the subject's table, inverse-functional ones on the object's
//! table, and everything else gets a two-column join table.

mod analysis;
mod column_type;
mod ddl;
mod populate;
mod schema;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{analyze_cardinalities, CardinalityReport, FkPlacement};
pub use column_type::{infer_column_type, split_numeric, InferredType, NumericParts, SqlType};
pub use ddl::emit_ddl;
pub use populate::{build_database, convert_value, insert_rows, PopulationSummary};
pub use schema::{
    induce_schema, ColumnDef, ColumnSource, InducedSchema, TableDef, TableKind,
    PRIMARY_KEY_COLUMN,
};

use crate::rdf::{EntityCapsule, RDF_TYPE};

#[derive(Debug, Error, PartialEq)]
pub enum InductionError {
    #[error("entity <{iri}> has no type triple")]
    UntypedEntity { iri: String },
    #[error("entity <{iri}> has several types: {}", types.join(", "))]
    MultiTypedEntity { iri: String, types: Vec<String> },
    #[error("blank node subject _:{label} cannot become a table row")]
    BlankNodeSubject { label: String },
    #[error("two entities share the key '{key}' in table {table}")]
    DuplicateKey { table: String, key: String },
    #[error("override makes two names equal: {name}")]
    RenameCollision { name: String },
    #[error("override target '{key}' does not exist")]
    UnknownOverrideTarget { key: String },
    #[error("value '{value}' of <{entity}> does not fit column {column}")]
    ValueParseFailure {
        entity: String,
        column: String,
        value: String,
    },
    #[error("database error: {0}")]
    Database(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<rusqlite::Error> for InductionError {
    fn from(e: rusqlite::Error) -> Self {
        InductionError::Database(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MultiTypePolicy {
    #[default]
    Reject,
    FirstLexicographic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct InductionConfig {
    pub type_predicates: Vec<String>,
    pub multi_type_policy: MultiTypePolicy,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig {
            type_predicates: vec![RDF_TYPE.to_string()],
            multi_type_policy: MultiTypePolicy::Reject,
        }
    }
}

/// Rename and comment overrides. Table keys are bare names; column keys are
/// `table.column`. Keys refer to generated (original) names and are
/// normalised like generated identifiers, so `"engine specification"`
/// addresses the `engine_specification` table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenameConfig {
    pub renames: BTreeMap<String, String>,
    pub comments: BTreeMap<String, String>,
}

impl RenameConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, InductionError> {
        let text = std::fs::read_to_string(path).map_err(|e| InductionError::Io(e.to_string()))?;
        Self::from_json(&text).map_err(|e| InductionError::Io(format!("{}: {e}", path.display())))
    }
}

/// Machine-readable summary written next to the DDL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SchemaReport {
    pub tables: Vec<TableDef>,
    pub cardinalities: Vec<CardinalityReport>,
    pub placements: Vec<FkPlacement>,
    pub renames: BTreeMap<String, String>,
    pub comments: BTreeMap<String, String>,
    pub row_counts: BTreeMap<String, usize>,
}

impl SchemaReport {
    pub fn new(schema: &InducedSchema, population: &PopulationSummary) -> Self {
        SchemaReport {
            tables: schema.tables.clone(),
            cardinalities: schema.cardinalities.clone(),
            placements: schema.cardinalities.iter().map(|c| c.placement()).collect(),
            renames: schema.renames.clone(),
            comments: schema.comments.clone(),
            row_counts: population.row_counts.clone(),
        }
    }
}

/// Induces the schema and populates a database file in one scan.
pub fn induce_database(
    capsules: &[EntityCapsule],
    config: &InductionConfig,
    overrides: &RenameConfig,
    db_path: &Path,
) -> Result<(InducedSchema, PopulationSummary), InductionError> {
    let analysis = analysis::KgAnalysis::from_capsules(capsules, config)?;
    let schema = schema::induce_from_analysis(&analysis, overrides)?;
    if db_path.exists() {
        std::fs::remove_file(db_path).map_err(|e| InductionError::Io(e.to_string()))?;
    }
    let mut conn = rusqlite::Connection::open(db_path)?;
    let summary = populate::populate(&mut conn, &analysis, &schema)?;
    Ok((schema, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf::{group_capsules, parse_ntriples_str};
    use rusqlite::Connection;

    const TYPE: &str = "<http://www.w3.org/1999/02/22-rdf-syntax-ns#type>";

    fn capsules(src: &str) -> Vec<EntityCapsule> {
        group_capsules(&parse_ntriples_str(src).unwrap())
    }

    fn car_engine_kg() -> String {
        let mut s = String::new();
        for (car, engine, price, height) in [
            ("c1", "e1", "37450 EUR", "1500 mm"),
            ("c2", "e1", "42500 EUR", "1600 mm"),
            ("c3", "e2", "39900 EUR", "1700 mm"),
        ] {
            s += &format!("<http://ex.org/car/{car}> {TYPE} <http://ex.org/s/Car> .\n");
            s += &format!("<http://ex.org/car/{car}> <http://ex.org/s/price> \"{price}\" .\n");
            s += &format!("<http://ex.org/car/{car}> <http://ex.org/s/height> \"{height}\" .\n");
            s += &format!(
                "<http://ex.org/car/{car}> <http://ex.org/s/engineSpecification> <http://ex.org/engine/{engine}> .\n"
            );
        }
        for engine in ["e1", "e2"] {
            s += &format!(
                "<http://ex.org/engine/{engine}> {TYPE} <http://ex.org/s/EngineSpecification> .\n"
            );
            s += &format!(
                "<http://ex.org/engine/{engine}> <http://ex.org/s/fuelType> <http://ex.org/fuel-type/gasoline> .\n"
            );
        }
        s
    }

    #[test]
    fn functional_relation_puts_fk_on_subject_table() {
        let schema =
            induce_schema(&capsules(&car_engine_kg()), &Default::default(), &Default::default())
                .unwrap();
        assert_eq!(schema.entity_table_count(), 2);
        let car = schema.table("car").unwrap();
        let fk = car.column("engine_specification").unwrap();
        assert_eq!(fk.fk_target.as_deref(), Some("engine_specification"));
        assert_eq!(fk.sql_type, SqlType::Text);
        assert!(!fk.nullable);
        let price = car.column("price").unwrap();
        assert_eq!(price.sql_type, SqlType::Int);
        assert_eq!(price.unit_suffix.as_deref(), Some("EUR"));
        let fuel = schema.table("engine_specification").unwrap().column("fuel_type").unwrap();
        assert_eq!(fuel.sql_type, SqlType::Text);
    }

    #[test]
    fn zero_capsules_give_empty_schema() {
        let schema = induce_schema(&[], &Default::default(), &Default::default()).unwrap();
        assert!(schema.tables.is_empty());
        assert_eq!(schema.generated_ddl, "");
    }

    #[test]
    fn rename_and_comment_overrides() {
        let overrides = RenameConfig::from_json(
            r#"{"renames": {"engine specification": "engine", "car.height": "height_mm"},
                "comments": {"car.price": "list price incl. VAT"}}"#,
        )
        .unwrap();
        let schema =
            induce_schema(&capsules(&car_engine_kg()), &Default::default(), &overrides).unwrap();
        assert!(schema.table("engine_specification").is_none());
        assert!(schema.table("engine").is_some());
        let ddl = &schema.generated_ddl;
        assert!(ddl.contains("CREATE TABLE engine ("));
        assert!(!ddl.contains("CREATE TABLE engine_specification"));
        assert!(ddl.contains("REFERENCES engine(id)"));
        assert!(ddl.contains("list price incl. VAT"));
        assert!(ddl.contains("height_mm INT NOT NULL"));
        assert_eq!(schema.renames["engine_specification"], "engine");
    }

    #[test]
    fn rename_collision_and_unknown_targets() {
        let caps = capsules(&car_engine_kg());
        let collide = RenameConfig::from_json(r#"{"renames": {"car": "engine_specification"}}"#).unwrap();
        assert!(matches!(
            induce_schema(&caps, &Default::default(), &collide),
            Err(InductionError::RenameCollision { .. })
        ));
        let col_collide = RenameConfig::from_json(r#"{"renames": {"car.height": "price"}}"#).unwrap();
        assert!(matches!(
            induce_schema(&caps, &Default::default(), &col_collide),
            Err(InductionError::RenameCollision { .. })
        ));
        let unknown = RenameConfig::from_json(r#"{"comments": {"car.nope": "x"}}"#).unwrap();
        assert!(matches!(
            induce_schema(&caps, &Default::default(), &unknown),
            Err(InductionError::UnknownOverrideTarget { .. })
        ));
    }

    #[test]
    fn ddl_is_loadable_and_deterministic() {
        let caps = capsules(&car_engine_kg());
        let a = induce_schema(&caps, &Default::default(), &Default::default()).unwrap();
        let b = induce_schema(&caps, &Default::default(), &Default::default()).unwrap();
        assert_eq!(a.generated_ddl, b.generated_ddl);
        let conn = Connection::open_in_memory().unwrap();
        conn.execute_batch(&a.generated_ddl).unwrap();
        let stored: String = conn
            .query_row("SELECT sql FROM sqlite_master WHERE name = 'car'", [], |r| r.get(0))
            .unwrap();
        assert!(stored.contains("-- unit: EUR"));
    }

    #[test]
    fn rows_are_inserted_with_units_stripped() {
        let caps = capsules(&car_engine_kg());
        let schema = induce_schema(&caps, &Default::default(), &Default::default()).unwrap();
        let mut conn = Connection::open_in_memory().unwrap();
        let summary = insert_rows(&mut conn, &caps, &schema, &Default::default()).unwrap();
        assert_eq!(summary.row_counts["car"], 3);
        assert_eq!(summary.row_counts["engine_specification"], 2);
        let price: i64 = conn
            .query_row("SELECT price FROM car WHERE id = 'c1'", [], |r| r.get(0))
            .unwrap();
        assert_eq!(price, 37450);
        let avg: f64 = conn
            .query_row("SELECT AVG(height) FROM car", [], |r| r.get(0))
            .unwrap();
        assert_eq!(avg, 1600.0);
        let engine: String = conn
            .query_row("SELECT engine_specification FROM car WHERE id = 'c3'", [], |r| r.get(0))
            .unwrap();
        assert_eq!(engine, "e2");
    }

    #[test]
    fn missing_optional_predicate_is_null() {
        let src = format!(
            "<e:a> {TYPE} <t:Car> .\n<e:a> <p:price> \"1 EUR\" .\n<e:b> {TYPE} <t:Car> .\n"
        );
        let caps = capsules(&src);
        let schema = induce_schema(&caps, &Default::default(), &Default::default()).unwrap();
        assert!(schema.table("car").unwrap().column("price").unwrap().nullable);
        let mut conn = Connection::open_in_memory().unwrap();
        insert_rows(&mut conn, &caps, &schema, &Default::default()).unwrap();
        let price: Option<i64> = conn
            .query_row("SELECT price FROM car WHERE id = 'b'", [], |r| r.get(0))
            .unwrap();
        assert_eq!(price, None);
    }

    #[test]
    fn inverse_functional_and_many_to_many() {
        let mut src = String::new();
        for e in ["c1", "c2", "q1", "q2", "q3"] {
            let t = if e.starts_with('c') { "Car" } else { "Equipment" };
            src += &format!("<e:{e}> {TYPE} <t:{t}> .\n");
        }
        // c1 owns q1,q2 exclusively -> inverse functional
        src += "<e:c1> <p:owns> <e:q1> .\n<e:c1> <p:owns> <e:q2> .\n<e:c2> <p:owns> <e:q3> .\n";
        // shared equipment -> N:M
        src += "<e:c1> <p:hasEquipment> <e:q1> .\n<e:c1> <p:hasEquipment> <e:q2> .\n<e:c2> <p:hasEquipment> <e:q1> .\n";
        let caps = capsules(&src);
        let schema = induce_schema(&caps, &Default::default(), &Default::default()).unwrap();
        let placements: Vec<_> = schema.cardinalities.iter().map(|c| c.placement()).collect();
        assert_eq!(placements, [FkPlacement::ObjectSide, FkPlacement::JoinTable]);
        let equipment = schema.table("equipment").unwrap();
        assert_eq!(equipment.column("car_id").unwrap().fk_target.as_deref(), Some("car"));
        let join = schema.table("car_has_equipment").unwrap();
        assert_eq!(join.kind, TableKind::Join);
        assert_eq!(join.columns.len(), 2);
        let mut conn = Connection::open_in_memory().unwrap();
        let summary = insert_rows(&mut conn, &caps, &schema, &Default::default()).unwrap();
        assert_eq!(summary.row_counts["car_has_equipment"], 3);
        let owner: String = conn
            .query_row("SELECT car_id FROM equipment WHERE id = 'q3'", [], |r| r.get(0))
            .unwrap();
        assert_eq!(owner, "c2");
    }

    #[test]
    fn multi_valued_literals_get_auxiliary_table() {
        let src = format!(
            "<e:a> {TYPE} <t:Car> .\n<e:a> <p:color> \"red\" .\n<e:a> <p:color> \"blue\" .\n<e:b> {TYPE} <t:Car> .\n<e:b> <p:color> \"green\" .\n"
        );
        let caps = capsules(&src);
        let schema = induce_schema(&caps, &Default::default(), &Default::default()).unwrap();
        assert!(schema.table("car").unwrap().column("color").is_none());
        let aux = schema.table("car_color").unwrap();
        assert_eq!(aux.kind, TableKind::MultiValue);
        let mut conn = Connection::open_in_memory().unwrap();
        let summary = insert_rows(&mut conn, &caps, &schema, &Default::default()).unwrap();
        assert_eq!(summary.row_counts["car_color"], 3);
    }

    #[test]
    fn column_name_clashes_are_disambiguated() {
        let src = format!(
            "<e:a> {TYPE} <t:Car> .\n<e:a> <p:id> \"x\" .\n<e:a> <p:part> <e:m> .\n<e:a> <p:part> <e:w> .\n<e:m> {TYPE} <t:Motor> .\n<e:w> {TYPE} <t:Wheel> .\n"
        );
        let schema = induce_schema(&capsules(&src), &Default::default(), &Default::default()).unwrap();
        let names: Vec<_> = schema.table("car").unwrap().columns.iter().map(|c| c.name.clone()).collect();
        assert_eq!(names, ["id", "id_2", "part", "part_wheel"]);
    }
}
