//! Independent oracles for the induced database: every input fact must be
//! recoverable from the rows, and relation foreign keys must sit where the
//! observed cardinalities require.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use kgqa_core::induction::{
    induce_database, ColumnSource, InducedSchema, InductionConfig, RenameConfig, TableKind,
};
use kgqa_core::rdf::{group_capsules, Term, Triple, RDF_TYPE};
use regex::Regex;
use rusqlite::types::Value;
use rusqlite::Connection;

/// Object of a projected fact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Obj {
    /// (type IRI, local name)
    Entity(String, String),
    /// Type IRI of a type fact.
    Opaque(String),
    Text(String),
    /// Numeric literal as (canonical number, unit).
    Number(String, String),
}

pub type Fact = (String, String, String, Obj);

pub fn local(iri: &str) -> String {
    let t = iri.trim_end_matches(['/', '#']);
    t.rsplit(['/', '#', ':']).next().unwrap().to_string()
}

pub fn canonical(x: f64) -> String {
    format!("{x:.9}")
}

/// Facts of the input graph: (subject type, subject local name, predicate,
/// object). Type facts use the predicate `rdf:type` with an opaque object.
pub fn facts_from_triples(triples: &[Triple], numeric_columns: &BTreeSet<(String, String)>) -> BTreeSet<Fact> {
    let number = Regex::new(r"^\s*([+-]?\d+(?:\.\d+)?)\s*(.*?)\s*$").unwrap();
    let mut types: HashMap<&str, &str> = HashMap::new();
    for t in triples.iter().filter(|t| t.predicate_iri() == RDF_TYPE) {
        types.insert(t.subject.lexical(), t.object.lexical());
    }
    let mut facts = BTreeSet::new();
    for t in triples {
        let s_type = types[t.subject.lexical()].to_string();
        let s = local(t.subject.lexical());
        let p = t.predicate_iri().to_string();
        let o = match &t.object {
            _ if p == RDF_TYPE => Obj::Opaque(t.object.lexical().to_string()),
            Term::Iri { lexical } => match types.get(lexical.as_str()) {
                Some(ty) => Obj::Entity(ty.to_string(), local(lexical)),
                // IRIs without a type are stored by local name.
                None => Obj::Text(local(lexical)),
            },
            other => {
                let lex = other.lexical();
                if numeric_columns.contains(&(s_type.clone(), p.clone())) {
                    let c = number.captures(lex).expect("numeric column value");
                    Obj::Number(canonical(c[1].parse().unwrap()), c[2].to_string())
                } else {
                    Obj::Text(lex.to_string())
                }
            }
        };
        facts.insert((s_type, s, p, o));
    }
    facts
}

pub fn type_of_table(schema: &InducedSchema, table: &str) -> String {
    schema.table(table).unwrap().source_type_iri.clone().unwrap()
}

pub fn cell_obj(value: &Value, unit: &Option<String>) -> Obj {
    let unit = unit.clone().unwrap_or_default();
    match value {
        Value::Integer(i) => Obj::Number(canonical(*i as f64), unit),
        Value::Real(r) => Obj::Number(canonical(*r), unit),
        Value::Text(s) => Obj::Text(s.clone()),
        other => panic!("unexpected cell {other:?}"),
    }
}

/// Facts recoverable from the database using only the schema metadata.
pub fn facts_from_database(conn: &Connection, schema: &InducedSchema) -> BTreeSet<Fact> {
    let mut facts = BTreeSet::new();
    for table in &schema.tables {
        let cols: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
        let mut stmt = conn
            .prepare(&format!("SELECT {} FROM {}", cols.join(", "), table.name))
            .unwrap();
        let rows: Vec<Vec<Value>> = stmt
            .query_map([], |r| (0..cols.len()).map(|i| r.get::<_, Value>(i)).collect())
            .unwrap()
            .map(Result::unwrap)
            .collect();
        for row in rows {
            match table.kind {
                TableKind::Entity => {
                    let ty = table.source_type_iri.clone().unwrap();
                    let pk = table.columns.iter().position(|c| c.source == ColumnSource::PrimaryKey).unwrap();
                    let Value::Text(id) = &row[pk] else { panic!("text key") };
                    facts.insert((ty.clone(), id.clone(), RDF_TYPE.to_string(), Obj::Opaque(ty.clone())));
                    for (column, cell) in table.columns.iter().zip(&row) {
                        if *cell == Value::Null {
                            continue;
                        }
                        match &column.source {
                            ColumnSource::Literal { predicate } => {
                                let obj = match cell {
                                    Value::Text(s) if column.fk_target.is_none() => Obj::Text(s.clone()),
                                    _ => cell_obj(cell, &column.unit_suffix),
                                };
                                facts.insert((ty.clone(), id.clone(), predicate.clone(), obj));
                            }
                            ColumnSource::ForeignKey { predicate, object_type } => {
                                let Value::Text(o) = cell else { panic!() };
                                facts.insert((ty.clone(), id.clone(), predicate.clone(), Obj::Entity(object_type.clone(), o.clone())));
                            }
                            ColumnSource::InverseForeignKey { predicate, subject_type } => {
                                let Value::Text(s) = cell else { panic!() };
                                facts.insert((subject_type.clone(), s.clone(), predicate.clone(), Obj::Entity(ty.clone(), id.clone())));
                            }
                            _ => {}
                        }
                    }
                }
                TableKind::Join => {
                    let subject = table.columns.iter().position(|c| c.source == ColumnSource::JoinSubject).unwrap();
                    let object = table.columns.iter().position(|c| c.source == ColumnSource::JoinObject).unwrap();
                    let o_type = type_of_table(schema, table.columns[object].fk_target.as_deref().unwrap());
                    let (Value::Text(s), Value::Text(o)) = (&row[subject], &row[object]) else { panic!() };
                    facts.insert((
                        table.source_type_iri.clone().unwrap(),
                        s.clone(),
                        table.source_predicate_iri.clone().unwrap(),
                        Obj::Entity(o_type, o.clone()),
                    ));
                }
                TableKind::MultiValue => {
                    let owner = table.columns.iter().position(|c| c.source == ColumnSource::Owner).unwrap();
                    let value = table.columns.iter().position(|c| c.source == ColumnSource::Value).unwrap();
                    let Value::Text(s) = &row[owner] else { panic!() };
                    facts.insert((
                        table.source_type_iri.clone().unwrap(),
                        s.clone(),
                        table.source_predicate_iri.clone().unwrap(),
                        cell_obj(&row[value], &table.columns[value].unit_suffix),
                    ));
                }
            }
        }
    }
    facts
}

/// (type, predicate) pairs whose values the schema stores as numbers.
pub fn numeric_columns(schema: &InducedSchema) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for table in &schema.tables {
        let numeric = |c: &kgqa_core::induction::ColumnDef| c.sql_type != kgqa_core::induction::SqlType::Text;
        match table.kind {
            TableKind::Entity => {
                for c in table.columns.iter().filter(|c| numeric(c)) {
                    if let ColumnSource::Literal { predicate } = &c.source {
                        out.insert((table.source_type_iri.clone().unwrap(), predicate.clone()));
                    }
                }
            }
            TableKind::MultiValue => {
                if table.columns.iter().any(|c| c.source == ColumnSource::Value && numeric(c)) {
                    out.insert((table.source_type_iri.clone().unwrap(), table.source_predicate_iri.clone().unwrap()));
                }
            }
            TableKind::Join => {}
        }
    }
    out
}

pub fn induce(triples: &[Triple], dir: &std::path::Path) -> (InducedSchema, Connection) {
    let db = dir.join("kg.db");
    let (schema, _) = induce_database(
        &group_capsules(triples),
        &InductionConfig::default(),
        &RenameConfig::default(),
        &db,
    )
    .unwrap();
    (schema, Connection::open(&db).unwrap())
}

/// Induces `triples` into `dir` and compares the projected facts.
pub fn check_lossless(triples: &[Triple], dir: &std::path::Path) -> Result<(), String> {
    let (schema, conn) = induce(triples, dir);
    let expected = facts_from_triples(triples, &numeric_columns(&schema));
    let actual = facts_from_database(&conn, &schema);
    let missing: Vec<_> = expected.difference(&actual).take(3).collect();
    let extra: Vec<_> = actual.difference(&expected).take(3).collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(format!("missing {missing:?} extra {extra:?}"))
    }
}

/// (subject type, object type, subject/object pairs) of one predicate.
type Relation<'a> = (String, String, BTreeSet<(&'a str, &'a str)>);

/// Checks each entity-to-entity predicate's FK placement against the
/// brute-force cardinality rule; returns (cardinality pattern, placement)
/// per predicate.
pub fn check_fk_placement(
    triples: &[Triple],
    dir: &std::path::Path,
) -> Result<Vec<(&'static str, &'static str)>, String> {
    let types: HashMap<&str, &str> = triples
        .iter()
        .filter(|t| t.predicate_iri() == RDF_TYPE)
        .map(|t| (t.subject.lexical(), t.object.lexical()))
        .collect();
    let mut relations: BTreeMap<&str, Relation> = BTreeMap::new();
    for t in triples {
        if t.predicate_iri() == RDF_TYPE || !t.object.is_iri() {
            continue;
        }
        if let (Some(st), Some(ot)) = (types.get(t.subject.lexical()), types.get(t.object.lexical())) {
            relations
                .entry(t.predicate_iri())
                .or_insert_with(|| (st.to_string(), ot.to_string(), BTreeSet::new()))
                .2
                .insert((t.subject.lexical(), t.object.lexical()));
        }
    }
    let (schema, _) = induce(triples, dir);
    let mut kinds = Vec::new();
    for (predicate, (s_type, o_type, pairs)) in relations {
        let mut per_subject: HashMap<&str, usize> = HashMap::new();
        let mut per_object: HashMap<&str, usize> = HashMap::new();
        for (s, o) in &pairs {
            *per_subject.entry(s).or_default() += 1;
            *per_object.entry(o).or_default() += 1;
        }
        let max_obj = per_subject.values().max().copied().unwrap_or(0);
        let max_subj = per_object.values().max().copied().unwrap_or(0);
        let subject_table = schema.entity_table_for_type(&s_type).ok_or("no subject table")?;
        let object_table = schema.entity_table_for_type(&o_type).ok_or("no object table")?;
        let forward = subject_table.columns.iter().any(|c| {
            matches!(&c.source, ColumnSource::ForeignKey { predicate: p, .. } if p == predicate)
                && c.fk_target.as_deref() == Some(object_table.name.as_str())
        });
        let inverse = object_table.columns.iter().any(|c| {
            matches!(&c.source, ColumnSource::InverseForeignKey { predicate: p, .. } if p == predicate)
                && c.fk_target.as_deref() == Some(subject_table.name.as_str())
        });
        let join = schema
            .tables
            .iter()
            .any(|t| t.kind == TableKind::Join && t.source_predicate_iri.as_deref() == Some(predicate));
        let expected = if max_obj == 1 {
            "subject"
        } else if max_subj == 1 {
            "object"
        } else {
            "join"
        };
        let actual: Vec<&str> = [(forward, "subject"), (inverse, "object"), (join, "join")]
            .iter()
            .filter(|(present, _)| *present)
            .map(|(_, k)| *k)
            .collect();
        if actual != [expected] {
            return Err(format!("{predicate}: expected {expected}, found {actual:?}"));
        }
        let pattern = match (max_obj, max_subj) {
            (1, 1) => "1:1",
            (1, _) => "functional",
            (_, 1) => "inverse-functional",
            _ => "N:M",
        };
        kinds.push((pattern, expected));
    }
    Ok(kinds)
}
