use std::fmt::Write;

use super::schema::{InducedSchema, TableDef, TableKind};

/// Renders one `CREATE TABLE` statement per table. Column comments are
/// emitted as `--` comments on the column's line so they survive in the
/// engine's stored schema text.
pub fn emit_ddl(schema: &InducedSchema) -> String {
    let mut out = String::new();
    for (i, table) in schema.tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        emit_table(&mut out, table, schema);
    }
    out
}

fn emit_table(out: &mut String, table: &TableDef, schema: &InducedSchema) {
    let mut items: Vec<(String, Option<&str>)> = Vec::new();
    for col in &table.columns {
        let mut line = format!("{} {}", col.name, col.sql_type);
        if !col.nullable {
            line.push_str(" NOT NULL");
        }
        if table.primary_key.as_deref() == Some(col.name.as_str()) {
            line.push_str(" PRIMARY KEY");
        }
        if let Some(target) = &col.fk_target {
            let key = schema
                .table(target)
                .and_then(|t| t.primary_key.as_deref())
                .unwrap_or(super::schema::PRIMARY_KEY_COLUMN);
            let _ = write!(line, " REFERENCES {target}({key})");
        }
        items.push((line, col.comment.as_deref()));
    }
    if table.kind == TableKind::Join {
        let cols: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
        items.push((format!("PRIMARY KEY ({})", cols.join(", ")), None));
    }

    let _ = writeln!(out, "CREATE TABLE {} (", table.name);
    let last = items.len().saturating_sub(1);
    for (i, (line, comment)) in items.iter().enumerate() {
        out.push_str("  ");
        out.push_str(line);
        if i < last {
            out.push(',');
        }
        if let Some(c) = comment {
            let _ = write!(out, " -- {c}");
        }
        out.push('\n');
    }
    out.push_str(");\n");
}
