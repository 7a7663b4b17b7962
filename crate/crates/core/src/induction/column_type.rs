//! Column type inference from raw literal lexical forms.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SqlType {
    Int,
    Real,
    Text,
}

impl fmt::Display for SqlType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SqlType::Int => "INT",
            SqlType::Real => "REAL",
            SqlType::Text => "TEXT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferredType {
    pub sql_type: SqlType,
    pub nullable: bool,
    pub unit_suffix: Option<String>,
}

/// A literal split into its leading number and the trailing suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NumericParts<'a> {
    pub number: &'a str,
    pub is_integer: bool,
    /// Suffix with surrounding whitespace trimmed; may be empty.
    pub suffix: &'a str,
}

/// Splits `"37450 EUR"` into `37450` and `EUR`. Returns `None` unless the
/// value is a decimal number optionally followed by a non-numeric suffix.
pub fn split_numeric(value: &str) -> Option<NumericParts<'_>> {
    let trimmed = value.trim();
    let bytes = trimmed.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == int_start {
        return None;
    }
    let mut is_integer = true;
    if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        is_integer = false;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    let number = &trimmed[..i];
    let suffix = trimmed[i..].trim();
    if let Some(first) = suffix.chars().next() {
        if first.is_ascii_digit() || matches!(first, '.' | ',' | '+' | '-') {
            return None;
        }
    }
    if is_integer && number.parse::<i64>().is_err() {
        return None;
    }
    if !is_integer && !number.parse::<f64>().is_ok_and(f64::is_finite) {
        return None;
    }
    Some(NumericParts {
        number,
        is_integer,
        suffix,
    })
}

/// Infers the SQL type of one column. `values` are the present (non-null)
/// lexical forms; `null_count` is the number of rows lacking a value.
pub fn infer_column_type<S: AsRef<str>>(values: &[S], null_count: usize) -> InferredType {
    let nullable = null_count > 0;
    let text = InferredType {
        sql_type: SqlType::Text,
        nullable,
        unit_suffix: None,
    };
    if values.is_empty() {
        return text;
    }
    let mut suffix: Option<&str> = None;
    let mut all_integer = true;
    for value in values {
        let Some(parts) = split_numeric(value.as_ref()) else {
            return text;
        };
        match suffix {
            None => suffix = Some(parts.suffix),
            Some(s) if s != parts.suffix => return text,
            Some(_) => {}
        }
        all_integer &= parts.is_integer;
    }
    let unit = suffix.filter(|s| !s.is_empty()).map(str::to_string);
    InferredType {
        sql_type: if all_integer { SqlType::Int } else { SqlType::Real },
        nullable,
        unit_suffix: unit,
    }
}
