//! Read-only execution of untrusted SQL against the induced database.
//!
//! Every call opens its own read-only connection with `query_only` set,
//! accepts exactly one statement that SQLite itself reports as read-only,
//! and interrupts the engine once the deadline passes.

use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode, OpenFlags};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_ROWS: usize = 100;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);
const MAX_MESSAGE_CHARS: usize = 500;
const PROGRESS_OPS: i32 = 1_000;

const WRITE_KEYWORDS: &[&str] = &[
    "INSERT", "UPDATE", "DELETE", "REPLACE", "UPSERT", "CREATE", "DROP", "ALTER", "ATTACH",
    "DETACH", "PRAGMA", "VACUUM", "REINDEX", "ANALYZE", "BEGIN", "COMMIT", "END", "ROLLBACK",
    "SAVEPOINT", "RELEASE",
];
const READ_KEYWORDS: &[&str] = &["SELECT", "WITH", "VALUES"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SqlLimits {
    pub timeout_ms: u64,
    pub max_rows: usize,
}

impl Default for SqlLimits {
    fn default() -> Self {
        SqlLimits {
            timeout_ms: DEFAULT_TIMEOUT.as_millis() as u64,
            max_rows: DEFAULT_MAX_ROWS,
        }
    }
}

impl SqlLimits {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SqlResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<serde_json::Value>>,
    pub row_count: usize,
    /// More rows existed than `maxRows`; `rows` holds the first `maxRows`.
    pub truncated: bool,
    pub elapsed_ms: f64,
}

impl SqlResult {
    /// Rows rendered as an aligned text table, with a trailing marker when
    /// the result was truncated.
    pub fn to_text_table(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(render_cell).collect())
            .collect();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = vec![line(&self.columns)];
        out.push(
            widths
                .iter()
                .map(|w| "-".repeat(*w))
                .collect::<Vec<_>>()
                .join("-+-"),
        );
        out.extend(cells.iter().map(|r| line(r)));
        if self.rows.is_empty() {
            out.push("(no rows)".into());
        }
        if self.truncated {
            out.push(format!("(truncated: showing first {} rows)", self.row_count));
        }
        out.join("\n")
    }
}

fn render_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => "NULL".into(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SqlErrorKind {
    SyntaxError,
    UnknownIdentifier,
    Timeout,
    WriteRejected,
    /// The database could not be opened or failed at runtime.
    EngineFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?}: {message}")]
pub struct SqlError {
    pub kind: SqlErrorKind,
    /// Single line, bounded length; safe to paste into a prompt.
    pub message: String,
}

impl SqlError {
    fn new(kind: SqlErrorKind, message: impl AsRef<str>) -> Self {
        let flat = message.as_ref().split_whitespace().collect::<Vec<_>>().join(" ");
        SqlError {
            kind,
            message: flat.chars().take(MAX_MESSAGE_CHARS).collect(),
        }
    }
}

/// Blanks out string literals, quoted identifiers and comments so keyword
/// scans only see SQL structure. Returns `None` on an unterminated quote or
/// block comment.
fn strip_lexical(sql: &str) -> Option<String> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = String::with_capacity(sql.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\'' | '"' | '`' | '[' => {
                let close = if c == '[' { ']' } else { c };
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return None,
                        Some(&x) if x == close => {
                            if close != ']' && chars.get(i + 1) == Some(&close) {
                                i += 2;
                                continue;
                            }
                            break;
                        }
                        Some(_) => i += 1,
                    }
                }
                out.push_str(if c == '\'' { " '' " } else { " x " });
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                out.push(' ');
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                i += 2;
                loop {
                    if i + 1 >= chars.len() {
                        return None;
                    }
                    if chars[i] == '*' && chars[i + 1] == '/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
                out.push(' ');
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    Some(out)
}

fn leading_keyword(stripped: &str) -> String {
    stripped
        .trim_start_matches(|c: char| c.is_whitespace() || c == '(')
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_uppercase()
}

/// Static policy check, applied before the engine sees the statement.
pub fn check_statement(sql: &str) -> Result<(), SqlError> {
    let Some(stripped) = strip_lexical(sql) else {
        return Err(SqlError::new(
            SqlErrorKind::SyntaxError,
            "unterminated string literal, quoted identifier or comment",
        ));
    };
    let body = stripped.trim().trim_end_matches(';').trim_end();
    if body.is_empty() {
        return Err(SqlError::new(SqlErrorKind::SyntaxError, "empty statement"));
    }
    if body.contains(';') {
        return Err(SqlError::new(
            SqlErrorKind::WriteRejected,
            "only a single statement is allowed",
        ));
    }
    let keyword = leading_keyword(body);
    if WRITE_KEYWORDS.contains(&keyword.as_str()) {
        return Err(SqlError::new(
            SqlErrorKind::WriteRejected,
            format!("{keyword} statements are not allowed; the database is read-only"),
        ));
    }
    Ok(())
}

fn classify(err: &rusqlite::Error) -> SqlError {
    let text = err.to_string();
    if let rusqlite::Error::SqliteFailure(e, _) = err {
        match e.code {
            ErrorCode::OperationInterrupted => {
                return SqlError::new(SqlErrorKind::Timeout, "query exceeded the time limit")
            }
            ErrorCode::ReadOnly => return SqlError::new(SqlErrorKind::WriteRejected, &text),
            ErrorCode::CannotOpen | ErrorCode::NotADatabase | ErrorCode::DatabaseCorrupt => {
                return SqlError::new(SqlErrorKind::EngineFailure, &text)
            }
            _ => {}
        }
    }
    let lower = text.to_lowercase();
    let kind = if ["no such column", "no such table", "no such function", "ambiguous column"]
        .iter()
        .any(|m| lower.contains(m))
    {
        SqlErrorKind::UnknownIdentifier
    } else if lower.contains("readonly") || lower.contains("read-only") {
        SqlErrorKind::WriteRejected
    } else {
        SqlErrorKind::SyntaxError
    };
    SqlError::new(kind, text)
}

fn json_value(v: ValueRef<'_>) -> serde_json::Value {
    match v {
        ValueRef::Null => serde_json::Value::Null,
        ValueRef::Integer(i) => i.into(),
        ValueRef::Real(f) => serde_json::Number::from_f64(f)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned().into(),
        ValueRef::Blob(b) => format!("<blob {} bytes>", b.len()).into(),
    }
}

/// Opens `db` read-only and runs one SELECT. Failures are values, never
/// panics.
pub fn execute_readonly(db: &Path, sql: &str, limits: &SqlLimits) -> Result<SqlResult, SqlError> {
    check_statement(sql)?;
    let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX;
    let conn = Connection::open_with_flags(db, flags)
        .map_err(|e| SqlError::new(SqlErrorKind::EngineFailure, format!("cannot open database: {e}")))?;
    conn.pragma_update(None, "query_only", true)
        .map_err(|e| SqlError::new(SqlErrorKind::EngineFailure, e.to_string()))?;
    run_on(&conn, sql, limits)
}

fn run_on(conn: &Connection, sql: &str, limits: &SqlLimits) -> Result<SqlResult, SqlError> {
    let started = Instant::now();
    let deadline = started + limits.timeout();
    conn.progress_handler(PROGRESS_OPS, Some(move || Instant::now() >= deadline));
    let result = (|| {
        let mut stmt = conn.prepare(sql.trim().trim_end_matches(';')).map_err(|e| classify(&e))?;
        let keyword = strip_lexical(sql).map(|s| leading_keyword(&s)).unwrap_or_default();
        if !READ_KEYWORDS.contains(&keyword.as_str()) || !stmt.readonly() {
            return Err(SqlError::new(
                SqlErrorKind::WriteRejected,
                "only read-only SELECT statements are allowed",
            ));
        }
        let columns: Vec<String> = stmt.column_names().iter().map(|c| c.to_string()).collect();
        let width = columns.len();
        let mut rows_iter = stmt.query([]).map_err(|e| classify(&e))?;
        let mut rows = Vec::new();
        let mut truncated = false;
        while let Some(row) = rows_iter.next().map_err(|e| classify(&e))? {
            if rows.len() == limits.max_rows {
                truncated = true;
                break;
            }
            let mut cells = Vec::with_capacity(width);
            for i in 0..width {
                cells.push(json_value(row.get_ref(i).map_err(|e| classify(&e))?));
            }
            rows.push(cells);
        }
        Ok(SqlResult {
            columns,
            row_count: rows.len(),
            rows,
            truncated,
            elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
        })
    })();
    conn.progress_handler(0, None::<fn() -> bool>);
    result
}
