//! Parsers for the rewrite and tool-selection replies.

use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    /// Payload may be empty, meaning "use the rewritten query".
    Sql(String),
    Text(String),
    Finish,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Rewrite {
    /// Collapsed to a single line; empty when the reply had no SQL.
    pub sql: String,
    pub question: Option<String>,
}

fn tool_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*\**\s*TOOL\s*\**\s*:\s*\**\s*(sql|text|finish)\b\**(.*)$").unwrap())
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One-line form of a possibly multi-line SQL statement.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Finds the first `TOOL: sql|text|finish` line; the payload is the rest of
/// that line plus every following line.
pub fn parse_decision(reply: &str) -> Option<Decision> {
    let lines: Vec<&str> = reply.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if let Some(caps) = tool_re().captures(line) {
            let mut payload = caps[2].trim().to_string();
            let rest = strip_fences(&lines[i + 1..].join("\n"));
            if !rest.trim().is_empty() {
                if !payload.is_empty() {
                    payload.push('\n');
                }
                payload.push_str(rest.trim());
            }
            let payload = payload.trim().to_string();
            return Some(match caps[1].to_ascii_lowercase().as_str() {
                "sql" => Decision::Sql(collapse_whitespace(&payload)),
                "text" => Decision::Text(collapse_whitespace(&payload)),
                _ => Decision::Finish,
            });
        }
    }
    None
}

/// Reads `SQL: ...` (possibly spanning lines) and `QUESTION: ...`.
pub fn parse_rewrite(reply: &str) -> Rewrite {
    let cleaned = strip_fences(reply);
    let mut sql_lines: Vec<String> = Vec::new();
    let mut question = None;
    let mut in_sql = false;
    for line in cleaned.lines() {
        let trimmed = line.trim();
        let upper = trimmed.to_ascii_uppercase();
        if upper.starts_with("SQL:") {
            in_sql = true;
            sql_lines.push(trimmed[4..].to_string());
        } else if upper.starts_with("QUESTION:") {
            in_sql = false;
            let q = trimmed[9..].trim();
            if !q.is_empty() && question.is_none() {
                question = Some(q.to_string());
            }
        } else if in_sql {
            sql_lines.push(trimmed.to_string());
        }
    }
    Rewrite {
        sql: collapse_whitespace(&sql_lines.join(" ")),
        question,
    }
}
