//! Prompt templates with `{name}` placeholders and the renderers that fill
//! them.

use std::collections::HashMap;
use std::path::Path;

use crate::retrieval::ScoredPassage;

use super::trace::{Source, SourceOrigin, ToolCall, ToolKind, ToolOutcome};
use super::HistoryTurn;

const DECISION_PASSAGE_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub rewrite: String,
    pub decision: String,
    pub answer: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: include_str!("../../templates/system.txt").to_string(),
            rewrite: include_str!("../../templates/rewrite.txt").to_string(),
            decision: include_str!("../../templates/decision.txt").to_string(),
            answer: include_str!("../../templates/answer.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Defaults, overridden by `system.txt`, `rewrite.txt`, `decision.txt`
    /// and `answer.txt` found in `dir`.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::default();
        for (name, slot) in [
            ("system.txt", &mut t.system),
            ("rewrite.txt", &mut t.rewrite),
            ("decision.txt", &mut t.decision),
            ("answer.txt", &mut t.answer),
        ] {
            let path = dir.join(name);
            if path.is_file() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(t)
    }

    /// Writes the templates to `dir` so they can be edited.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in [
            ("system.txt", &self.system),
            ("rewrite.txt", &self.rewrite),
            ("decision.txt", &self.decision),
            ("answer.txt", &self.answer),
        ] {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

/// Single-pass substitution of `{name}` placeholders. Values are inserted
/// literally, so braces inside them are never expanded; unknown
/// placeholders are kept as written.
pub fn render(template: &str, values: &HashMap<&str, String>) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        match close {
            Some(end)
                if after[..end]
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_')
                    && values.contains_key(&after[..end]) =>
            {
                out.push_str(&values[&after[..end]]);
                rest = &after[end + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_history(history: &[HistoryTurn]) -> String {
    if history.is_empty() {
        return "(no earlier turns)".into();
    }
    history
        .iter()
        .enumerate()
        .map(|(i, t)| format!("Q{n}: {}\nA{n}: {}", t.question, t.answer, n = i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn truncate(text: &str, max: usize) -> String {
    if text.chars().count() <= max {
        text.to_string()
    } else {
        let mut s: String = text.chars().take(max).collect();
        s.push_str(" ...");
        s
    }
}

fn passage_lines(passages: &[ScoredPassage]) -> String {
    if passages.is_empty() {
        return "(no passages)".into();
    }
    passages
        .iter()
        .map(|p| {
            format!(
                "- {} (score {:.3}): {}",
                p.passage.id,
                p.score,
                truncate(&p.passage.text, DECISION_PASSAGE_CHARS)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Every earlier tool round with its input and full outcome.
pub fn render_outcomes(calls: &[ToolCall]) -> String {
    if calls.is_empty() {
        return "(no tool calls yet)".into();
    }
    calls
        .iter()
        .map(|c| {
            let tool = match c.tool {
                ToolKind::SqlQuery => "SQL",
                ToolKind::TextSearch => "text search",
            };
            let body = match &c.outcome {
                ToolOutcome::SqlResult(r) => r.to_text_table(),
                ToolOutcome::SqlError(e) => format!("Error ({:?}): {}", e.kind, e.message),
                ToolOutcome::Passages(p) => passage_lines(p),
            };
            format!("Round {} {tool} input: {}\n{body}", c.round, c.input)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Error messages of earlier rounds, verbatim.
pub fn render_errors(calls: &[ToolCall], extra: &[String]) -> String {
    let mut lines: Vec<String> = extra.to_vec();
    for c in calls {
        if let Some(e) = c.outcome.sql_error() {
            lines.push(format!("SQL round {} failed ({:?}): {}", c.round, e.kind, e.message));
        }
    }
    if lines.is_empty() {
        "(none)".into()
    } else {
        lines.join("\n")
    }
}

pub fn render_sources(sources: &[Source]) -> String {
    if sources.is_empty() {
        return "(no sources)".into();
    }
    sources
        .iter()
        .map(|s| match s.origin {
            SourceOrigin::SqlResult => {
                format!("[{}] SQL result of: {}\n{}", s.number, s.reference, s.content)
            }
            SourceOrigin::Passage => format!(
                "[{}] Passage {} (score {:.3}): {}",
                s.number,
                s.reference,
                s.score.unwrap_or(0.0),
                s.content
            ),
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}
