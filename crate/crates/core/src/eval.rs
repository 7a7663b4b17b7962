//! Benchmark replay over branch configurations with deterministic
//! correctness matchers and per-step runtime means.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    Agent, AgentTrace, Branch, Clock, HistoryTurn, StepTimings, SystemClock, TickClock,
    ToolOutcome, TurnRequest,
};
use crate::llm::LlmProvider;
use crate::profile::ConfigProfile;
use crate::sql_tool::{execute_readonly, SqlLimits, SqlResult};
use crate::workspace::Workspace;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("benchmark line {line}: {message}")]
    Benchmark { line: usize, message: String },
    #[error("unknown configuration {0:?} (expected sql, text or both)")]
    UnknownConfiguration(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid matcher: {0}")]
    Matcher(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Lookup,
    Complex,
    Abstract,
}

/// One answer check. Plain JSON strings are substring matchers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matcher {
    Substring(String),
    Contains { contains: String },
    Regex { regex: String },
    Numeric {
        numeric: f64,
        #[serde(default)]
        tolerance: f64,
    },
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap())
}

impl Matcher {
    pub fn validate(&self) -> Result<(), EvalError> {
        match self {
            Matcher::Regex { regex } => Regex::new(regex)
                .map(|_| ())
                .map_err(|e| EvalError::Matcher(e.to_string())),
            Matcher::Numeric { tolerance, .. } if *tolerance < 0.0 => {
                Err(EvalError::Matcher("tolerance must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Substrings match case-insensitively; numeric matchers accept any
    /// number in the answer within the tolerance (thousands separators
    /// are ignored).
    pub fn matches(&self, answer: &str) -> bool {
        match self {
            Matcher::Substring(s) | Matcher::Contains { contains: s } => {
                answer.to_lowercase().contains(&s.to_lowercase())
            }
            Matcher::Regex { regex } => Regex::new(regex).is_ok_and(|re| re.is_match(answer)),
            Matcher::Numeric { numeric, tolerance } => {
                let cleaned = answer.replace(',', "");
                number_re()
                    .find_iter(&cleaned)
                    .filter_map(|m| m.as_str().parse::<f64>().ok())
                    .any(|x| (x - numeric).abs() <= *tolerance)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Gold {
    pub answer_matchers: Vec<Matcher>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sql: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchmarkItem {
    pub conversation_id: String,
    /// 1-based.
    pub turn_index: u32,
    pub question: String,
    pub category: Category,
    pub gold: Gold,
}

pub fn read_benchmark<R: BufRead>(input: R) -> Result<Vec<BenchmarkItem>, EvalError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: BenchmarkItem = serde_json::from_str(&line).map_err(|e| EvalError::Benchmark {
            line: i + 1,
            message: e.to_string(),
        })?;
        for m in &item.gold.answer_matchers {
            m.validate().map_err(|e| EvalError::Benchmark {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        items.push(item);
    }
    Ok(items)
}

pub fn write_benchmark<W: Write>(items: &[BenchmarkItem], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Items grouped by conversation (first-appearance order), turns sorted.
pub fn group_conversations(items: &[BenchmarkItem]) -> Vec<(String, Vec<BenchmarkItem>)> {
    let mut groups: Vec<(String, Vec<BenchmarkItem>)> = Vec::new();
    for item in items {
        match groups.iter_mut().find(|(id, _)| *id == item.conversation_id) {
            Some((_, turns)) => turns.push(item.clone()),
            None => groups.push((item.conversation_id.clone(), vec![item.clone()])),
        }
    }
    for (_, turns) in &mut groups {
        turns.sort_by_key(|t| t.turn_index);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Configuration {
    SqlOnly,
    TextOnly,
    Both,
}

impl Configuration {
    pub fn branches(self) -> Vec<Branch> {
        match self {
            Configuration::SqlOnly => vec![Branch::Sql],
            Configuration::TextOnly => vec![Branch::Text],
            Configuration::Both => vec![Branch::Sql, Branch::Text],
        }
    }

    pub fn uses_sql(self) -> bool {
        self != Configuration::TextOnly
    }

    pub fn label(self) -> &'static str {
        match self {
            Configuration::SqlOnly => "sql",
            Configuration::TextOnly => "text",
            Configuration::Both => "both",
        }
    }
}

impl FromStr for Configuration {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sql" | "sqlonly" | "sql-only" => Ok(Configuration::SqlOnly),
            "text" | "textonly" | "text-only" => Ok(Configuration::TextOnly),
            "both" => Ok(Configuration::Both),
            other => Err(EvalError::UnknownConfiguration(other.to_string())),
        }
    }
}

/// Parses a comma-separated configuration list such as `sql,text,both`.
pub fn parse_configurations(list: &str) -> Result<Vec<Configuration>, EvalError> {
    let mut out: Vec<Configuration> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let c = part.parse()?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err(EvalError::UnknownConfiguration(list.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EvalClock {
    #[default]
    Wall,
    /// Each clock reading advances 1 ms, giving reproducible timings.
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnResult {
    pub configuration: Configuration,
    pub conversation_id: String,
    pub turn_index: u32,
    pub category: Category,
    pub correct: bool,
    pub answer_matched: bool,
    /// `None` when the item has no gold SQL or the configuration has no
    /// SQL branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql_matched: Option<bool>,
    pub sql_calls: usize,
    pub text_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timings: StepTimings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepMeans {
    pub rewrite_ms: f64,
    pub tool_selection_ms: f64,
    pub sql_exec_ms: f64,
    pub text_search_ms: f64,
    pub answer_ms: f64,
    pub total_ms: f64,
}

impl StepMeans {
    fn of(timings: &[StepTimings]) -> Self {
        let n = timings.len().max(1) as f64;
        let mean = |f: fn(&StepTimings) -> f64| timings.iter().map(f).sum::<f64>() / n;
        StepMeans {
            rewrite_ms: mean(|t| t.rewrite_ms),
            tool_selection_ms: mean(|t| t.tool_selection_ms),
            sql_exec_ms: mean(|t| t.sql_exec_ms),
            text_search_ms: mean(|t| t.text_search_ms),
            answer_ms: mean(|t| t.answer_ms),
            total_ms: mean(|t| t.total_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigurationSummary {
    pub configuration: Configuration,
    pub turns: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_category: BTreeMap<Category, f64>,
    pub step_means: StepMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub items: usize,
    pub conversations: usize,
    pub per_configuration: Vec<ConfigurationSummary>,
    pub results: Vec<TurnResult>,
    /// Aligned-text rendering of `perConfiguration`.
    pub table: String,
}

impl EvalReport {
    pub fn summary(&self, configuration: Configuration) -> Option<&ConfigurationSummary> {
        self.per_configuration
            .iter()
            .find(|s| s.configuration == configuration)
    }

    pub fn accuracy(&self, configuration: Configuration) -> Option<f64> {
        self.summary(configuration).map(|s| s.accuracy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn row_multiset(result: &SqlResult) -> Vec<String> {
    let mut rows: Vec<String> = result
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| match v {
                    serde_json::Value::Number(n) => {
                        format!("{:.6}", n.as_f64().unwrap_or(f64::NAN))
                    }
                    serde_json::Value::String(s) => format!("s:{s}"),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join("\u{1f}")
        })
        .collect();
    rows.sort();
    rows
}

/// True if any successful SQL round of `trace` returned the same row
/// multiset as `gold` (column names are ignored).
pub fn sql_matches_gold(trace: &AgentTrace, gold: &SqlResult) -> bool {
    let want = row_multiset(gold);
    trace.tool_calls.iter().any(|c| match &c.outcome {
        ToolOutcome::SqlResult(r) => row_multiset(r) == want,
        _ => false,
    })
}

/// Runs every conversation under every configuration and scores the turns.
/// `profile` supplies loop limits and retrieval settings; its branch set is
/// replaced by each configuration's.
/// Turn failures are recorded as incorrect and never stop the run.
pub fn run_benchmark(
    workspace: &Workspace,
    profile: &ConfigProfile,
    provider: &dyn LlmProvider,
    items: &[BenchmarkItem],
    configurations: &[Configuration],
    clock: EvalClock,
) -> EvalReport {
    let conversations = group_conversations(items);
    let gold_limits = SqlLimits {
        timeout_ms: 10_000,
        max_rows: 100_000,
    };
    let mut gold_results: BTreeMap<String, Option<SqlResult>> = BTreeMap::new();
    for item in items {
        if let Some(sql) = &item.gold.gold_sql {
            gold_results
                .entry(sql.clone())
                .or_insert_with(|| execute_readonly(&workspace.db_path, sql, &gold_limits).ok());
        }
    }

    let mut results = Vec::new();
    for &configuration in configurations {
        let mut config = profile.turn_config();
        config.branches = configuration.branches().into_iter().collect();
        for (conversation_id, turns) in &conversations {
            let run_id = format!("{}:{conversation_id}", configuration.label());
            let mut history: Vec<HistoryTurn> = Vec::new();
            for item in turns {
                let clock_impl: Box<dyn Clock> = match clock {
                    EvalClock::Wall => Box::new(SystemClock::new()),
                    EvalClock::Virtual => Box::new(TickClock::new(Duration::from_millis(1))),
                };
                let agent = Agent {
                    provider,
                    db_path: &workspace.db_path,
                    ddl: &workspace.ddl,
                    index: &workspace.index,
                    templates: &workspace.templates,
                    config: &config,
                    clock: clock_impl.as_ref(),
                };
                let request = TurnRequest {
                    conversation_id: &run_id,
                    turn_id: format!("{run_id}:{}", item.turn_index),
                    turn_index: item.turn_index,
                    profile_id: &profile.id,
                    question: &item.question,
                    history: &history,
                };
                let (trace, error) = match agent.run_turn(&request) {
                    Ok(t) => (t, None),
                    Err(f) => (*f.trace, Some(f.error.to_string())),
                };
                let answer_matched = error.is_none()
                    && item
                        .gold
                        .answer_matchers
                        .iter()
                        .all(|m| m.matches(&trace.final_answer));
                let sql_matched = match (&item.gold.gold_sql, configuration.uses_sql()) {
                    (Some(sql), true) => Some(
                        gold_results
                            .get(sql)
                            .and_then(Option::as_ref)
                            .is_some_and(|gold| sql_matches_gold(&trace, gold)),
                    ),
                    _ => None,
                };
                results.push(TurnResult {
                    configuration,
                    conversation_id: conversation_id.clone(),
                    turn_index: item.turn_index,
                    category: item.category,
                    correct: answer_matched && sql_matched.unwrap_or(true),
                    answer_matched,
                    sql_matched,
                    sql_calls: trace.count(crate::agent::ToolKind::SqlQuery),
                    text_calls: trace.count(crate::agent::ToolKind::TextSearch),
                    error,
                    timings: trace.step_timings,
                });
                history.push(HistoryTurn {
                    question: item.question.clone(),
                    answer: trace.final_answer,
                });
            }
        }
    }

    let per_configuration: Vec<ConfigurationSummary> = configurations
        .iter()
        .map(|&configuration| {
            let mine: Vec<&TurnResult> = results
                .iter()
                .filter(|r| r.configuration == configuration)
                .collect();
            let correct = mine.iter().filter(|r| r.correct).count();
            let mut per_category = BTreeMap::new();
            for category in [Category::Lookup, Category::Complex, Category::Abstract] {
                let of_cat: Vec<_> = mine.iter().filter(|r| r.category == category).collect();
                if !of_cat.is_empty() {
                    let ok = of_cat.iter().filter(|r| r.correct).count();
                    per_category.insert(category, ok as f64 / of_cat.len() as f64);
                }
            }
            let timings: Vec<StepTimings> = mine.iter().map(|r| r.timings).collect();
            ConfigurationSummary {
                configuration,
                turns: mine.len(),
                correct,
                accuracy: if mine.is_empty() {
                    0.0
                } else {
                    correct as f64 / mine.len() as f64
                },
                per_category,
                step_means: StepMeans::of(&timings),
            }
        })
        .collect();
    let table = render_table(&per_configuration);
    EvalReport {
        items: items.len(),
        conversations: conversations.len(),
        per_configuration,
        results,
        table,
    }
}

fn render_table(rows: &[ConfigurationSummary]) -> String {
    let header = [
        "configuration", "turns", "accuracy", "lookup", "complex", "abstract", "rewrite_ms",
        "select_ms", "sql_ms", "text_ms", "answer_ms", "total_ms",
    ];
    let pct = |v: Option<&f64>| v.map_or("-".to_string(), |v| format!("{:.3}", v));
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.configuration.label().to_string(),
                r.turns.to_string(),
                format!("{:.3}", r.accuracy),
                pct(r.per_category.get(&Category::Lookup)),
                pct(r.per_category.get(&Category::Complex)),
                pct(r.per_category.get(&Category::Abstract)),
                format!("{:.3}", r.step_means.rewrite_ms),
                format!("{:.3}", r.step_means.tool_selection_ms),
                format!("{:.3}", r.step_means.sql_exec_ms),
                format!("{:.3}", r.step_means.text_search_ms),
                format!("{:.3}", r.step_means.answer_ms),
                format!("{:.3}", r.step_means.total_ms),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: Vec<&str>| {
        let text = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ");
        let _ = writeln!(out, "{}", text.trim_end());
    };
    line(&mut out, header.to_vec());
    for row in &cells {
        line(&mut out, row.iter().map(String::as_str).collect());
    }
    out
}

/// Convenience wrapper reading the benchmark from a JSONL file.
pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkItem>, EvalError> {
    let file = std::fs::File::open(path)?;
    read_benchmark(std::io::BufReader::new(file))
}
