//! The per-turn agent loop.
//!
//! A turn rewrites the conversational question once into an intent-explicit
//! SQL query and NL question, then alternates between a tool-selection call
//! and a tool invocation until the model finishes (after every enabled tool
//! ran at least once) or all tools are out of rounds. The accumulated SQL
//! results and passages become numbered sources for the answer call.

pub mod citations;
pub mod clock;
pub mod decision;
pub mod prompts;
pub mod trace;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatMessage, ChatRequest, LlmError, LlmProvider};
use crate::retrieval::{Index, RetrievalConfig, RetrievalError, ScoredPassage};
use crate::sql_tool::{execute_readonly, SqlLimits};

pub use citations::{check_citations, extract_citations, CitationReport};
pub use clock::{Clock, SystemClock, TickClock};
pub use decision::{parse_decision, parse_rewrite, Decision, Rewrite};
pub use prompts::PromptTemplates;
pub use trace::{
    AgentTrace, LlmExchange, Source, SourceOrigin, Step, StepTimings, ToolCall, ToolKind,
    ToolOutcome, TurnStatus,
};

use clock::Lap;
use prompts::{render, render_errors, render_history, render_outcomes, render_sources};

pub const DEFAULT_MAX_ROUNDS: u32 = 3;
pub const DEFAULT_MAX_REASKS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    Sql,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct LoopConfig {
    pub max_rounds_per_tool: u32,
    /// Re-asks of the selection call after a premature finish or a refused
    /// tool, before the orchestrator decides itself.
    pub max_reasks: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_rounds_per_tool: DEFAULT_MAX_ROUNDS,
            max_reasks: DEFAULT_MAX_REASKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnConfig {
    pub branches: BTreeSet<Branch>,
    #[serde(default)]
    pub loop_config: LoopConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub sql_limits: SqlLimits,
}

impl Default for TurnConfig {
    fn default() -> Self {
        TurnConfig {
            branches: [Branch::Sql, Branch::Text].into(),
            loop_config: LoopConfig::default(),
            retrieval: RetrievalConfig::default(),
            sql_limits: SqlLimits::default(),
        }
    }
}

impl TurnConfig {
    pub fn with_branches(branches: &[Branch]) -> Self {
        TurnConfig {
            branches: branches.iter().copied().collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.branches.is_empty() {
            return Err(AgentError::Config("at least one retrieval branch must be enabled".into()));
        }
        if self.loop_config.max_rounds_per_tool == 0 {
            return Err(AgentError::Config("maxRoundsPerTool must be >= 1".into()));
        }
        self.retrieval
            .validate()
            .map_err(|e| AgentError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("invalid turn configuration: {0}")]
    Config(String),
}

impl AgentError {
    pub fn is_provider_unavailable(&self) -> bool {
        match self {
            AgentError::Llm(e) => e.is_retryable() || matches!(e, LlmError::Config(_)),
            AgentError::Retrieval(e) => e.is_retryable(),
            AgentError::Config(_) => false,
        }
    }
}

/// A failed turn with everything recorded up to the failure.
#[derive(Debug, Error)]
#[error("turn failed: {error}")]
pub struct TurnFailure {
    pub error: AgentError,
    pub trace: Box<AgentTrace>,
}

#[derive(Debug, Clone)]
pub struct TurnRequest<'a> {
    pub conversation_id: &'a str,
    pub turn_id: String,
    /// 1-based.
    pub turn_index: u32,
    pub profile_id: &'a str,
    pub question: &'a str,
    pub history: &'a [HistoryTurn],
}

/// Everything a turn reads. Holds no mutable state, so one `Agent` can
/// serve concurrent turns of different conversations.
pub struct Agent<'a> {
    pub provider: &'a dyn LlmProvider,
    pub db_path: &'a Path,
    pub ddl: &'a str,
    pub index: &'a Index,
    pub templates: &'a PromptTemplates,
    pub config: &'a TurnConfig,
    pub clock: &'a dyn Clock,
}

fn tool_name(tool: ToolKind) -> &'static str {
    match tool {
        ToolKind::SqlQuery => "SQL tool",
        ToolKind::TextSearch => "text search tool",
    }
}

fn branch_of(tool: ToolKind) -> Branch {
    match tool {
        ToolKind::SqlQuery => Branch::Sql,
        ToolKind::TextSearch => Branch::Text,
    }
}

impl Agent<'_> {
    pub fn run_turn(&self, request: &TurnRequest<'_>) -> Result<AgentTrace, TurnFailure> {
        let mut run = TurnRun::new(self, request);
        let outcome = self
            .config
            .validate()
            .and_then(|_| run.execute());
        match outcome {
            Ok(()) => {
                run.trace.step_timings = run.lap.timings;
                Ok(run.trace)
            }
            Err(error) => {
                run.trace.step_timings = run.lap.timings;
                run.trace.status = TurnStatus::Failed;
                run.trace.error = Some(error.to_string());
                Err(TurnFailure {
                    error,
                    trace: Box::new(run.trace),
                })
            }
        }
    }
}

struct TurnRun<'a, 'b> {
    agent: &'a Agent<'b>,
    request: &'a TurnRequest<'a>,
    lap: Lap<'a>,
    trace: AgentTrace,
    /// Problems detected outside tool calls (e.g. a rewrite without SQL).
    feedback: Vec<String>,
}

impl<'a, 'b> TurnRun<'a, 'b> {
    fn new(agent: &'a Agent<'b>, request: &'a TurnRequest<'a>) -> Self {
        TurnRun {
            agent,
            request,
            lap: Lap::start(agent.clock),
            trace: AgentTrace {
                turn_id: request.turn_id.clone(),
                conversation_id: request.conversation_id.to_string(),
                turn_index: request.turn_index,
                profile_id: request.profile_id.to_string(),
                original_question: request.question.to_string(),
                explicit_sql_query: String::new(),
                explicit_nl_question: String::new(),
                tool_calls: Vec::new(),
                sources: Vec::new(),
                final_answer: String::new(),
                citations: CitationReport::default(),
                step_timings: StepTimings::default(),
                llm_calls: Vec::new(),
                status: TurnStatus::Completed,
                error: None,
            },
            feedback: Vec::new(),
        }
    }

    fn execute(&mut self) -> Result<(), AgentError> {
        self.rewrite()?;
        self.tool_loop()?;
        self.answer()
    }

    fn chat(&mut self, step: Step, prompt: String) -> Result<String, AgentError> {
        let messages = vec![
            ChatMessage::system(self.agent.templates.system.trim_end()),
            ChatMessage::user(prompt),
        ];
        let mut request = ChatRequest::new(messages.clone())?;
        request.conversation = Some(self.request.conversation_id.to_string());
        request.turn = Some(self.request.turn_index);
        let result = self.agent.provider.complete(&request);
        self.lap.split(step);
        let (response, error) = match &result {
            Ok(c) => (Some(c.text.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.trace.llm_calls.push(LlmExchange {
            step,
            messages,
            response,
            error,
        });
        Ok(result?.text)
    }

    fn history(&self) -> String {
        render_history(self.request.history)
    }

    fn rewrite(&mut self) -> Result<(), AgentError> {
        let values: HashMap<&str, String> = [
            ("history", self.history()),
            ("question", self.request.question.to_string()),
            ("ddl", self.agent.ddl.trim_end().to_string()),
        ]
        .into();
        let prompt = render(&self.agent.templates.rewrite, &values);
        let reply = self.chat(Step::Rewrite, prompt)?;
        let parsed = parse_rewrite(&reply);
        if parsed.sql.is_empty() && self.enabled(ToolKind::SqlQuery) {
            self.feedback
                .push("The rewrite step produced no SQL query; write one from the schema.".into());
        }
        self.trace.explicit_sql_query = parsed.sql;
        self.trace.explicit_nl_question = parsed
            .question
            .unwrap_or_else(|| self.request.question.to_string());
        Ok(())
    }

    fn enabled(&self, tool: ToolKind) -> bool {
        self.agent.config.branches.contains(&branch_of(tool))
    }

    fn rounds(&self, tool: ToolKind) -> u32 {
        self.trace.count(tool) as u32
    }

    fn max_rounds(&self) -> u32 {
        self.agent.config.loop_config.max_rounds_per_tool
    }

    fn available(&self, tool: ToolKind) -> bool {
        self.enabled(tool) && self.rounds(tool) < self.max_rounds()
    }

    /// First enabled tool that has not run yet.
    fn missing_required(&self) -> Option<ToolKind> {
        [ToolKind::SqlQuery, ToolKind::TextSearch]
            .into_iter()
            .find(|&t| self.enabled(t) && self.rounds(t) == 0)
    }

    fn status_line(&self, tool: ToolKind) -> String {
        let label = match tool {
            ToolKind::SqlQuery => "SQL tool",
            ToolKind::TextSearch => "Text search tool",
        };
        if !self.enabled(tool) {
            return format!("{label}: disabled");
        }
        let (used, max) = (self.rounds(tool), self.max_rounds());
        let state = match used {
            0 => "unused",
            n if n >= max => "exhausted",
            _ => "used",
        };
        format!("{label}: {state} ({used} of {max} rounds)")
    }

    fn default_payload(&self, tool: ToolKind) -> String {
        match tool {
            ToolKind::SqlQuery => self.trace.explicit_sql_query.clone(),
            ToolKind::TextSearch => self.trace.explicit_nl_question.clone(),
        }
    }

    fn decision_prompt(&self, constraint: Option<&str>) -> String {
        let values: HashMap<&str, String> = [
            ("question", self.request.question.to_string()),
            ("history", self.history()),
            (
                "status",
                format!(
                    "{}\n{}",
                    self.status_line(ToolKind::SqlQuery),
                    self.status_line(ToolKind::TextSearch)
                ),
            ),
            ("sql_query", self.trace.explicit_sql_query.clone()),
            ("nl_question", self.trace.explicit_nl_question.clone()),
            ("outcomes", render_outcomes(&self.trace.tool_calls)),
            ("errors", render_errors(&self.trace.tool_calls, &self.feedback)),
            ("ddl", self.agent.ddl.trim_end().to_string()),
            (
                "constraint",
                constraint.map_or(String::new(), |c| format!("\nConstraint: {c}\n")),
            ),
        ]
        .into();
        render(&self.agent.templates.decision, &values)
    }

    /// One selection call; an unparseable reply is retried once and then
    /// read as a finish request.
    fn ask_decision(&mut self, constraint: Option<&str>) -> Result<Decision, AgentError> {
        let reply = self.chat(Step::ToolSelection, self.decision_prompt(constraint))?;
        if let Some(d) = parse_decision(&reply) {
            return Ok(d);
        }
        let retry = format!(
            "{}Your previous reply could not be parsed. The first line must be TOOL: sql, TOOL: text or TOOL: finish.",
            constraint.map_or(String::new(), |c| format!("{c} "))
        );
        let reply = self.chat(Step::ToolSelection, self.decision_prompt(Some(&retry)))?;
        Ok(parse_decision(&reply).unwrap_or(Decision::Finish))
    }

    fn tool_loop(&mut self) -> Result<(), AgentError> {
        let max_reasks = self.agent.config.loop_config.max_reasks;
        loop {
            if !self.available(ToolKind::SqlQuery) && !self.available(ToolKind::TextSearch) {
                return Ok(());
            }
            let mut decision = self.ask_decision(None)?;
            let mut reasks = 0;
            let action = loop {
                let problem = match &decision {
                    Decision::Finish => match self.missing_required() {
                        None => break None,
                        Some(tool) => format!(
                            "You must use the {} at least once before finishing.",
                            tool_name(tool)
                        ),
                    },
                    Decision::Sql(payload) | Decision::Text(payload) => {
                        let tool = if matches!(decision, Decision::Sql(_)) {
                            ToolKind::SqlQuery
                        } else {
                            ToolKind::TextSearch
                        };
                        if self.available(tool) {
                            let input = if payload.is_empty() {
                                self.default_payload(tool)
                            } else {
                                payload.clone()
                            };
                            break Some((tool, input, false));
                        }
                        let why = if self.enabled(tool) {
                            format!("all {} rounds are used", self.max_rounds())
                        } else {
                            "it is disabled in this configuration".to_string()
                        };
                        format!(
                            "The {} is not available ({why}). Choose another tool or finish.",
                            tool_name(tool)
                        )
                    }
                };
                if reasks < max_reasks {
                    reasks += 1;
                    decision = self.ask_decision(Some(&problem))?;
                    continue;
                }
                break self
                    .missing_required()
                    .map(|t| (t, self.default_payload(t), true));
            };
            match action {
                None => return Ok(()),
                Some((tool, input, forced)) => self.invoke(tool, input, forced)?,
            }
        }
    }

    fn invoke(&mut self, tool: ToolKind, input: String, forced: bool) -> Result<(), AgentError> {
        let round = self.rounds(tool) + 1;
        let (outcome, elapsed_ms) = match tool {
            ToolKind::SqlQuery => {
                let outcome = match execute_readonly(
                    self.agent.db_path,
                    &input,
                    &self.agent.config.sql_limits,
                ) {
                    Ok(r) => ToolOutcome::SqlResult(r),
                    Err(e) => ToolOutcome::SqlError(e),
                };
                (outcome, self.lap.split(Step::SqlExec))
            }
            ToolKind::TextSearch => {
                let hits = self
                    .agent
                    .index
                    .search(&input, self.agent.config.retrieval.k);
                let ms = self.lap.split(Step::TextSearch);
                (ToolOutcome::Passages(hits?), ms)
            }
        };
        self.trace.tool_calls.push(ToolCall {
            round,
            tool,
            input,
            outcome,
            elapsed_ms,
            forced,
        });
        Ok(())
    }

    fn answer(&mut self) -> Result<(), AgentError> {
        self.trace.sources = build_sources(&self.trace.tool_calls);
        let values: HashMap<&str, String> = [
            ("history", self.history()),
            ("question", self.request.question.to_string()),
            ("sources", render_sources(&self.trace.sources)),
        ]
        .into();
        let prompt = render(&self.agent.templates.answer, &values);
        let reply = self.chat(Step::Answer, prompt)?;
        self.trace.citations = check_citations(&reply, self.trace.sources.len());
        self.trace.final_answer = reply;
        Ok(())
    }
}

/// Successful SQL results in call order, then passages deduplicated by id
/// (max score kept) ordered by score descending and id ascending; numbered
/// from 1.
pub fn build_sources(calls: &[ToolCall]) -> Vec<Source> {
    let mut sources = Vec::new();
    for call in calls {
        if let ToolOutcome::SqlResult(r) = &call.outcome {
            sources.push(Source {
                number: sources.len() as u32 + 1,
                origin: SourceOrigin::SqlResult,
                reference: call.input.clone(),
                content: r.to_text_table(),
                score: None,
            });
        }
    }
    let mut best: HashMap<&str, &ScoredPassage> = HashMap::new();
    for call in calls {
        if let ToolOutcome::Passages(hits) = &call.outcome {
            for hit in hits {
                let entry = best.entry(hit.passage.id.as_str()).or_insert(hit);
                if hit.score > entry.score {
                    *entry = hit;
                }
            }
        }
    }
    let mut passages: Vec<&ScoredPassage> = best.into_values().collect();
    passages.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.passage.id.cmp(&b.passage.id))
    });
    for p in passages {
        sources.push(Source {
            number: sources.len() as u32 + 1,
            origin: SourceOrigin::Passage,
            reference: p.passage.id.clone(),
            content: p.passage.text.clone(),
            score: Some(p.score),
        });
    }
    sources
}
