//! The per-turn record shown in the derivation panel and stored by the
//! service.

use serde::{Deserialize, Serialize};

use crate::llm::ChatMessage;
use crate::retrieval::ScoredPassage;
use crate::sql_tool::{SqlError, SqlResult};

use super::citations::CitationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToolKind {
    SqlQuery,
    TextSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum ToolOutcome {
    SqlResult(SqlResult),
    SqlError(SqlError),
    Passages(Vec<ScoredPassage>),
}

impl ToolOutcome {
    pub fn sql_error(&self) -> Option<&SqlError> {
        match self {
            ToolOutcome::SqlError(e) => Some(e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ToolCall {
    /// 1-based round of this tool.
    pub round: u32,
    pub tool: ToolKind,
    pub input: String,
    pub outcome: ToolOutcome,
    pub elapsed_ms: f64,
    /// Invoked by the orchestrator with the rewritten payload after the
    /// model kept declining a required tool.
    #[serde(default)]
    pub forced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceOrigin {
    SqlResult,
    Passage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Source {
    pub number: u32,
    pub origin: SourceOrigin,
    /// SQL text or passage id.
    pub reference: String,
    /// Aligned result table or passage text.
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Rewrite,
    ToolSelection,
    SqlExec,
    TextSearch,
    Answer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepTimings {
    pub rewrite_ms: f64,
    pub tool_selection_ms: f64,
    pub sql_exec_ms: f64,
    pub text_search_ms: f64,
    pub answer_ms: f64,
    pub total_ms: f64,
}

impl StepTimings {
    pub fn add(&mut self, step: Step, ms: f64) {
        *match step {
            Step::Rewrite => &mut self.rewrite_ms,
            Step::ToolSelection => &mut self.tool_selection_ms,
            Step::SqlExec => &mut self.sql_exec_ms,
            Step::TextSearch => &mut self.text_search_ms,
            Step::Answer => &mut self.answer_ms,
        } += ms;
    }

    pub fn step_sum(&self) -> f64 {
        self.rewrite_ms + self.tool_selection_ms + self.sql_exec_ms + self.text_search_ms + self.answer_ms
    }
}

/// One rendered prompt and the model's reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LlmExchange {
    pub step: Step,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LlmExchange {
    /// The last user message, i.e. the rendered template.
    pub fn prompt(&self) -> &str {
        self.messages.last().map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentTrace {
    pub turn_id: String,
    pub conversation_id: String,
    pub turn_index: u32,
    pub profile_id: String,
    pub original_question: String,
    pub explicit_sql_query: String,
    pub explicit_nl_question: String,
    pub tool_calls: Vec<ToolCall>,
    pub sources: Vec<Source>,
    pub final_answer: String,
    pub citations: CitationReport,
    pub step_timings: StepTimings,
    pub llm_calls: Vec<LlmExchange>,
    pub status: TurnStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AgentTrace {
    pub fn count(&self, tool: ToolKind) -> usize {
        self.tool_calls.iter().filter(|c| c.tool == tool).count()
    }

    /// Rendered decision prompts in call order.
    pub fn decision_prompts(&self) -> Vec<&str> {
        self.llm_calls
            .iter()
            .filter(|c| c.step == Step::ToolSelection)
            .map(LlmExchange::prompt)
            .collect()
    }
}
