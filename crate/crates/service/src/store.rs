//! Conversation store: conversations, turns and full traces in one SQLite
//! file. Every append runs in a transaction, so a completed turn is durable
//! once the request returns.

use std::path::Path;
use std::sync::Mutex;

use kgqa_core::agent::{AgentTrace, HistoryTurn, TurnStatus};
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAGE_SIZE: usize = 50;
const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("store: corrupt trace {id}: {message}")]
    CorruptTrace { id: String, message: String },
    #[error("store schema version {found} is newer than supported version {SCHEMA_VERSION}")]
    UnsupportedVersion { found: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnRecord {
    pub turn_index: u32,
    pub question: String,
    pub answer: String,
    pub trace_ref: String,
    pub status: TurnStatus,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Conversation {
    pub id: String,
    pub title: String,
    pub created_at: String,
    pub config_profile_id: String,
    pub turns: Vec<TurnRecord>,
}

impl Conversation {
    /// Completed turns as conversation history for the next turn.
    pub fn history(&self) -> Vec<HistoryTurn> {
        self.turns
            .iter()
            .filter(|t| t.status == TurnStatus::Completed)
            .map(|t| HistoryTurn {
                question: t.question.clone(),
                answer: t.answer.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConversationSummary {
    pub id: String,
    pub title: String,
    pub created_at: String,
    pub config_profile_id: String,
    pub turn_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConversationPage {
    pub items: Vec<ConversationSummary>,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

pub struct Store {
    conn: Mutex<Connection>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn status_str(status: TurnStatus) -> &'static str {
    match status {
        TurnStatus::Completed => "completed",
        TurnStatus::Failed => "failed",
    }
}

fn parse_status(s: &str) -> TurnStatus {
    if s == "completed" {
        TurnStatus::Completed
    } else {
        TurnStatus::Failed
    }
}

impl Store {
    /// Opens (creating if needed) and migrates the store.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        Self::migrate(&conn)?;
        Ok(Store {
            conn: Mutex::new(conn),
        })
    }

    pub fn in_memory() -> Result<Self, StoreError> {
        let conn = Connection::open_in_memory()?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        Self::migrate(&conn)?;
        Ok(Store {
            conn: Mutex::new(conn),
        })
    }

    fn migrate(conn: &Connection) -> Result<(), StoreError> {
        let version: i64 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
        if version > SCHEMA_VERSION {
            return Err(StoreError::UnsupportedVersion { found: version });
        }
        if version < 1 {
            conn.execute_batch(
                "BEGIN;
                 CREATE TABLE conversations (
                   seq INTEGER PRIMARY KEY AUTOINCREMENT,
                   id TEXT NOT NULL UNIQUE,
                   title TEXT NOT NULL,
                   created_at TEXT NOT NULL,
                   profile_id TEXT NOT NULL
                 );
                 CREATE TABLE traces (
                   id TEXT PRIMARY KEY,
                   conversation_id TEXT NOT NULL REFERENCES conversations(id),
                   body TEXT NOT NULL
                 );
                 CREATE TABLE turns (
                   conversation_id TEXT NOT NULL REFERENCES conversations(id),
                   turn_index INTEGER NOT NULL,
                   question TEXT NOT NULL,
                   answer TEXT NOT NULL,
                   trace_id TEXT NOT NULL REFERENCES traces(id),
                   status TEXT NOT NULL,
                   created_at TEXT NOT NULL,
                   PRIMARY KEY (conversation_id, turn_index)
                 );
                 PRAGMA user_version = 1;
                 COMMIT;",
            )?;
        }
        Ok(())
    }

    fn conn(&self) -> std::sync::MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn create_conversation(&self, title: &str, profile_id: &str) -> Result<Conversation, StoreError> {
        let conversation = Conversation {
            id: uuid::Uuid::new_v4().to_string(),
            title: title.to_string(),
            created_at: now(),
            config_profile_id: profile_id.to_string(),
            turns: Vec::new(),
        };
        self.conn().execute(
            "INSERT INTO conversations (id, title, created_at, profile_id) VALUES (?1, ?2, ?3, ?4)",
            params![conversation.id, conversation.title, conversation.created_at, profile_id],
        )?;
        Ok(conversation)
    }

    /// Newest conversations first.
    pub fn list(&self, page: usize) -> Result<ConversationPage, StoreError> {
        let page = page.max(1);
        let conn = self.conn();
        let total: i64 = conn.query_row("SELECT COUNT(*) FROM conversations", [], |r| r.get(0))?;
        let mut stmt = conn.prepare(
            "SELECT c.id, c.title, c.created_at, c.profile_id,
                    (SELECT COUNT(*) FROM turns t WHERE t.conversation_id = c.id)
             FROM conversations c ORDER BY c.seq DESC LIMIT ?1 OFFSET ?2",
        )?;
        let items = stmt
            .query_map(params![PAGE_SIZE as i64, ((page - 1) * PAGE_SIZE) as i64], |r| {
                Ok(ConversationSummary {
                    id: r.get(0)?,
                    title: r.get(1)?,
                    created_at: r.get(2)?,
                    config_profile_id: r.get(3)?,
                    turn_count: r.get(4)?,
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(ConversationPage {
            items,
            page,
            page_size: PAGE_SIZE,
            total: total as usize,
        })
    }

    pub fn get(&self, id: &str) -> Result<Option<Conversation>, StoreError> {
        let conn = self.conn();
        let head = conn
            .query_row(
                "SELECT id, title, created_at, profile_id FROM conversations WHERE id = ?1",
                [id],
                |r| {
                    Ok(Conversation {
                        id: r.get(0)?,
                        title: r.get(1)?,
                        created_at: r.get(2)?,
                        config_profile_id: r.get(3)?,
                        turns: Vec::new(),
                    })
                },
            )
            .optional()?;
        let Some(mut conversation) = head else {
            return Ok(None);
        };
        let mut stmt = conn.prepare(
            "SELECT turn_index, question, answer, trace_id, status, created_at
             FROM turns WHERE conversation_id = ?1 ORDER BY turn_index",
        )?;
        conversation.turns = stmt
            .query_map([id], |r| {
                Ok(TurnRecord {
                    turn_index: r.get(0)?,
                    question: r.get(1)?,
                    answer: r.get(2)?,
                    trace_ref: r.get(3)?,
                    status: parse_status(&r.get::<_, String>(4)?),
                    created_at: r.get(5)?,
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(Some(conversation))
    }

    /// Switches the profile used for subsequent turns. Returns false for an
    /// unknown conversation.
    pub fn set_profile(&self, id: &str, profile_id: &str) -> Result<bool, StoreError> {
        let n = self.conn().execute(
            "UPDATE conversations SET profile_id = ?2 WHERE id = ?1",
            params![id, profile_id],
        )?;
        Ok(n == 1)
    }

    /// Appends a turn and its trace atomically. A conversation without a
    /// title takes the first question as its title.
    pub fn append_turn(&self, trace: &AgentTrace) -> Result<TurnRecord, StoreError> {
        let record = TurnRecord {
            turn_index: trace.turn_index,
            question: trace.original_question.clone(),
            answer: trace.final_answer.clone(),
            trace_ref: trace.turn_id.clone(),
            status: trace.status,
            created_at: now(),
        };
        let body = serde_json::to_string(trace).expect("trace serializes");
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT INTO traces (id, conversation_id, body) VALUES (?1, ?2, ?3)",
            params![trace.turn_id, trace.conversation_id, body],
        )?;
        tx.execute(
            "INSERT INTO turns (conversation_id, turn_index, question, answer, trace_id, status, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                trace.conversation_id,
                record.turn_index,
                record.question,
                record.answer,
                record.trace_ref,
                status_str(record.status),
                record.created_at
            ],
        )?;
        let title: String = record.question.chars().take(80).collect();
        tx.execute(
            "UPDATE conversations SET title = ?2 WHERE id = ?1 AND title = ''",
            params![trace.conversation_id, title],
        )?;
        tx.commit()?;
        Ok(record)
    }

    pub fn trace(&self, id: &str) -> Result<Option<AgentTrace>, StoreError> {
        let body: Option<String> = self
            .conn()
            .query_row("SELECT body FROM traces WHERE id = ?1", [id], |r| r.get(0))
            .optional()?;
        body.map(|b| {
            serde_json::from_str(&b).map_err(|e| StoreError::CorruptTrace {
                id: id.to_string(),
                message: e.to_string(),
            })
        })
        .transpose()
    }
}
