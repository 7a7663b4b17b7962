//! On-disk workspace produced by `ingest` and consumed by `serve`/`eval`.
//!
//! ```text
//! ws/
//!   ddl.sql              CREATE TABLE statements with comments
//!   kg.db                populated SQLite database
//!   passages.jsonl       verbalized capsules + external document chunks
//!   index/manifest.json  retrieval index metadata (+ embeddings.json)
//!   schema-report.json   tables, types, cardinalities, overrides, row counts
//!   profiles.json        configuration profiles
//!   prompts/             editable prompt templates
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::PromptTemplates;
use crate::induction::{
    induce_database, InductionConfig, InductionError, RenameConfig, SchemaReport,
};
use crate::llm::{build_provider, LlmError, LlmProvider};
use crate::passage::{read_jsonl, write_jsonl, Passage, SourceKind};
use crate::profile::{ConfigProfile, ProfileSet};
use crate::rdf::{group_capsules, parse_ntriples, NTriplesError};
use crate::retrieval::{ingest_documents, Document, Index, RetrievalError, ScorerKind};
use crate::verbalize::{verbalize_all, CasingConfig};

pub const DDL_FILE: &str = "ddl.sql";
pub const DB_FILE: &str = "kg.db";
pub const PASSAGES_FILE: &str = "passages.jsonl";
pub const INDEX_DIR: &str = "index";
pub const SCHEMA_REPORT_FILE: &str = "schema-report.json";
pub const PROFILES_FILE: &str = "profiles.json";
pub const PROMPTS_DIR: &str = "prompts";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Parse(#[from] NTriplesError),
    #[error(transparent)]
    Induction(#[from] InductionError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("profiles: {0}")]
    Profile(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> WorkspaceError + '_ {
    move |e| WorkspaceError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub kg: PathBuf,
    pub out: PathBuf,
    pub renames: Option<PathBuf>,
    pub docs: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub induction: InductionConfig,
    pub casing: CasingConfig,
    pub scorer: ScorerKind,
}

impl IngestOptions {
    pub fn new(kg: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        IngestOptions {
            kg: kg.into(),
            out: out.into(),
            renames: None,
            docs: None,
            profiles: None,
            induction: InductionConfig::default(),
            casing: CasingConfig::default(),
            scorer: ScorerKind::Lexical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestSummary {
    pub workspace: PathBuf,
    pub triples: usize,
    pub capsules: usize,
    pub tables: usize,
    pub entity_tables: usize,
    pub rows: usize,
    pub passages: usize,
    pub kg_passages: usize,
    pub external_passages: usize,
    pub scorer: ScorerKind,
}

/// Runs every offline stage and writes the workspace.
pub fn ingest(opts: &IngestOptions) -> Result<IngestSummary, WorkspaceError> {
    let out = opts.out.as_path();
    std::fs::create_dir_all(out).map_err(io_err(out))?;

    let file = File::open(&opts.kg).map_err(io_err(&opts.kg))?;
    let triples = parse_ntriples(BufReader::new(file))?;
    let capsules = group_capsules(&triples);
    tracing::info!(triples = triples.len(), capsules = capsules.len(), "parsed knowledge graph");

    let overrides = match &opts.renames {
        Some(path) => RenameConfig::load(path)?,
        None => RenameConfig::default(),
    };
    let db_path = out.join(DB_FILE);
    let (schema, population) = induce_database(&capsules, &opts.induction, &overrides, &db_path)?;
    let ddl_path = out.join(DDL_FILE);
    std::fs::write(&ddl_path, &schema.generated_ddl).map_err(io_err(&ddl_path))?;
    let report_path = out.join(SCHEMA_REPORT_FILE);
    let report = serde_json::to_string_pretty(&SchemaReport::new(&schema, &population))
        .expect("schema report serializes");
    std::fs::write(&report_path, report + "\n").map_err(io_err(&report_path))?;

    let mut passages = verbalize_all(&capsules, opts.induction.type_predicates.clone(), &opts.casing);
    let kg_passages = passages.len();
    let external_passages = match &opts.docs {
        Some(path) => {
            let docs = Document::load_path(path).map_err(io_err(path))?;
            ingest_documents(&mut passages, &docs)
        }
        None => 0,
    };
    let passages_path = out.join(PASSAGES_FILE);
    let writer = BufWriter::new(File::create(&passages_path).map_err(io_err(&passages_path))?);
    write_jsonl(&passages, writer).map_err(io_err(&passages_path))?;

    let profiles = match &opts.profiles {
        Some(path) => ProfileSet::load(path).map_err(WorkspaceError::Profile)?,
        None => ProfileSet::defaults(),
    };
    let profiles_path = out.join(PROFILES_FILE);
    profiles.save(&profiles_path).map_err(io_err(&profiles_path))?;
    let prompts_dir = out.join(PROMPTS_DIR);
    if !prompts_dir.exists() {
        PromptTemplates::default()
            .write_dir(&prompts_dir)
            .map_err(io_err(&prompts_dir))?;
    }

    let passage_count = passages.len();
    let index = match opts.scorer {
        ScorerKind::Lexical => Index::build_lexical(passages)?,
        ScorerKind::Embedding => {
            let provider = provider_for(profiles.default_profile(), out)?;
            Index::build_embedding(passages, provider)?
        }
    };
    index.save(&out.join(INDEX_DIR))?;

    Ok(IngestSummary {
        workspace: out.to_path_buf(),
        triples: triples.len(),
        capsules: capsules.len(),
        tables: schema.tables.len(),
        entity_tables: schema.entity_table_count(),
        rows: population.total_rows(),
        passages: passage_count,
        kg_passages,
        external_passages,
        scorer: opts.scorer,
    })
}

/// Provider of `profile`; relative script paths resolve against the
/// workspace root.
pub fn provider_for(profile: &ConfigProfile, root: &Path) -> Result<Arc<dyn LlmProvider>, LlmError> {
    build_provider(&profile.provider_config, root)
}

/// A loaded, read-only workspace.
pub struct Workspace {
    pub root: PathBuf,
    pub ddl: String,
    pub db_path: PathBuf,
    pub index: Index,
    pub profiles: ProfileSet,
    pub templates: PromptTemplates,
}

impl Workspace {
    pub fn open(root: &Path) -> Result<Self, WorkspaceError> {
        let ddl_path = root.join(DDL_FILE);
        let ddl = std::fs::read_to_string(&ddl_path).map_err(io_err(&ddl_path))?;
        let db_path = root.join(DB_FILE);
        if !db_path.is_file() {
            return Err(WorkspaceError::Io {
                path: db_path,
                message: "database missing; run ingest first".into(),
            });
        }
        let profiles_path = root.join(PROFILES_FILE);
        let profiles = ProfileSet::load(&profiles_path).map_err(WorkspaceError::Profile)?;
        let passages_path = root.join(PASSAGES_FILE);
        let passages: Vec<Passage> = read_jsonl(BufReader::new(
            File::open(&passages_path).map_err(io_err(&passages_path))?,
        ))
        .map_err(io_err(&passages_path))?;
        let index_dir = root.join(INDEX_DIR);
        let provider = provider_for(profiles.default_profile(), root).ok();
        let index = Index::load(&index_dir, passages, provider)?;
        for p in &profiles.profiles {
            if p.retrieval_config.scorer != index.scorer_kind() {
                return Err(WorkspaceError::Profile(format!(
                    "profile {} expects the {:?} scorer but the index was built with {:?}",
                    p.id,
                    p.retrieval_config.scorer,
                    index.scorer_kind()
                )));
            }
        }
        let prompts_dir = root.join(PROMPTS_DIR);
        let templates = PromptTemplates::load_dir(&prompts_dir).map_err(io_err(&prompts_dir))?;
        Ok(Workspace {
            root: root.to_path_buf(),
            ddl,
            db_path,
            index,
            profiles,
            templates,
        })
    }

    pub fn kg_passage_count(&self) -> usize {
        self.index
            .passages()
            .iter()
            .filter(|p| p.source_kind == SourceKind::KgCapsule)
            .count()
    }
}
