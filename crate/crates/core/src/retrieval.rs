//! Top-k passage retrieval: TF-IDF cosine (default, offline) or embedding
//! cosine through an [`LlmProvider`], plus external-document chunking.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{cosine_similarity, LlmError, LlmProvider};
use crate::passage::{Passage, SourceKind};

pub const DEFAULT_K: usize = 5;
pub const MAX_CHUNK_CHARS: usize = 1200;
const EMBED_BATCH: usize = 64;
const MANIFEST_FILE: &str = "manifest.json";
const EMBEDDINGS_FILE: &str = "embeddings.json";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate passage id {0:?}")]
    DuplicatePassageId(String),
    #[error("embedding provider failure: {0}")]
    EmbeddingProviderFailure(#[from] LlmError),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("index persistence: {0}")]
    Persistence(String),
}

impl RetrievalError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RetrievalError::EmbeddingProviderFailure(e) if e.is_retryable())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScorerKind {
    #[default]
    Lexical,
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub scorer: ScorerKind,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: DEFAULT_K,
            scorer: ScorerKind::Lexical,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidConfig("k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage: Passage,
    pub score: f64,
}

/// Lowercase alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Document-frequency statistics. Once computed they can be reused
/// ("frozen") so that later passages do not shift existing scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    doc_count: usize,
    df: HashMap<String, usize>,
}

impl CorpusStats {
    pub fn from_passages(passages: &[Passage]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for p in passages {
            let unique: HashSet<String> = tokenize(&p.text).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        CorpusStats {
            doc_count: passages.len(),
            df,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    /// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        ((1.0 + self.doc_count as f64) / (1.0 + df)).ln() + 1.0
    }

    /// L2-normalized tf-idf vector, sorted by term.
    pub fn vectorize(&self, text: &str) -> Vec<(String, f64)> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        let mut v: Vec<(String, f64)> = tf
            .into_iter()
            .map(|(t, f)| {
                let w = f * self.idf(&t);
                (t, w)
            })
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        v
    }
}

fn sparse_dot(a: &[(String, f64)], b: &[(String, f64)]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

enum Scorer {
    Lexical {
        stats: CorpusStats,
        vectors: Vec<Vec<(String, f64)>>,
    },
    Embedding {
        provider: Arc<dyn LlmProvider>,
        vectors: Vec<Vec<f32>>,
    },
}

/// Immutable passage index.
pub struct Index {
    passages: Vec<Passage>,
    scorer: Scorer,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Manifest {
    scorer: ScorerKind,
    passage_count: usize,
    passage_ids_digest: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embeddings_file: Option<String>,
}

fn check_unique(passages: &[Passage]) -> Result<(), RetrievalError> {
    let mut seen = HashSet::new();
    for p in passages {
        if !seen.insert(p.id.as_str()) {
            return Err(RetrievalError::DuplicatePassageId(p.id.clone()));
        }
    }
    Ok(())
}

fn ids_digest(passages: &[Passage]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for p in passages {
        for b in p.id.bytes().chain(std::iter::once(0)) {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
    }
    hash
}

impl Index {
    pub fn build_lexical(passages: Vec<Passage>) -> Result<Self, RetrievalError> {
        let stats = CorpusStats::from_passages(&passages);
        Self::build_lexical_with_stats(passages, stats)
    }

    /// Builds with externally supplied (frozen) statistics.
    pub fn build_lexical_with_stats(
        passages: Vec<Passage>,
        stats: CorpusStats,
    ) -> Result<Self, RetrievalError> {
        check_unique(&passages)?;
        let vectors = passages.iter().map(|p| stats.vectorize(&p.text)).collect();
        Ok(Index {
            passages,
            scorer: Scorer::Lexical { stats, vectors },
        })
    }

    /// Embeds every passage exactly once through `provider`.
    pub fn build_embedding(
        passages: Vec<Passage>,
        provider: Arc<dyn LlmProvider>,
    ) -> Result<Self, RetrievalError> {
        check_unique(&passages)?;
        let mut vectors = Vec::with_capacity(passages.len());
        for chunk in passages.chunks(EMBED_BATCH) {
            let texts: Vec<String> = chunk.iter().map(|p| p.text.clone()).collect();
            let embedded = provider.embed(&texts)?;
            if embedded.len() != texts.len() {
                return Err(RetrievalError::EmbeddingProviderFailure(LlmError::InvalidResponse(
                    format!("expected {} vectors, got {}", texts.len(), embedded.len()),
                )));
            }
            vectors.extend(embedded);
        }
        Ok(Index {
            passages,
            scorer: Scorer::Embedding { provider, vectors },
        })
    }

    pub fn build(
        passages: Vec<Passage>,
        config: &RetrievalConfig,
        provider: Option<Arc<dyn LlmProvider>>,
    ) -> Result<Self, RetrievalError> {
        config.validate()?;
        match (config.scorer, provider) {
            (ScorerKind::Lexical, _) => Self::build_lexical(passages),
            (ScorerKind::Embedding, Some(p)) => Self::build_embedding(passages, p),
            (ScorerKind::Embedding, None) => Err(RetrievalError::InvalidConfig(
                "embedding scorer requires a provider".into(),
            )),
        }
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn scorer_kind(&self) -> ScorerKind {
        match self.scorer {
            Scorer::Lexical { .. } => ScorerKind::Lexical,
            Scorer::Embedding { .. } => ScorerKind::Embedding,
        }
    }

    /// Top `k` passages for `query`, score descending then id ascending.
    /// A query without any word token yields no results.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredPassage>, RetrievalError> {
        if k == 0 || self.passages.is_empty() || tokenize(query).is_empty() {
            return Ok(Vec::new());
        }
        let scores: Vec<f64> = match &self.scorer {
            Scorer::Lexical { stats, vectors } => {
                let q = stats.vectorize(query);
                vectors.iter().map(|v| sparse_dot(&q, v).clamp(0.0, 1.0)).collect()
            }
            Scorer::Embedding { provider, vectors } => {
                let q = provider
                    .embed(&[query.to_string()])?
                    .pop()
                    .ok_or_else(|| LlmError::InvalidResponse("no query embedding".into()))?;
                vectors
                    .iter()
                    .map(|v| f64::from(cosine_similarity(&q, v)))
                    .collect()
            }
        };
        let mut order: Vec<usize> = (0..self.passages.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then_with(|| self.passages[a].id.cmp(&self.passages[b].id))
        });
        Ok(order
            .into_iter()
            .take(k)
            .map(|i| ScoredPassage {
                passage: self.passages[i].clone(),
                score: scores[i],
            })
            .collect())
    }

    /// Writes `index/manifest.json` (and stored vectors for the embedding
    /// scorer). Lexical indexes are rebuilt from the passage corpus on load.
    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        let io = |e: std::io::Error| RetrievalError::Persistence(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let embeddings_file = match &self.scorer {
            Scorer::Embedding { vectors, .. } => {
                let text = serde_json::to_string(vectors)
                    .map_err(|e| RetrievalError::Persistence(e.to_string()))?;
                std::fs::write(dir.join(EMBEDDINGS_FILE), text).map_err(io)?;
                Some(EMBEDDINGS_FILE.to_string())
            }
            Scorer::Lexical { .. } => None,
        };
        let manifest = Manifest {
            scorer: self.scorer_kind(),
            passage_count: self.passages.len(),
            passage_ids_digest: ids_digest(&self.passages),
            embeddings_file,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| RetrievalError::Persistence(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n").map_err(io)
    }

    /// Restores an index saved by [`Index::save`] over the same passages.
    pub fn load(
        dir: &Path,
        passages: Vec<Passage>,
        provider: Option<Arc<dyn LlmProvider>>,
    ) -> Result<Self, RetrievalError> {
        let read = |p: PathBuf| {
            std::fs::read_to_string(&p)
                .map_err(|e| RetrievalError::Persistence(format!("{}: {e}", p.display())))
        };
        let manifest: Manifest = serde_json::from_str(&read(dir.join(MANIFEST_FILE))?)
            .map_err(|e| RetrievalError::Persistence(format!("manifest: {e}")))?;
        if manifest.passage_count != passages.len()
            || manifest.passage_ids_digest != ids_digest(&passages)
        {
            return Err(RetrievalError::Persistence(
                "index manifest does not match the passage corpus; re-run ingest".into(),
            ));
        }
        match manifest.scorer {
            ScorerKind::Lexical => Self::build_lexical(passages),
            ScorerKind::Embedding => {
                let provider = provider.ok_or_else(|| {
                    RetrievalError::InvalidConfig("embedding index requires a provider".into())
                })?;
                let file = manifest.embeddings_file.as_deref().unwrap_or(EMBEDDINGS_FILE);
                let vectors: Vec<Vec<f32>> = serde_json::from_str(&read(dir.join(file))?)
                    .map_err(|e| RetrievalError::Persistence(format!("embeddings: {e}")))?;
                if vectors.len() != passages.len() {
                    return Err(RetrievalError::Persistence("embedding count mismatch".into()));
                }
                check_unique(&passages)?;
                Ok(Index {
                    passages,
                    scorer: Scorer::Embedding { provider, vectors },
                })
            }
        }
    }
}

/// An external text document to be merged into the passage corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    /// Reads `path` (one `.txt`/`.md` file, or a directory of them, sorted
    /// by file name). The document id is the file stem.
    pub fn load_path(path: &Path) -> std::io::Result<Vec<Document>> {
        let mut files = Vec::new();
        if path.is_dir() {
            for entry in std::fs::read_dir(path)? {
                let p = entry?.path();
                let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
                if p.is_file() && matches!(ext, "txt" | "md") {
                    files.push(p);
                }
            }
            files.sort();
        } else {
            files.push(path.to_path_buf());
        }
        files
            .into_iter()
            .map(|p| {
                Ok(Document {
                    id: p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "doc".into()),
                    text: std::fs::read_to_string(&p)?,
                })
            })
            .collect()
    }
}

fn split_long(paragraph: &str, max: usize) -> Vec<String> {
    if paragraph.chars().count() <= max {
        return vec![paragraph.to_string()];
    }
    let mut chunks = Vec::new();
    let mut current = String::new();
    for word in paragraph.split_whitespace() {
        let extra = if current.is_empty() { 0 } else { 1 };
        if !current.is_empty() && current.chars().count() + extra + word.chars().count() > max {
            chunks.push(std::mem::take(&mut current));
        }
        if word.chars().count() > max {
            // A single oversized token is cut at character boundaries.
            let chars: Vec<char> = word.chars().collect();
            for piece in chars.chunks(max) {
                if !current.is_empty() {
                    chunks.push(std::mem::take(&mut current));
                }
                current = piece.iter().collect();
            }
            continue;
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

/// Splits a document into paragraph chunks (blank-line separated, at most
/// [`MAX_CHUNK_CHARS`] characters, no overlap).
pub fn chunk_document(text: &str) -> Vec<String> {
    let normalized = text.replace("\r\n", "\n");
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in normalized.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join(" "));
                current.clear();
            }
        } else {
            current.push(line.trim());
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join(" "));
    }
    paragraphs
        .iter()
        .flat_map(|p| split_long(p, MAX_CHUNK_CHARS))
        .map(|mut chunk| {
            if !chunk.ends_with(['.', '!', '?']) {
                chunk.push('.');
            }
            chunk
        })
        .collect()
}

/// Chunks `documents` into `ExternalDocument` passages (ids
/// `ext:<doc>:<n>`, 1-based) and appends them to `corpus`. Empty documents
/// are skipped with a warning. Returns the number of passages added.
pub fn ingest_documents(corpus: &mut Vec<Passage>, documents: &[Document]) -> usize {
    let before = corpus.len();
    for doc in documents {
        let chunks = chunk_document(&doc.text);
        if chunks.is_empty() {
            tracing::warn!(document = %doc.id, "skipping empty document");
            continue;
        }
        for (i, text) in chunks.into_iter().enumerate() {
            corpus.push(Passage {
                id: format!("ext:{}:{}", doc.id, i + 1),
                text,
                source_kind: SourceKind::ExternalDocument,
                subject_iri: None,
            });
        }
    }
    corpus.len() - before
}
