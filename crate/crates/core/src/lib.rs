//! Conversational question answering over RDF knowledge graphs.
//!
//! The pipeline turns an N-Triples dump into two retrieval backends, a
//! relational database induced from the graph and a corpus of verbalized
//! passages, and answers questions by letting an LLM iterate over both.

pub mod agent;
pub mod eval;
pub mod fixture;
pub mod induction;
pub mod llm;
pub mod naming;
pub mod passage;
pub mod profile;
pub mod rdf;
pub mod retrieval;
pub mod sql_tool;
pub mod verbalize;
pub mod workspace;
