//! Tool documentation expansion and retrieval toolkit.
//!
//! The crate covers the whole offline loop: loading heterogeneous tool
//! documents, canonicalizing their fields, expanding them with a generated
//! `tool_profile` through a staged LLM pipeline, indexing and searching them
//! with BM25 or dense embeddings, reranking with a two-logit relevance model,
//! and evaluating the effect of each generated field.
//!
//! All model inference sits behind the traits in [`backends`], so every stage
//! can be driven by deterministic mocks in tests.

pub mod backends;
pub mod canonicalizer;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod prompts;
pub mod rerank;
pub mod retrieval;
pub mod review;
pub mod sampling;
pub mod train;

pub use corpus::{
    Domain, ExpandedDocument, FieldSelection, ProfileField, Provenance, Query, RankedRun,
    RawToolDocument, RelevanceJudgments, ToolDocument, ToolProfile,
};
pub use error::{Error, Result};
