//! First-stage retrieval: BM25 and dense exhaustive search.

pub mod dense;
pub mod sparse;

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::EmbeddingBackend;
use crate::corpus::{
    render_document_text, FieldSelection, InstructionMode, Query, RankedRun, ToolDocument,
};
use crate::error::{Error, Result};

pub use dense::{build_dense_index, search_dense, DenseIndex};
pub use sparse::{build_sparse_index, SparseIndex, SparseIndexParams};

/// First-stage candidates per query, enough for a 100-candidate rerank pool.
pub const DEFAULT_K: usize = 100;

/// Lowercase, split on anything that is not alphanumeric, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Sorts by score descending, breaking ties by ascending id, and keeps `k`.
pub(crate) fn rank_scores(
    scores: impl Iterator<Item = (usize, f64)>,
    ids: &[String],
    k: usize,
) -> Vec<Hit> {
    let mut ranked: Vec<(usize, f64)> = scores.collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[a.0].cmp(&ids[b.0]))
    });
    ranked.truncate(k);
    ranked
        .into_iter()
        .map(|(i, score)| Hit {
            id: ids[i].clone(),
            score,
        })
        .collect()
}

/// Sparse or dense first stage.
#[derive(Clone, Debug)]
pub enum Retriever {
    Sparse(SparseIndexParams),
    Dense {
        backend: EmbeddingBackend,
        batch_size: usize,
    },
}

impl Retriever {
    /// Sparse matching ignores instructions; dense retrieval prepends them.
    pub fn default_instruction_mode(&self) -> InstructionMode {
        match self {
            Retriever::Sparse(_) => InstructionMode::QueryOnly,
            Retriever::Dense { .. } => InstructionMode::Concat,
        }
    }

    pub fn build(&self, docs: &[ToolDocument], selection: &FieldSelection) -> Result<BuiltIndex> {
        match self {
            Retriever::Sparse(params) => {
                let pairs: Vec<(String, String)> = docs
                    .iter()
                    .map(|d| (d.id().to_string(), render_document_text(d, selection)))
                    .collect();
                Ok(BuiltIndex::Sparse(build_sparse_index(&pairs, *params)?))
            }
            Retriever::Dense {
                backend,
                batch_size,
            } => Ok(BuiltIndex::Dense(build_dense_index(
                docs,
                selection,
                backend,
                *batch_size,
            )?)),
        }
    }

    pub fn backend(&self) -> Option<&EmbeddingBackend> {
        match self {
            Retriever::Sparse(_) => None,
            Retriever::Dense { backend, .. } => Some(backend),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BuiltIndex {
    Sparse(SparseIndex),
    Dense(DenseIndex),
}

impl BuiltIndex {
    pub fn search(
        &self,
        query: &Query,
        k: usize,
        mode: InstructionMode,
        backend: Option<&EmbeddingBackend>,
    ) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        match self {
            BuiltIndex::Sparse(index) => Ok(index.search(&query.text_for(mode), k)),
            BuiltIndex::Dense(index) => {
                let backend = backend
                    .ok_or_else(|| Error::invalid("dense search needs an embedding backend"))?;
                search_dense(index, query, backend, k, mode)
            }
        }
    }

    /// Searches every query in parallel and collects a run.
    pub fn run(
        &self,
        queries: &[Query],
        k: usize,
        mode: InstructionMode,
        backend: Option<&EmbeddingBackend>,
        tag: &str,
    ) -> Result<RankedRun> {
        let results: Vec<(String, Vec<Hit>)> = queries
            .par_iter()
            .map(|q| Ok((q.qid.clone(), self.search(q, k, mode, backend)?)))
            .collect::<Result<_>>()?;
        let mut run = RankedRun::new(tag);
        for (qid, hits) in results {
            run.insert(qid, hits.into_iter().map(|h| (h.id, h.score)).collect())?;
        }
        Ok(run)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match self {
            BuiltIndex::Sparse(index) => index.write_to(&mut w)?,
            BuiltIndex::Dense(index) => index.write_to(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    /// Loads either index kind, dispatching on the file header.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        let rest = std::io::Cursor::new(magic).chain(r);
        match &magic {
            b"TDSPARSE" => Ok(BuiltIndex::Sparse(SparseIndex::read_from(rest)?)),
            b"TDDENSE\0" => Ok(BuiltIndex::Dense(DenseIndex::read_from(rest)?)),
            _ => Err(Error::invalid("unrecognized index file")),
        }
    }
}

/// Indexes `docs` under `selection` and runs every query.
pub fn retrieve_run(
    docs: &[ToolDocument],
    selection: &FieldSelection,
    queries: &[Query],
    retriever: &Retriever,
    k: usize,
    tag: &str,
) -> Result<RankedRun> {
    let index = retriever.build(docs, selection)?;
    index.run(
        queries,
        k,
        retriever.default_instruction_mode(),
        retriever.backend(),
        tag,
    )
}
