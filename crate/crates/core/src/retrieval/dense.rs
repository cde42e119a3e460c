//! Exhaustive dense retrieval over unit-normalized embeddings.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use super::sparse::{read_str, write_str};
use super::{rank_scores, Hit};
use crate::backends::EmbeddingBackend;
use crate::corpus::{render_document_text, FieldSelection, InstructionMode, Query, ToolDocument};
use crate::error::{Error, Result};

/// Row-major `len x dimension` matrix of unit vectors plus the id table.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseIndex {
    dimension: usize,
    vectors: Vec<f32>,
    doc_ids: Vec<String>,
}

const MAGIC: &[u8; 8] = b"TDDENSE\0";
const VERSION: u32 = 1;

/// Scales `v` to unit length, failing on a zero or non-finite norm.
pub fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    let norm = v
        .iter()
        .map(|x| f64::from(*x) * f64::from(*x))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| (f64::from(*x) / norm) as f32).collect())
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

/// Cosine similarity; `None` when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    Some(dot(&normalize(a)?, &normalize(b)?))
}

/// Embeds `docs` rendered under `selection`, `batch_size` texts per request.
/// Batches are sent in parallel under the backend's permit limit; the result
/// does not depend on `batch_size`.
pub fn build_dense_index(
    docs: &[ToolDocument],
    selection: &FieldSelection,
    backend: &EmbeddingBackend,
    batch_size: usize,
) -> Result<DenseIndex> {
    if docs.is_empty() {
        return Err(Error::invalid("cannot index an empty corpus"));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = docs.iter().find(|d| !seen.insert(d.id())) {
        return Err(Error::DuplicateId(dup.id().to_string()));
    }
    let batch_size = batch_size.max(1);
    let batches: Vec<Vec<f32>> = docs
        .par_chunks(batch_size)
        .map(|chunk| {
            let texts: Vec<String> = chunk
                .iter()
                .map(|d| render_document_text(d, selection))
                .collect();
            let vectors = backend.embed(&texts).map_err(|source| Error::Document {
                id: chunk[0].id().to_string(),
                source,
            })?;
            let mut rows = Vec::with_capacity(chunk.len() * backend.dimension());
            for (doc, v) in chunk.iter().zip(vectors) {
                let unit = normalize(&v)
                    .ok_or_else(|| Error::invalid(format!("zero embedding for `{}`", doc.id())))?;
                rows.extend(unit);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(DenseIndex {
        dimension: backend.dimension(),
        vectors: batches.concat(),
        doc_ids: docs.iter().map(|d| d.id().to_string()).collect(),
    })
}

impl DenseIndex {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Top `k` rows by dot product with an already embedded query vector.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Result<Vec<Hit>> {
        if query.len() != self.dimension {
            return Err(Error::invalid(format!(
                "query dimension {} does not match index dimension {}",
                query.len(),
                self.dimension
            )));
        }
        let unit = normalize(query).ok_or_else(|| Error::invalid("zero query embedding"))?;
        let scores = (0..self.len()).map(|i| (i, dot(self.row(i), &unit)));
        Ok(rank_scores(scores, &self.doc_ids, k))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(self.doc_ids.len() as u32)?;
        w.write_u32::<LittleEndian>(self.dimension as u32)?;
        for x in &self.vectors {
            w.write_f32::<LittleEndian>(*x)?;
        }
        for id in &self.doc_ids {
            write_str(&mut w, id)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::invalid("not a dense index file"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::invalid(format!(
                "unsupported dense index version {version}"
            )));
        }
        let n = r.read_u32::<LittleEndian>()? as usize;
        let dimension = r.read_u32::<LittleEndian>()? as usize;
        let mut vectors = vec![0f32; n * dimension];
        r.read_f32_into::<LittleEndian>(&mut vectors)?;
        let doc_ids = (0..n).map(|_| read_str(&mut r)).collect::<Result<_>>()?;
        Ok(Self {
            dimension,
            vectors,
            doc_ids,
        })
    }
}

/// Embeds the query (with or without its instruction) and scans the index.
pub fn search_dense(
    index: &DenseIndex,
    query: &Query,
    backend: &EmbeddingBackend,
    k: usize,
    mode: InstructionMode,
) -> Result<Vec<Hit>> {
    let text = query.text_for(mode);
    let vector = backend
        .embed(&[text])?
        .pop()
        .ok_or_else(|| Error::invalid("backend returned no query vector"))?;
    index.search_vector(&vector, k)
}
