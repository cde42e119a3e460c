//! BM25 over an in-memory inverted index.
//!
//! Scoring uses the Lucene variant with non-negative idf:
//!
//! ```text
//! idf(t)    = ln(1 + (N - df + 0.5) / (df + 0.5))
//! tf_part   = tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len))
//! score(q,d) = sum over query tokens t of idf(t) * tf_part(t, d)
//! ```
//!
//! Repeated query tokens contribute once per occurrence.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{rank_scores, tokenize, Hit};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseIndexParams {
    pub k1: f64,
    pub b: f64,
}

impl Default for SparseIndexParams {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl SparseIndexParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::invalid(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!(
                "b must lie in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseIndex {
    params: SparseIndexParams,
    /// Postings sorted by document ordinal.
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    doc_ids: Vec<String>,
}

const MAGIC: &[u8; 8] = b"TDSPARSE";
const VERSION: u32 = 1;

pub fn build_sparse_index(
    docs: &[(String, String)],
    params: SparseIndexParams,
) -> Result<SparseIndex> {
    params.validate()?;
    if docs.is_empty() {
        return Err(Error::invalid("cannot index an empty corpus"));
    }
    let mut seen = HashSet::new();
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(docs.len());
    let mut doc_ids = Vec::with_capacity(docs.len());
    for (ordinal, (id, text)) in docs.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
        let tokens = tokenize(text);
        doc_lengths.push(tokens.len() as u32);
        doc_ids.push(id.clone());
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_default() += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push(Posting {
                doc: ordinal as u32,
                tf,
            });
        }
    }
    let avg_doc_length =
        doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / doc_lengths.len() as f64;
    Ok(SparseIndex {
        params,
        postings,
        doc_lengths,
        avg_doc_length,
        doc_ids,
    })
}

impl SparseIndex {
    pub fn params(&self) -> SparseIndexParams {
        self.params
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

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Same index with different BM25 parameters (postings are parameter-free).
    pub fn with_params(mut self, params: SparseIndexParams) -> Result<Self> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn tf_part(&self, tf: u32, ordinal: usize) -> f64 {
        let SparseIndexParams { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = 1.0 - b + b * f64::from(self.doc_lengths[ordinal]) / self.avg_doc_length;
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    pub fn bm25_score(&self, query_terms: &[String], ordinal: usize) -> f64 {
        assert!(
            ordinal < self.doc_ids.len(),
            "ordinal {ordinal} out of range"
        );
        let mut score = 0.0;
        for term in query_terms {
            let postings = self.postings(term);
            if let Ok(at) = postings.binary_search_by_key(&(ordinal as u32), |p| p.doc) {
                score += self.idf(postings.len()) * self.tf_part(postings[at].tf, ordinal);
            }
        }
        score
    }

    /// Top `k` documents with positive score; ties go to the smaller id.
    pub fn search(&self, query: &str, k: usize) -> Vec<Hit> {
        let terms = tokenize(query);
        let mut scores = vec![0.0f64; self.doc_ids.len()];
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(postings.len());
            for p in postings {
                scores[p.doc as usize] += idf * self.tf_part(p.tf, p.doc as usize);
            }
        }
        let candidates = scores.into_iter().enumerate().filter(|(_, s)| *s > 0.0);
        rank_scores(candidates, &self.doc_ids, k)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_f64::<LittleEndian>(self.params.k1)?;
        w.write_f64::<LittleEndian>(self.params.b)?;
        w.write_u32::<LittleEndian>(self.doc_ids.len() as u32)?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            write_str(&mut w, id)?;
            w.write_u32::<LittleEndian>(*len)?;
        }
        w.write_u32::<LittleEndian>(self.postings.len() as u32)?;
        for (term, postings) in &self.postings {
            write_str(&mut w, term)?;
            w.write_u32::<LittleEndian>(postings.len() as u32)?;
            for p in postings {
                w.write_u32::<LittleEndian>(p.doc)?;
                w.write_u32::<LittleEndian>(p.tf)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::invalid("not a sparse index file"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::invalid(format!(
                "unsupported sparse index version {version}"
            )));
        }
        let params = SparseIndexParams {
            k1: r.read_f64::<LittleEndian>()?,
            b: r.read_f64::<LittleEndian>()?,
        };
        params.validate()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut doc_ids = Vec::with_capacity(n);
        let mut doc_lengths = Vec::with_capacity(n);
        for _ in 0..n {
            doc_ids.push(read_str(&mut r)?);
            doc_lengths.push(r.read_u32::<LittleEndian>()?);
        }
        let terms = r.read_u32::<LittleEndian>()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..terms {
            let term = read_str(&mut r)?;
            let count = r.read_u32::<LittleEndian>()? as usize;
            let mut list = Vec::with_capacity(count);
            for _ in 0..count {
                let doc = r.read_u32::<LittleEndian>()?;
                if doc as usize >= n {
                    return Err(Error::invalid(format!(
                        "posting ordinal {doc} out of range"
                    )));
                }
                list.push(Posting {
                    doc,
                    tf: r.read_u32::<LittleEndian>()?,
                });
            }
            postings.insert(term, list);
        }
        let avg_doc_length = if n == 0 {
            0.0
        } else {
            doc_lengths.iter().map(|&l| f64::from(l)).sum::<f64>() / n as f64
        };
        Ok(Self {
            params,
            postings,
            doc_lengths,
            avg_doc_length,
            doc_ids,
        })
    }
}

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::invalid(format!("index string is not UTF-8: {e}")))
}
