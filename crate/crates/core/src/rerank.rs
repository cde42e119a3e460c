//! Second-stage reranking with a two-logit relevance model.
//!
//! Each candidate is scored by a single prompt whose answer is `true` or
//! `false`; the backend returns the two logits and the relevance probability
//! is their softmax, `exp(t) / (exp(t) + exp(f))`.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::RerankBackend;
use crate::corpus::{
    render_document_text, FieldSelection, InstructionMode, Query, RankedRun, ToolDocument,
};
use crate::error::{Error, Result};
use crate::prompts::rerank_prompt;

pub const DEFAULT_POOL: usize = 100;

/// Probability given to candidates whose scoring call failed.
pub const FAILED_SCORE: f64 = -1.0;

pub fn build_rerank_prompt(query: &str, document: &str) -> String {
    rerank_prompt(query, document)
}

/// `exp(t) / (exp(t) + exp(f))` evaluated as a logistic of the difference so
/// it never overflows.
pub fn relevance_probability(logit_true: f64, logit_false: f64) -> Result<f64> {
    if !logit_true.is_finite() || !logit_false.is_finite() {
        return Err(Error::invalid(format!(
            "logits must be finite, got ({logit_true}, {logit_false})"
        )));
    }
    let diff = logit_true - logit_false;
    Ok(if diff >= 0.0 {
        1.0 / (1.0 + (-diff).exp())
    } else {
        let e = diff.exp();
        e / (1.0 + e)
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentView {
    #[default]
    Expanded,
    Original,
}

impl std::str::FromStr for DocumentView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expanded" => Ok(DocumentView::Expanded),
            "original" => Ok(DocumentView::Original),
            _ => Err(Error::invalid(format!(
                "unknown view `{s}` (expected expanded or original)"
            ))),
        }
    }
}

impl DocumentView {
    /// The field selection actually rendered: `selection` for the expanded
    /// view, nothing from the profile for the original view.
    pub fn effective(self, selection: FieldSelection) -> FieldSelection {
        match self {
            DocumentView::Expanded => selection,
            DocumentView::Original => FieldSelection::original_only(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RerankRequest {
    pub query: Query,
    /// First-stage `(doc id, score)` in first-stage order.
    pub candidates: Vec<(String, f64)>,
    pub view: DocumentView,
    pub selection: FieldSelection,
    pub instruction_mode: InstructionMode,
}

impl RerankRequest {
    pub fn new(query: Query, candidates: Vec<(String, f64)>, view: DocumentView) -> Self {
        Self {
            query,
            candidates,
            view,
            selection: FieldSelection::default_retrieval(),
            instruction_mode: InstructionMode::QueryOnly,
        }
    }

    pub fn validate(&self, pool: usize) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::invalid(format!(
                "no candidates for `{}`",
                self.query.qid
            )));
        }
        if self.candidates.len() > pool {
            return Err(Error::invalid(format!(
                "{} candidates for `{}` exceed the pool size {pool}",
                self.candidates.len(),
                self.query.qid
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankScore {
    pub logit_true: f64,
    pub logit_false: f64,
    pub probability: f64,
}

impl RerankScore {
    pub fn from_logits(logit_true: f64, logit_false: f64) -> Result<Self> {
        Ok(Self {
            logit_true,
            logit_false,
            probability: relevance_probability(logit_true, logit_false)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RerankOutcome {
    /// `(doc id, probability)` best first.
    pub ranked: Vec<(String, f64)>,
    /// Candidates whose scoring call failed; they carry [`FAILED_SCORE`].
    pub failed: Vec<String>,
}

impl RerankOutcome {
    pub fn degraded(&self) -> bool {
        !self.failed.is_empty()
    }
}

/// Id-indexed view of a corpus.
pub struct CorpusLookup<'a> {
    by_id: HashMap<&'a str, &'a ToolDocument>,
}

impl<'a> CorpusLookup<'a> {
    pub fn new(docs: &'a [ToolDocument]) -> Self {
        Self {
            by_id: docs.iter().map(|d| (d.id(), d)).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&'a ToolDocument> {
        self.by_id.get(id).copied()
    }
}

/// Scores every candidate and reorders by probability. Ties keep first-stage
/// order, and the candidate set is never changed.
pub fn rerank(
    request: &RerankRequest,
    backend: &RerankBackend,
    corpus: &CorpusLookup<'_>,
    pool: usize,
) -> Result<RerankOutcome> {
    request.validate(pool)?;
    let docs = request
        .candidates
        .iter()
        .map(|(id, _)| {
            corpus
                .get(id)
                .ok_or_else(|| Error::invalid(format!("candidate `{id}` is not in the corpus")))
        })
        .collect::<Result<Vec<_>>>()?;
    let query_text = request.query.text_for(request.instruction_mode);
    let selection = request.view.effective(request.selection);

    let scored: Vec<Option<f64>> = docs
        .par_iter()
        .map(|doc| {
            let prompt = build_rerank_prompt(&query_text, &render_document_text(*doc, &selection));
            match backend.rerank_logits(&prompt) {
                Ok((t, f)) => relevance_probability(t, f).ok(),
                Err(err) => {
                    log::warn!(
                        "rerank of `{}` for `{}` failed: {err}",
                        doc.id(),
                        request.query.qid
                    );
                    None
                }
            }
        })
        .collect();

    let failed = request
        .candidates
        .iter()
        .zip(&scored)
        .filter(|(_, s)| s.is_none())
        .map(|((id, _), _)| id.clone())
        .collect();
    let mut ranked: Vec<(usize, f64)> = scored
        .into_iter()
        .enumerate()
        .map(|(i, s)| (i, s.unwrap_or(FAILED_SCORE)))
        .collect();
    // Stable sort keeps first-stage order among equal probabilities.
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
    Ok(RerankOutcome {
        ranked: ranked
            .into_iter()
            .map(|(i, p)| (request.candidates[i].0.clone(), p))
            .collect(),
        failed,
    })
}

#[derive(Clone, Debug)]
pub struct RerankSettings {
    pub pool: usize,
    pub view: DocumentView,
    pub selection: FieldSelection,
    pub instruction_mode: InstructionMode,
}

impl Default for RerankSettings {
    fn default() -> Self {
        Self {
            pool: DEFAULT_POOL,
            view: DocumentView::Expanded,
            selection: FieldSelection::default_retrieval(),
            instruction_mode: InstructionMode::QueryOnly,
        }
    }
}

/// Reranks the top `pool` candidates of every query in `run`.
///
/// Returns the new run and the qids whose reranking was degraded.
pub fn rerank_run(
    run: &RankedRun,
    queries: &[Query],
    backend: &RerankBackend,
    corpus: &CorpusLookup<'_>,
    settings: &RerankSettings,
    tag: &str,
) -> Result<(RankedRun, Vec<String>)> {
    let by_qid: HashMap<&str, &Query> = queries.iter().map(|q| (q.qid.as_str(), q)).collect();
    let work: Vec<(&String, &Vec<(String, f64)>)> =
        run.iter().filter(|(_, r)| !r.is_empty()).collect();
    let outcomes: Vec<(String, RerankOutcome)> = work
        .par_iter()
        .map(|(qid, ranking)| {
            let query = by_qid.get(qid.as_str()).ok_or_else(|| {
                Error::invalid(format!("run query `{qid}` missing from the query file"))
            })?;
            let mut request = RerankRequest::new(
                (*query).clone(),
                ranking.iter().take(settings.pool).cloned().collect(),
                settings.view,
            );
            request.selection = settings.selection;
            request.instruction_mode = settings.instruction_mode;
            Ok((
                (*qid).clone(),
                rerank(&request, backend, corpus, settings.pool)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = RankedRun::new(tag);
    let mut degraded = Vec::new();
    for (qid, outcome) in outcomes {
        if outcome.degraded() {
            degraded.push(qid.clone());
        }
        out.insert(qid, outcome.ranked)?;
    }
    Ok((out, degraded))
}
