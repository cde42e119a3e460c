//! Training corpora for the retriever and the reranker.
//!
//! Negatives for a query are drawn uniformly, without replacement, from the
//! documents that are not gold for that query. One seeded generator is
//! consumed in query order, so the same inputs and seed give the same files.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{
    render_document_text, FieldSelection, InstructionMode, Query, RelevanceJudgments, ToolDocument,
};
use crate::error::{Error, Result};
use crate::prompts::rerank_prompt;
use crate::rerank::DocumentView;
use crate::sampling;

pub const DEFAULT_N_NEG: usize = 5;
pub const DEFAULT_NEG_PER_POS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedTrainExample {
    pub qid: String,
    pub query: String,
    pub positive_id: String,
    pub positive: String,
    pub negative_ids: Vec<String>,
    pub negatives: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankTrainExample {
    pub qid: String,
    pub doc_id: String,
    pub prompt: String,
    pub label: bool,
}

#[derive(Clone, Debug)]
pub struct TrainSettings {
    pub seed: u64,
    pub view: DocumentView,
    pub instruction_mode: InstructionMode,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            seed: 17,
            view: DocumentView::Expanded,
            instruction_mode: InstructionMode::Concat,
        }
    }
}

/// Shared setup: resolves gold documents and the non-gold pool per query.
struct Plan<'a> {
    query: &'a Query,
    gold: Vec<&'a ToolDocument>,
    pool: Vec<&'a ToolDocument>,
}

fn plan<'a>(
    queries: &'a [Query],
    qrels: &'a RelevanceJudgments,
    corpus: &'a [ToolDocument],
    needed: usize,
) -> Result<Vec<Plan<'a>>> {
    let by_id: HashMap<&str, &ToolDocument> = corpus.iter().map(|d| (d.id(), d)).collect();
    queries
        .iter()
        .map(|query| {
            let gold_ids: &BTreeSet<String> = qrels
                .gold(&query.qid)
                .filter(|g| !g.is_empty())
                .ok_or_else(|| {
                    Error::invalid(format!("query `{}` has no gold documents", query.qid))
                })?;
            let gold = gold_ids
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).copied().ok_or_else(|| {
                        Error::invalid(format!(
                            "gold document `{id}` of `{}` is not in the corpus",
                            query.qid
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let pool: Vec<&ToolDocument> = corpus
                .iter()
                .filter(|d| !gold_ids.contains(d.id()))
                .collect();
            if pool.len() < needed {
                return Err(Error::invalid(format!(
                    "query `{}` has {} non-gold documents, {needed} needed",
                    query.qid,
                    pool.len()
                )));
            }
            Ok(Plan { query, gold, pool })
        })
        .collect()
}

fn selection_for(view: DocumentView) -> FieldSelection {
    view.effective(FieldSelection::default_retrieval())
}

/// One example per (query, gold document) with `n_neg` sampled negatives.
pub fn build_embed_train(
    queries: &[Query],
    qrels: &RelevanceJudgments,
    corpus: &[ToolDocument],
    n_neg: usize,
    settings: &TrainSettings,
) -> Result<Vec<EmbedTrainExample>> {
    let plans = plan(queries, qrels, corpus, n_neg)?;
    let selection = selection_for(settings.view);
    let mut rng = sampling::rng(settings.seed);
    let mut out = Vec::new();
    for p in &plans {
        let query = p.query.text_for(settings.instruction_mode);
        for gold in &p.gold {
            let negs: Vec<&ToolDocument> = sampling::draw_positions(&mut rng, p.pool.len(), n_neg)
                .into_iter()
                .map(|i| p.pool[i])
                .collect();
            out.push(EmbedTrainExample {
                qid: p.query.qid.clone(),
                query: query.clone(),
                positive_id: gold.id().to_string(),
                positive: render_document_text(*gold, &selection),
                negative_ids: negs.iter().map(|d| d.id().to_string()).collect(),
                negatives: negs
                    .iter()
                    .map(|d| render_document_text(*d, &selection))
                    .collect(),
            });
        }
    }
    Ok(out)
}

/// For each (query, gold document): one `true` example followed by
/// `neg_per_pos` `false` examples on sampled non-gold documents.
pub fn build_rerank_train(
    queries: &[Query],
    qrels: &RelevanceJudgments,
    corpus: &[ToolDocument],
    neg_per_pos: usize,
    settings: &TrainSettings,
) -> Result<Vec<RerankTrainExample>> {
    let plans = plan(queries, qrels, corpus, neg_per_pos)?;
    let selection = selection_for(settings.view);
    let mut rng = sampling::rng(settings.seed);
    let mut out = Vec::new();
    for p in &plans {
        let query = p.query.text_for(settings.instruction_mode);
        let example = |doc: &ToolDocument, label: bool| RerankTrainExample {
            qid: p.query.qid.clone(),
            doc_id: doc.id().to_string(),
            prompt: rerank_prompt(&query, &render_document_text(doc, &selection)),
            label,
        };
        for gold in &p.gold {
            out.push(example(gold, true));
            for i in sampling::draw_positions(&mut rng, p.pool.len(), neg_per_pos) {
                out.push(example(p.pool[i], false));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainFormat {
    #[default]
    JsonlPairs,
    JsonlMessages,
}

impl std::str::FromStr for TrainFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl_pairs" | "pairs" => Ok(TrainFormat::JsonlPairs),
            "jsonl_messages" | "messages" => Ok(TrainFormat::JsonlMessages),
            _ => Err(Error::invalid(format!("unknown training format `{s}`"))),
        }
    }
}

/// Training examples that can be written in either export schema.
pub trait TrainRecord: Sized {
    fn to_line(&self, format: TrainFormat) -> Value;
    fn from_line(value: Value, format: TrainFormat) -> std::result::Result<Self, String>;
}

fn field<T: serde::de::DeserializeOwned>(
    v: &Value,
    pointer: &str,
) -> std::result::Result<T, String> {
    let raw = v
        .pointer(pointer)
        .ok_or_else(|| format!("missing {pointer}"))?;
    serde_json::from_value(raw.clone()).map_err(|e| format!("{pointer}: {e}"))
}

impl TrainRecord for EmbedTrainExample {
    fn to_line(&self, format: TrainFormat) -> Value {
        match format {
            TrainFormat::JsonlPairs => json!({
                "query": self.query,
                "pos": self.positive,
                "negs": self.negatives,
                "qid": self.qid,
                "pos_id": self.positive_id,
                "neg_ids": self.negative_ids,
            }),
            TrainFormat::JsonlMessages => json!({
                "query": self.query,
                "response": self.positive,
                "rejected_response": self.negatives,
                "meta": {"qid": self.qid, "pos_id": self.positive_id, "neg_ids": self.negative_ids},
            }),
        }
    }

    fn from_line(v: Value, format: TrainFormat) -> std::result::Result<Self, String> {
        Ok(match format {
            TrainFormat::JsonlPairs => Self {
                qid: field(&v, "/qid")?,
                query: field(&v, "/query")?,
                positive_id: field(&v, "/pos_id")?,
                positive: field(&v, "/pos")?,
                negative_ids: field(&v, "/neg_ids")?,
                negatives: field(&v, "/negs")?,
            },
            TrainFormat::JsonlMessages => Self {
                qid: field(&v, "/meta/qid")?,
                query: field(&v, "/query")?,
                positive_id: field(&v, "/meta/pos_id")?,
                positive: field(&v, "/response")?,
                negative_ids: field(&v, "/meta/neg_ids")?,
                negatives: field(&v, "/rejected_response")?,
            },
        })
    }
}

fn label_word(label: bool) -> &'static str {
    if label {
        "true"
    } else {
        "false"
    }
}

fn parse_label(word: &str) -> std::result::Result<bool, String> {
    match word {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("label must be true or false, got `{other}`")),
    }
}

impl TrainRecord for RerankTrainExample {
    fn to_line(&self, format: TrainFormat) -> Value {
        match format {
            TrainFormat::JsonlPairs => json!({
                "prompt": self.prompt,
                "label": label_word(self.label),
                "qid": self.qid,
                "doc_id": self.doc_id,
            }),
            TrainFormat::JsonlMessages => json!({
                "messages": [
                    {"role": "user", "content": self.prompt},
                    {"role": "assistant", "content": label_word(self.label)},
                ],
                "meta": {"qid": self.qid, "doc_id": self.doc_id},
            }),
        }
    }

    fn from_line(v: Value, format: TrainFormat) -> std::result::Result<Self, String> {
        let (prompt, label, meta) = match format {
            TrainFormat::JsonlPairs => (field(&v, "/prompt")?, field::<String>(&v, "/label")?, ""),
            TrainFormat::JsonlMessages => (
                field(&v, "/messages/0/content")?,
                field::<String>(&v, "/messages/1/content")?,
                "/meta",
            ),
        };
        Ok(Self {
            qid: field(&v, &format!("{meta}/qid"))?,
            doc_id: field(&v, &format!("{meta}/doc_id"))?,
            prompt,
            label: parse_label(&label)?,
        })
    }
}

/// One JSON object per line; an empty slice writes an empty file.
pub fn export_train<T: TrainRecord>(
    examples: &[T],
    format: TrainFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut out, &ex.to_line(format))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_train<T: TrainRecord>(path: impl AsRef<Path>, format: TrainFormat) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let value: Value =
                serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e))?;
            T::from_line(value, format).map_err(|e| Error::parse(path, i + 1, e))
        })
        .collect()
}
