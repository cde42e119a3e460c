//! Three small calculators exported to JavaScript. Each takes plain strings
//! and numbers and returns a JSON string; errors come back as exceptions.

use std::collections::BTreeSet;

use serde_json::{json, Value};
use toolde_core::eval::MetricTriple;
use toolde_core::rerank::relevance_probability;
use toolde_core::retrieval::{build_sparse_index, tokenize, SparseIndexParams};
use wasm_bindgen::prelude::*;

/// One document per non-empty line. `id: text` names the document; a line
/// without a colon gets `d1`, `d2`, ... by position.
fn parse_docs(corpus: &str) -> Vec<(String, String)> {
    corpus
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| match line.split_once(':') {
            Some((id, text)) if !id.trim().is_empty() && !id.contains(' ') => {
                (id.trim().to_string(), text.trim().to_string())
            }
            _ => (format!("d{}", i + 1), line.to_string()),
        })
        .collect()
}

/// Scores every document for `query` under the given k1 and b. Documents
/// are listed best first; zero scores are included so the effect of the
/// parameters on every row stays visible.
pub fn bm25_table(corpus: &str, query: &str, k1: f64, b: f64) -> Result<Value, String> {
    let docs = parse_docs(corpus);
    if docs.is_empty() {
        return Err("corpus is empty".into());
    }
    let index =
        build_sparse_index(&docs, SparseIndexParams { k1, b }).map_err(|e| e.to_string())?;
    let terms = tokenize(query);
    let mut rows: Vec<(usize, f64)> = (0..docs.len())
        .map(|i| (i, index.bm25_score(&terms, i)))
        .collect();
    rows.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| docs[a.0].0.cmp(&docs[b.0].0))
    });
    Ok(json!({
        "terms": terms,
        "avg_doc_length": index.avg_doc_length(),
        "rows": rows
            .into_iter()
            .map(|(i, score)| json!({
                "id": docs[i].0,
                "length": index.doc_lengths()[i],
                "score": score,
            }))
            .collect::<Vec<_>>(),
    }))
}

/// `steps + 1` evenly spaced points of the relevance probability as the
/// true logit sweeps `[from, to]` with the false logit held fixed.
pub fn probability_curve(
    logit_false: f64,
    from: f64,
    to: f64,
    steps: usize,
) -> Result<Value, String> {
    if steps == 0 || steps > 10_000 {
        return Err("steps must be between 1 and 10000".into());
    }
    if !(from.is_finite() && to.is_finite() && from < to) {
        return Err("need finite bounds with from < to".into());
    }
    let points = (0..=steps)
        .map(|i| {
            let t = from + (to - from) * i as f64 / steps as f64;
            relevance_probability(t, logit_false)
                .map(|p| json!([t, p]))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({ "logit_false": logit_false, "points": points }))
}

fn id_list(text: &str) -> Vec<String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// NDCG, recall and completeness of a ranked id list at each cutoff.
pub fn metrics_table(ranked: &str, gold: &str, ks: &[usize]) -> Result<Value, String> {
    let ranked = id_list(ranked);
    let gold: BTreeSet<String> = id_list(gold).into_iter().collect();
    if gold.is_empty() {
        return Err("need at least one gold id".into());
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err("cutoffs must be positive".into());
    }
    let rows = ks
        .iter()
        .map(|&k| {
            let m = MetricTriple::compute(&ranked, &gold, k).map_err(|e| e.to_string())?;
            Ok(json!({"k": k, "ndcg": m.ndcg, "recall": m.recall, "completeness": m.completeness}))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "rows": rows }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsValue> {
    v.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bm25_explore(corpus: &str, query: &str, k1: f64, b: f64) -> Result<String, JsValue> {
    to_js(bm25_table(corpus, query, k1, b))
}

#[wasm_bindgen]
pub fn rerank_curve(logit_false: f64, from: f64, to: f64, steps: usize) -> Result<String, JsValue> {
    to_js(probability_curve(logit_false, from, to, steps))
}

#[wasm_bindgen]
pub fn metrics_at_k(ranked: &str, gold: &str, ks: &[u32]) -> Result<String, JsValue> {
    let ks: Vec<usize> = ks.iter().map(|&k| k as usize).collect();
    to_js(metrics_table(ranked, gold, &ks))
}
