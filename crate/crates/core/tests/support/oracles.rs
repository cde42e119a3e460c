//! Deliberately naive re-implementations. Nothing here calls into the crate's
//! scoring code; they only share the problem statement.

use std::collections::BTreeSet;

/// NDCG, recall and completeness at `k`, computed the slow way.
pub fn metrics(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> (f64, f64, f64) {
    // First occurrence wins; repeats are dropped before cutting at k.
    let mut unique: Vec<&String> = Vec::new();
    for id in ranked {
        if !unique.contains(&id) {
            unique.push(id);
        }
    }
    let top: Vec<&String> = unique.into_iter().take(k).collect();

    let dcg_of = |list: &[&String]| -> f64 {
        let mut total = 0.0;
        for (i, id) in list.iter().enumerate() {
            if gold.contains(*id) {
                total += 1.0 / ((i + 2) as f64).log2();
            }
        }
        total
    };
    let ideal: Vec<&String> = gold.iter().take(k).collect();
    let ndcg = dcg_of(&top) / dcg_of(&ideal);

    let found = gold.iter().filter(|g| top.contains(g)).count();
    let recall = found as f64 / gold.len() as f64;
    let complete = if gold.iter().all(|g| top.contains(&g)) {
        1.0
    } else {
        0.0
    };
    (ndcg, recall, complete)
}

fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Quadratic BM25: every statistic is recounted from the raw texts for every
/// (query term, document) pair.
pub fn bm25_scores(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| words(t)).collect();
    let n = docs.len() as f64;
    let avg = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut out = Vec::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        let mut score = 0.0;
        for term in words(query) {
            let tf = tokenized[i].iter().filter(|t| **t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = tokenized.iter().filter(|d| d.contains(&term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let len = tokenized[i].len() as f64;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
        }
        out.push((id.clone(), score));
    }
    out
}

/// Positive-score documents, best first, ties by id.
pub fn bm25_ranking(
    docs: &[(String, String)],
    query: &str,
    k1: f64,
    b: f64,
    k: usize,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = bm25_scores(docs, query, k1, b)
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then_with(|| x.0.cmp(&y.0)));
    scored.truncate(k);
    scored
}

/// `exp(t) / (exp(t) + exp(f))` evaluated in extended form via the
/// difference, with the larger logit factored out.
pub fn probability(logit_true: f64, logit_false: f64) -> f64 {
    let m = logit_true.max(logit_false);
    let et = (logit_true - m).exp();
    let ef = (logit_false - m).exp();
    et / (et + ef)
}
