//! Binary-relevance ranking metrics.
//!
//! A document listed twice in a ranking counts once, at its first position.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(gold: &BTreeSet<String>, k: usize) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::invalid("gold set must be non-empty"));
    }
    if k == 0 {
        return Err(Error::invalid("cutoff k must be at least 1"));
    }
    Ok(())
}

/// 1-based ranks (within the top `k`) at which gold documents appear.
fn gold_ranks<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut ranks = Vec::new();
    let mut rank = 0;
    for id in ranked {
        let id = id.as_ref();
        if !seen.insert(id) {
            continue;
        }
        rank += 1;
        if rank > k {
            break;
        }
        if gold.contains(id) {
            ranks.push(rank);
        }
    }
    ranks
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

pub fn ndcg_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    check(gold, k)?;
    let dcg: f64 = gold_ranks(ranked, gold, k).into_iter().map(discount).sum();
    let idcg: f64 = (1..=gold.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> Result<f64> {
    check(gold, k)?;
    Ok(gold_ranks(ranked, gold, k).len() as f64 / gold.len() as f64)
}

/// 1 when every gold document is in the top `k`, else 0.
pub fn completeness_at_k<S: AsRef<str>>(
    ranked: &[S],
    gold: &BTreeSet<String>,
    k: usize,
) -> Result<f64> {
    check(gold, k)?;
    Ok(if gold_ranks(ranked, gold, k).len() == gold.len() {
        1.0
    } else {
        0.0
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub ndcg: f64,
    pub recall: f64,
    pub completeness: f64,
}

impl MetricTriple {
    pub fn compute<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> Result<Self> {
        Ok(Self {
            ndcg: ndcg_at_k(ranked, gold, k)?,
            recall: recall_at_k(ranked, gold, k)?,
            completeness: completeness_at_k(ranked, gold, k)?,
        })
    }

    /// Unweighted mean; `None` for an empty input.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a MetricTriple>) -> Option<Self> {
        let mut n = 0usize;
        let mut sum = MetricTriple::default();
        for t in items {
            n += 1;
            sum.ndcg += t.ndcg;
            sum.recall += t.recall;
            sum.completeness += t.completeness;
        }
        (n > 0).then(|| MetricTriple {
            ndcg: sum.ndcg / n as f64,
            recall: sum.recall / n as f64,
            completeness: sum.completeness / n as f64,
        })
    }
}
