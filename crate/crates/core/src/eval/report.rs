//! Per-query evaluation and the aggregated report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricTriple;
use crate::corpus::{Domain, Query, RankedRun, RelevanceJudgments};
use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 1] = [10];

/// Metrics keyed by cutoff.
pub type AtK = BTreeMap<usize, MetricTriple>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// False when the run had no ranking for this query; all metrics are 0.
    pub in_run: bool,
    pub metrics: AtK,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Unweighted mean of the per-domain means.
    #[default]
    DomainMacro,
    /// Mean over all queries.
    QueryMicro,
    /// Unweighted mean of the per-dataset means.
    DatasetMacro,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "domain_macro" | "domain-macro" | "domain" => Ok(Averaging::DomainMacro),
            "query_micro" | "query-micro" | "micro" => Ok(Averaging::QueryMicro),
            "dataset_macro" | "dataset-macro" | "dataset" => Ok(Averaging::DatasetMacro),
            _ => Err(Error::invalid(format!("unknown averaging `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tag: String,
    pub ks: Vec<usize>,
    pub per_query: BTreeMap<String, QueryEval>,
    pub per_domain: BTreeMap<Domain, AtK>,
    /// Domain-macro average.
    pub average: AtK,
    pub query_micro: AtK,
    pub dataset_macro: AtK,
    /// Qids evaluated with no ranking in the run.
    pub missing_from_run: Vec<String>,
}

/// Dataset key for queries that do not name one.
pub const UNKNOWN_DATASET: &str = "unknown";

fn mean_at_k<'a>(ks: &[usize], items: impl Iterator<Item = &'a AtK> + Clone) -> AtK {
    ks.iter()
        .map(|k| {
            let triple =
                MetricTriple::mean(items.clone().filter_map(|m| m.get(k))).unwrap_or_default();
            (*k, triple)
        })
        .collect()
}

/// Evaluates `run` over every query in `queries`.
///
/// Each query must have judgments, and every query in the run must appear in
/// `queries`. Queries the run skipped score 0.
pub fn evaluate(
    run: &RankedRun,
    qrels: &RelevanceJudgments,
    queries: &[Query],
    ks: &[usize],
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid(
            "cutoffs must be a non-empty list of positive integers",
        ));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();

    let known: HashMap<&str, &Query> = queries.iter().map(|q| (q.qid.as_str(), q)).collect();
    let unknown: Vec<&str> = run
        .iter()
        .map(|(q, _)| q.as_str())
        .filter(|q| !known.contains_key(q))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::invalid(format!(
            "run queries missing from the query file: {}",
            unknown.join(", ")
        )));
    }
    let no_qrels: Vec<&str> = queries
        .iter()
        .map(|q| q.qid.as_str())
        .filter(|q| qrels.gold(q).is_none_or(|g| g.is_empty()))
        .collect();
    if !no_qrels.is_empty() {
        return Err(Error::invalid(format!(
            "queries without relevance judgments: {}",
            no_qrels.join(", ")
        )));
    }

    let per_query: BTreeMap<String, QueryEval> = queries
        .par_iter()
        .map(|q| {
            let gold = qrels.gold(&q.qid).expect("checked above");
            let ranking = run.get(&q.qid);
            let ids: Vec<&str> = ranking
                .unwrap_or_default()
                .iter()
                .map(|(id, _)| id.as_str())
                .collect();
            let metrics = ks
                .iter()
                .map(|&k| Ok((k, MetricTriple::compute(&ids, gold, k)?)))
                .collect::<Result<AtK>>()?;
            Ok((
                q.qid.clone(),
                QueryEval {
                    domain: q.domain,
                    dataset: q.dataset.clone(),
                    in_run: ranking.is_some(),
                    metrics,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let per_domain: BTreeMap<Domain, AtK> = Domain::ALL
        .iter()
        .filter(|d| per_query.values().any(|q| q.domain == **d))
        .map(|d| {
            (
                *d,
                mean_at_k(
                    &ks,
                    per_query
                        .values()
                        .filter(|q| q.domain == *d)
                        .map(|q| &q.metrics),
                ),
            )
        })
        .collect();
    let average = mean_at_k(&ks, per_domain.values());
    let query_micro = mean_at_k(&ks, per_query.values().map(|q| &q.metrics));
    let mut by_dataset: BTreeMap<&str, Vec<&AtK>> = BTreeMap::new();
    for q in per_query.values() {
        by_dataset
            .entry(q.dataset.as_deref().unwrap_or(UNKNOWN_DATASET))
            .or_default()
            .push(&q.metrics);
    }
    let dataset_means: Vec<AtK> = by_dataset
        .values()
        .map(|ms| mean_at_k(&ks, ms.iter().copied()))
        .collect();
    let dataset_macro = mean_at_k(&ks, dataset_means.iter());

    Ok(EvalReport {
        tag: run.tag.clone(),
        missing_from_run: per_query
            .iter()
            .filter(|(_, q)| !q.in_run)
            .map(|(qid, _)| qid.clone())
            .collect(),
        ks,
        per_query,
        per_domain,
        average,
        query_micro,
        dataset_macro,
    })
}

impl EvalReport {
    pub fn averaged(&self, averaging: Averaging) -> &AtK {
        match averaging {
            Averaging::DomainMacro => &self.average,
            Averaging::QueryMicro => &self.query_micro,
            Averaging::DatasetMacro => &self.dataset_macro,
        }
    }

    /// Domain blocks followed by an average block, values scaled by 100.
    pub fn to_table(&self, averaging: Averaging) -> String {
        format_table(&[self], averaging)
    }
}

/// One row per report: a block of
/// N/R/C columns per domain and one for the average.
pub fn format_table(reports: &[&EvalReport], averaging: Averaging) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let ks = &first.ks;
    let domains: Vec<Domain> = Domain::ALL
        .into_iter()
        .filter(|d| reports.iter().any(|r| r.per_domain.contains_key(d)))
        .collect();
    let avg_label = match averaging {
        Averaging::DomainMacro => "Avg",
        Averaging::QueryMicro => "Avg (micro)",
        Averaging::DatasetMacro => "Avg (dataset)",
    };
    let name_width = reports
        .iter()
        .map(|r| r.tag.len())
        .max()
        .unwrap_or(0)
        .max(6);
    let cell = 7;
    let block_width = ks.len() * 3 * cell;

    let mut out = String::new();
    let _ = write!(out, "{:<name_width$}", "System");
    for label in domains
        .iter()
        .map(|d| d.label())
        .chain(std::iter::once(avg_label))
    {
        let _ = write!(out, " | {label:^block_width$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<name_width$}", "");
    for _ in 0..=domains.len() {
        out.push_str(" | ");
        for k in ks {
            for m in ["N", "R", "C"] {
                let _ = write!(out, "{:>cell$}", format!("{m}@{k}"));
            }
        }
    }
    out.push('\n');
    for report in reports {
        let _ = write!(out, "{:<name_width$}", report.tag);
        let blocks = domains
            .iter()
            .map(|d| report.per_domain.get(d))
            .chain(std::iter::once(Some(report.averaged(averaging))));
        for block in blocks {
            out.push_str(" | ");
            for k in ks {
                match block.and_then(|b| b.get(k)) {
                    Some(t) => {
                        for v in [t.ndcg, t.recall, t.completeness] {
                            let _ = write!(out, "{:>cell$.2}", v * 100.0);
                        }
                    }
                    None => {
                        for _ in 0..3 {
                            let _ = write!(out, "{:>cell$}", "-");
                        }
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}
