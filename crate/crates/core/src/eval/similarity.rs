//! Query–document similarity under the expanded and original views, for one
//! gold (positive) and one sampled non-gold (negative) document per query.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::EmbeddingBackend;
use crate::corpus::{
    render_document_text, Domain, FieldSelection, InstructionMode, Query, RelevanceJudgments,
    ToolDocument,
};
use crate::error::{Error, Result};
use crate::retrieval::dense::cosine;
use crate::sampling;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub qid: String,
    pub domain: Domain,
    pub positive: String,
    pub negative: String,
}

/// Samples up to `per_domain_n` queries per domain, each with one gold
/// document and one non-gold document of the same domain, both drawn
/// uniformly. Queries whose gold documents are all missing from the corpus
/// are skipped.
pub fn sample_similarity_pairs(
    queries: &[Query],
    qrels: &RelevanceJudgments,
    corpus: &[ToolDocument],
    per_domain_n: usize,
    seed: u64,
) -> Result<Vec<SimilarityPair>> {
    let mut rng = sampling::rng(seed);
    let mut pairs = Vec::new();
    for domain in Domain::ALL {
        let docs: Vec<&str> = corpus
            .iter()
            .filter(|d| d.domain() == domain)
            .map(|d| d.id())
            .collect();
        let eligible: Vec<(&Query, Vec<&str>)> = queries
            .iter()
            .filter(|q| q.domain == domain)
            .filter_map(|q| {
                let gold = qrels.gold(&q.qid)?;
                let present: Vec<&str> = corpus
                    .iter()
                    .map(|d| d.id())
                    .filter(|id| gold.contains(*id))
                    .collect();
                (!present.is_empty()).then_some((q, present))
            })
            .collect();
        for i in sampling::sample_positions(&mut rng, eligible.len(), per_domain_n) {
            let (query, gold_docs) = &eligible[i];
            let gold = qrels
                .gold(&query.qid)
                .expect("eligible queries have judgments");
            let negatives: Vec<&str> = docs
                .iter()
                .copied()
                .filter(|id| !gold.contains(*id))
                .collect();
            if negatives.is_empty() {
                return Err(Error::invalid(format!(
                    "no non-gold {domain} document to pair with `{}`",
                    query.qid
                )));
            }
            let positive = gold_docs[sampling::draw_positions(&mut rng, gold_docs.len(), 1)[0]];
            let negative = negatives[sampling::draw_positions(&mut rng, negatives.len(), 1)[0]];
            pairs.push(SimilarityPair {
                qid: query.qid.clone(),
                domain,
                positive: positive.to_string(),
                negative: negative.to_string(),
            });
        }
    }
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewMeans {
    pub expanded: f64,
    pub original: f64,
    /// `expanded - original`.
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainSimilarity {
    pub pairs: usize,
    pub positive: ViewMeans,
    pub negative: ViewMeans,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub pair: SimilarityPair,
    pub positive_expanded: f64,
    pub positive_original: f64,
    pub negative_expanded: f64,
    pub negative_original: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub per_domain: BTreeMap<Domain, DomainSimilarity>,
    pub pairs: Vec<PairScores>,
}

const EMBED_BATCH: usize = 32;

/// Cosine similarity of each query with its positive and negative, rendered
/// once with `selection` (expanded view) and once without any profile field.
pub fn similarity_analysis(
    pairs: &[SimilarityPair],
    queries: &[Query],
    corpus: &[ToolDocument],
    backend: &EmbeddingBackend,
    mode: InstructionMode,
    selection: &FieldSelection,
) -> Result<SimilarityReport> {
    let query_by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.qid.as_str(), q)).collect();
    let doc_by_id: HashMap<&str, &ToolDocument> = corpus.iter().map(|d| (d.id(), d)).collect();
    let original = FieldSelection::original_only();

    // Every distinct text is embedded once.
    let mut texts: Vec<String> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    let mut intern = |text: String| -> usize {
        *slot.entry(text.clone()).or_insert_with(|| {
            texts.push(text);
            texts.len() - 1
        })
    };
    let mut plan = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let query = query_by_id
            .get(pair.qid.as_str())
            .ok_or_else(|| Error::invalid(format!("unknown query `{}`", pair.qid)))?;
        let doc = |id: &str| {
            doc_by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("unknown document `{id}`")))
        };
        let (pos, neg) = (doc(&pair.positive)?, doc(&pair.negative)?);
        plan.push([
            intern(query.text_for(mode)),
            intern(render_document_text(pos, selection)),
            intern(render_document_text(pos, &original)),
            intern(render_document_text(neg, selection)),
            intern(render_document_text(neg, &original)),
        ]);
    }
    let vectors: Vec<Vec<f32>> = texts
        .par_chunks(EMBED_BATCH)
        .map(|chunk| backend.embed(chunk).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?
        .concat();

    let cos = |a: usize, b: usize| -> Result<f64> {
        cosine(&vectors[a], &vectors[b])
            .ok_or_else(|| Error::invalid("zero embedding in similarity analysis"))
    };
    let mut scores = Vec::with_capacity(pairs.len());
    for (pair, [q, pe, po, ne, no]) in pairs.iter().zip(plan) {
        scores.push(PairScores {
            pair: pair.clone(),
            positive_expanded: cos(q, pe)?,
            positive_original: cos(q, po)?,
            negative_expanded: cos(q, ne)?,
            negative_original: cos(q, no)?,
        });
    }

    let mut per_domain = BTreeMap::new();
    for domain in Domain::ALL {
        let rows: Vec<&PairScores> = scores.iter().filter(|s| s.pair.domain == domain).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&PairScores) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        let means = |e: f64, o: f64| ViewMeans {
            expanded: e,
            original: o,
            delta: e - o,
        };
        per_domain.insert(
            domain,
            DomainSimilarity {
                pairs: rows.len(),
                positive: means(mean(|r| r.positive_expanded), mean(|r| r.positive_original)),
                negative: means(mean(|r| r.negative_expanded), mean(|r| r.negative_original)),
            },
        );
    }
    Ok(SimilarityReport {
        per_domain,
        pairs: scores,
    })
}

impl SimilarityReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
            "domain",
            "pairs",
            "pos_exp",
            "pos_orig",
            "pos_delta",
            "neg_exp",
            "neg_orig",
            "neg_delta"
        );
        for (d, s) in &self.per_domain {
            out.push_str(&format!(
                "{:<12} {:>6} {:>10.4} {:>10.4} {:>+10.4} {:>10.4} {:>10.4} {:>+10.4}\n",
                d.label(),
                s.pairs,
                s.positive.expanded,
                s.positive.original,
                s.positive.delta,
                s.negative.expanded,
                s.negative.original,
                s.negative.delta
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::HashEmbedder;
    use crate::corpus::{merge_expansion, RawToolDocument, ToolProfile};
    use serde_json::json;

    fn doc(id: &str, domain: Domain, name: &str, tags: &[&str]) -> ToolDocument {
        let raw = RawToolDocument::new(
            id,
            "ds",
            domain,
            json!({"name": name}).as_object().unwrap().clone(),
        )
        .unwrap();
        merge_expansion(
            raw,
            ToolProfile::new("helper", tags.iter().copied()).unwrap(),
        )
        .unwrap()
        .into()
    }

    fn setup() -> (Vec<Query>, RelevanceJudgments, Vec<ToolDocument>) {
        let mut queries = Vec::new();
        let mut qrels = RelevanceJudgments::new();
        let mut corpus = Vec::new();
        for domain in Domain::ALL {
            for i in 0..4 {
                let qid = format!("{domain}-q{i}");
                let topic = format!("topic{domain}{i}");
                queries.push(Query {
                    qid: qid.clone(),
                    domain,
                    text: format!("find {topic} now"),
                    instruction: None,
                    dataset: None,
                });
                let gold = format!("{domain}-g{i}");
                qrels.insert(qid, gold.clone());
                corpus.push(doc(&gold, domain, &format!("tool {i}"), &[&topic, "now"]));
                corpus.push(doc(
                    &format!("{domain}-n{i}"),
                    domain,
                    &format!("tool {i}"),
                    &["unrelated", "other"],
                ));
            }
        }
        (queries, qrels, corpus)
    }

    #[test]
    fn pairs_are_seeded_and_valid() {
        let (queries, qrels, corpus) = setup();
        let a = sample_similarity_pairs(&queries, &qrels, &corpus, 3, 5).unwrap();
        assert_eq!(
            a,
            sample_similarity_pairs(&queries, &qrels, &corpus, 3, 5).unwrap()
        );
        assert_eq!(a.len(), 9);
        for p in &a {
            let gold = qrels.gold(&p.qid).unwrap();
            assert!(gold.contains(&p.positive));
            assert!(!gold.contains(&p.negative));
            assert!(p.negative.starts_with(p.domain.as_str()));
        }
    }

    #[test]
    fn expansion_helps_positives_more() {
        let (queries, qrels, corpus) = setup();
        let pairs = sample_similarity_pairs(&queries, &qrels, &corpus, 4, 1).unwrap();
        let backend = EmbeddingBackend::new("hash", HashEmbedder::new(256));
        let report = similarity_analysis(
            &pairs,
            &queries,
            &corpus,
            &backend,
            InstructionMode::QueryOnly,
            &FieldSelection::default_retrieval(),
        )
        .unwrap();
        assert_eq!(report.per_domain.len(), 3);
        for s in report.per_domain.values() {
            assert!(s.positive.delta > s.negative.delta, "{s:?}");
        }
    }

    #[test]
    fn identical_views_have_zero_delta() {
        let (queries, qrels, corpus) = setup();
        let pairs = sample_similarity_pairs(&queries, &qrels, &corpus, 2, 1).unwrap();
        let backend = EmbeddingBackend::new("hash", HashEmbedder::new(64));
        let report = similarity_analysis(
            &pairs,
            &queries,
            &corpus,
            &backend,
            InstructionMode::QueryOnly,
            &FieldSelection::original_only(),
        )
        .unwrap();
        for s in report.per_domain.values() {
            assert_eq!(s.positive.delta, 0.0);
            assert_eq!(s.negative.delta, 0.0);
        }
    }
}
