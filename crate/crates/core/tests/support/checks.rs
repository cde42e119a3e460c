//! One function per acceptance criterion. Each returns a short summary on
//! success and a description of the first violation otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use toolde_core::backends::mock::{FnGenerator, FnScorer, HashEmbedder};
use toolde_core::backends::{EmbeddingBackend, GenerationBackend, RerankBackend};
use toolde_core::canonicalizer::{
    canonical_field_for, canonicalize, CanonicalField, FIELD_MAPPING,
};
use toolde_core::corpus::{
    corpus_line, merge_expansion, render_document_text, Domain, ExampleUsage, FieldSelection,
    InstructionMode, ProfileField, Query, RankedRun, RawToolDocument, RelevanceJudgments,
    ToolDocument, ToolProfile, PROFILE_KEY,
};
use toolde_core::eval::{
    ablation_suite, sample_similarity_pairs, similarity_analysis, AblationSettings, MetricTriple,
    Variant,
};
use toolde_core::pipeline::{
    assemble_output_corpus, run_pipeline, DocStatus, PipelineConfig, PipelineLatency, StageLatency,
};
use toolde_core::rerank::{relevance_probability, rerank_run, CorpusLookup, RerankSettings};
use toolde_core::retrieval::{build_sparse_index, Retriever, SparseIndexParams};
use toolde_core::train::{
    build_embed_train, build_rerank_train, export_train, TrainFormat, TrainSettings,
};

use super::gen;
use super::oracles;

pub type Check = fn() -> Result<String, String>;

pub const CHECKS: [(&str, Check); 11] = [
    ("metric oracle equivalence", metric_oracle),
    ("ndcg spot values", ndcg_spot_values),
    ("rerank probability", rerank_probability),
    ("bm25 equivalence", bm25_equivalence),
    ("pipeline conservation", pipeline_conservation),
    ("expansion merge fidelity", merge_fidelity),
    ("canonicalizer coverage", canonicalizer_coverage),
    ("ablation harness", ablation_harness),
    ("training-data laws", training_laws),
    ("rerank improves retrieval", rerank_improves_retrieval),
    ("similarity direction", similarity_direction),
];

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        // A NaN comparison is false, so it fails the check.
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(took)
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn set(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn metric_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = gen::rng(101);
    let universe: Vec<String> = (0..25).map(|i| format!("c{i:02}")).collect();
    let mut worst = 0.0f64;
    let mut with_repeats = 0;
    for instance in 0..1000 {
        let len = rng.gen_range(0..=20);
        let ranked: Vec<String> = if rng.gen_bool(0.3) {
            with_repeats += 1;
            (0..len)
                .map(|_| universe[rng.gen_range(0..universe.len())].clone())
                .collect()
        } else {
            universe.choose_multiple(&mut rng, len).cloned().collect()
        };
        let n_gold = rng.gen_range(1..=5);
        let gold: BTreeSet<String> = universe
            .choose_multiple(&mut rng, n_gold)
            .cloned()
            .collect();
        for k in [1, 3, 5, 10] {
            let got = MetricTriple::compute(&ranked, &gold, k).map_err(e)?;
            let (ndcg, recall, complete) = oracles::metrics(&ranked, &gold, k);
            for (name, a, b) in [
                ("ndcg", got.ndcg, ndcg),
                ("recall", got.recall, recall),
                ("completeness", got.completeness, complete),
            ] {
                let d = (a - b).abs();
                worst = worst.max(d);
                ensure!(
                    d <= 1e-9,
                    "instance {instance} k={k}: {name} {a} vs reference {b}"
                );
            }
            ensure!(
                (got.completeness == 1.0) == (got.recall == 1.0),
                "instance {instance} k={k}: C={} but R={}",
                got.completeness,
                got.recall
            );
        }
    }
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!(
        "1000 instances ({with_repeats} with repeats), max |diff| {worst:.1e}, {took:.2?}"
    ))
}

pub fn ndcg_spot_values() -> Result<String, String> {
    let gold = set(&["A"]);
    let got = MetricTriple::compute(&ids(&["B", "A", "C"]), &gold, 3).map_err(e)?;
    let want = 1.0 / 3f64.log2();
    ensure!(
        (got.ndcg - want).abs() <= 1e-9,
        "[B,A,C]: {} vs {want}",
        got.ndcg
    );
    let ideal = MetricTriple::compute(&ids(&["A", "B", "C"]), &gold, 3).map_err(e)?;
    ensure!(ideal.ndcg == 1.0, "ideal ranking gave {}", ideal.ndcg);
    let gold2 = set(&["A", "C"]);
    let ideal2 = MetricTriple::compute(&ids(&["C", "A", "B"]), &gold2, 3).map_err(e)?;
    ensure!(
        ideal2.ndcg == 1.0,
        "ideal two-gold ranking gave {}",
        ideal2.ndcg
    );
    Ok(format!("N@3([B,A,C]) = {:.12}", got.ndcg))
}

pub fn rerank_probability() -> Result<String, String> {
    let start = Instant::now();
    let p = |t: f64, f: f64| relevance_probability(t, f).map_err(e);
    ensure!(p(0.0, 0.0)? == 0.5, "p(0,0) = {}", p(0.0, 0.0)?);
    let q = p(3f64.ln(), 0.0)?;
    ensure!((q - 0.75).abs() <= 1e-12, "p(ln 3, 0) = {q}");
    let mut rng = gen::rng(202);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let draw = |rng: &mut gen::TestRng| match rng.gen_range(0..4) {
            0 => 1e4,
            1 => -1e4,
            _ => rng.gen_range(-60.0..60.0),
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let c: f64 = rng.gen_range(-50.0..50.0);
        let (pab, pba) = (p(a, b)?, p(b, a)?);
        ensure!(
            pab.is_finite() && (0.0..=1.0).contains(&pab),
            "pair {i}: p({a},{b}) = {pab}"
        );
        let sym = (pab + pba - 1.0).abs();
        let shift = (p(a + c, b + c)? - pab).abs();
        let reference = (pab - oracles::probability(a, b)).abs();
        worst = worst.max(sym).max(shift);
        ensure!(
            sym <= 1e-12,
            "pair {i}: p(a,b)+p(b,a) off by {sym} for ({a},{b})"
        );
        ensure!(shift <= 1e-12, "pair {i}: shift by {c} moved p by {shift}");
        ensure!(
            reference <= 1e-12,
            "pair {i}: differs from reference by {reference}"
        );
    }
    let took = within(start, Duration::from_secs(5))?;
    Ok(format!(
        "10000 pairs, max deviation {worst:.1e}, {took:.2?}"
    ))
}

pub fn bm25_equivalence() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = gen::rng(303);
    let small_vocab = [
        "alpha", "beta", "gamma", "delta", "api", "weather", "stock", "email", "send", "price",
    ];
    let mut queries_run = 0;
    let mut worst = 0.0f64;
    for corpus_no in 0..100 {
        let n = rng.gen_range(1..=12);
        let docs: Vec<(String, String)> = (0..n)
            .map(|i| {
                let len = rng.gen_range(1..=12);
                let text: Vec<&str> = (0..len)
                    .map(|_| small_vocab[rng.gen_range(0..small_vocab.len())])
                    .collect();
                (
                    format!("d{:02}", (i * 7) % 13),
                    text.join(if rng.gen_bool(0.5) { " " } else { ", " }),
                )
            })
            .collect();
        let params = if corpus_no % 2 == 0 {
            SparseIndexParams::default()
        } else {
            SparseIndexParams {
                k1: rng.gen_range(0.0..3.0),
                b: rng.gen_range(0.0..=1.0),
            }
        };
        let index = build_sparse_index(&docs, params).map_err(e)?;
        for _ in 0..5 {
            let qlen = rng.gen_range(1..=4);
            let query: Vec<&str> = (0..qlen)
                .map(|_| small_vocab[rng.gen_range(0..small_vocab.len())])
                .collect();
            let query = query.join(" ");
            let hits = index.search(&query, n);
            let reference = oracles::bm25_ranking(&docs, &query, params.k1, params.b, n);
            let all = oracles::bm25_scores(&docs, &query, params.k1, params.b);
            let ref_score = |id: &str| {
                all.iter()
                    .find(|(d, _)| d == id)
                    .map(|(_, s)| *s)
                    .unwrap_or(f64::NAN)
            };
            ensure!(
                hits.len() == reference.len(),
                "corpus {corpus_no} `{query}`: {} hits vs {} in reference",
                hits.len(),
                reference.len()
            );
            for (rank, (hit, (_, want))) in hits.iter().zip(&reference).enumerate() {
                // Compare by rank (the order) and by id (the score itself), so
                // near-ties may swap without failing.
                let d = (hit.score - want)
                    .abs()
                    .max((hit.score - ref_score(&hit.id)).abs());
                worst = worst.max(d);
                ensure!(
                    d <= 1e-9,
                    "corpus {corpus_no} `{query}` rank {}: {} scored {}",
                    rank + 1,
                    hit.id,
                    hit.score
                );
            }
            queries_run += 1;
        }
    }

    let weather: Vec<(String, String)> = [
        ("d1", "weather forecast api"),
        ("d2", "stock price api"),
        ("d3", "send email"),
    ]
    .iter()
    .map(|(i, t)| (i.to_string(), t.to_string()))
    .collect();
    let index = build_sparse_index(&weather, SparseIndexParams::default()).map_err(e)?;
    let hits = index.search("weather api", 10);
    let order: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
    ensure!(order == ["d1", "d2"], "weather corpus ranked {order:?}");
    // N=3, avg length 8/3, both matching docs have length 3.
    let tf_part = 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 3.0 / (8.0 / 3.0)));
    let (idf_weather, idf_api) = ((8.0f64 / 3.0).ln(), 1.6f64.ln());
    let want = [(idf_weather + idf_api) * tf_part, idf_api * tf_part];
    for (hit, w) in hits.iter().zip(want) {
        ensure!(
            (hit.score - w).abs() <= 1e-9,
            "{} scored {} instead of {w}",
            hit.id,
            hit.score
        );
    }
    let d3 = oracles::bm25_scores(&weather, "weather api", 1.2, 0.75)[2].1;
    ensure!(
        d3 == 0.0 && index.bm25_score(&ids(&["weather", "api"]), 2) == 0.0,
        "d3 has a non-zero score"
    );
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!("{queries_run} queries over 100 corpora, max |diff| {worst:.1e}; weather d1 {:.4} > d2 {:.4} > d3 0, {took:.2?}", want[0], want[1]))
}

const BROKEN_MARKER: &str = "zq###";

fn scripted_pipeline(seed: u64) -> PipelineConfig {
    let profile = |p: &str| {
        let tool = p
            .split("tool_")
            .nth(1)
            .map(|s| s.chars().take(2).collect::<String>())
            .unwrap_or_default();
        json!({"tool_profile": {"function": format!("Runs tool {tool}."), "tags": ["tool", format!("t{tool}")], "when_to_use": "When asked."}})
            .to_string()
    };
    let expander = GenerationBackend::new(
        "expander",
        FnGenerator::new(move |p: &str, _: usize| {
            Ok(if p.contains(BROKEN_MARKER) {
                "Here is the profile you asked for.".to_string()
            } else {
                profile(p)
            })
        }),
    );
    let refiner = GenerationBackend::new(
        "refiner",
        FnGenerator::new(move |p: &str, _: usize| Ok(profile(p))),
    );
    let judge = GenerationBackend::new(
        "judge",
        FnGenerator::new(|_: &str, _: usize| Ok("true".to_string())),
    );
    let mut config = PipelineConfig::new(expander, judge, refiner);
    config.seed = seed;
    config.review_sample_size = 10;
    config
}

fn pipeline_corpus() -> Vec<RawToolDocument> {
    (0..50)
        .map(|i| {
            let mut description = format!("Tool number {i} for testing.");
            if i % 10 == 3 {
                description.push_str(&format!(" {BROKEN_MARKER}"));
            }
            let body = json!({"name": format!("tool_{i:02}"), "description": description});
            RawToolDocument::new(
                format!("doc{i:02}"),
                "synthetic",
                Domain::ALL[i % 3],
                body.as_object().unwrap().clone(),
            )
            .unwrap()
        })
        .collect()
}

/// Everything a run writes, with timings removed.
fn pipeline_bytes(
    corpus: &[RawToolDocument],
    seed: u64,
) -> Result<(String, toolde_core::pipeline::PipelineOutput), String> {
    let mut out = run_pipeline(corpus, &scripted_pipeline(seed)).map_err(e)?;
    out.report.latency = PipelineLatency::default();
    for o in &mut out.outcomes {
        o.latency_ms = StageLatency::default();
    }
    let mut bytes = String::new();
    for doc in assemble_output_corpus(corpus, &out.outcomes) {
        bytes.push_str(&corpus_line(&doc));
        bytes.push('\n');
    }
    bytes.push_str(&serde_json::to_string(&out.report).map_err(e)?);
    bytes.push_str(&serde_json::to_string(&out.outcomes).map_err(e)?);
    bytes.push_str(&serde_json::to_string(&out.review).map_err(e)?);
    Ok((bytes, out))
}

pub fn pipeline_conservation() -> Result<String, String> {
    let start = Instant::now();
    let corpus = pipeline_corpus();
    let (first, out) = pipeline_bytes(&corpus, 11)?;
    let r = &out.report;
    ensure!(
        (r.total, r.passed_step2, r.refined_step3, r.failed_final) == (50, 45, 5, 0),
        "report {{total:{}, passed_step2:{}, refined_step3:{}, failed_final:{}}}",
        r.total,
        r.passed_step2,
        r.refined_step3,
        r.failed_final
    );
    ensure!(r.is_conserved(), "report is not conserved");
    let refined: Vec<&str> = out
        .outcomes
        .iter()
        .filter(|o| o.status == DocStatus::Step3Refined)
        .map(|o| o.id.as_str())
        .collect();
    ensure!(
        refined == ["doc03", "doc13", "doc23", "doc33", "doc43"],
        "refined {refined:?}"
    );
    for o in &out.outcomes {
        let trace = match o.status {
            DocStatus::Step1Pass => Some(&o.step1),
            DocStatus::Step3Refined => o.step3.as_ref(),
            DocStatus::Failed => None,
        };
        let accepted = trace.and_then(|t| t.judge).is_some_and(|j| j.accepted);
        ensure!(
            accepted && o.profile.is_some(),
            "{} was emitted without passing the judge",
            o.id
        );
    }
    let expanded = assemble_output_corpus(&corpus, &out.outcomes);
    ensure!(
        expanded.iter().all(|d| d.profile().is_some()),
        "an output document lacks a profile"
    );
    let (second, _) = pipeline_bytes(&corpus, 11)?;
    ensure!(first == second, "rerun differs");
    let took = within(start, Duration::from_secs(5))?;
    Ok(format!("{{total:50, passed_step2:45, refined_step3:5, failed_final:0}}, rerun identical ({} bytes), {took:.2?}", first.len()))
}

pub fn merge_fidelity() -> Result<String, String> {
    let mut rng = gen::rng(404);
    let default = FieldSelection::default_retrieval();
    for i in 0..200 {
        let raw = gen::raw_doc(&mut rng, &format!("m{i}"));
        let example = ExampleUsage {
            query: gen::sentence(&mut rng, 2, 5),
            api_call: "call()".into(),
        };
        let profile = gen::profile(&mut rng)
            .with_example_usage(vec![example])
            .map_err(e)?;
        let merged = merge_expansion(raw.clone(), profile.clone()).map_err(e)?;
        let body = merged.body();
        let mut want_keys: Vec<&str> = raw.body.keys().map(String::as_str).collect();
        want_keys.push(PROFILE_KEY);
        let got_keys: Vec<&str> = body.keys().map(String::as_str).collect();
        ensure!(got_keys == want_keys, "doc {i}: keys {got_keys:?}");
        for (k, v) in &raw.body {
            let (a, b) = (
                serde_json::to_string(v).map_err(e)?,
                serde_json::to_string(&body[k]).map_err(e)?,
            );
            ensure!(a == b, "doc {i}: `{k}` changed from {a} to {b}");
        }
        ensure!(
            body[PROFILE_KEY] == Value::Object(profile.to_json()),
            "doc {i}: profile altered"
        );

        let text = render_document_text(&merged, &default);
        let original_text = render_document_text(&raw, &FieldSelection::original_only());
        let prefix = original_text.strip_suffix('}').unwrap_or(&original_text);
        ensure!(
            text.starts_with(prefix),
            "doc {i}: rendering changed the original fields"
        );
        let rendered: Value = serde_json::from_str(&text).map_err(e)?;
        let shown = rendered
            .get(PROFILE_KEY)
            .and_then(Value::as_object)
            .ok_or(format!("doc {i}: no profile rendered"))?;
        ensure!(
            !shown.contains_key("example_usage"),
            "doc {i}: default rendering shows example_usage"
        );
        let full: Value =
            serde_json::from_str(&render_document_text(&merged, &FieldSelection::full()))
                .map_err(e)?;
        ensure!(
            full[PROFILE_KEY].get("example_usage").is_some(),
            "doc {i}: full rendering lost example_usage"
        );
        ensure!(
            merge_expansion(merged.original.clone(), profile).is_ok(),
            "doc {i}: merge is not repeatable"
        );
    }
    Ok("200 documents: original keys byte-identical, only tool_profile added, default view hides example_usage".into())
}

/// Raw name to canonical field, written out independently of the crate's table.
const EXPECTED_MAPPING: &[(&str, &str)] = &[
    ("name", "name"),
    ("name_for_human", "name"),
    ("description", "description"),
    ("description_for_human", "description"),
    ("func_description", "description"),
    ("functionality", "description"),
    ("category", "category"),
    ("category_name", "category"),
    ("domain", "category"),
    ("parameters", "parameters"),
    ("api_arguments", "parameters"),
    ("optional_parameters", "parameters"),
    ("required_parameters", "parameters"),
    ("inputs", "parameters"),
    ("additional_required_arguments", "parameters"),
    ("optional_arguments", "parameters"),
    ("responses", "responses"),
    ("response", "responses"),
    ("return_data", "responses"),
    ("outputs", "responses"),
    ("result_arguments", "responses"),
    ("template_response", "responses"),
    ("output", "responses"),
    ("method", "method"),
    ("api_call", "method"),
    ("url", "method"),
    ("path", "method"),
    ("example_usage", "example_usage"),
    ("example_code", "example_usage"),
    ("limitation", "limitations"),
    ("is_transactional", "limitations"),
    ("performance", "limitations"),
    ("python_environment_requirements", "limitations"),
    ("doc_arguments", "limitations"),
    ("limitations", "limitations"),
];

pub fn canonicalizer_coverage() -> Result<String, String> {
    for (raw, canonical) in EXPECTED_MAPPING {
        let got = canonical_field_for(raw).map(CanonicalField::name);
        ensure!(
            got == Some(*canonical),
            "`{raw}` maps to {got:?}, expected {canonical}"
        );
    }
    ensure!(
        FIELD_MAPPING.len() == EXPECTED_MAPPING.len(),
        "mapping has {} entries",
        FIELD_MAPPING.len()
    );
    let distinct: BTreeSet<&str> = FIELD_MAPPING.iter().map(|(r, _)| *r).collect();
    ensure!(
        distinct.len() == FIELD_MAPPING.len(),
        "a raw name maps to more than one field"
    );
    for unknown in ["version", "author", "Name", "descriptions"] {
        ensure!(
            canonical_field_for(unknown).is_none(),
            "`{unknown}` should be unmapped"
        );
    }

    let mut rng = gen::rng(505);
    let mut collisions = 0;
    for i in 0..500 {
        let raw = gen::raw_doc(&mut rng, &format!("c{i}"));
        let once = canonicalize(&raw);
        // Conservation: every raw key is accounted for exactly once.
        let mut seen: Vec<&str> = once.extras.keys().map(String::as_str).collect();
        for (field, sources) in &once.sources {
            let value = &once.canonical[field];
            if sources.len() == 1 {
                ensure!(
                    *value == raw.body[&sources[0]],
                    "doc {i}: {field} value changed"
                );
            } else {
                collisions += 1;
                let list = value
                    .as_array()
                    .ok_or(format!("doc {i}: merged {field} is not a list"))?;
                ensure!(
                    list.len() == sources.len(),
                    "doc {i}: {field} lost a source"
                );
                for (entry, source) in list.iter().zip(sources) {
                    ensure!(
                        entry["source"] == json!(source) && entry["value"] == raw.body[source],
                        "doc {i}: {field}/{source}"
                    );
                }
            }
            for s in sources {
                ensure!(
                    canonical_field_for(s) == Some(*field),
                    "doc {i}: `{s}` filed under {field}"
                );
            }
            seen.extend(sources.iter().map(String::as_str));
        }
        let mut seen_sorted = seen.clone();
        seen_sorted.sort_unstable();
        let mut raw_keys: Vec<&str> = raw.body.keys().map(String::as_str).collect();
        raw_keys.sort_unstable();
        ensure!(
            seen_sorted == raw_keys,
            "doc {i}: keys {seen:?} vs raw {raw_keys:?}"
        );
        for (k, v) in &once.extras {
            ensure!(
                canonical_field_for(k).is_none() && raw.body[k] == *v,
                "doc {i}: extra `{k}`"
            );
        }

        let twice = canonicalize(&once.to_raw());
        ensure!(
            twice.canonical == once.canonical && twice.extras == once.extras,
            "doc {i}: canonicalize is not idempotent"
        );
        ensure!(twice.to_raw() == once.to_raw(), "doc {i}: to_raw drifts");
    }
    Ok(format!(
        "{} raw names mapped; 500 documents conserved and idempotent ({collisions} merged fields)",
        EXPECTED_MAPPING.len()
    ))
}

const THEMES: [(&str, &str); 10] = [
    ("weather", "forecast"),
    ("stock", "ticker"),
    ("email", "inbox"),
    ("recipe", "cooking"),
    ("flight", "airline"),
    ("hotel", "lodging"),
    ("movie", "cinema"),
    ("music", "song"),
    ("news", "headline"),
    ("map", "navigation"),
];

fn ablation_fixture() -> Result<(Vec<ToolDocument>, Vec<Query>, RelevanceJudgments), String> {
    let mut corpus = Vec::new();
    let mut queries = Vec::new();
    let mut qrels = RelevanceJudgments::new();
    for (i, (theme, synonym)) in THEMES.iter().enumerate() {
        let id = format!("t{i}");
        let body = json!({"name": format!("service {i}"), "description": "utility service for everyday tasks"});
        let raw = RawToolDocument::new(
            &id,
            "fixture",
            Domain::Web,
            body.as_object().unwrap().clone(),
        )
        .map_err(e)?;
        let mut profile =
            ToolProfile::new(format!("Provides {theme} lookups."), [*synonym, "lookup"])
                .map_err(e)?
                .with_when_to_use(format!("When the user needs {theme} information."));
        if i % 2 == 0 {
            profile = profile.with_limitation("Rate limited.");
        }
        if i % 3 == 0 {
            profile = profile
                .with_example_usage(vec![ExampleUsage {
                    query: format!("{theme} today"),
                    api_call: format!("get_{theme}()"),
                }])
                .map_err(e)?;
        }
        corpus.push(ToolDocument::Expanded(
            merge_expansion(raw, profile).map_err(e)?,
        ));
        let qid = format!("q{i}");
        queries.push(Query {
            qid: qid.clone(),
            domain: Domain::Web,
            text: format!("{synonym} utility"),
            instruction: None,
            dataset: None,
        });
        qrels.insert(qid, id);
    }
    Ok((corpus, queries, qrels))
}

fn expected_fields(variant: Variant) -> BTreeSet<ProfileField> {
    let all: BTreeSet<ProfileField> = ProfileField::ALL.into_iter().collect();
    match variant {
        Variant::Original => BTreeSet::new(),
        Variant::Full => all,
        Variant::AddOne(f) => [f].into_iter().collect(),
        Variant::OneOut(f) => all.into_iter().filter(|g| *g != f).collect(),
    }
}

pub fn ablation_harness() -> Result<String, String> {
    let variants = Variant::all();
    ensure!(variants.len() == 12, "{} variants", variants.len());
    let labels: BTreeSet<String> = variants.iter().map(|v| v.label()).collect();
    ensure!(labels.len() == 12, "variant labels collide");
    for f in ProfileField::ALL {
        let (add, out) = (FieldSelection::add_one(f), FieldSelection::one_out(f));
        ensure!(add.fields() == [f], "add_one({f}) = {:?}", add.fields());
        ensure!(
            !out.contains(f) && out.fields().len() == 4,
            "one_out({f}) = {:?}",
            out.fields()
        );
        let union: BTreeSet<ProfileField> = add.fields().into_iter().chain(out.fields()).collect();
        ensure!(
            union.len() == 5,
            "add_one({f}) and one_out({f}) do not partition the fields"
        );
    }

    let (corpus, queries, qrels) = ablation_fixture()?;
    let retriever = Retriever::Sparse(SparseIndexParams::default());
    let settings = AblationSettings {
        ks: vec![10],
        depth: 10,
    };
    let suite = ablation_suite(&corpus, &retriever, &queries, &qrels, &settings).map_err(e)?;
    ensure!(
        suite.variants.len() == 12,
        "suite has {} variants",
        suite.variants.len()
    );

    let texts = |selection: &FieldSelection| -> Vec<(String, String)> {
        corpus
            .iter()
            .map(|d| (d.id().to_string(), render_document_text(d, selection)))
            .collect()
    };
    let mut ndcg = BTreeMap::new();
    for result in &suite.variants {
        let fields: BTreeSet<ProfileField> = result.fields.iter().copied().collect();
        ensure!(
            fields == expected_fields(result.variant),
            "{} has fields {:?}",
            result.label,
            result.fields
        );
        ensure!(result.applicable, "{} marked inapplicable", result.label);
        let got = result
            .average()
            .and_then(|a| a.get(&10))
            .ok_or(format!("{} has no N@10", result.label))?
            .ndcg;
        // Oracle: rank every rendering with the reference BM25, score with the reference metrics.
        let docs = texts(&result.variant.selection());
        let mut total = 0.0;
        for q in &queries {
            let ranking: Vec<String> = oracles::bm25_ranking(&docs, &q.text, 1.2, 0.75, 10)
                .into_iter()
                .map(|(id, _)| id)
                .collect();
            total += oracles::metrics(&ranking, qrels.gold(&q.qid).unwrap(), 10).0;
        }
        let want = total / queries.len() as f64;
        ensure!(
            (got - want).abs() <= 1e-9,
            "{}: N@10 {got} vs oracle {want}",
            result.label
        );
        ndcg.insert(result.label.clone(), got);
    }
    let (tags, original) = (ndcg["+tags"], ndcg["original"]);
    ensure!(
        tags > original,
        "+tags N@10 {tags} is not above original {original}"
    );
    Ok(format!("12 variants verified; N@10 original {original:.4} < +tags {tags:.4}, all match oracle rankings"))
}

fn training_fixture(rng: &mut gen::TestRng) -> (Vec<ToolDocument>, Vec<Query>, RelevanceJudgments) {
    let corpus: Vec<ToolDocument> = (0..40)
        .map(|i| {
            let raw = gen::raw_doc(rng, &format!("doc{i:02}"));
            if rng.gen_bool(0.6) {
                ToolDocument::Expanded(merge_expansion(raw, gen::profile(rng)).unwrap())
            } else {
                ToolDocument::Original(raw)
            }
        })
        .collect();
    let mut qrels = RelevanceJudgments::new();
    let queries = (0..12)
        .map(|i| {
            let qid = format!("q{i:02}");
            let n = rng.gen_range(1..=3);

            for d in corpus.choose_multiple(rng, n) {
                qrels.insert(qid.clone(), d.id());
            }
            Query {
                qid,
                domain: Domain::ALL[i % 3],
                text: gen::sentence(rng, 2, 6),
                instruction: (i % 2 == 0).then(|| "Find a tool.".to_string()),
                dataset: None,
            }
        })
        .collect();
    (corpus, queries, qrels)
}

pub fn training_laws() -> Result<String, String> {
    let (corpus, queries, qrels) = training_fixture(&mut gen::rng(606));
    let gold_total: usize = queries
        .iter()
        .map(|q| qrels.gold(&q.qid).unwrap().len())
        .sum();
    let settings = TrainSettings {
        seed: 9,
        ..Default::default()
    };

    let embed = build_embed_train(&queries, &qrels, &corpus, 5, &settings).map_err(e)?;
    ensure!(
        embed.len() == gold_total,
        "{} embedding examples for {gold_total} gold pairs",
        embed.len()
    );
    for ex in &embed {
        let gold = qrels.gold(&ex.qid).unwrap();
        ensure!(
            gold.contains(&ex.positive_id),
            "{}: positive {} is not gold",
            ex.qid,
            ex.positive_id
        );
        ensure!(
            ex.negative_ids.len() == 5 && ex.negatives.len() == 5,
            "{}: {} negatives",
            ex.qid,
            ex.negative_ids.len()
        );
        let distinct: BTreeSet<&String> = ex.negative_ids.iter().collect();
        ensure!(distinct.len() == 5, "{}: repeated negative", ex.qid);
        if let Some(bad) = ex.negative_ids.iter().find(|n| gold.contains(*n)) {
            return Err(format!(
                "{}: gold document {bad} sampled as a negative",
                ex.qid
            ));
        }
    }

    let neg_per_pos = 3;
    let rerank =
        build_rerank_train(&queries, &qrels, &corpus, neg_per_pos, &settings).map_err(e)?;
    ensure!(
        rerank.len() == gold_total * (1 + neg_per_pos),
        "{} rerank examples, expected {}",
        rerank.len(),
        gold_total * (1 + neg_per_pos)
    );
    let positives = rerank.iter().filter(|x| x.label).count();
    ensure!(positives == gold_total, "{positives} true examples");
    for ex in &rerank {
        let gold = qrels.gold(&ex.qid).unwrap();
        ensure!(
            ex.label == gold.contains(&ex.doc_id),
            "{}: {} labelled {}",
            ex.qid,
            ex.doc_id,
            ex.label
        );
    }

    let dir = tempfile::tempdir().map_err(e)?;
    let mut identical = 0;
    for format in [TrainFormat::JsonlPairs, TrainFormat::JsonlMessages] {
        let write = |name: &str, seed: u64| -> Result<Vec<u8>, String> {
            let s = TrainSettings {
                seed,
                ..Default::default()
            };
            let a = dir.path().join(format!("{name}-embed.jsonl"));
            let b = dir.path().join(format!("{name}-rerank.jsonl"));
            export_train(
                &build_embed_train(&queries, &qrels, &corpus, 5, &s).map_err(e)?,
                format,
                &a,
            )
            .map_err(e)?;
            export_train(
                &build_rerank_train(&queries, &qrels, &corpus, neg_per_pos, &s).map_err(e)?,
                format,
                &b,
            )
            .map_err(e)?;
            let mut bytes = std::fs::read(a).map_err(e)?;
            bytes.extend(std::fs::read(b).map_err(e)?);
            Ok(bytes)
        };
        let (one, two, other) = (write("one", 9)?, write("two", 9)?, write("other", 10)?);
        ensure!(one == two, "{format:?}: same seed, different bytes");
        ensure!(one != other, "{format:?}: seed has no effect");
        identical += 1;
    }
    Ok(format!(
        "{} embedding + {} rerank examples over {gold_total} gold pairs; negatives exclude gold; {identical} formats byte-identical per seed",
        embed.len(),
        rerank.len()
    ))
}

pub fn rerank_improves_retrieval() -> Result<String, String> {
    let mut rng = gen::rng(707);
    let corpus: Vec<ToolDocument> = (0..30)
        .map(|j| {
            let body =
                json!({"name": format!("d{j}"), "description": gen::sentence(&mut rng, 3, 8)});
            ToolDocument::Original(
                RawToolDocument::new(
                    format!("d{j}"),
                    "synthetic",
                    Domain::Code,
                    body.as_object().unwrap().clone(),
                )
                .unwrap(),
            )
        })
        .collect();
    let lookup = CorpusLookup::new(&corpus);
    let all_ids: Vec<String> = corpus.iter().map(|d| d.id().to_string()).collect();
    let settings = RerankSettings {
        pool: 20,
        ..Default::default()
    };
    let (mut perfect, mut improved) = (0, 0);
    for r in 0..50 {
        let n = rng.gen_range(1..=12);

        let gold: BTreeSet<String> = all_ids.choose_multiple(&mut rng, n).cloned().collect();
        let first: Vec<String> = all_ids.choose_multiple(&mut rng, 25).cloned().collect();
        let qid = format!("q{r}");
        let query = Query {
            qid: qid.clone(),
            domain: Domain::Code,
            text: format!("need tool {r}"),
            instruction: None,
            dataset: None,
        };
        let mut run = RankedRun::new("first");
        run.insert(
            &qid,
            first
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), (25 - i) as f64))
                .collect(),
        )
        .map_err(e)?;
        let markers: Vec<String> = gold.iter().map(|g| format!("\"name\":\"{g}\"")).collect();
        let backend = RerankBackend::new(
            "rerank",
            FnScorer::new(move |prompt: &str| {
                Ok(if markers.iter().any(|m| prompt.contains(m.as_str())) {
                    (5.0, -5.0)
                } else {
                    (-5.0, 5.0)
                })
            }),
        );
        let (reranked, degraded) =
            rerank_run(&run, &[query], &backend, &lookup, &settings, "reranked").map_err(e)?;
        ensure!(degraded.is_empty(), "run {r} degraded");
        let after: Vec<String> = reranked
            .get(&qid)
            .ok_or(format!("run {r} lost its query"))?
            .iter()
            .map(|(d, _)| d.clone())
            .collect();
        let before = oracles::metrics(&first, &gold, 10).0;
        let after = oracles::metrics(&after, &gold, 10).0;
        ensure!(
            after >= before - 1e-12,
            "run {r}: N@10 fell from {before} to {after}"
        );
        if after > before {
            improved += 1;
        }
        let pooled: BTreeSet<&String> = first.iter().take(settings.pool).collect();
        if gold.len() <= 10 && gold.iter().all(|g| pooled.contains(g)) {
            ensure!(after == 1.0, "run {r}: all gold pooled but N@10 = {after}");
            perfect += 1;
        }
    }
    ensure!(perfect > 0, "no run exercised the all-gold-pooled case");
    Ok(format!(
        "50 runs: never worse, {improved} improved, {perfect} fully pooled runs at N@10 = 1"
    ))
}

const SIMILARITY_TOPICS: [[&str; 3]; 12] = [
    ["weather", "forecast", "rain"],
    ["stock", "ticker", "market"],
    ["email", "inbox", "mail"],
    ["recipe", "cooking", "ingredient"],
    ["compile", "rust", "crate"],
    ["regex", "pattern", "match"],
    ["plot", "chart", "axis"],
    ["tensor", "matrix", "gpu"],
    ["invoice", "billing", "tax"],
    ["ticket", "support", "helpdesk"],
    ["inventory", "warehouse", "sku"],
    ["payroll", "salary", "employee"],
];

pub fn similarity_direction() -> Result<String, String> {
    let mut corpus = Vec::new();
    let mut queries = Vec::new();
    let mut qrels = RelevanceJudgments::new();
    let filler = [
        "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    ];
    for (d, domain) in Domain::ALL.into_iter().enumerate() {
        for j in 0..8 {
            let id = format!("{domain}-{j}");
            let body = json!({"name": format!("svc_{d}_{j}"), "description": "service endpoint that returns a json payload"});
            let raw =
                RawToolDocument::new(&id, "fixture", domain, body.as_object().unwrap().clone())
                    .map_err(e)?;
            // Gold documents gain their query's vocabulary; distractors gain unrelated words.
            let profile = if j < 4 {
                let topic = SIMILARITY_TOPICS[d * 4 + j];
                ToolProfile::new(
                    format!("Handles {} {} requests.", topic[0], topic[1]),
                    [topic[1], topic[2]],
                )
                .map_err(e)?
                .with_when_to_use(format!("When the user mentions {}.", topic[2]))
            } else {
                ToolProfile::new(
                    format!("Handles {} jobs.", filler[j]),
                    [filler[j], filler[j - 4]],
                )
                .map_err(e)?
                .with_when_to_use(format!("When {} is involved.", filler[j - 1]))
            };
            corpus.push(ToolDocument::Expanded(
                merge_expansion(raw, profile).map_err(e)?,
            ));
        }
        for j in 0..4 {
            let qid = format!("{domain}-q{j}");
            queries.push(Query {
                qid: qid.clone(),
                domain,
                text: SIMILARITY_TOPICS[d * 4 + j].join(" "),
                instruction: None,
                dataset: None,
            });
            qrels.insert(qid, format!("{domain}-{j}"));
        }
    }
    let backend = EmbeddingBackend::new("embed", HashEmbedder::new(1024));
    let pairs = sample_similarity_pairs(&queries, &qrels, &corpus, 4, 5).map_err(e)?;
    let report = similarity_analysis(
        &pairs,
        &queries,
        &corpus,
        &backend,
        InstructionMode::Concat,
        &FieldSelection::default_retrieval(),
    )
    .map_err(e)?;
    let mut summary = Vec::new();
    for domain in Domain::ALL {
        let s = report
            .per_domain
            .get(&domain)
            .ok_or(format!("no pairs for {domain}"))?;
        ensure!(
            s.positive.delta > s.negative.delta,
            "{domain}: positive delta {} <= negative delta {}",
            s.positive.delta,
            s.negative.delta
        );
        summary.push(format!(
            "{domain} {:+.3}/{:+.3}",
            s.positive.delta, s.negative.delta
        ));
    }
    Ok(format!("positive/negative deltas: {}", summary.join(", ")))
}
