//! Staged profile generation: expand, check, refine once, sample for review.
//!
//! Every document goes through the expander; outputs that fail the rule
//! checks or the judge get exactly one more attempt from the refiner, whose
//! output is checked the same way. Whatever still fails is reported and left
//! unexpanded. Refined profiles are then sampled for human review.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::GenerationBackend;
use crate::canonicalizer::{parse_judge_answer, JudgeAnswer};
use crate::corpus::{
    normalize_tags, render_document_text, Domain, ExpandedDocument, FieldSelection, ProfileDraft,
    Provenance, RawToolDocument, ToolDocument, ToolProfile, MAX_EXAMPLE_USAGE, PROFILE_KEY,
};
use crate::error::{Error, Result};
use crate::prompts::{expansion_prompt, judgement_prompt};
use crate::review::{HumanValidation, JudgmentExport, ReviewBatch, ReviewEntry};
use crate::sampling;

pub const MAX_TAGS: usize = 5;
/// Soft length limit for free-text profile fields; exceeding it only warns.
pub const SOFT_WORD_LIMIT: usize = 20;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 100;

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub expander: GenerationBackend,
    pub judge: GenerationBackend,
    pub refiner: GenerationBackend,
    pub max_tokens: usize,
    pub review_sample_size: usize,
    pub seed: u64,
    /// Reject profiles with more than [`MAX_TAGS`] tags.
    pub strict_tags: bool,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl PipelineConfig {
    pub fn new(
        expander: GenerationBackend,
        judge: GenerationBackend,
        refiner: GenerationBackend,
    ) -> Self {
        Self {
            expander,
            judge,
            refiner,
            max_tokens: 1024,
            review_sample_size: 100,
            seed: 0,
            strict_tags: true,
            checkpoint: None,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EmptyOutput,
    InvalidJson,
    MissingFunction,
    MissingTags,
    TagsOutOfRange,
    ExampleUsageOverlong,
    JudgeRejected,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::EmptyOutput => "empty_output",
            RejectReason::InvalidJson => "invalid_json",
            RejectReason::MissingFunction => "missing_function",
            RejectReason::MissingTags => "missing_tags",
            RejectReason::TagsOutOfRange => "tags_out_of_range",
            RejectReason::ExampleUsageOverlong => "example_usage_overlong",
            RejectReason::JudgeRejected => "judge_rejected",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub passed: bool,
    pub reasons: Vec<RejectReason>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ValidationResult {
    fn from_reasons(reasons: Vec<RejectReason>, warnings: Vec<String>) -> Self {
        Self {
            passed: reasons.is_empty(),
            reasons,
            warnings,
        }
    }

    pub fn reject(&mut self, reason: RejectReason) {
        if !self.reasons.contains(&reason) {
            self.reasons.push(reason);
        }
        self.passed = false;
    }
}

/// Raw model output and whatever profile could be read from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Attempt {
    pub raw_text: String,
    pub draft: Option<ProfileDraft>,
}

impl Attempt {
    pub fn from_response(raw_text: String) -> Self {
        let draft = parse_profile_response(&raw_text);
        Self { raw_text, draft }
    }

    /// The validated profile, if the draft satisfies the profile invariants.
    pub fn profile(&self) -> Option<ToolProfile> {
        ToolProfile::try_from(self.draft.clone()?).ok()
    }
}

/// Reads a profile out of a model response.
///
/// Anything before the first `{` is treated as preamble and anything after
/// the first complete JSON value is ignored. Both `{"tool_profile": {...}}`
/// and a bare profile object are accepted.
pub fn parse_profile_response(raw: &str) -> Option<ProfileDraft> {
    let start = raw.find('{')?;
    let value: Value = serde_json::Deserializer::from_str(&raw[start..])
        .into_iter::<Value>()
        .next()?
        .ok()?;
    let mut obj = match value {
        Value::Object(obj) => obj,
        _ => return None,
    };
    let inner = match obj.remove(PROFILE_KEY) {
        Some(Value::Object(inner)) => inner,
        Some(_) => return None,
        None => obj,
    };
    serde_json::from_value(Value::Object(inner)).ok()
}

/// Step 1: the expansion prompt over the original document.
pub fn expand(
    doc: &RawToolDocument,
    backend: &GenerationBackend,
    max_tokens: usize,
) -> Result<Attempt> {
    let prompt = expansion_prompt(&render_document_text(doc, &FieldSelection::original_only()));
    let raw = backend
        .generate(&prompt, max_tokens)
        .map_err(|source| Error::Document {
            id: doc.id.clone(),
            source,
        })?;
    Ok(Attempt::from_response(raw))
}

/// Step 3: the same prompt sent to the stronger refiner backend.
pub fn refine(
    doc: &RawToolDocument,
    backend: &GenerationBackend,
    max_tokens: usize,
) -> Result<Attempt> {
    expand(doc, backend, max_tokens)
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Structural checks on an attempt. Over-long free text only warns.
pub fn rule_check(attempt: &Attempt, strict_tags: bool) -> ValidationResult {
    if attempt.raw_text.trim().is_empty() {
        return ValidationResult::from_reasons(vec![RejectReason::EmptyOutput], vec![]);
    }
    let Some(draft) = &attempt.draft else {
        return ValidationResult::from_reasons(vec![RejectReason::InvalidJson], vec![]);
    };
    let mut reasons = Vec::new();
    if draft
        .function
        .as_deref()
        .is_none_or(|f| f.trim().is_empty())
    {
        reasons.push(RejectReason::MissingFunction);
    }
    let tags = normalize_tags(draft.tags.iter().flatten().cloned());
    if tags.is_empty() {
        reasons.push(RejectReason::MissingTags);
    } else if strict_tags && tags.len() > MAX_TAGS {
        reasons.push(RejectReason::TagsOutOfRange);
    }
    if draft
        .example_usage
        .as_ref()
        .is_some_and(|e| e.len() > MAX_EXAMPLE_USAGE)
    {
        reasons.push(RejectReason::ExampleUsageOverlong);
    }
    let mut warnings = Vec::new();
    for (name, text) in [
        ("function", draft.function.as_deref()),
        ("when_to_use", draft.when_to_use.as_deref()),
        ("limitation", draft.limitation.as_deref()),
    ] {
        if let Some(n) = text.map(word_count).filter(|n| *n > SOFT_WORD_LIMIT) {
            warnings.push(format!("{name} has {n} words"));
        }
    }
    ValidationResult::from_reasons(reasons, warnings)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub accepted: bool,
    /// The answer was neither `true` nor `false`; it counts as a rejection.
    pub unparsed: bool,
}

/// Step 2: asks the judge whether `profile` is faithful to `doc`.
pub fn judge(
    doc: &RawToolDocument,
    profile: &ToolProfile,
    backend: &GenerationBackend,
    max_tokens: usize,
) -> Result<JudgeVerdict> {
    let original = render_document_text(doc, &FieldSelection::original_only());
    let profile_text = serde_json::to_string(&Value::Object(profile.to_json()))?;
    let answer = backend
        .generate(&judgement_prompt(&original, &profile_text), max_tokens)
        .map_err(|source| Error::Document {
            id: doc.id.clone(),
            source,
        })?;
    Ok(match parse_judge_answer(&answer) {
        JudgeAnswer::True => JudgeVerdict {
            accepted: true,
            unparsed: false,
        },
        JudgeAnswer::False => JudgeVerdict {
            accepted: false,
            unparsed: false,
        },
        JudgeAnswer::Unparsed => JudgeVerdict {
            accepted: false,
            unparsed: true,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocStatus {
    Step1Pass,
    Step3Refined,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub raw_text: String,
    pub validation: ValidationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeVerdict>,
}

/// Per-document record, also the checkpoint line format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocOutcome {
    pub id: String,
    pub status: DocStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ToolProfile>,
    pub step1: StageTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step3: Option<StageTrace>,
    pub latency_ms: StageLatency,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub expand: f64,
    pub judge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<f64>,
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Rule check then, if that passes, the judge.
fn check_attempt(
    doc: &RawToolDocument,
    attempt: &Attempt,
    config: &PipelineConfig,
    judge_ms: &mut f64,
) -> Result<(StageTrace, Option<ToolProfile>)> {
    let mut validation = rule_check(attempt, config.strict_tags);
    let mut verdict = None;
    let mut accepted = None;
    if validation.passed {
        match attempt.profile() {
            None => validation.reject(RejectReason::InvalidJson),
            Some(profile) => {
                let t = Instant::now();
                let v = judge(doc, &profile, &config.judge, config.max_tokens)?;
                *judge_ms += elapsed_ms(t);
                verdict = Some(v);
                if v.accepted {
                    accepted = Some(profile);
                } else {
                    validation.reject(RejectReason::JudgeRejected);
                }
            }
        }
    }
    let trace = StageTrace {
        raw_text: attempt.raw_text.clone(),
        validation,
        judge: verdict,
    };
    Ok((trace, accepted))
}

/// Runs one document through every step.
pub fn process_document(doc: &RawToolDocument, config: &PipelineConfig) -> Result<DocOutcome> {
    let mut latency = StageLatency::default();
    let t = Instant::now();
    let first = expand(doc, &config.expander, config.max_tokens)?;
    latency.expand = elapsed_ms(t);
    let (step1, accepted) = check_attempt(doc, &first, config, &mut latency.judge)?;
    if let Some(profile) = accepted {
        return Ok(DocOutcome {
            id: doc.id.clone(),
            status: DocStatus::Step1Pass,
            profile: Some(profile),
            step1,
            step3: None,
            latency_ms: latency,
        });
    }
    let t = Instant::now();
    let second = refine(doc, &config.refiner, config.max_tokens)?;
    latency.refine = Some(elapsed_ms(t));
    let (step3, accepted) = check_attempt(doc, &second, config, &mut latency.judge)?;
    Ok(DocOutcome {
        id: doc.id.clone(),
        status: if accepted.is_some() {
            DocStatus::Step3Refined
        } else {
            DocStatus::Failed
        },
        profile: accepted,
        step1,
        step3: Some(step3),
        latency_ms: latency,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let pick = |q: f64| samples[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            count: n,
            mean_ms: samples.iter().sum::<f64>() / n as f64,
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
            max_ms: samples[n - 1],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineLatency {
    pub expand: LatencyStats,
    pub judge: LatencyStats,
    pub refine: LatencyStats,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub total: usize,
    pub passed_step2: usize,
    pub refined_step3: usize,
    pub failed_final: usize,
    /// Judge answers that were neither true nor false, across both attempts.
    pub judge_unparsed: usize,
    /// Step 1 responses with no readable JSON profile.
    pub expand_unparseable: usize,
    pub step1_reasons: BTreeMap<String, usize>,
    pub step3_reasons: BTreeMap<String, usize>,
    pub warnings: usize,
    pub failed_ids: Vec<String>,
    #[serde(default)]
    pub latency: PipelineLatency,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_validation: Option<HumanValidation>,
}

impl PipelineReport {
    pub fn from_outcomes(outcomes: &[DocOutcome]) -> Self {
        let mut report = PipelineReport {
            total: outcomes.len(),
            ..Default::default()
        };
        let (mut expand, mut judge, mut refine) = (Vec::new(), Vec::new(), Vec::new());
        for o in outcomes {
            match o.status {
                DocStatus::Step1Pass => report.passed_step2 += 1,
                DocStatus::Step3Refined => report.refined_step3 += 1,
                DocStatus::Failed => {
                    report.failed_final += 1;
                    report.failed_ids.push(o.id.clone());
                }
            }
            if o.step1
                .validation
                .reasons
                .contains(&RejectReason::InvalidJson)
            {
                report.expand_unparseable += 1;
            }
            for (trace, tally) in [
                (Some(&o.step1), &mut report.step1_reasons),
                (o.step3.as_ref(), &mut report.step3_reasons),
            ] {
                let Some(trace) = trace else { continue };
                for r in &trace.validation.reasons {
                    *tally.entry(r.as_str().to_string()).or_default() += 1;
                }
                report.warnings += trace.validation.warnings.len();
                if trace.judge.is_some_and(|j| j.unparsed) {
                    report.judge_unparsed += 1;
                }
            }
            expand.push(o.latency_ms.expand);
            judge.push(o.latency_ms.judge);
            refine.extend(o.latency_ms.refine);
        }
        report.latency = PipelineLatency {
            expand: LatencyStats::from_samples(expand),
            judge: LatencyStats::from_samples(judge),
            refine: LatencyStats::from_samples(refine),
        };
        report
    }

    pub fn is_conserved(&self) -> bool {
        self.total == self.passed_step2 + self.refined_step3 + self.failed_final
    }

    /// Folds exported human judgments into the report.
    pub fn attach_review(&mut self, export: &JudgmentExport) {
        self.human_validation = Some(export.summary());
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    /// One outcome per input document, in input order.
    pub outcomes: Vec<DocOutcome>,
    pub report: PipelineReport,
    pub review: ReviewBatch,
}

impl PipelineOutput {
    /// Expanded documents for every document that passed, in input order.
    pub fn expanded_documents(&self, corpus: &[RawToolDocument]) -> Vec<ExpandedDocument> {
        assemble_output_corpus(corpus, &self.outcomes)
            .into_iter()
            .filter_map(|d| match d {
                ToolDocument::Expanded(e) => Some(e),
                ToolDocument::Original(_) => None,
            })
            .collect()
    }
}

/// The output corpus: accepted documents carry their profile, failed ones
/// are passed through unexpanded.
pub fn assemble_output_corpus(
    corpus: &[RawToolDocument],
    outcomes: &[DocOutcome],
) -> Vec<ToolDocument> {
    corpus
        .iter()
        .zip(outcomes)
        .map(|(doc, outcome)| match (&outcome.profile, outcome.status) {
            (Some(profile), DocStatus::Step1Pass | DocStatus::Step3Refined) => {
                ToolDocument::Expanded(ExpandedDocument {
                    original: doc.clone(),
                    profile: profile.clone(),
                    provenance: if outcome.status == DocStatus::Step1Pass {
                        Provenance::Step1Pass
                    } else {
                        Provenance::Step3Refined
                    },
                })
            }
            _ => ToolDocument::Original(doc.clone()),
        })
        .collect()
}

/// Samples up to `size` refined documents for human review, in corpus order.
pub fn sample_review_batch(
    corpus: &[RawToolDocument],
    outcomes: &[DocOutcome],
    size: usize,
    seed: u64,
) -> ReviewBatch {
    let refined: Vec<(&RawToolDocument, &DocOutcome)> = corpus
        .iter()
        .zip(outcomes)
        .filter(|(_, o)| o.status == DocStatus::Step3Refined)
        .collect();
    let picked = sampling::sample_positions(&mut sampling::rng(seed), refined.len(), size);
    ReviewBatch {
        batch_id: format!("refined-s{seed}"),
        seed,
        items: picked
            .into_iter()
            .map(|i| {
                let (doc, outcome) = refined[i];
                ReviewEntry {
                    item_id: doc.id.clone(),
                    doc_id: doc.id.clone(),
                    dataset: doc.dataset.clone(),
                    domain: doc.domain,
                    original: doc.body.clone(),
                    profile: outcome
                        .profile
                        .clone()
                        .expect("refined outcomes carry a profile"),
                    provenance: Provenance::Step3Refined,
                }
            })
            .collect(),
    }
}

/// Reads completed outcomes from a checkpoint. A torn final line from a crash
/// is ignored; any other malformed line is an error.
pub fn read_checkpoint(path: &Path) -> Result<Vec<DocOutcome>> {
    Ok(scan_checkpoint(path)?.0)
}

/// Outcomes plus whether a torn tail was skipped.
fn scan_checkpoint(path: &Path) -> Result<(Vec<DocOutcome>, bool)> {
    if !path.exists() {
        return Ok((Vec::new(), false));
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?)
        .lines()
        .collect::<std::io::Result<_>>()?;
    let mut out = Vec::new();
    let mut torn = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(o) => out.push(o),
            Err(_) if i + 1 == lines.len() => {
                log::warn!("ignoring torn last checkpoint line {}", i + 1);
                torn = true;
            }
            Err(e) => return Err(Error::parse(path, i + 1, e)),
        }
    }
    Ok((out, torn))
}

fn append_checkpoint(path: &Path, outcomes: &[&DocOutcome]) -> Result<()> {
    if outcomes.is_empty() {
        return Ok(());
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::new();
    for o in outcomes {
        buf.push_str(&serde_json::to_string(o)?);
        buf.push('\n');
    }
    file.write_all(buf.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

/// Runs the whole pipeline over `corpus`.
///
/// Documents are processed in parallel, `checkpoint_every` at a time; after
/// each chunk the finished outcomes are appended to the checkpoint file, and
/// a later run with the same checkpoint skips them. A backend that stays down
/// aborts the run after saving whatever finished.
pub fn run_pipeline(corpus: &[RawToolDocument], config: &PipelineConfig) -> Result<PipelineOutput> {
    let mut seen = HashSet::new();
    if let Some(dup) = corpus.iter().find(|d| !seen.insert(d.id.as_str())) {
        return Err(Error::DuplicateId(dup.id.clone()));
    }
    let mut done: HashMap<String, DocOutcome> = HashMap::new();
    if let Some(path) = &config.checkpoint {
        let (saved, torn) = scan_checkpoint(path)?;
        if torn {
            // Drop the fragment so new lines do not get glued onto it.
            std::fs::remove_file(path)?;
            append_checkpoint(path, &saved.iter().collect::<Vec<_>>())?;
        }
        for outcome in saved {
            if !seen.contains(outcome.id.as_str()) {
                return Err(Error::invalid(format!(
                    "checkpoint {} holds `{}`, which is not in the corpus",
                    path.display(),
                    outcome.id
                )));
            }
            done.insert(outcome.id.clone(), outcome);
        }
        if !done.is_empty() {
            log::info!(
                "resuming: {} of {} documents already done",
                done.len(),
                corpus.len()
            );
        }
    }

    let todo: Vec<&RawToolDocument> = corpus
        .iter()
        .filter(|d| !done.contains_key(&d.id))
        .collect();
    for chunk in todo.chunks(config.checkpoint_every.max(1)) {
        let results: Vec<Result<DocOutcome>> = chunk
            .par_iter()
            .map(|doc| process_document(doc, config))
            .collect();
        let finished: Vec<&DocOutcome> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        if let Some(path) = &config.checkpoint {
            append_checkpoint(path, &finished)?;
        }
        let failure = results.iter().position(Result::is_err);
        for outcome in results.iter().filter_map(|r| r.as_ref().ok()) {
            done.insert(outcome.id.clone(), outcome.clone());
        }
        if let Some(i) = failure {
            log::error!(
                "pipeline aborted with {} of {} documents done",
                done.len(),
                corpus.len()
            );
            return Err(results
                .into_iter()
                .nth(i)
                .and_then(|r| r.err())
                .expect("failure index"));
        }
        log::info!("pipeline progress: {}/{}", done.len(), corpus.len());
    }

    let outcomes: Vec<DocOutcome> = corpus
        .iter()
        .map(|d| done.remove(&d.id).expect("every document processed"))
        .collect();
    let report = PipelineReport::from_outcomes(&outcomes);
    let review = sample_review_batch(corpus, &outcomes, config.review_sample_size, config.seed);
    Ok(PipelineOutput {
        outcomes,
        report,
        review,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    #[default]
    Whitespace,
    UnicodeAlnum,
}

impl std::str::FromStr for TokenizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(TokenizerKind::Whitespace),
            "unicode_alnum" | "unicode-alnum" => Ok(TokenizerKind::UnicodeAlnum),
            _ => Err(Error::invalid(format!("unknown tokenizer `{s}`"))),
        }
    }
}

impl TokenizerKind {
    pub fn count(self, text: &str) -> usize {
        match self {
            TokenizerKind::Whitespace => text.split_whitespace().count(),
            TokenizerKind::UnicodeAlnum => crate::retrieval::tokenize(text).len(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenRow {
    pub documents: usize,
    pub original_len: f64,
    pub profile_len: f64,
    pub expanded_len: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub tokenizer: TokenizerKind,
    pub per_domain: BTreeMap<Domain, TokenRow>,
    /// Mean over all documents, not over domains.
    pub overall: TokenRow,
}

/// Average token lengths of the original text, the profile text (under
/// `selection`) and their sum, per domain and overall.
pub fn token_stats(
    corpus: &[ExpandedDocument],
    tokenizer: TokenizerKind,
    selection: &FieldSelection,
) -> Result<TokenStats> {
    if corpus.is_empty() {
        return Err(Error::invalid(
            "token statistics need at least one expanded document",
        ));
    }
    let mut sums: BTreeMap<Domain, (usize, usize, usize)> = BTreeMap::new();
    for doc in corpus {
        let original = tokenizer.count(&render_document_text(
            &doc.original,
            &FieldSelection::original_only(),
        ));
        let profile = tokenizer.count(&serde_json::to_string(&Value::Object(
            doc.profile.to_json_filtered(selection),
        ))?);
        let e = sums.entry(doc.original.domain).or_default();
        e.0 += 1;
        e.1 += original;
        e.2 += profile;
    }
    let row = |(n, o, p): (usize, usize, usize)| TokenRow {
        documents: n,
        original_len: o as f64 / n as f64,
        profile_len: p as f64 / n as f64,
        expanded_len: (o + p) as f64 / n as f64,
    };
    let total = sums
        .values()
        .fold((0, 0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    Ok(TokenStats {
        tokenizer,
        per_domain: sums.into_iter().map(|(d, s)| (d, row(s))).collect(),
        overall: row(total),
    })
}

impl TokenStats {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>6} {:>10} {:>10} {:>10}\n",
            "domain", "docs", "original", "profile", "expanded"
        );
        let rows = self
            .per_domain
            .iter()
            .map(|(d, r)| (d.label(), r))
            .chain(std::iter::once(("Overall", &self.overall)));
        for (name, r) in rows {
            out.push_str(&format!(
                "{:<12} {:>6} {:>10.2} {:>10.2} {:>10.2}\n",
                name, r.documents, r.original_len, r.profile_len, r.expanded_len
            ));
        }
        out
    }
}
