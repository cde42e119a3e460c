//! Field canonicalization, coverage matrices and the completeness audit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::GenerationBackend;
use crate::corpus::{
    render_document_text, Body, Domain, FieldSelection, RawToolDocument, ToolDocument,
};
use crate::error::{Error, Result};
use crate::prompts::audit_prompt;
use crate::sampling;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalField {
    Name,
    Description,
    Category,
    Parameters,
    Responses,
    Method,
    ExampleUsage,
    Limitations,
}

impl CanonicalField {
    pub const ALL: [CanonicalField; 8] = [
        CanonicalField::Name,
        CanonicalField::Description,
        CanonicalField::Category,
        CanonicalField::Parameters,
        CanonicalField::Responses,
        CanonicalField::Method,
        CanonicalField::ExampleUsage,
        CanonicalField::Limitations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CanonicalField::Name => "name",
            CanonicalField::Description => "description",
            CanonicalField::Category => "category",
            CanonicalField::Parameters => "parameters",
            CanonicalField::Responses => "responses",
            CanonicalField::Method => "method",
            CanonicalField::ExampleUsage => "example_usage",
            CanonicalField::Limitations => "limitations",
        }
    }
}

impl fmt::Display for CanonicalField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CanonicalField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CanonicalField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown canonical field `{s}`")))
    }
}

/// Raw field names observed across tool datasets and their canonical field.
pub const FIELD_MAPPING: &[(&str, CanonicalField)] = &[
    ("name", CanonicalField::Name),
    ("name_for_human", CanonicalField::Name),
    ("description", CanonicalField::Description),
    ("description_for_human", CanonicalField::Description),
    ("func_description", CanonicalField::Description),
    ("functionality", CanonicalField::Description),
    ("category", CanonicalField::Category),
    ("category_name", CanonicalField::Category),
    ("domain", CanonicalField::Category),
    ("parameters", CanonicalField::Parameters),
    ("api_arguments", CanonicalField::Parameters),
    ("optional_parameters", CanonicalField::Parameters),
    ("required_parameters", CanonicalField::Parameters),
    ("inputs", CanonicalField::Parameters),
    ("additional_required_arguments", CanonicalField::Parameters),
    ("optional_arguments", CanonicalField::Parameters),
    ("responses", CanonicalField::Responses),
    ("response", CanonicalField::Responses),
    ("return_data", CanonicalField::Responses),
    ("outputs", CanonicalField::Responses),
    ("result_arguments", CanonicalField::Responses),
    ("template_response", CanonicalField::Responses),
    ("output", CanonicalField::Responses),
    ("method", CanonicalField::Method),
    ("api_call", CanonicalField::Method),
    ("url", CanonicalField::Method),
    ("path", CanonicalField::Method),
    ("example_usage", CanonicalField::ExampleUsage),
    ("example_code", CanonicalField::ExampleUsage),
    ("limitation", CanonicalField::Limitations),
    ("is_transactional", CanonicalField::Limitations),
    ("performance", CanonicalField::Limitations),
    (
        "python_environment_requirements",
        CanonicalField::Limitations,
    ),
    ("doc_arguments", CanonicalField::Limitations),
    // Canonical names map to themselves so canonicalization is idempotent.
    ("limitations", CanonicalField::Limitations),
];

pub fn canonical_field_for(raw_name: &str) -> Option<CanonicalField> {
    FIELD_MAPPING
        .iter()
        .find(|(raw, _)| *raw == raw_name)
        .map(|(_, f)| *f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalToolDocument {
    pub id: String,
    pub dataset: String,
    pub domain: Domain,
    /// A field fed by one raw name holds that value unchanged; a field fed by
    /// several holds `[{"source": raw_name, "value": ...}, ...]` in raw order.
    pub canonical: BTreeMap<CanonicalField, Value>,
    /// Raw names that fed each canonical field, in raw order.
    pub sources: BTreeMap<CanonicalField, Vec<String>>,
    pub extras: Body,
}

impl CanonicalToolDocument {
    /// Canonical fields followed by extras, as a raw document body.
    pub fn to_raw(&self) -> RawToolDocument {
        let mut body = Body::new();
        for (field, value) in &self.canonical {
            body.insert(field.name().to_string(), value.clone());
        }
        for (k, v) in &self.extras {
            body.insert(k.clone(), v.clone());
        }
        RawToolDocument {
            id: self.id.clone(),
            dataset: self.dataset.clone(),
            domain: self.domain,
            body,
        }
    }

    pub fn has(&self, field: CanonicalField) -> bool {
        self.canonical.get(&field).is_some_and(is_non_empty)
    }
}

fn is_non_empty(value: &Value) -> bool {
    match value {
        Value::Null => false,
        Value::String(s) => !s.trim().is_empty(),
        Value::Array(a) => !a.is_empty(),
        Value::Object(o) => !o.is_empty(),
        Value::Bool(_) | Value::Number(_) => true,
    }
}

pub fn canonicalize(raw: &RawToolDocument) -> CanonicalToolDocument {
    let mut grouped: BTreeMap<CanonicalField, Vec<(String, Value)>> = BTreeMap::new();
    let mut extras = Body::new();
    for (name, value) in &raw.body {
        match canonical_field_for(name) {
            Some(field) => grouped
                .entry(field)
                .or_default()
                .push((name.clone(), value.clone())),
            None => {
                extras.insert(name.clone(), value.clone());
            }
        }
    }
    let mut canonical = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for (field, mut entries) in grouped {
        sources.insert(field, entries.iter().map(|(n, _)| n.clone()).collect());
        let value = if entries.len() == 1 {
            entries.pop().expect("one entry").1
        } else {
            Value::Array(
                entries
                    .into_iter()
                    .map(|(source, value)| serde_json::json!({"source": source, "value": value}))
                    .collect(),
            )
        };
        canonical.insert(field, value);
    }
    CanonicalToolDocument {
        id: raw.id.clone(),
        dataset: raw.dataset.clone(),
        domain: raw.domain,
        canonical,
        sources,
        extras,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetCoverage {
    pub documents: usize,
    pub fractions: BTreeMap<CanonicalField, f64>,
}

/// Per dataset, the fraction of documents with a non-empty value for each
/// canonical field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub datasets: BTreeMap<String, DatasetCoverage>,
}

pub fn coverage_matrix(corpus: &[CanonicalToolDocument]) -> Result<CoverageReport> {
    if corpus.is_empty() {
        return Err(Error::invalid("coverage needs a non-empty corpus"));
    }
    let mut counts: BTreeMap<&str, (usize, BTreeMap<CanonicalField, usize>)> = BTreeMap::new();
    for doc in corpus {
        let (docs, fields) = counts.entry(doc.dataset.as_str()).or_default();
        *docs += 1;
        for field in CanonicalField::ALL {
            if doc.has(field) {
                *fields.entry(field).or_default() += 1;
            }
        }
    }
    let datasets = counts
        .into_iter()
        .map(|(name, (docs, fields))| {
            let fractions = CanonicalField::ALL
                .into_iter()
                .map(|f| (f, fields.get(&f).copied().unwrap_or(0) as f64 / docs as f64))
                .collect();
            (
                name.to_string(),
                DatasetCoverage {
                    documents: docs,
                    fractions,
                },
            )
        })
        .collect();
    Ok(CoverageReport { datasets })
}

impl CoverageReport {
    /// `dataset,name,description,...` header plus one row per dataset.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset");
        for f in CanonicalField::ALL {
            out.push(',');
            out.push_str(f.name());
        }
        out.push('\n');
        for (name, row) in &self.datasets {
            out.push_str(&csv_escape(name));
            for f in CanonicalField::ALL {
                out.push_str(&format!(",{:.4}", row.fractions[&f]));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainAudit {
    pub sampled: usize,
    pub flagged_incomplete: usize,
    /// Judge answers that were neither `true` nor `false`.
    pub unparsed: usize,
    pub sampled_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub seed: u64,
    pub per_domain: BTreeMap<Domain, DomainAudit>,
    pub overall_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JudgeAnswer {
    True,
    False,
    Unparsed,
}

/// Trims and case-folds; only exactly `true` or `false` are accepted.
pub fn parse_judge_answer(text: &str) -> JudgeAnswer {
    match text.trim().to_lowercase().as_str() {
        "true" => JudgeAnswer::True,
        "false" => JudgeAnswer::False,
        _ => JudgeAnswer::Unparsed,
    }
}

/// Samples `per_domain_sample` documents per domain and asks `judge` whether
/// each is complete enough for retrieval. A `false` answer flags the document.
///
/// Documents are rendered under `selection`, so the same call audits the
/// corpus before expansion (`original_only`) or after it.
pub fn audit_completeness(
    corpus: &[ToolDocument],
    per_domain_sample: usize,
    judge: &GenerationBackend,
    seed: u64,
    selection: &FieldSelection,
    max_tokens: usize,
) -> Result<AuditReport> {
    let mut rng = sampling::rng(seed);
    let mut samples: Vec<(Domain, &ToolDocument)> = Vec::new();
    let mut per_domain: BTreeMap<Domain, DomainAudit> = BTreeMap::new();
    for domain in Domain::ALL {
        let pool: Vec<&ToolDocument> = corpus.iter().filter(|d| d.domain() == domain).collect();
        if pool.is_empty() {
            continue;
        }
        if pool.len() < per_domain_sample {
            return Err(Error::invalid(format!(
                "domain {domain} has {} documents, fewer than the requested {per_domain_sample}",
                pool.len()
            )));
        }
        let picked = sampling::sample_positions(&mut rng, pool.len(), per_domain_sample);
        let entry = per_domain.entry(domain).or_default();
        for i in picked {
            entry.sampled_ids.push(pool[i].id().to_string());
            samples.push((domain, pool[i]));
        }
        entry.sampled = entry.sampled_ids.len();
    }

    let answers: Vec<(Domain, JudgeAnswer)> = samples
        .par_iter()
        .map(|(domain, doc)| {
            let prompt = audit_prompt(&render_document_text(*doc, selection));
            let text = judge
                .generate(&prompt, max_tokens)
                .map_err(|source| Error::Document {
                    id: doc.id().to_string(),
                    source,
                })?;
            Ok((*domain, parse_judge_answer(&text)))
        })
        .collect::<Result<_>>()?;

    for (domain, answer) in answers {
        let entry = per_domain.get_mut(&domain).expect("domain sampled");
        match answer {
            JudgeAnswer::False => entry.flagged_incomplete += 1,
            JudgeAnswer::Unparsed => entry.unparsed += 1,
            JudgeAnswer::True => {}
        }
    }
    let sampled: usize = per_domain.values().map(|d| d.sampled).sum();
    let flagged: usize = per_domain.values().map(|d| d.flagged_incomplete).sum();
    let overall_rate = if sampled == 0 {
        0.0
    } else {
        flagged as f64 / sampled as f64
    };
    Ok(AuditReport {
        seed,
        per_domain,
        overall_rate,
    })
}
