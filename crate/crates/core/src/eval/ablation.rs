//! Field ablations: grow the original document one generated field at a
//! time, or shrink the full expansion one field at a time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::{evaluate, AtK, EvalReport};
use crate::corpus::{FieldSelection, ProfileField, Query, RelevanceJudgments, ToolDocument};
use crate::error::{Error, Result};
use crate::retrieval::{retrieve_run, Retriever};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    AddOne,
    OneOut,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add_one" | "add-one" => Ok(Protocol::AddOne),
            "one_out" | "one-out" => Ok(Protocol::OneOut),
            _ => Err(Error::invalid(format!(
                "unknown protocol `{s}` (expected add_one or one_out)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "field")]
pub enum Variant {
    Original,
    Full,
    AddOne(ProfileField),
    OneOut(ProfileField),
}

impl Variant {
    /// The twelve document variants: two baselines plus five per protocol.
    pub fn all() -> Vec<Variant> {
        let mut v = vec![Variant::Original, Variant::Full];
        v.extend(ProfileField::ALL.map(Variant::AddOne));
        v.extend(ProfileField::ALL.map(Variant::OneOut));
        v
    }

    pub fn selection(self) -> FieldSelection {
        match self {
            Variant::Original => FieldSelection::original_only(),
            Variant::Full => FieldSelection::full(),
            Variant::AddOne(f) => FieldSelection::add_one(f),
            Variant::OneOut(f) => FieldSelection::one_out(f),
        }
    }

    pub fn field(self) -> Option<ProfileField> {
        match self {
            Variant::AddOne(f) | Variant::OneOut(f) => Some(f),
            _ => None,
        }
    }

    pub fn label(self) -> String {
        match self {
            Variant::Original => "original".into(),
            Variant::Full => "full".into(),
            Variant::AddOne(f) => format!("+{f}"),
            Variant::OneOut(f) => format!("-{f}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub label: String,
    pub fields: Vec<ProfileField>,
    /// False when no document in the corpus has the variant's field.
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
}

impl VariantResult {
    pub fn average(&self) -> Option<&AtK> {
        self.report.as_ref().map(|r| &r.average)
    }
}

/// Results for all twelve variants over one corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSuite {
    pub ks: Vec<usize>,
    pub variants: Vec<VariantResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub protocol: Protocol,
    pub ks: Vec<usize>,
    /// Original document, then full expansion.
    pub baselines: Vec<VariantResult>,
    /// One row per profile field.
    pub rows: Vec<VariantResult>,
}

#[derive(Clone, Debug)]
pub struct AblationSettings {
    pub ks: Vec<usize>,
    /// First-stage depth; at least the largest cutoff.
    pub depth: usize,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            ks: vec![10],
            depth: crate::retrieval::DEFAULT_K,
        }
    }
}

/// Indexes and evaluates every applicable variant.
pub fn ablation_suite(
    corpus: &[ToolDocument],
    retriever: &Retriever,
    queries: &[Query],
    qrels: &RelevanceJudgments,
    settings: &AblationSettings,
) -> Result<AblationSuite> {
    if corpus.iter().all(|d| d.profile().is_none()) {
        return Err(Error::invalid("ablation needs an expanded corpus"));
    }
    let depth = settings
        .depth
        .max(settings.ks.iter().copied().max().unwrap_or(1));
    let present: BTreeMap<ProfileField, bool> = ProfileField::ALL
        .into_iter()
        .map(|f| {
            (
                f,
                corpus
                    .iter()
                    .any(|d| d.profile().is_some_and(|p| p.has_field(f))),
            )
        })
        .collect();
    let variants = Variant::all()
        .into_iter()
        .map(|variant| {
            let applicable = variant.field().is_none_or(|f| present[&f]);
            let selection = variant.selection();
            let report = if applicable {
                log::info!("ablation variant {}", variant.label());
                let run = retrieve_run(
                    corpus,
                    &selection,
                    queries,
                    retriever,
                    depth,
                    &variant.label(),
                )?;
                Some(evaluate(&run, qrels, queries, &settings.ks)?)
            } else {
                None
            };
            Ok(VariantResult {
                variant,
                label: variant.label(),
                fields: selection.fields(),
                applicable,
                report,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationSuite {
        ks: settings.ks.clone(),
        variants,
    })
}

impl AblationSuite {
    pub fn get(&self, variant: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.variant == variant)
    }

    pub fn report(&self, protocol: Protocol) -> AblationReport {
        let pick = |v: Variant| self.get(v).cloned().expect("suite holds every variant");
        AblationReport {
            protocol,
            ks: self.ks.clone(),
            baselines: vec![pick(Variant::Original), pick(Variant::Full)],
            rows: ProfileField::ALL
                .into_iter()
                .map(|f| {
                    pick(match protocol {
                        Protocol::AddOne => Variant::AddOne(f),
                        Protocol::OneOut => Variant::OneOut(f),
                    })
                })
                .collect(),
        }
    }
}

pub fn ablate(
    protocol: Protocol,
    corpus: &[ToolDocument],
    retriever: &Retriever,
    queries: &[Query],
    qrels: &RelevanceJudgments,
    settings: &AblationSettings,
) -> Result<AblationReport> {
    Ok(ablation_suite(corpus, retriever, queries, qrels, settings)?.report(protocol))
}

impl AblationReport {
    /// Averaged N/R/C per variant, scaled by 100; `n/a` rows for fields no
    /// document carries.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16}", "variant");
        for k in &self.ks {
            out.push_str(&format!(
                "{:>8}{:>8}{:>8}",
                format!("N@{k}"),
                format!("R@{k}"),
                format!("C@{k}")
            ));
        }
        out.push('\n');
        for row in self.baselines.iter().chain(&self.rows) {
            out.push_str(&format!("{:<16}", row.label));
            for k in &self.ks {
                match row.average().and_then(|a| a.get(k)) {
                    Some(t) => out.push_str(&format!(
                        "{:>8.2}{:>8.2}{:>8.2}",
                        t.ndcg * 100.0,
                        t.recall * 100.0,
                        t.completeness * 100.0
                    )),
                    None => out.push_str(&format!("{:>8}{:>8}{:>8}", "n/a", "n/a", "n/a")),
                }
            }
            out.push('\n');
        }
        out
    }
}
