//! Human validation of generated profiles: review batches, the four-point
//! checklist, judgments and their export.
//!
//! The HTTP service lives in its own crate; everything here is plain data
//! plus the validation rules the service enforces.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Body, Domain, Provenance, ToolProfile};
use crate::error::{Error, Result};

/// One document under review: its untouched original and the generated profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub item_id: String,
    pub doc_id: String,
    pub dataset: String,
    pub domain: Domain,
    pub original: Body,
    pub profile: ToolProfile,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewBatch {
    pub batch_id: String,
    pub seed: u64,
    pub items: Vec<ReviewEntry>,
}

impl ReviewBatch {
    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.item_id.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_id.is_empty() {
            return Err(Error::invalid("batch id must be non-empty"));
        }
        let mut seen = BTreeSet::new();
        for item in &self.items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(Error::DuplicateId(item.item_id.clone()));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let batch: ReviewBatch = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        batch.validate()?;
        Ok(batch)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checklist {
    pub faithfulness: bool,
    pub completeness: bool,
    pub hallucination_free: bool,
    pub consistency: bool,
}

impl Checklist {
    pub const ALL_TRUE: Checklist = Checklist {
        faithfulness: true,
        completeness: true,
        hallucination_free: true,
        consistency: true,
    };

    pub fn all_pass(&self) -> bool {
        self.faithfulness && self.completeness && self.hallucination_free && self.consistency
    }
}

/// Annotator-facing wording of each checklist key.
pub const CHECKLIST_QUESTIONS: [(&str, &str); 4] = [
    (
        "faithfulness",
        "Does every statement in the profile agree with what the original documentation says?",
    ),
    (
        "completeness",
        "Does the profile cover the tool's main purpose and the situations it is meant for?",
    ),
    (
        "hallucination_free",
        "Is the profile free of parameters, behaviours or constraints that the original never mentions?",
    ),
    (
        "consistency",
        "Do the function, tags, usage guidance and limitation agree with each other?",
    ),
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    #[default]
    Pending,
    Pass,
    Fail,
}

/// A validated judgment as submitted by an annotator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgmentSubmission {
    pub verdict: Verdict,
    pub checklist: Checklist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub annotator: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl JudgmentSubmission {
    /// Checks a raw request body, collecting every problem rather than the first.
    pub fn from_json(body: &Value) -> std::result::Result<Self, Vec<FieldError>> {
        let Some(obj) = body.as_object() else {
            return Err(vec![FieldError::new("body", "expected a JSON object")]);
        };
        let mut errors = Vec::new();

        let verdict = match obj.get("verdict").and_then(Value::as_str) {
            Some("pass") => Some(Verdict::Pass),
            Some("fail") => Some(Verdict::Fail),
            Some(other) => {
                errors.push(FieldError::new(
                    "verdict",
                    format!("must be pass or fail, got `{other}`"),
                ));
                None
            }
            None => {
                errors.push(FieldError::new("verdict", "required (pass or fail)"));
                None
            }
        };

        let mut checklist = Checklist::default();
        match obj.get("checklist").and_then(Value::as_object) {
            None => errors.push(FieldError::new(
                "checklist",
                "required object with four booleans",
            )),
            Some(list) => {
                for (key, _) in CHECKLIST_QUESTIONS {
                    let field = format!("checklist.{key}");
                    match list.get(key).and_then(Value::as_bool) {
                        None => errors.push(FieldError::new(&field, "required boolean")),
                        Some(v) => {
                            let slot = match key {
                                "faithfulness" => &mut checklist.faithfulness,
                                "completeness" => &mut checklist.completeness,
                                "hallucination_free" => &mut checklist.hallucination_free,
                                _ => &mut checklist.consistency,
                            };
                            *slot = v;
                        }
                    }
                }
            }
        }

        let annotator = match obj.get("annotator").and_then(Value::as_str).map(str::trim) {
            Some(a) if !a.is_empty() => a.to_string(),
            _ => {
                errors.push(FieldError::new("annotator", "required non-empty string"));
                String::new()
            }
        };

        let note = match obj.get("note") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                errors.push(FieldError::new("note", "must be a string"));
                None
            }
        };

        if verdict == Some(Verdict::Pass) && errors.is_empty() && !checklist.all_pass() {
            errors.push(FieldError::new(
                "verdict",
                "pass requires every checklist item to be true",
            ));
        }

        match (verdict, errors.is_empty()) {
            (Some(verdict), true) => Ok(Self {
                verdict,
                checklist,
                note,
                annotator,
            }),
            _ => Err(errors),
        }
    }
}

/// A judgment as persisted and exported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub batch_id: String,
    pub item_id: String,
    pub verdict: Verdict,
    pub checklist: Checklist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub annotator: String,
    /// Unix milliseconds assigned by the service.
    pub timestamp_ms: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub pending: usize,
    pub pass: usize,
    pub fail: usize,
}

impl Progress {
    pub fn judged(&self) -> usize {
        self.pass + self.fail
    }
}

/// Judged records sorted by item id, plus the still-pending ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgmentExport {
    pub batch_id: String,
    pub records: Vec<JudgmentRecord>,
    pub pending: Vec<String>,
}

impl JudgmentExport {
    /// Builds an export from a batch and whichever judgments exist for it.
    /// Records for ids outside the batch are ignored.
    pub fn build<'a>(
        batch: &ReviewBatch,
        judgments: impl IntoIterator<Item = &'a JudgmentRecord>,
    ) -> Self {
        let ids: BTreeSet<&str> = batch.item_ids().collect();
        let mut by_item: BTreeMap<&str, &JudgmentRecord> = BTreeMap::new();
        for record in judgments {
            if record.batch_id == batch.batch_id && ids.contains(record.item_id.as_str()) {
                by_item.entry(record.item_id.as_str()).or_insert(record);
            }
        }
        Self {
            batch_id: batch.batch_id.clone(),
            records: by_item.values().map(|r| (*r).clone()).collect(),
            pending: ids
                .iter()
                .filter(|id| !by_item.contains_key(*id))
                .map(|id| id.to_string())
                .collect(),
        }
    }

    pub fn progress(&self) -> Progress {
        let pass = self
            .records
            .iter()
            .filter(|r| r.verdict == Verdict::Pass)
            .count();
        Progress {
            total: self.records.len() + self.pending.len(),
            pending: self.pending.len(),
            pass,
            fail: self.records.len() - pass,
        }
    }

    pub fn summary(&self) -> HumanValidation {
        let p = self.progress();
        HumanValidation {
            batch_id: self.batch_id.clone(),
            sampled: p.total,
            judged: p.judged(),
            passed: p.pass,
            failed: p.fail,
            pending: p.pending,
            failed_ids: self
                .records
                .iter()
                .filter(|r| r.verdict == Verdict::Fail)
                .map(|r| r.item_id.clone())
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Outcome of human validation as folded into the pipeline report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanValidation {
    pub batch_id: String,
    pub sampled: usize,
    pub judged: usize,
    pub passed: usize,
    pub failed: usize,
    pub pending: usize,
    pub failed_ids: Vec<String>,
}
