//! Documents, queries, judgments and runs, plus their on-disk formats.
//!
//! Corpus and query files are JSONL. Qrels use the four-column TREC layout
//! and runs the six-column `qid Q0 docid rank score tag` layout.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Raw documentation fields in their original insertion order.
pub type Body = Map<String, Value>;

/// Key under which the generated profile is stored in an expanded document.
pub const PROFILE_KEY: &str = "tool_profile";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Web,
    Code,
    Customized,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Web, Domain::Code, Domain::Customized];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Web => "web",
            Domain::Code => "code",
            Domain::Customized => "customized",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Domain::Web => "Web",
            Domain::Code => "Code",
            Domain::Customized => "Customized",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "web" => Ok(Domain::Web),
            "code" => Ok(Domain::Code),
            "customized" => Ok(Domain::Customized),
            _ => Err(Error::UnknownDomain(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawToolDocument {
    pub id: String,
    pub dataset: String,
    pub domain: Domain,
    pub body: Body,
}

impl RawToolDocument {
    pub fn new(
        id: impl Into<String>,
        dataset: impl Into<String>,
        domain: Domain,
        body: Body,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("document id must be non-empty"));
        }
        Ok(Self {
            id,
            dataset: dataset.into(),
            domain,
            body,
        })
    }
}

/// One generated usage example. Either half may be missing in model output.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleUsage {
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub api_call: String,
}

/// A validated generated profile.
///
/// `function` and `tags` are always present; tags are lowercased, trimmed and
/// deduplicated on construction. At most two usage examples are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileDraft")]
pub struct ToolProfile {
    function: String,
    tags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    when_to_use: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    example_usage: Option<Vec<ExampleUsage>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    limitation: Option<String>,
}

pub const MAX_EXAMPLE_USAGE: usize = 2;

impl ToolProfile {
    pub fn new(
        function: impl Into<String>,
        tags: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self> {
        let function = function.into();
        if function.trim().is_empty() {
            return Err(Error::InvalidProfile("function must be non-empty".into()));
        }
        let tags = normalize_tags(tags.into_iter().map(Into::into));
        if tags.is_empty() {
            return Err(Error::InvalidProfile("tags must be non-empty".into()));
        }
        Ok(Self {
            function,
            tags,
            when_to_use: None,
            example_usage: None,
            limitation: None,
        })
    }

    pub fn with_when_to_use(mut self, text: impl Into<String>) -> Self {
        self.when_to_use = Some(text.into());
        self
    }

    pub fn with_limitation(mut self, text: impl Into<String>) -> Self {
        self.limitation = Some(text.into());
        self
    }

    pub fn with_example_usage(mut self, examples: Vec<ExampleUsage>) -> Result<Self> {
        if examples.len() > MAX_EXAMPLE_USAGE {
            return Err(Error::InvalidProfile(format!(
                "example_usage holds {} entries, at most {MAX_EXAMPLE_USAGE} allowed",
                examples.len()
            )));
        }
        self.example_usage = Some(examples);
        Ok(self)
    }

    pub fn function(&self) -> &str {
        &self.function
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn when_to_use(&self) -> Option<&str> {
        self.when_to_use.as_deref()
    }

    pub fn example_usage(&self) -> Option<&[ExampleUsage]> {
        self.example_usage.as_deref()
    }

    pub fn limitation(&self) -> Option<&str> {
        self.limitation.as_deref()
    }

    pub fn has_field(&self, field: ProfileField) -> bool {
        match field {
            ProfileField::Function | ProfileField::Tags => true,
            ProfileField::WhenToUse => self.when_to_use.is_some(),
            ProfileField::ExampleUsage => self.example_usage.is_some(),
            ProfileField::Limitation => self.limitation.is_some(),
        }
    }

    /// Profile as a JSON object restricted to `selection`, in fixed field order.
    pub fn to_json_filtered(&self, selection: &FieldSelection) -> Map<String, Value> {
        let mut out = Map::new();
        for field in ProfileField::ALL {
            if !selection.contains(field) {
                continue;
            }
            let value = match field {
                ProfileField::Function => Some(Value::String(self.function.clone())),
                ProfileField::Tags => Some(Value::from(self.tags.clone())),
                ProfileField::WhenToUse => self.when_to_use.clone().map(Value::String),
                ProfileField::ExampleUsage => self
                    .example_usage
                    .as_ref()
                    .map(|ex| serde_json::to_value(ex).expect("examples serialize")),
                ProfileField::Limitation => self.limitation.clone().map(Value::String),
            };
            if let Some(value) = value {
                out.insert(field.name().to_string(), value);
            }
        }
        out
    }

    pub fn to_json(&self) -> Map<String, Value> {
        self.to_json_filtered(&FieldSelection::full())
    }
}

pub(crate) fn normalize_tags(tags: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for tag in tags {
        let tag = tag.trim().to_lowercase();
        if !tag.is_empty() && seen.insert(tag.clone()) {
            out.push(tag);
        }
    }
    out
}

/// Lenient form of a profile as parsed from model output. Every field is
/// optional so that rule checks can report what is missing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileDraft {
    #[serde(default, alias = "function_description")]
    pub function: Option<String>,
    #[serde(default)]
    pub tags: Option<Vec<String>>,
    #[serde(default)]
    pub when_to_use: Option<String>,
    #[serde(default)]
    pub example_usage: Option<Vec<ExampleUsage>>,
    #[serde(default, alias = "limitations")]
    pub limitation: Option<String>,
}

impl TryFrom<ProfileDraft> for ToolProfile {
    type Error = Error;

    fn try_from(draft: ProfileDraft) -> Result<Self> {
        let mut profile = ToolProfile::new(
            draft.function.unwrap_or_default(),
            draft.tags.unwrap_or_default(),
        )?;
        profile.when_to_use = draft.when_to_use;
        profile.limitation = draft.limitation;
        if let Some(examples) = draft.example_usage {
            profile = profile.with_example_usage(examples)?;
        }
        Ok(profile)
    }
}

/// The five generated profile fields, in serialization order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileField {
    Function,
    Tags,
    WhenToUse,
    ExampleUsage,
    Limitation,
}

impl ProfileField {
    pub const ALL: [ProfileField; 5] = [
        ProfileField::Function,
        ProfileField::Tags,
        ProfileField::WhenToUse,
        ProfileField::ExampleUsage,
        ProfileField::Limitation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileField::Function => "function",
            ProfileField::Tags => "tags",
            ProfileField::WhenToUse => "when_to_use",
            ProfileField::ExampleUsage => "example_usage",
            ProfileField::Limitation => "limitation",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for ProfileField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProfileField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProfileField::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::UnknownField(s.to_string()))
    }
}

/// Which profile fields are rendered alongside the original document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldSelection(u8);

impl FieldSelection {
    pub fn original_only() -> Self {
        Self(0)
    }

    pub fn full() -> Self {
        Self::from_fields(ProfileField::ALL)
    }

    /// Everything except `example_usage`, the view used for retrieval.
    pub fn default_retrieval() -> Self {
        Self::one_out(ProfileField::ExampleUsage)
    }

    pub fn add_one(field: ProfileField) -> Self {
        Self(field.bit())
    }

    pub fn one_out(field: ProfileField) -> Self {
        Self(Self::full().0 & !field.bit())
    }

    pub fn from_fields(fields: impl IntoIterator<Item = ProfileField>) -> Self {
        Self(fields.into_iter().fold(0, |acc, f| acc | f.bit()))
    }

    pub fn contains(&self, field: ProfileField) -> bool {
        self.0 & field.bit() != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn fields(&self) -> Vec<ProfileField> {
        ProfileField::ALL
            .into_iter()
            .filter(|f| self.contains(*f))
            .collect()
    }
}

impl Default for FieldSelection {
    fn default() -> Self {
        Self::default_retrieval()
    }
}

impl fmt::Display for FieldSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("original");
        }
        let names: Vec<_> = self.fields().iter().map(|f| f.name()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for FieldSelection {
    type Err = Error;

    /// Accepts `original`, `full`, `default`, `add_one:<field>`,
    /// `one_out:<field>` or a comma-separated field list.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "original" | "none" | "" => return Ok(Self::original_only()),
            "full" | "all" => return Ok(Self::full()),
            "default" | "retrieval" => return Ok(Self::default_retrieval()),
            _ => {}
        }
        if let Some(field) = s.strip_prefix("add_one:") {
            return Ok(Self::add_one(field.parse()?));
        }
        if let Some(field) = s.strip_prefix("one_out:") {
            return Ok(Self::one_out(field.parse()?));
        }
        let fields = s
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<ProfileField>>>()?;
        Ok(Self::from_fields(fields))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Step1Pass,
    Step3Refined,
}

/// Original documentation plus a validated generated profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedDocument {
    pub original: RawToolDocument,
    pub profile: ToolProfile,
    pub provenance: Provenance,
}

impl ExpandedDocument {
    /// Body of the expanded document: every original key unchanged, followed
    /// by `tool_profile`.
    pub fn body(&self) -> Body {
        let mut body = self.original.body.clone();
        body.insert(
            PROFILE_KEY.to_string(),
            Value::Object(self.profile.to_json()),
        );
        body
    }
}

/// Union of an original document and its generated profile.
pub fn merge_expansion(
    original: RawToolDocument,
    profile: ToolProfile,
) -> Result<ExpandedDocument> {
    if original.body.contains_key(PROFILE_KEY) {
        return Err(Error::invalid(format!(
            "document `{}` already carries a `{PROFILE_KEY}` key",
            original.id
        )));
    }
    if profile.function.trim().is_empty() || profile.tags.is_empty() {
        return Err(Error::InvalidProfile(
            "function and tags are required".into(),
        ));
    }
    if profile
        .example_usage
        .as_ref()
        .is_some_and(|ex| ex.len() > MAX_EXAMPLE_USAGE)
    {
        return Err(Error::InvalidProfile(
            "too many example_usage entries".into(),
        ));
    }
    Ok(ExpandedDocument {
        original,
        profile,
        provenance: Provenance::Step1Pass,
    })
}

/// A corpus entry that may or may not have been expanded.
#[derive(Clone, Debug, PartialEq)]
pub enum ToolDocument {
    Original(RawToolDocument),
    Expanded(ExpandedDocument),
}

impl ToolDocument {
    pub fn original(&self) -> &RawToolDocument {
        match self {
            ToolDocument::Original(doc) => doc,
            ToolDocument::Expanded(doc) => &doc.original,
        }
    }

    pub fn id(&self) -> &str {
        &self.original().id
    }

    pub fn domain(&self) -> Domain {
        self.original().domain
    }

    pub fn profile(&self) -> Option<&ToolProfile> {
        match self {
            ToolDocument::Original(_) => None,
            ToolDocument::Expanded(doc) => Some(&doc.profile),
        }
    }
}

impl From<RawToolDocument> for ToolDocument {
    fn from(doc: RawToolDocument) -> Self {
        ToolDocument::Original(doc)
    }
}

impl From<ExpandedDocument> for ToolDocument {
    fn from(doc: ExpandedDocument) -> Self {
        ToolDocument::Expanded(doc)
    }
}

/// Anything that can be rendered to retrieval text.
pub trait Renderable {
    fn body(&self) -> &Body;
    fn profile(&self) -> Option<&ToolProfile>;
}

impl Renderable for RawToolDocument {
    fn body(&self) -> &Body {
        &self.body
    }

    fn profile(&self) -> Option<&ToolProfile> {
        None
    }
}

impl Renderable for ExpandedDocument {
    fn body(&self) -> &Body {
        &self.original.body
    }

    fn profile(&self) -> Option<&ToolProfile> {
        Some(&self.profile)
    }
}

impl Renderable for ToolDocument {
    fn body(&self) -> &Body {
        &self.original().body
    }

    fn profile(&self) -> Option<&ToolProfile> {
        ToolDocument::profile(self)
    }
}

/// Deterministic compact JSON text of a document.
///
/// Original keys keep their insertion order. Profile fields are filtered by
/// `selection` and emitted in fixed order; when nothing survives the filter
/// the `tool_profile` key is omitted, so an empty selection renders exactly
/// the original document.
pub fn render_document_text<D: Renderable + ?Sized>(doc: &D, selection: &FieldSelection) -> String {
    let mut body = doc.body().clone();
    if let Some(profile) = doc.profile() {
        let filtered = profile.to_json_filtered(selection);
        if !filtered.is_empty() {
            body.insert(PROFILE_KEY.to_string(), Value::Object(filtered));
        }
    }
    serde_json::to_string(&Value::Object(body)).expect("JSON maps always serialize")
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    id: String,
    dataset: String,
    domain: String,
    doc: Body,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

fn read_jsonl<T, F>(path: &Path, mut f: F) -> Result<Vec<T>>
where
    F: FnMut(usize, &str) -> std::result::Result<T, String>,
{
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(f(i + 1, &line).map_err(|msg| Error::parse(path, i + 1, msg))?);
    }
    Ok(out)
}

fn parse_corpus_line(line: &str) -> std::result::Result<ToolDocument, String> {
    let parsed: CorpusLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let domain: Domain = parsed.domain.parse().map_err(|e: Error| e.to_string())?;
    let mut body = parsed.doc;
    let profile = body.shift_remove(PROFILE_KEY);
    let original =
        RawToolDocument::new(parsed.id, parsed.dataset, domain, body).map_err(|e| e.to_string())?;
    match profile {
        None => Ok(ToolDocument::Original(original)),
        Some(value) => {
            let profile: ToolProfile =
                serde_json::from_value(value).map_err(|e| format!("tool_profile: {e}"))?;
            let mut expanded = merge_expansion(original, profile).map_err(|e| e.to_string())?;
            expanded.provenance = parsed.provenance.unwrap_or_default();
            Ok(ToolDocument::Expanded(expanded))
        }
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// Loads a raw corpus. Any `tool_profile` key is kept as an ordinary field.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawToolDocument>> {
    let path = path.as_ref();
    let docs = read_jsonl(path, |_, line| {
        let parsed: CorpusLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let domain: Domain = parsed.domain.parse().map_err(|e: Error| e.to_string())?;
        RawToolDocument::new(parsed.id, parsed.dataset, domain, parsed.doc)
            .map_err(|e| e.to_string())
    })?;
    check_unique(docs.iter().map(|d| d.id.as_str()))?;
    Ok(docs)
}

/// Loads a corpus where lines may carry a `tool_profile` inside `doc`.
pub fn load_tool_documents(path: impl AsRef<Path>) -> Result<Vec<ToolDocument>> {
    let docs = read_jsonl(path.as_ref(), |_, line| parse_corpus_line(line))?;
    check_unique(docs.iter().map(|d| d.id()))?;
    Ok(docs)
}

pub fn corpus_line(doc: &ToolDocument) -> String {
    let (body, provenance) = match doc {
        ToolDocument::Original(raw) => (raw.body.clone(), None),
        ToolDocument::Expanded(exp) => (exp.body(), Some(exp.provenance)),
    };
    let original = doc.original();
    let line = CorpusLine {
        id: original.id.clone(),
        dataset: original.dataset.clone(),
        domain: original.domain.as_str().to_string(),
        doc: body,
        provenance,
    };
    serde_json::to_string(&line).expect("corpus line serializes")
}

pub fn write_tool_documents<'a>(
    docs: impl IntoIterator<Item = &'a ToolDocument>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for doc in docs {
        writeln!(out, "{}", corpus_line(doc))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub qid: String,
    pub domain: Domain,
    #[serde(rename = "query")]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    /// Source dataset, used only for dataset-macro averaging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

/// How a query's instruction is combined with its text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionMode {
    #[default]
    Concat,
    QueryOnly,
}

impl FromStr for InstructionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(InstructionMode::Concat),
            "query_only" | "query-only" => Ok(InstructionMode::QueryOnly),
            _ => Err(Error::invalid(format!("unknown instruction mode `{s}`"))),
        }
    }
}

impl Query {
    /// Instruction, newline, query when concatenating and an instruction exists.
    pub fn text_for(&self, mode: InstructionMode) -> String {
        match (mode, self.instruction.as_deref()) {
            (InstructionMode::Concat, Some(instr)) if !instr.trim().is_empty() => {
                format!("{instr}\n{}", self.text)
            }
            _ => self.text.clone(),
        }
    }
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let queries = read_jsonl(path.as_ref(), |_, line| {
        let q: Query = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if q.qid.is_empty() {
            return Err("qid must be non-empty".to_string());
        }
        Ok(q)
    })?;
    check_unique(queries.iter().map(|q| q.qid.as_str()))?;
    Ok(queries)
}

pub fn write_queries(queries: &[Query], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for q in queries {
        writeln!(out, "{}", serde_json::to_string(q)?)?;
    }
    out.flush()?;
    Ok(())
}

/// Binary relevance: qid to the set of relevant document ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgments(BTreeMap<String, BTreeSet<String>>);

impl RelevanceJudgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: impl Into<String>, doc_id: impl Into<String>) {
        self.0.entry(qid.into()).or_default().insert(doc_id.into());
    }

    pub fn gold(&self, qid: &str) -> Option<&BTreeSet<String>> {
        self.0.get(qid)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, String)> for RelevanceJudgments {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        let mut qrels = Self::new();
        for (q, d) in iter {
            qrels.insert(q, d);
        }
        qrels
    }
}

/// Parses `qid iter docid rel` lines. Entries with rel <= 0 are dropped.
pub fn parse_qrels(text: &str, origin: &Path) -> Result<RelevanceJudgments> {
    let mut qrels = RelevanceJudgments::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let rel: f64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("bad relevance `{}`", cols[3])))?;
        if rel > 0.0 {
            qrels.insert(cols[0], cols[2]);
        }
    }
    Ok(qrels)
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<RelevanceJudgments> {
    let path = path.as_ref();
    parse_qrels(&std::fs::read_to_string(path)?, path)
}

pub fn write_qrels(qrels: &RelevanceJudgments, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (qid, docs) in qrels.iter() {
        for doc in docs {
            writeln!(out, "{qid} 0 {doc} 1")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-query ranked candidates produced by one system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedRun {
    pub tag: String,
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl RankedRun {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            entries: BTreeMap::new(),
        }
    }

    /// Adds a ranking, rejecting increasing scores or repeated doc ids.
    pub fn insert(&mut self, qid: impl Into<String>, ranking: Vec<(String, f64)>) -> Result<()> {
        let qid = qid.into();
        let mut seen = HashSet::new();
        for (i, (doc, score)) in ranking.iter().enumerate() {
            if !seen.insert(doc.as_str()) {
                return Err(Error::invalid(format!(
                    "run for `{qid}` repeats doc `{doc}`"
                )));
            }
            if score.is_nan() {
                return Err(Error::invalid(format!("run for `{qid}` has a NaN score")));
            }
            if i > 0 && ranking[i - 1].1 < *score {
                return Err(Error::invalid(format!(
                    "run for `{qid}` has increasing scores at rank {}",
                    i + 1
                )));
            }
        }
        self.entries.insert(qid, ranking);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&[(String, f64)]> {
        self.entries.get(qid).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<(String, f64)>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (qid, ranking) in &self.entries {
            for (rank, (doc, score)) in ranking.iter().enumerate() {
                // Debug formatting is the shortest representation that round-trips.
                out.push_str(&format!(
                    "{qid} Q0 {doc} {} {score:?} {}\n",
                    rank + 1,
                    self.tag
                ));
            }
        }
        out
    }
}

pub fn write_run(run: &RankedRun, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, run.to_trec())?;
    Ok(())
}

pub fn parse_run(text: &str, origin: &Path) -> Result<RankedRun> {
    let mut rows: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    let mut tag: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("bad rank `{}`", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("bad score `{}`", cols[4])))?;
        match &tag {
            None => tag = Some(cols[5].to_string()),
            Some(t) if t != cols[5] => {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("mixed run tags `{t}` and `{}`", cols[5]),
                ));
            }
            _ => {}
        }
        rows.entry(cols[0].to_string())
            .or_default()
            .push((rank, cols[2].to_string(), score));
    }
    let mut run = RankedRun::new(tag.unwrap_or_default());
    for (qid, mut list) in rows {
        list.sort_by_key(|(rank, _, _)| *rank);
        run.insert(qid, list.into_iter().map(|(_, d, s)| (d, s)).collect())
            .map_err(|e| Error::parse(origin, 0, e))?;
    }
    Ok(run)
}

pub fn load_run(path: impl AsRef<Path>) -> Result<RankedRun> {
    let path = path.as_ref();
    parse_run(&std::fs::read_to_string(path)?, path)
}
