//! Deterministic in-process backends for tests, demos and replay.

use std::collections::HashMap;

use super::{CallError, CallLog, Embed, Generate, ScoreLogits};
use crate::retrieval::tokenize;

/// Generation driven by a closure over `(prompt, max_tokens)`.
pub struct FnGenerator<F>(F);

impl<F> FnGenerator<F>
where
    F: Fn(&str, usize) -> Result<String, CallError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self(f)
    }
}

impl<F> Generate for FnGenerator<F>
where
    F: Fn(&str, usize) -> Result<String, CallError> + Send + Sync,
{
    fn generate_once(&self, prompt: &str, max_tokens: usize) -> Result<String, CallError> {
        (self.0)(prompt, max_tokens)
    }
}

/// Answers from a fixed prompt-to-response table. Unknown prompts are a
/// protocol error so replay mismatches surface immediately.
#[derive(Clone, Debug, Default)]
pub struct TranscriptGenerator {
    responses: HashMap<String, String>,
}

impl TranscriptGenerator {
    pub fn from_pairs<P: Into<String>, R: Into<String>>(
        pairs: impl IntoIterator<Item = (P, R)>,
    ) -> Self {
        Self {
            responses: pairs
                .into_iter()
                .map(|(p, r)| (p.into(), r.into()))
                .collect(),
        }
    }

    /// Rebuilds the successful `generate` calls recorded in `log`.
    pub fn from_log(log: &CallLog) -> Self {
        let pairs = log
            .records()
            .into_iter()
            .filter(|r| r.kind == "generate")
            .filter_map(|r| {
                let prompt = r.request.get("prompt")?.as_str()?.to_string();
                let text = r.response.ok()?.get("text")?.as_str()?.to_string();
                Some((prompt, text))
            });
        Self::from_pairs(pairs)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Generate for TranscriptGenerator {
    fn generate_once(&self, prompt: &str, _max_tokens: usize) -> Result<String, CallError> {
        self.responses
            .get(prompt)
            .cloned()
            .ok_or_else(|| CallError::Protocol("prompt not present in transcript".into()))
    }
}

/// Bag-of-words embedding: each lowercase alphanumeric token is hashed
/// (FNV-1a) into one of `dimension` buckets and counted.
#[derive(Clone, Copy, Debug)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dimension];
        for token in tokenize(text) {
            v[(fnv1a(token.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        v
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl Embed for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_once(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, CallError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

pub struct FnEmbedder<F> {
    dimension: usize,
    f: F,
}

impl<F> FnEmbedder<F>
where
    F: Fn(&[String]) -> Result<Vec<Vec<f32>>, CallError> + Send + Sync,
{
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F> Embed for FnEmbedder<F>
where
    F: Fn(&[String]) -> Result<Vec<Vec<f32>>, CallError> + Send + Sync,
{
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_once(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, CallError> {
        (self.f)(texts)
    }
}

pub struct FnScorer<F>(F);

impl<F> FnScorer<F>
where
    F: Fn(&str) -> Result<(f64, f64), CallError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self(f)
    }
}

impl<F> ScoreLogits for FnScorer<F>
where
    F: Fn(&str) -> Result<(f64, f64), CallError> + Send + Sync,
{
    fn logits_once(&self, prompt: &str) -> Result<(f64, f64), CallError> {
        (self.0)(prompt)
    }
}

/// Scores by token overlap between the query and document lines of a rerank
/// prompt: `logit_true` is the number of distinct shared tokens, `logit_false`
/// is zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct OverlapScorer;

impl ScoreLogits for OverlapScorer {
    fn logits_once(&self, prompt: &str) -> Result<(f64, f64), CallError> {
        let field = |label: &str, end: &str| {
            prompt
                .find(label)
                .map(|at| {
                    let rest = &prompt[at + label.len()..];
                    rest.split(end).next().unwrap_or(rest).to_string()
                })
                .unwrap_or_default()
        };
        let query = field("Query: ", "\nTool Document: ");
        let doc = field("\nTool Document: ", "\n<|im_end|>");
        let doc_tokens: std::collections::HashSet<String> = tokenize(&doc).into_iter().collect();
        let query_tokens: std::collections::HashSet<String> =
            tokenize(&query).into_iter().collect();
        let shared = query_tokens.intersection(&doc_tokens).count();
        Ok((shared as f64, 0.0))
    }
}
