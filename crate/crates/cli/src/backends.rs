//! Builds backends for each role from the configuration.
//!
//! Besides `http(s)://` URLs, a few `mock:` URLs run without a model server:
//!
//! - generation: `mock:true` / `mock:false` answer with that word,
//!   `mock:profile` derives a small valid profile from the prompt's document
//! - embedding: `mock:hash` (feature hashing; width from `dimension`, default 256)
//! - rerank: `mock:overlap` (shared query/document tokens as the true logit)

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;
use toolde_core::backends::http::{HttpEmbedder, HttpEndpoint, HttpGenerator, HttpScorer};
use toolde_core::backends::mock::{FnGenerator, HashEmbedder, OverlapScorer};
use toolde_core::backends::{
    EmbeddingBackend, GenerationBackend, Permits, RerankBackend, RetryPolicy, DEFAULT_PERMITS,
};
use toolde_core::prompts::{API_DOCUMENT_SLOT, EXPANSION_V1};
use toolde_core::retrieval::tokenize;

use crate::config::{BackendConfig, ToolkitConfig};
use crate::CliError;

const DEFAULT_TIMEOUT_SECS: u64 = 120;
const DEFAULT_MOCK_DIMENSION: usize = 256;

pub struct BackendFactory<'a> {
    config: &'a ToolkitConfig,
    permits: Arc<Permits>,
}

impl<'a> BackendFactory<'a> {
    pub fn new(config: &'a ToolkitConfig) -> Self {
        Self {
            config,
            permits: Arc::new(Permits::new(config.permits.unwrap_or(DEFAULT_PERMITS))),
        }
    }

    fn role(&self, role: &str) -> Result<&'a BackendConfig, CliError> {
        self.config.backends.get(role).ok_or_else(|| {
            CliError::Invalid(format!(
                "no `{role}` backend configured (set [backends.{role}] url or TOOLDE_BACKEND_{}_URL)",
                role.to_uppercase()
            ))
        })
    }

    fn endpoint(b: &BackendConfig) -> HttpEndpoint {
        HttpEndpoint::new(
            b.url.clone(),
            Duration::from_secs(b.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS)),
            b.token.clone(),
        )
    }

    fn unsupported(role: &str, url: &str) -> CliError {
        CliError::Invalid(format!("backend `{role}`: unsupported url `{url}`"))
    }

    fn retry(b: &BackendConfig) -> RetryPolicy {
        let mut retry = RetryPolicy::default();
        if let Some(n) = b.max_retries {
            retry.max_retries = n;
        }
        retry
    }

    pub fn generation(&self, role: &str) -> Result<GenerationBackend, CliError> {
        let b = self.role(role)?;
        let backend = match b.url.as_str() {
            "mock:true" => {
                GenerationBackend::new(role, FnGenerator::new(|_: &str, _| Ok("true".to_string())))
            }
            "mock:false" => {
                GenerationBackend::new(role, FnGenerator::new(|_: &str, _| Ok("false".to_string())))
            }
            "mock:profile" => {
                GenerationBackend::new(role, FnGenerator::new(|p: &str, _| Ok(mock_profile(p))))
            }
            url if is_http(url) => GenerationBackend::new(role, HttpGenerator(Self::endpoint(b))),
            url => return Err(Self::unsupported(role, url)),
        };
        Ok(backend
            .with_retry(Self::retry(b))
            .with_shared_permits(Arc::clone(&self.permits)))
    }

    pub fn embedding(&self) -> Result<EmbeddingBackend, CliError> {
        let b = self.role("embed")?;
        let backend = match b.url.as_str() {
            "mock:hash" => EmbeddingBackend::new(
                "embed",
                HashEmbedder::new(b.dimension.unwrap_or(DEFAULT_MOCK_DIMENSION)),
            ),
            url if is_http(url) => {
                let dimension = b
                    .dimension
                    .ok_or_else(|| CliError::Invalid("backend `embed` needs `dimension`".into()))?;
                EmbeddingBackend::new(
                    "embed",
                    HttpEmbedder {
                        endpoint: Self::endpoint(b),
                        dimension,
                    },
                )
            }
            url => return Err(Self::unsupported("embed", url)),
        };
        Ok(backend
            .with_retry(Self::retry(b))
            .with_shared_permits(Arc::clone(&self.permits)))
    }

    pub fn rerank(&self) -> Result<RerankBackend, CliError> {
        let b = self.role("rerank")?;
        let backend = match b.url.as_str() {
            "mock:overlap" => RerankBackend::new("rerank", OverlapScorer),
            url if is_http(url) => RerankBackend::new("rerank", HttpScorer(Self::endpoint(b))),
            url => return Err(Self::unsupported("rerank", url)),
        };
        Ok(backend
            .with_retry(Self::retry(b))
            .with_shared_permits(Arc::clone(&self.permits)))
    }
}

fn is_http(url: &str) -> bool {
    url.starts_with("http://") || url.starts_with("https://")
}

/// Function from the first few words of the document, tags from its most
/// frequent longer tokens.
fn mock_profile(prompt: &str) -> String {
    let prefix = EXPANSION_V1.split(API_DOCUMENT_SLOT).next().unwrap_or("");
    let doc = prompt.strip_prefix(prefix).unwrap_or(prompt);
    let tokens = tokenize(doc);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens
        .iter()
        .filter(|t| t.len() > 3 && !t.chars().all(|c| c.is_ascii_digit()))
    {
        *counts.entry(t).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tags: Vec<&str> = ranked.iter().take(5).map(|(t, _)| *t).collect();
    let words: Vec<&str> = tokens.iter().take(8).map(String::as_str).collect();
    json!({"tool_profile": {
        "function": format!("Handles {}.", words.join(" ")),
        "tags": if tags.is_empty() { vec!["tool"] } else { tags },
        "when_to_use": "When the request matches this tool's purpose.",
    }})
    .to_string()
}
