//! JSON-over-HTTP backends.
//!
//! Wire contract, one POST per call:
//!
//! - `/generate` `{"prompt", "max_tokens"}` returns `{"text"}`
//! - `/embed` `{"texts": [...]}` returns `{"vectors": [[...]]}`
//! - `/rerank_logits` `{"prompt"}` returns `{"logit_true", "logit_false"}`

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CallError, Embed, Generate, ScoreLogits};

#[derive(Clone, Debug)]
pub struct HttpEndpoint {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpEndpoint {
    pub fn new(base_url: impl Into<String>, timeout: Duration, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent,
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        route: &str,
        body: &B,
    ) -> Result<R, CallError> {
        let url = format!("{}/{route}", self.base_url);
        let mut request = self.agent.post(&url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| CallError::Transport(format!("{url}: {e}")))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(CallError::Status(status, text));
        }
        response
            .body_mut()
            .read_json()
            .map_err(|e| CallError::Protocol(format!("{url}: {e}")))
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

#[derive(Serialize)]
struct RerankRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct RerankResponse {
    logit_true: f64,
    logit_false: f64,
}

pub struct HttpGenerator(pub HttpEndpoint);

impl Generate for HttpGenerator {
    fn generate_once(&self, prompt: &str, max_tokens: usize) -> Result<String, CallError> {
        let r: GenerateResponse = self
            .0
            .post("generate", &GenerateRequest { prompt, max_tokens })?;
        Ok(r.text)
    }
}

pub struct HttpEmbedder {
    pub endpoint: HttpEndpoint,
    pub dimension: usize,
}

impl Embed for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_once(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, CallError> {
        let r: EmbedResponse = self.endpoint.post("embed", &EmbedRequest { texts })?;
        Ok(r.vectors)
    }
}

pub struct HttpScorer(pub HttpEndpoint);

impl ScoreLogits for HttpScorer {
    fn logits_once(&self, prompt: &str) -> Result<(f64, f64), CallError> {
        let r: RerankResponse = self.0.post("rerank_logits", &RerankRequest { prompt })?;
        Ok((r.logit_true, r.logit_false))
    }
}
