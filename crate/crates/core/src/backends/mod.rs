//! Model backend contracts.
//!
//! Three roles are supported: text generation, embedding and rerank-logit
//! scoring. Each role is a small single-attempt trait ([`Generate`],
//! [`Embed`], [`ScoreLogits`]); [`Backend`] wraps an implementation with the
//! retry policy, an in-flight permit limit and a shared call log.

mod calllog;
pub mod mock;
mod permits;

#[cfg(feature = "http")]
pub mod http;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::Rng;
use serde_json::json;
use thiserror::Error;

pub use self::calllog::{CallLog, CallRecord};
pub use self::permits::Permits;

/// Failure of a single attempt.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CallError {
    /// Connection, timeout or similar. Retried.
    #[error("transport: {0}")]
    Transport(String),
    /// Non-2xx HTTP response. Retried.
    #[error("HTTP status {0}: {1}")]
    Status(u16, String),
    /// Malformed response. Not retried.
    #[error("protocol: {0}")]
    Protocol(String),
}

impl CallError {
    fn retryable(&self) -> bool {
        !matches!(self, CallError::Protocol(_))
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("backend `{backend}` unavailable after {attempts} attempts: {last}")]
    Unavailable {
        backend: String,
        attempts: u32,
        last: CallError,
    },
    #[error("backend `{backend}` protocol error: {message}")]
    Protocol { backend: String, message: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Exponential backoff: `initial`, then times `factor` per attempt, with up
/// to 50% random jitter added when `jitter` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            factor: 2.0,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests and mocks.
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            initial_backoff: Duration::ZERO,
            factor: 1.0,
            jitter: false,
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let base = self.initial_backoff.as_secs_f64() * self.factor.powi(retry as i32);
        let scale = if self.jitter {
            1.0 + jitter_fraction()
        } else {
            1.0
        };
        Duration::from_secs_f64(base * scale)
    }
}

fn jitter_fraction() -> f64 {
    // Seeded from a counter rather than OS entropy; only the spread matters.
    static STATE: AtomicU64 = AtomicU64::new(0x9e37_79b9_7f4a_7c15);
    let seed = STATE.fetch_add(0x9e37_79b9_7f4a_7c15, Ordering::Relaxed);
    crate::sampling::rng(seed).gen_range(0.0..0.5)
}

pub trait Generate: Send + Sync {
    fn generate_once(&self, prompt: &str, max_tokens: usize) -> Result<String, CallError>;
}

pub trait Embed: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_once(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, CallError>;
}

pub trait ScoreLogits: Send + Sync {
    fn logits_once(&self, prompt: &str) -> Result<(f64, f64), CallError>;
}

/// A backend implementation plus retry, concurrency and logging policy.
pub struct Backend<T: ?Sized> {
    name: String,
    inner: Arc<T>,
    retry: RetryPolicy,
    permits: Arc<Permits>,
    log: Arc<CallLog>,
}

impl<T: ?Sized> Clone for Backend<T> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            inner: Arc::clone(&self.inner),
            retry: self.retry,
            permits: Arc::clone(&self.permits),
            log: Arc::clone(&self.log),
        }
    }
}

impl<T: ?Sized> std::fmt::Debug for Backend<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("name", &self.name)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

pub type GenerationBackend = Backend<dyn Generate>;
pub type EmbeddingBackend = Backend<dyn Embed>;
pub type RerankBackend = Backend<dyn ScoreLogits>;

pub const DEFAULT_PERMITS: usize = 8;

impl<T: ?Sized> Backend<T> {
    fn wrap(name: impl Into<String>, inner: Arc<T>) -> Self {
        Self {
            name: name.into(),
            inner,
            retry: RetryPolicy::default(),
            permits: Arc::new(Permits::new(DEFAULT_PERMITS)),
            log: Arc::new(CallLog::new()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_permits(mut self, permits: usize) -> Self {
        self.permits = Arc::new(Permits::new(permits));
        self
    }

    /// Draws from a budget shared with other backends instead of a private one.
    pub fn with_shared_permits(mut self, permits: Arc<Permits>) -> Self {
        self.permits = permits;
        self
    }

    pub fn with_log(mut self, log: Arc<CallLog>) -> Self {
        self.log = log;
        self
    }

    pub fn log(&self) -> &Arc<CallLog> {
        &self.log
    }

    pub fn retry(&self) -> RetryPolicy {
        self.retry
    }

    fn call<R>(
        &self,
        kind: &'static str,
        request: serde_json::Value,
        attempt: impl Fn(&T) -> Result<R, CallError>,
        describe: impl Fn(&R) -> serde_json::Value,
    ) -> Result<R, BackendError> {
        let _permit = self.permits.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match attempt(&self.inner) {
                Ok(value) => {
                    self.log
                        .record(&self.name, kind, request, Ok(describe(&value)));
                    return Ok(value);
                }
                Err(CallError::Protocol(message)) => {
                    self.log
                        .record(&self.name, kind, request, Err(message.clone()));
                    return Err(BackendError::Protocol {
                        backend: self.name.clone(),
                        message,
                    });
                }
                Err(err) if err.retryable() && attempts <= self.retry.max_retries => {
                    let delay = self.retry.delay(attempts - 1);
                    ::log::warn!(
                        "{} {kind} attempt {attempts} failed: {err}; retrying in {delay:?}",
                        self.name
                    );
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                }
                Err(last) => {
                    self.log
                        .record(&self.name, kind, request, Err(last.to_string()));
                    return Err(BackendError::Unavailable {
                        backend: self.name.clone(),
                        attempts,
                        last,
                    });
                }
            }
        }
    }
}

impl Backend<dyn Generate> {
    pub fn new(name: impl Into<String>, inner: impl Generate + 'static) -> Self {
        Self::wrap(name, Arc::new(inner) as Arc<dyn Generate>)
    }

    pub fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::Precondition(
                "prompt must be non-empty".into(),
            ));
        }
        self.call(
            "generate",
            json!({"prompt": prompt, "max_tokens": max_tokens}),
            |b| b.generate_once(prompt, max_tokens),
            |text| json!({"text": text}),
        )
    }
}

impl Backend<dyn Embed> {
    pub fn new(name: impl Into<String>, inner: impl Embed + 'static) -> Self {
        Self::wrap(name, Arc::new(inner) as Arc<dyn Embed>)
    }

    pub fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    /// One vector per text, in input order, each of the declared dimension.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::Precondition(
                "embed needs at least one text".into(),
            ));
        }
        let dim = self.dimension();
        self.call(
            "embed",
            json!({"texts": texts}),
            |b| {
                let vectors = b.embed_once(texts)?;
                if vectors.len() != texts.len() {
                    return Err(CallError::Protocol(format!(
                        "expected {} vectors, got {}",
                        texts.len(),
                        vectors.len()
                    )));
                }
                if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
                    return Err(CallError::Protocol(format!(
                        "expected dimension {dim}, got {}",
                        bad.len()
                    )));
                }
                if vectors.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(CallError::Protocol("non-finite embedding component".into()));
                }
                Ok(vectors)
            },
            |vectors| json!({"vectors": vectors}),
        )
    }
}

impl Backend<dyn ScoreLogits> {
    pub fn new(name: impl Into<String>, inner: impl ScoreLogits + 'static) -> Self {
        Self::wrap(name, Arc::new(inner) as Arc<dyn ScoreLogits>)
    }

    /// Raw `(logit_true, logit_false)`; both guaranteed finite.
    pub fn rerank_logits(&self, prompt: &str) -> Result<(f64, f64), BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::Precondition(
                "prompt must be non-empty".into(),
            ));
        }
        self.call(
            "rerank_logits",
            json!({"prompt": prompt}),
            |b| {
                let (t, f) = b.logits_once(prompt)?;
                if !t.is_finite() || !f.is_finite() {
                    return Err(CallError::Protocol(format!("non-finite logits ({t}, {f})")));
                }
                Ok((t, f))
            },
            |(t, f)| json!({"logit_true": t, "logit_false": f}),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn scripted_generation() {
        let backend = GenerationBackend::new("m", TranscriptGenerator::from_pairs([("p", "ok")]));
        assert_eq!(backend.generate("p", 16).unwrap(), "ok");
        assert!(matches!(
            backend.generate("", 16),
            Err(BackendError::Precondition(_))
        ));
    }

    fn flaky(failures: u32) -> (GenerationBackend, Arc<AtomicU32>) {
        let calls = Arc::new(AtomicU32::new(0));
        let counter = Arc::clone(&calls);
        let backend = GenerationBackend::new(
            "flaky",
            FnGenerator::new(move |_, _| {
                let n = counter.fetch_add(1, Ordering::SeqCst) + 1;
                if n <= failures {
                    Err(CallError::Transport("connection reset".into()))
                } else {
                    Ok("fine".into())
                }
            }),
        );
        (backend, calls)
    }

    #[test]
    fn retries_until_success() {
        let (backend, calls) = flaky(2);
        let backend = backend.with_retry(RetryPolicy::immediate(3));
        assert_eq!(backend.generate("p", 1).unwrap(), "fine");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_report_attempts() {
        let (backend, calls) = flaky(u32::MAX);
        let backend = backend.with_retry(RetryPolicy::immediate(2));
        match backend.generate("p", 1) {
            Err(BackendError::Unavailable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn status_errors_are_retried() {
        let calls = Arc::new(AtomicU32::new(0));
        let counter = Arc::clone(&calls);
        let backend = GenerationBackend::new(
            "s",
            FnGenerator::new(move |_, _| {
                counter.fetch_add(1, Ordering::SeqCst);
                Err(CallError::Status(503, "busy".into()))
            }),
        )
        .with_retry(RetryPolicy::immediate(1));
        assert!(backend.generate("p", 1).is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn backoff_schedule() {
        let policy = RetryPolicy {
            jitter: false,
            ..RetryPolicy::default()
        };
        assert_eq!(policy.delay(0), Duration::from_millis(500));
        assert_eq!(policy.delay(2), Duration::from_millis(2000));
        let jittered = RetryPolicy::default().delay(1);
        assert!(jittered >= Duration::from_millis(1000) && jittered < Duration::from_millis(1500));
    }

    #[test]
    fn embedding_shape_contract() {
        let backend = EmbeddingBackend::new("h", HashEmbedder::new(8));
        let out = backend.embed(&["a".to_string()]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 8);
        let twice = backend
            .embed(&["same text".to_string(), "same text".to_string()])
            .unwrap();
        assert_eq!(twice[0], twice[1]);
        assert!(matches!(
            backend.embed(&[]),
            Err(BackendError::Precondition(_))
        ));
    }

    #[test]
    fn embedding_dimension_mismatch_is_protocol_error() {
        let backend = EmbeddingBackend::new(
            "bad",
            FnEmbedder::new(4, |texts| Ok(vec![vec![1.0; 3]; texts.len()])),
        );
        assert!(matches!(
            backend.embed(&["x".to_string()]),
            Err(BackendError::Protocol { .. })
        ));
    }

    #[test]
    fn rerank_logits_contract() {
        let zero = RerankBackend::new("z", FnScorer::new(|_| Ok((0.0, 0.0))));
        assert_eq!(zero.rerank_logits("p").unwrap(), (0.0, 0.0));
        let pass = RerankBackend::new("p", FnScorer::new(|_| Ok((1.5, -0.5))));
        assert_eq!(pass.rerank_logits("p").unwrap(), (1.5, -0.5));
        let nan = RerankBackend::new("n", FnScorer::new(|_| Ok((f64::NAN, 0.0))));
        assert!(matches!(
            nan.rerank_logits("p"),
            Err(BackendError::Protocol { .. })
        ));
    }

    #[test]
    fn calls_are_logged_in_sequence() {
        let log = Arc::new(CallLog::new());
        let backend = GenerationBackend::new("m", FnGenerator::new(|p, _| Ok(p.to_uppercase())))
            .with_log(Arc::clone(&log));
        backend.generate("a", 1).unwrap();
        backend.generate("b", 1).unwrap();
        let records = log.records();
        assert_eq!(records.iter().map(|r| r.seq).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(records[1].response.as_ref().unwrap()["text"], "B");

        let replay = GenerationBackend::new("replay", TranscriptGenerator::from_log(&log));
        assert_eq!(replay.generate("a", 1).unwrap(), "A");
        assert!(matches!(
            replay.generate("zzz", 1),
            Err(BackendError::Protocol { .. })
        ));
    }
}
