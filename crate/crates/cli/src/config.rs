//! TOML configuration with `TOOLDE_*` environment overrides.
//!
//! ```toml
//! seed = 17
//! permits = 8
//!
//! [backends.expander]
//! url = "http://localhost:8000"
//! timeout_secs = 120
//!
//! [backends.embed]
//! url = "mock:hash"
//! dimension = 256
//!
//! [pipeline]
//! max_tokens = 1024
//! review_sample_size = 100
//!
//! [retrieval]
//! k1 = 1.2
//! b = 0.75
//! pool = 100
//! ks = [10]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::CliError;

pub const ROLES: [&str; 5] = ["expander", "judge", "refiner", "embed", "rerank"];

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    pub seed: Option<u64>,
    /// Shared budget of in-flight backend requests.
    pub permits: Option<usize>,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub pipeline: PipelineKnobs,
    #[serde(default)]
    pub retrieval: RetrievalKnobs,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub url: String,
    pub token: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    /// Embedding width; required for HTTP embedders.
    pub dimension: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineKnobs {
    pub max_tokens: Option<usize>,
    pub review_sample_size: Option<usize>,
    pub strict_tags: Option<bool>,
    pub checkpoint_every: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalKnobs {
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub pool: Option<usize>,
    pub ks: Option<Vec<usize>>,
    pub depth: Option<usize>,
    pub batch_size: Option<usize>,
}

fn parse_env<T: std::str::FromStr>(
    vars: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, CliError> {
    match vars.get(key) {
        None => Ok(None),
        Some(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Invalid(format!("environment variable {key}: cannot parse `{v}`"))
        }),
    }
}

impl ToolkitConfig {
    /// Reads `path` (if any) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Invalid(format!("--config {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Invalid(format!("--config {}: {e}", p.display())))?
            }
            None => ToolkitConfig::default(),
        };
        let vars: BTreeMap<String, String> = std::env::vars()
            .filter(|(k, _)| k.starts_with("TOOLDE_"))
            .collect();
        config.apply_env(&vars)?;
        config.validate()?;
        Ok(config)
    }

    /// `TOOLDE_SEED`, `TOOLDE_PERMITS`, `TOOLDE_K1`, `TOOLDE_B`, `TOOLDE_POOL`,
    /// `TOOLDE_MAX_TOKENS` and `TOOLDE_BACKEND_<ROLE>_{URL,TOKEN,DIMENSION}`.
    pub fn apply_env(&mut self, vars: &BTreeMap<String, String>) -> Result<(), CliError> {
        if let Some(v) = parse_env(vars, "TOOLDE_SEED")? {
            self.seed = Some(v);
        }
        if let Some(v) = parse_env(vars, "TOOLDE_PERMITS")? {
            self.permits = Some(v);
        }
        if let Some(v) = parse_env(vars, "TOOLDE_K1")? {
            self.retrieval.k1 = Some(v);
        }
        if let Some(v) = parse_env(vars, "TOOLDE_B")? {
            self.retrieval.b = Some(v);
        }
        if let Some(v) = parse_env(vars, "TOOLDE_POOL")? {
            self.retrieval.pool = Some(v);
        }
        if let Some(v) = parse_env(vars, "TOOLDE_MAX_TOKENS")? {
            self.pipeline.max_tokens = Some(v);
        }
        for role in ROLES {
            let prefix = format!("TOOLDE_BACKEND_{}_", role.to_uppercase());
            if let Some(url) = vars.get(&format!("{prefix}URL")) {
                self.backends.entry(role.to_string()).or_default().url = url.clone();
            }
            if let Some(token) = vars.get(&format!("{prefix}TOKEN")) {
                self.backends.entry(role.to_string()).or_default().token = Some(token.clone());
            }
            if let Some(d) = parse_env(vars, &format!("{prefix}DIMENSION"))? {
                self.backends.entry(role.to_string()).or_default().dimension = Some(d);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for (role, b) in &self.backends {
            if !ROLES.contains(&role.as_str()) {
                return Err(CliError::Invalid(format!(
                    "unknown backend role `{role}` (expected one of {})",
                    ROLES.join(", ")
                )));
            }
            if b.url.trim().is_empty() {
                return Err(CliError::Invalid(format!("backend `{role}` has no url")));
            }
        }
        if self.permits == Some(0) {
            return Err(CliError::Invalid("permits must be at least 1".into()));
        }
        if let Some(ks) = &self.retrieval.ks {
            if ks.is_empty() || ks.contains(&0) {
                return Err(CliError::Invalid(
                    "retrieval.ks must be non-empty positive cutoffs".into(),
                ));
            }
        }
        let max_k = self.ks().into_iter().max().unwrap_or(0);
        if self.pool() < max_k {
            return Err(CliError::Invalid(format!(
                "rerank pool {} is smaller than the largest cutoff {max_k}",
                self.pool()
            )));
        }
        Ok(())
    }

    pub fn pool(&self) -> usize {
        self.retrieval
            .pool
            .unwrap_or(toolde_core::rerank::DEFAULT_POOL)
    }

    pub fn ks(&self) -> Vec<usize> {
        self.retrieval
            .ks
            .clone()
            .unwrap_or_else(|| toolde_core::eval::DEFAULT_KS.to_vec())
    }

    /// Command-line seed, then config/env seed. Randomized commands never
    /// fall back to the clock.
    pub fn seed(&self, flag: Option<u64>, command: &str) -> Result<u64, CliError> {
        flag.or(self.seed).ok_or_else(|| {
            CliError::Invalid(format!(
                "{command} needs --seed (or `seed` in the config / TOOLDE_SEED)"
            ))
        })
    }
}
