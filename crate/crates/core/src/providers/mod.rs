//! Boundary for every model call: completion, embedding and taxonomy
//! extraction, plus the scholarly-metadata and document-fetch clients.
//!
//! Nothing outside this module performs network I/O. Every provider has a
//! deterministic offline implementation, and configuration defaults to those.

mod extract;
mod http;
mod metadata;
mod mock;
pub mod protocol;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingVector, DEFAULT_DIMENSION};
use crate::patterns::PatternTable;
use crate::schema::TaxonomySchema;

pub use extract::{LlmExtractor, RuleExtractor};
pub use http::{
    DocumentFetcher, HttpCompletion, HttpEmbedder, HttpMethod, HttpRequest, HttpResponse,
    HttpTransport, ReqwestTransport, RetryPolicy, TransportError,
};
pub use metadata::{FixtureMetadataClient, HttpMetadataClient, MetadataClient, MetadataLookup};
pub use mock::{HashEmbedder, MockCompletion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable (retryable): {0}")]
    Retryable(String),
    #[error("provider rejected the request: {0}")]
    Permanent(String),
    #[error("invalid provider input: {0}")]
    InvalidInput(String),
    #[error("provider configuration error: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Retryable(_))
    }
}

pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, prompt: &str, max_tokens: usize) -> Result<String, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Same text, same vector. Output is unit-norm.
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

pub trait ExtractionProvider: Send + Sync {
    /// Proposes `(attribute, raw value)` pairs found in a block. Callers
    /// still validate values against the schema.
    fn tag(
        &self,
        content: &str,
        schema: &TaxonomySchema,
    ) -> Result<Vec<(String, String)>, ProviderError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

/// Provider settings. Loaded from a config file section and overridden by
/// `HAPTIC_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Chat-completion endpoint used in live mode.
    pub endpoint: Option<String>,
    /// Embedding endpoint; when absent the hashed embedder is used even in
    /// live mode so stored vectors stay comparable.
    pub embedding_endpoint: Option<String>,
    pub metadata_endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    pub embedding_model: String,
    pub timeout_ms: u64,
    pub dim: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    /// Character budget for prompts carrying conversation history.
    pub prompt_char_budget: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            embedding_endpoint: None,
            metadata_endpoint: None,
            api_key: None,
            model: "gpt-3.5-turbo".into(),
            embedding_model: "text-embedding-3-small".into(),
            timeout_ms: 30_000,
            dim: DEFAULT_DIMENSION,
            max_attempts: 3,
            backoff_ms: 250,
            prompt_char_budget: 12_000,
        }
    }
}

impl ProviderConfig {
    pub fn from_env() -> Result<Self, ProviderError> {
        let mut cfg = Self::default();
        cfg.apply_env_from(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Applies overrides from a variable lookup (the process environment in
    /// production, a map in tests).
    pub fn apply_env_from(
        &mut self,
        get: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ProviderError> {
        fn num<T: std::str::FromStr>(key: &str, raw: String) -> Result<T, ProviderError> {
            raw.trim()
                .parse()
                .map_err(|_| ProviderError::Config(format!("{key}=`{raw}` is not a number")))
        }
        if let Some(v) = get("HAPTIC_PROVIDER") {
            self.kind = match v.trim() {
                "mock" => ProviderKind::Mock,
                "http" => ProviderKind::Http,
                other => {
                    return Err(ProviderError::Config(format!(
                        "HAPTIC_PROVIDER=`{other}` (expected mock or http)"
                    )))
                }
            };
        }
        if let Some(v) = get("HAPTIC_ENDPOINT") {
            self.endpoint = Some(v);
        }
        if let Some(v) = get("HAPTIC_EMBEDDING_ENDPOINT") {
            self.embedding_endpoint = Some(v);
        }
        if let Some(v) = get("HAPTIC_METADATA_ENDPOINT") {
            self.metadata_endpoint = Some(v);
        }
        if let Some(v) = get("HAPTIC_API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = get("HAPTIC_MODEL") {
            self.model = v;
        }
        if let Some(v) = get("HAPTIC_EMBEDDING_MODEL") {
            self.embedding_model = v;
        }
        if let Some(v) = get("HAPTIC_TIMEOUT_MS") {
            self.timeout_ms = num("HAPTIC_TIMEOUT_MS", v)?;
        }
        if let Some(v) = get("HAPTIC_DIM") {
            self.dim = num("HAPTIC_DIM", v)?;
        }
        if let Some(v) = get("HAPTIC_PROMPT_BUDGET") {
            self.prompt_char_budget = num("HAPTIC_PROMPT_BUDGET", v)?;
        }
        if self.dim == 0 {
            return Err(ProviderError::Config("embedding dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            base_delay: Duration::from_millis(self.backoff_ms),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// The provider set one deployment runs with.
#[derive(Clone)]
pub struct Providers {
    pub completion: Arc<dyn CompletionProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub extractor: Arc<dyn ExtractionProvider>,
    pub prompt_char_budget: usize,
}

impl Providers {
    /// Fully offline providers: mock completion, hashed embedder and the
    /// rule-based extractor built from the shipped pattern table.
    pub fn mock(schema: &TaxonomySchema, dim: usize) -> Result<Self, ProviderError> {
        let table = PatternTable::extraction_default(schema)
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            completion: Arc::new(MockCompletion),
            embedder: Arc::new(HashEmbedder::new(dim)),
            extractor: Arc::new(RuleExtractor::new(table)),
            prompt_char_budget: ProviderConfig::default().prompt_char_budget,
        })
    }

    pub fn from_config(cfg: &ProviderConfig, schema: &TaxonomySchema) -> Result<Self, ProviderError> {
        let mut providers = Self::mock(schema, cfg.dim)?;
        providers.prompt_char_budget = cfg.prompt_char_budget;
        if cfg.kind == ProviderKind::Mock {
            return Ok(providers);
        }
        let transport: Arc<dyn HttpTransport> = Arc::new(ReqwestTransport::new()?);
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| ProviderError::Config("HAPTIC_ENDPOINT is required in http mode".into()))?;
        let completion: Arc<dyn CompletionProvider> = Arc::new(HttpCompletion::new(
            transport.clone(),
            endpoint,
            cfg.api_key.clone(),
            cfg.model.clone(),
            cfg.timeout(),
            cfg.retry_policy(),
        ));
        providers.extractor = Arc::new(LlmExtractor::new(completion.clone()));
        providers.completion = completion;
        if let Some(url) = &cfg.embedding_endpoint {
            providers.embedder = Arc::new(HttpEmbedder::new(
                transport,
                url.clone(),
                cfg.api_key.clone(),
                cfg.embedding_model.clone(),
                cfg.dim,
                cfg.timeout(),
                cfg.retry_policy(),
            ));
        }
        Ok(providers)
    }
}

/// Number of leading (oldest) turns to drop so that `fixed_len` plus the
/// remaining turns fits in `budget` characters. Fixed content is never cut.
pub fn turns_to_drop(fixed_len: usize, turns: &[String], budget: usize) -> usize {
    let mut total: usize = fixed_len + turns.iter().map(|t| t.len()).sum::<usize>();
    let mut dropped = 0;
    while total > budget && dropped < turns.len() {
        total -= turns[dropped].len();
        dropped += 1;
    }
    dropped
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_overrides() {
        let vars: HashMap<&str, &str> = [
            ("HAPTIC_PROVIDER", "http"),
            ("HAPTIC_ENDPOINT", "http://localhost:9/v1/chat/completions"),
            ("HAPTIC_DIM", "64"),
        ]
        .into_iter()
        .collect();
        let mut cfg = ProviderConfig::default();
        cfg.apply_env_from(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.kind, ProviderKind::Http);
        assert_eq!(cfg.dim, 64);
        assert!(cfg.endpoint.is_some());
    }

    #[test]
    fn bad_env_is_config_error() {
        let mut cfg = ProviderConfig::default();
        let err = cfg
            .apply_env_from(|k| (k == "HAPTIC_DIM").then(|| "many".to_string()))
            .unwrap_err();
        assert!(matches!(err, ProviderError::Config(_)));
    }

    #[test]
    fn http_mode_requires_endpoint() {
        let schema = TaxonomySchema::default_schema();
        let cfg = ProviderConfig {
            kind: ProviderKind::Http,
            ..ProviderConfig::default()
        };
        assert!(matches!(
            Providers::from_config(&cfg, &schema),
            Err(ProviderError::Config(_))
        ));
    }

    #[test]
    fn truncation_drops_oldest_turns_only() {
        let turns: Vec<String> = vec!["a".repeat(50), "b".repeat(50), "c".repeat(50)];
        assert_eq!(turns_to_drop(100, &turns, 1000), 0);
        assert_eq!(turns_to_drop(100, &turns, 200), 1);
        assert_eq!(turns_to_drop(100, &turns, 199), 2);
        // fixed content alone over budget: every turn goes, fixed stays
        assert_eq!(turns_to_drop(500, &turns, 200), 3);
    }
}
