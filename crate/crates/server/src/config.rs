use std::fs;
use std::path::{Path, PathBuf};

use haptic_core::providers::ProviderConfig;
use serde::Deserialize;

use crate::error::ApiError;

/// Service settings. Read from an optional TOML file, then overridden by
/// `HAPTIC_*` environment variables, then by command-line flags.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub addr: String,
    /// Store directory: corpus, review queue, block log, session logs.
    pub store: PathBuf,
    /// Corpus file served instead of the store's own corpus.
    pub corpus: Option<PathBuf>,
    /// JSON array of sample query strings.
    pub samples: Option<PathBuf>,
    /// Fixture map for scholarly metadata lookups.
    pub scholar_fixture: Option<PathBuf>,
    /// Directory of prompt templates replacing the shipped set.
    pub templates: Option<PathBuf>,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
    pub providers: ProviderConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            store: PathBuf::from("haptic-store"),
            corpus: None,
            samples: None,
            scholar_fixture: None,
            templates: None,
            cors_origin: None,
            providers: ProviderConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ApiError> {
        toml::from_str(text).map_err(|e| ApiError::bad_request(format!("config: {e}")))
    }

    /// Loads `path` (if any) and applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ApiError> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| ApiError::bad_request(format!("config {}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env_from(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env_from(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ApiError> {
        if let Some(v) = get("HAPTIC_ADDR") {
            self.addr = v;
        }
        if let Some(v) = get("HAPTIC_STORE") {
            self.store = v.into();
        }
        if let Some(v) = get("HAPTIC_CORPUS") {
            self.corpus = Some(v.into());
        }
        if let Some(v) = get("HAPTIC_SAMPLES") {
            self.samples = Some(v.into());
        }
        if let Some(v) = get("HAPTIC_SCHOLAR_FIXTURE") {
            self.scholar_fixture = Some(v.into());
        }
        if let Some(v) = get("HAPTIC_TEMPLATES") {
            self.templates = Some(v.into());
        }
        if let Some(v) = get("HAPTIC_CORS_ORIGIN") {
            self.cors_origin = Some(v);
        }
        self.providers
            .apply_env_from(get)
            .map_err(|e| ApiError::bad_request(e.to_string()))
    }
}
