//! Scholarly metadata lookup (title, authors, abstract, year, citations).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use crate::record::Metadata;

use super::http::{send_with_retry_accepting, HttpMethod, HttpRequest, HttpTransport, RetryPolicy};
use super::ProviderError;

#[derive(Debug, Clone, PartialEq)]
pub enum MetadataLookup {
    Found(Metadata),
    /// No entry for the query; the caller keeps document-derived metadata.
    Miss,
}

pub trait MetadataClient: Send + Sync {
    fn lookup(&self, title_or_doi: &str) -> Result<MetadataLookup, ProviderError>;
}

/// Offline client backed by a JSON object mapping query strings to metadata.
#[derive(Debug, Clone, Default)]
pub struct FixtureMetadataClient {
    entries: BTreeMap<String, Metadata>,
}

impl FixtureMetadataClient {
    /// Parses the whole fixture eagerly so a malformed file fails here, not
    /// on the first query.
    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let entries: BTreeMap<String, Metadata> = serde_json::from_str(json)
            .map_err(|e| ProviderError::Config(format!("metadata fixture: {e}")))?;
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let json = std::fs::read_to_string(path).map_err(|e| {
            ProviderError::Config(format!("metadata fixture {}: {e}", path.display()))
        })?;
        Self::from_json(&json)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn normalize_key(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl MetadataClient for FixtureMetadataClient {
    fn lookup(&self, title_or_doi: &str) -> Result<MetadataLookup, ProviderError> {
        if let Some(m) = self.entries.get(title_or_doi) {
            return Ok(MetadataLookup::Found(m.clone()));
        }
        let wanted = normalize_key(title_or_doi);
        Ok(self
            .entries
            .iter()
            .find(|(k, _)| normalize_key(k) == wanted)
            .map_or(MetadataLookup::Miss, |(_, m)| MetadataLookup::Found(m.clone())))
    }
}

/// Live client: `GET <endpoint>?q=<query>` answering a metadata object, or
/// 404 for an unknown work.
pub struct HttpMetadataClient {
    transport: Arc<dyn HttpTransport>,
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
    retry: RetryPolicy,
}

impl HttpMetadataClient {
    pub fn new(
        transport: Arc<dyn HttpTransport>,
        endpoint: String,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            transport,
            endpoint,
            api_key,
            timeout,
            retry,
        }
    }
}

impl MetadataClient for HttpMetadataClient {
    fn lookup(&self, title_or_doi: &str) -> Result<MetadataLookup, ProviderError> {
        let url = reqwest::Url::parse_with_params(&self.endpoint, &[("q", title_or_doi)])
            .map_err(|e| ProviderError::Config(format!("metadata endpoint: {e}")))?;
        let request = HttpRequest {
            method: HttpMethod::Get,
            url: url.to_string(),
            bearer: self.api_key.clone(),
            body: None,
            timeout: self.timeout,
        };
        let resp = send_with_retry_accepting(self.transport.as_ref(), &request, self.retry, &[404])?;
        if resp.status == 404 {
            return Ok(MetadataLookup::Miss);
        }
        serde_json::from_str(&resp.body)
            .map(MetadataLookup::Found)
            .map_err(|e| ProviderError::Permanent(format!("metadata response: {e}")))
    }
}
