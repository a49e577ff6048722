//! Service operations shared by the HTTP handlers and the CLI, so both
//! surfaces produce the same records and the same scores.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use haptic_core::agent::{Agent, AgentConfig, TemplateSet, TurnTrace};
use haptic_core::ingestion::{
    embed_device, BatchReport, BlockLog, DocumentKind, IngestionPipeline, ReviewDecision, ReviewItem,
    ReviewQueue, SourceDocument,
};
use haptic_core::providers::{
    DocumentFetcher, FixtureMetadataClient, HttpMetadataClient, MetadataClient, ProviderConfig,
    ProviderKind, Providers, ReqwestTransport,
};
use haptic_core::retrieval::{ConversationSession, SessionStore};
use haptic_core::{
    Catalog, DeviceId, DeviceRecord, Group, ReviewStatus, SharedCatalog, SourceKind, StoreDir,
    TaxonomySchema,
};
use parking_lot::Mutex;
use serde::Serialize;
use tracing::info;

use crate::config::ServerConfig;
use crate::error::ApiError;

const DEFAULT_SAMPLES: &str = include_str!("../data/sample_queries.json");

/// Parses a JSON array of sample query strings.
pub fn parse_samples(json: &str) -> Result<Vec<String>, ApiError> {
    serde_json::from_str(json).map_err(|e| ApiError::bad_request(format!("sample queries: {e}")))
}

pub fn default_samples() -> Vec<String> {
    parse_samples(DEFAULT_SAMPLES).expect("shipped sample queries parse")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub devices: usize,
    pub embedded: usize,
    pub approved: usize,
    pub pending_review: usize,
    pub dimension: usize,
    pub schema_version: u32,
    pub machine_attributes: usize,
    pub usage_attributes: usize,
    pub context_attributes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub devices: usize,
    pub embedded: usize,
}

/// Everything an engine is built from.
pub struct EngineParts {
    pub catalog: Catalog,
    pub providers: Providers,
    pub metadata: Arc<dyn MetadataClient>,
    pub templates: TemplateSet,
    pub sessions: SessionStore,
    pub samples: Vec<String>,
    /// Where the review queue, block log and approved corpus persist; `None`
    /// keeps everything in memory.
    pub store: Option<StoreDir>,
    pub provider_config: ProviderConfig,
}

impl EngineParts {
    /// Offline parts around `catalog`: mock providers, the shipped templates
    /// and samples, in-memory stores.
    pub fn offline(catalog: Catalog, metadata: FixtureMetadataClient) -> Result<Self, ApiError> {
        let providers = Providers::mock(catalog.schema(), catalog.dim())?;
        Ok(Self {
            catalog,
            providers,
            metadata: Arc::new(metadata),
            templates: TemplateSet::default_set(),
            sessions: SessionStore::in_memory(),
            samples: default_samples(),
            store: None,
            provider_config: ProviderConfig::default(),
        })
    }
}

pub struct Engine {
    schema: Arc<TaxonomySchema>,
    catalog: SharedCatalog,
    sessions: SessionStore,
    agent: Agent,
    pipeline: IngestionPipeline,
    providers: Providers,
    review: Mutex<ReviewQueue>,
    blocks: Mutex<BlockLog>,
    store: Option<StoreDir>,
    samples: Vec<String>,
    provider_config: ProviderConfig,
}

impl Engine {
    pub fn new(parts: EngineParts) -> Result<Self, ApiError> {
        let schema = parts.catalog.schema().clone();
        let agent = Agent::new(
            schema.clone(),
            parts.providers.clone(),
            parts.templates,
            AgentConfig::default(),
        )
        .map_err(ApiError::from)?;
        let pipeline = IngestionPipeline::new(schema.clone(), parts.providers.clone(), parts.metadata);
        let (review, blocks) = match &parts.store {
            Some(dir) => (
                ReviewQueue::open(dir.review_dir())?,
                BlockLog::open(dir.block_log_path())?,
            ),
            None => (ReviewQueue::in_memory(), BlockLog::in_memory()),
        };
        Ok(Self {
            schema,
            catalog: parts.catalog.into_shared(),
            sessions: parts.sessions,
            agent,
            pipeline,
            providers: parts.providers,
            review: Mutex::new(review),
            blocks: Mutex::new(blocks),
            store: parts.store,
            samples: parts.samples,
            provider_config: parts.provider_config,
        })
    }

    /// Builds an engine from configuration. With `use_corpus_override` the
    /// catalog comes from `cfg.corpus` when set, otherwise from the store.
    /// Session logs persist in the store only when `persist_sessions` is set.
    pub fn from_config(
        cfg: &ServerConfig,
        use_corpus_override: bool,
        persist_sessions: bool,
    ) -> Result<Self, ApiError> {
        let schema = Arc::new(TaxonomySchema::default_schema());
        let store = StoreDir::new(&cfg.store);
        let dim = cfg.providers.dim;
        let catalog = match (&cfg.corpus, use_corpus_override) {
            (Some(path), true) => Catalog::load_file(schema.clone(), dim, path)?,
            _ => store.load_catalog(schema.clone(), dim)?,
        };
        let providers = Providers::from_config(&cfg.providers, &schema)?;
        let metadata: Arc<dyn MetadataClient> = match (&cfg.providers.kind, &cfg.providers.metadata_endpoint) {
            (ProviderKind::Http, Some(endpoint)) => Arc::new(HttpMetadataClient::new(
                Arc::new(ReqwestTransport::new()?),
                endpoint.clone(),
                cfg.providers.api_key.clone(),
                cfg.providers.timeout(),
                cfg.providers.retry_policy(),
            )),
            _ => Arc::new(match &cfg.scholar_fixture {
                Some(path) => FixtureMetadataClient::from_file(path)?,
                None => FixtureMetadataClient::default(),
            }),
        };
        let templates = match &cfg.templates {
            Some(dir) => TemplateSet::from_dir(dir).map_err(ApiError::from)?,
            None => TemplateSet::default_set(),
        };
        let samples = match &cfg.samples {
            Some(path) => parse_samples(&read_text(path)?)?,
            None => default_samples(),
        };
        let sessions = if persist_sessions {
            SessionStore::open(store.sessions_dir())?
        } else {
            SessionStore::in_memory()
        };
        Self::new(EngineParts {
            catalog,
            providers,
            metadata,
            templates,
            sessions,
            samples,
            store: Some(store),
            provider_config: cfg.providers.clone(),
        })
    }

    pub fn schema(&self) -> &Arc<TaxonomySchema> {
        &self.schema
    }

    pub fn catalog(&self) -> &SharedCatalog {
        &self.catalog
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn samples(&self) -> &[String] {
        &self.samples
    }

    pub fn create_session(&self) -> Result<String, ApiError> {
        Ok(self.sessions.create()?)
    }

    /// Creates the session under `id` unless it already exists.
    pub fn ensure_session(&self, id: &str) -> Result<(), ApiError> {
        if self.sessions.get(id)?.is_none() {
            self.sessions.create_with_id(id)?;
        }
        Ok(())
    }

    /// Copy of a session's current state.
    pub fn session(&self, id: &str) -> Result<ConversationSession, ApiError> {
        let shared = self
            .sessions
            .get(id)?
            .ok_or_else(|| ApiError::not_found(format!("session `{id}` not found")))?;
        let snapshot = shared.lock().clone();
        Ok(snapshot)
    }

    /// One recorded chat turn. Turns on the same session run one at a time.
    pub fn chat(&self, session_id: &str, prompt: &str) -> Result<TurnTrace, ApiError> {
        let catalog = self.catalog.read();
        Ok(self.agent.chat_turn(&self.sessions, session_id, prompt, &catalog)?)
    }

    pub fn device(&self, id: DeviceId) -> Result<DeviceRecord, ApiError> {
        self.catalog
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("device {id} not found")))
    }

    /// Devices matching every `attr.<name>=<op>:<value>` filter, by id.
    pub fn filter_devices(&self, params: &[(String, String)]) -> Result<Vec<DeviceRecord>, ApiError> {
        let mut predicates = Vec::with_capacity(params.len());
        for (key, raw) in params {
            let name = key
                .strip_prefix("attr.")
                .ok_or_else(|| ApiError::bad_request(format!("unknown query parameter `{key}`")))?;
            let (op, literal) = raw
                .split_once(':')
                .ok_or_else(|| ApiError::bad_request(format!("`{key}={raw}`: expected <op>:<value>")))?;
            predicates.push(self.schema.parse_predicate(name, op, literal)?);
        }
        let catalog = self.catalog.read();
        Ok(catalog.query_structured(&predicates)?.into_iter().cloned().collect())
    }

    /// Reads a source document. URLs are fetched; anything else is a local
    /// path unless `local_files` is off.
    pub fn load_document(
        &self,
        uri: &str,
        kind: DocumentKind,
        local_files: bool,
    ) -> Result<SourceDocument, ApiError> {
        let content = if uri.starts_with("http://") || uri.starts_with("https://") {
            let fetcher = DocumentFetcher::live(self.provider_config.timeout(), self.provider_config.retry_policy())?;
            fetcher.fetch(uri)?
        } else if local_files {
            read_text(Path::new(uri))?
        } else {
            return Err(ApiError::bad_request(format!(
                "`{uri}` is not an http(s) URL; send the document content instead"
            )));
        };
        Ok(SourceDocument::new(uri, kind, content))
    }

    /// Drafts and stages documents for review.
    pub fn ingest(&self, docs: &[(SourceDocument, SourceKind)]) -> BatchReport {
        let catalog = self.catalog.read();
        let mut review = self.review.lock();
        let report = self.pipeline.ingest_batch(docs, &catalog, &mut review);
        info!(staged = report.staged.len(), failed = report.errors.len(), "ingestion batch done");
        report
    }

    /// Drafts and stages one document, reporting its device id.
    pub fn ingest_one(&self, doc: SourceDocument, source_kind: SourceKind) -> Result<DeviceId, ApiError> {
        let catalog = self.catalog.read();
        let mut review = self.review.lock();
        Ok(self.pipeline.ingest(doc, source_kind, &catalog, &mut review)?)
    }

    pub fn pending_reviews(&self) -> Vec<ReviewItem> {
        self.review.lock().pending().cloned().collect()
    }

    /// Applies a reviewer decision, populates both stores and persists the
    /// corpus.
    pub fn resolve_review(&self, id: DeviceId, decision: ReviewDecision) -> Result<DeviceRecord, ApiError> {
        let mut review = self.review.lock();
        let mut blocks = self.blocks.lock();
        let mut catalog = self.catalog.write();
        let record = self
            .pipeline
            .resolve(id, decision, &mut review, &mut catalog, &mut blocks)?;
        self.persist(&catalog)?;
        Ok(record)
    }

    /// Replaces the catalog with a corpus file. With `embed_missing`, every
    /// reviewed record lacking a vector is embedded first.
    pub fn import(&self, json: &str, embed_missing: bool) -> Result<ImportReport, ApiError> {
        let dim = self.catalog.read().dim();
        let mut imported = Catalog::import_json(self.schema.clone(), dim, json)?;
        let mut embedded = 0;
        if embed_missing {
            let missing: Vec<DeviceRecord> = imported
                .records()
                .filter(|r| r.review_status != ReviewStatus::Pending && imported.get_embedding(r.id).is_none())
                .cloned()
                .collect();
            for record in missing {
                let v = embed_device(&record, &self.schema, self.providers.embedder.as_ref())?;
                imported.put_embedding(record.id, v)?;
                embedded += 1;
            }
        }
        self.persist(&imported)?;
        let report = ImportReport {
            devices: imported.len(),
            embedded,
        };
        *self.catalog.write() = imported;
        Ok(report)
    }

    pub fn export(&self) -> String {
        self.catalog.read().export_json()
    }

    pub fn stats(&self) -> Stats {
        let catalog = self.catalog.read();
        Stats {
            devices: catalog.len(),
            embedded: catalog.embedded_count(),
            approved: catalog
                .records()
                .filter(|r| r.review_status != ReviewStatus::Pending)
                .count(),
            pending_review: self.review.lock().pending().count(),
            dimension: catalog.dim(),
            schema_version: self.schema.version(),
            machine_attributes: self.schema.count(Group::Machine),
            usage_attributes: self.schema.count(Group::Usage),
            context_attributes: self.schema.count(Group::Context),
        }
    }

    fn persist(&self, catalog: &Catalog) -> Result<(), ApiError> {
        if let Some(store) = &self.store {
            store.save_catalog(catalog)?;
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String, ApiError> {
    fs::read_to_string(path).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))
}
