//! Dual persistence layer: a structured attribute store queried by
//! predicates and an exact cosine vector store, both keyed by device id.
//!
//! The corpus exchange format is a JSON array of device records; each entry
//! may carry its embedding as base64 of little-endian f32 values.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingVector};
use crate::record::{
    AttributeValue, DeviceId, DeviceRecord, Metadata, ReviewStatus, SourceKind,
};
use crate::schema::{Predicate, SchemaError, TaxonomySchema};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("validation failed: {0}")]
    Validation(#[from] SchemaError),
    #[error("query error: {0}")]
    Query(SchemaError),
    #[error("embedding error: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("device {0} not found")]
    NotFound(DeviceId),
    #[error("k must be positive")]
    ZeroK,
    #[error("corpus format error: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Handle shared between request handlers: many readers, one writer.
pub type SharedCatalog = Arc<RwLock<Catalog>>;

#[derive(Debug, Clone)]
pub struct Catalog {
    schema: Arc<TaxonomySchema>,
    dim: usize,
    records: BTreeMap<DeviceId, DeviceRecord>,
    vectors: BTreeMap<DeviceId, EmbeddingVector>,
}

impl Catalog {
    /// Creates an empty catalog; `dim` is fixed for the catalog's lifetime.
    pub fn new(schema: Arc<TaxonomySchema>, dim: usize) -> Self {
        Self {
            schema,
            dim,
            records: BTreeMap::new(),
            vectors: BTreeMap::new(),
        }
    }

    pub fn into_shared(self) -> SharedCatalog {
        Arc::new(RwLock::new(self))
    }

    pub fn schema(&self) -> &Arc<TaxonomySchema> {
        &self.schema
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn embedded_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn next_id(&self) -> DeviceId {
        self.records.keys().next_back().map_or(1, |id| id + 1)
    }

    /// Inserts or replaces a record. An id of 0 requests a fresh id.
    pub fn upsert(&mut self, mut record: DeviceRecord) -> Result<DeviceId, StoreError> {
        record.validate(&self.schema)?;
        if record.id == 0 {
            record.id = self.next_id();
        }
        let id = record.id;
        self.records.insert(id, record);
        Ok(id)
    }

    pub fn get(&self, id: DeviceId) -> Option<&DeviceRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> impl Iterator<Item = &DeviceRecord> {
        self.records.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.records.keys().copied()
    }

    /// Records satisfying every predicate, ordered by id. A record lacking a
    /// predicated attribute does not match it.
    pub fn query_structured(
        &self,
        predicates: &[Predicate],
    ) -> Result<Vec<&DeviceRecord>, StoreError> {
        for p in predicates {
            self.schema
                .validate_predicate(p)
                .map_err(StoreError::Query)?;
        }
        Ok(self
            .records
            .values()
            .filter(|r| {
                predicates
                    .iter()
                    .all(|p| r.value(&p.attribute).is_some_and(|v| p.matches(v)))
            })
            .collect())
    }

    pub fn put_embedding(
        &mut self,
        id: DeviceId,
        vector: EmbeddingVector,
    ) -> Result<(), StoreError> {
        if !self.records.contains_key(&id) {
            return Err(StoreError::NotFound(id));
        }
        self.check_dim(&vector)?;
        // re-run normalization in case the caller built a raw vector
        let vector = EmbeddingVector::new(vector.values().to_vec())?;
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get_embedding(&self, id: DeviceId) -> Option<&EmbeddingVector> {
        self.vectors.get(&id)
    }

    /// Exhaustive top-k cosine search, descending, ties by ascending id.
    /// A `k` larger than the store returns the full ranking.
    pub fn vector_search(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<(DeviceId, f64)>, StoreError> {
        if k == 0 {
            return Err(StoreError::ZeroK);
        }
        self.check_dim(query)?;
        let mut scored: Vec<(DeviceId, f64)> = self
            .vectors
            .iter()
            .map(|(&id, v)| (id, query.cosine(v)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }

    fn check_dim(&self, v: &EmbeddingVector) -> Result<(), StoreError> {
        if v.dim() != self.dim {
            return Err(EmbeddingError::Dimension {
                expected: self.dim,
                actual: v.dim(),
            }
            .into());
        }
        Ok(())
    }

    /// Serializes the whole corpus. Output is deterministic: records by id,
    /// taxonomy keys sorted, two-space indentation, trailing newline.
    pub fn export_json(&self) -> String {
        let entries: Vec<CorpusEntry> = self
            .records
            .values()
            .map(|r| CorpusEntry::from_record(r, self.vectors.get(&r.id)))
            .collect();
        let mut out = serde_json::to_string_pretty(&entries).expect("corpus serializes");
        out.push('\n');
        out
    }

    pub fn import_json(
        schema: Arc<TaxonomySchema>,
        dim: usize,
        json: &str,
    ) -> Result<Self, StoreError> {
        let entries: Vec<CorpusEntry> =
            serde_json::from_str(json).map_err(|e| StoreError::Format(e.to_string()))?;
        let mut catalog = Catalog::new(schema, dim);
        for entry in entries {
            let (record, embedding) = entry.into_parts();
            if record.id == 0 {
                return Err(StoreError::Format("corpus entries need non-zero ids".into()));
            }
            if catalog.records.contains_key(&record.id) {
                return Err(StoreError::Format(format!("duplicate device id {}", record.id)));
            }
            let id = catalog.upsert(record)?;
            if let Some(encoded) = embedding {
                let v = EmbeddingVector::from_base64(&encoded)?;
                catalog.put_embedding(id, v)?;
            }
        }
        Ok(catalog)
    }

    pub fn load_file(
        schema: Arc<TaxonomySchema>,
        dim: usize,
        path: &Path,
    ) -> Result<Self, StoreError> {
        let json = fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::import_json(schema, dim, &json)
    }

    /// Writes the corpus through a temporary file so readers never observe a
    /// partial export.
    pub fn save_file(&self, path: &Path) -> Result<(), StoreError> {
        write_atomic(path, self.export_json().as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

/// One element of the corpus JSON array.
#[derive(Debug, Serialize, Deserialize)]
struct CorpusEntry {
    id: DeviceId,
    name: String,
    source_kind: SourceKind,
    metadata: Metadata,
    #[serde(default)]
    taxonomy: BTreeMap<String, AttributeValue>,
    review_status: ReviewStatus,
    #[serde(default)]
    source_links: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<String>,
}

impl CorpusEntry {
    fn from_record(r: &DeviceRecord, v: Option<&EmbeddingVector>) -> Self {
        Self {
            id: r.id,
            name: r.name.clone(),
            source_kind: r.source_kind,
            metadata: r.metadata.clone(),
            taxonomy: r.taxonomy.clone(),
            review_status: r.review_status,
            source_links: r.source_links.clone(),
            embedding: v.map(EmbeddingVector::to_base64),
        }
    }

    fn into_parts(self) -> (DeviceRecord, Option<String>) {
        (
            DeviceRecord {
                id: self.id,
                name: self.name,
                source_kind: self.source_kind,
                metadata: self.metadata,
                taxonomy: self.taxonomy,
                review_status: self.review_status,
                source_links: self.source_links,
            },
            self.embedding,
        )
    }
}

/// Layout of the single-directory on-disk store.
#[derive(Debug, Clone)]
pub struct StoreDir {
    root: PathBuf,
}

impl StoreDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.root.join("corpus.json")
    }

    pub fn block_log_path(&self) -> PathBuf {
        self.root.join("blocks.jsonl")
    }

    pub fn review_dir(&self) -> PathBuf {
        self.root.join("review")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    /// Loads the stored corpus, or an empty catalog for a fresh directory.
    pub fn load_catalog(
        &self,
        schema: Arc<TaxonomySchema>,
        dim: usize,
    ) -> Result<Catalog, StoreError> {
        let path = self.corpus_path();
        if path.exists() {
            Catalog::load_file(schema, dim, &path)
        } else {
            Ok(Catalog::new(schema, dim))
        }
    }

    pub fn save_catalog(&self, catalog: &Catalog) -> Result<(), StoreError> {
        catalog.save_file(&self.corpus_path())
    }
}
