//! Retrieval-augmented recommendation engine for grounded force-feedback
//! haptic devices.
//!
//! The crate covers both halves of the system: the ingestion pipeline that
//! turns device documentation into reviewed catalog records, and the
//! conversational retrieval path that answers user queries with ranked,
//! source-linked recommendations.

pub mod agent;
pub mod embedding;
pub mod ingestion;
pub mod patterns;
pub mod providers;
pub mod record;
pub mod rerank;
pub mod retrieval;
pub mod schema;
pub mod store;

pub use embedding::{EmbeddingVector, DEFAULT_DIMENSION};
pub use record::{AttributeValue, DeviceId, DeviceRecord, Metadata, ReviewStatus, SourceKind};
pub use schema::{Group, Operator, Predicate, TaxonomySchema, Value, ValueKind};
pub use store::{Catalog, SharedCatalog, StoreDir, StoreError};
