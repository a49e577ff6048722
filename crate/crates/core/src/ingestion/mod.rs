//! Creator-side pipeline: source documents are split into blocks, every
//! block is tagged against the taxonomy, tags are merged by weighted vote,
//! metadata is attached, and the draft record waits for human review before
//! it reaches the catalog.

mod parse;
mod pipeline;
mod review;
mod summary;
mod votes;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::ProviderError;
use crate::record::DeviceId;
use crate::schema::{SchemaError, Value};
use crate::store::StoreError;

pub use parse::{document_title, parse_source};
pub use pipeline::{BatchReport, BlockLog, IngestionPipeline};
pub use review::{
    canonical_text, embed_device, resolve_review, stage_for_review, ReviewDecision, ReviewItem,
    ReviewQueue, ReviewState,
};
pub use summary::{fetch_scholar_metadata, summarize_commercial};
pub use votes::{aggregate_votes, extract_tags};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("document `{uri}`: {reason}")]
    Document { uri: String, reason: String },
    #[error("commercial summary needs at least one text block")]
    NoTextBlocks,
    #[error("provider returned an empty summary")]
    EmptySummary,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("draft record invalid: {0}")]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("review item {0} not found")]
    UnknownReview(DeviceId),
    #[error("review item {0} was already resolved")]
    AlreadyResolved(DeviceId),
    #[error("device {0} has not been reviewed")]
    NotReviewed(DeviceId),
    #[error("review queue i/o: {0}")]
    Io(String),
}

impl IngestError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, IngestError::Provider(p) if p.is_retryable())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    PdfTextDump,
    Html,
    PlainText,
}

impl std::str::FromStr for DocumentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pdf_text_dump" => Ok(DocumentKind::PdfTextDump),
            "html" => Ok(DocumentKind::Html),
            "plain_text" => Ok(DocumentKind::PlainText),
            other => Err(format!("unknown document kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub uri: String,
    pub kind: DocumentKind,
    pub content: String,
}

impl SourceDocument {
    pub fn new(uri: impl Into<String>, kind: DocumentKind, content: impl Into<String>) -> Self {
        Self {
            uri: uri.into(),
            kind,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Text,
    Table,
    ImageCaption,
}

impl BlockKind {
    /// Vote weight of a tag drawn from this kind of block. Tables are the
    /// structured specification source; captions are supplementary.
    pub fn vote_weight(self) -> f64 {
        match self {
            BlockKind::Table => 2.0,
            BlockKind::Text => 1.0,
            BlockKind::ImageCaption => 0.5,
        }
    }
}

/// A parsed fragment of a source document. Tables are serialized as
/// ` | `-delimited rows, images by their caption or alt text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceBlock {
    pub id: String,
    pub document_uri: String,
    pub kind: BlockKind,
    pub content: String,
    pub position: usize,
}

/// One extracted tag with its vote weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAssignment {
    pub block_id: String,
    pub attribute: String,
    pub value: Value,
    pub weight: f64,
}
