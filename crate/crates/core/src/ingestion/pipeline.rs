use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use serde::Serialize;
use tracing::{info, warn};

use crate::providers::{MetadataClient, MetadataLookup, Providers};
use crate::record::{DeviceId, DeviceRecord, Metadata, ReviewStatus, SourceKind};
use crate::schema::TaxonomySchema;
use crate::store::Catalog;

use super::{
    aggregate_votes, document_title, embed_device, extract_tags, fetch_scholar_metadata,
    parse_source, resolve_review, stage_for_review, summarize_commercial, BlockKind, IngestError,
    ReviewDecision, ReviewItem, ReviewQueue, SourceBlock, SourceDocument,
};

/// Append-only log of every block behind a populated record.
#[derive(Debug, Default)]
pub struct BlockLog {
    path: Option<PathBuf>,
    ids: BTreeSet<String>,
}

impl BlockLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let path = path.into();
        let mut ids = BTreeSet::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| IngestError::Io(e.to_string()))?;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let block: SourceBlock = serde_json::from_str(line)
                    .map_err(|e| IngestError::Io(format!("{} line {}: {e}", path.display(), n + 1)))?;
                ids.insert(block.id);
            }
        }
        Ok(Self {
            path: Some(path),
            ids,
        })
    }

    pub fn contains(&self, block_id: &str) -> bool {
        self.ids.contains(block_id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Appends blocks not yet logged.
    pub fn append(&mut self, blocks: &[SourceBlock]) -> Result<(), IngestError> {
        let fresh: Vec<&SourceBlock> = blocks.iter().filter(|b| !self.ids.contains(&b.id)).collect();
        if fresh.is_empty() {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| IngestError::Io(e.to_string()))?;
            }
            let mut out = String::new();
            for b in &fresh {
                out.push_str(&serde_json::to_string(b).expect("block serializes"));
                out.push('\n');
            }
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
            file.write_all(out.as_bytes())
                .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
        }
        self.ids.extend(fresh.into_iter().map(|b| b.id.clone()));
        Ok(())
    }
}

/// Outcome of a batch: every input document is either staged or reported.
#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub staged: Vec<(String, DeviceId)>,
    pub errors: Vec<(String, String)>,
}

pub struct IngestionPipeline {
    schema: Arc<TaxonomySchema>,
    providers: Providers,
    metadata: Arc<dyn MetadataClient>,
}

impl IngestionPipeline {
    pub fn new(
        schema: Arc<TaxonomySchema>,
        providers: Providers,
        metadata: Arc<dyn MetadataClient>,
    ) -> Self {
        Self {
            schema,
            providers,
            metadata,
        }
    }

    pub fn schema(&self) -> &TaxonomySchema {
        &self.schema
    }

    /// Builds the review item for one document without touching any store.
    pub fn draft(
        &self,
        doc: &SourceDocument,
        source_kind: SourceKind,
        id: DeviceId,
    ) -> Result<ReviewItem, IngestError> {
        let blocks = parse_source(doc)?;
        let mut assignments = Vec::new();
        for block in &blocks {
            assignments.extend(extract_tags(block, &self.schema, self.providers.extractor.as_ref())?);
        }
        let taxonomy = aggregate_votes(&assignments);
        let title = document_title(doc).unwrap_or_else(|| doc.uri.clone());
        let metadata = match source_kind {
            SourceKind::ResearchPaper => self.paper_metadata(&title, &blocks)?,
            SourceKind::Commercial => Metadata {
                title: title.clone(),
                abstract_or_summary: summarize_commercial(&blocks, self.providers.completion.as_ref())?,
                ..Metadata::default()
            },
        };
        let tallies = taxonomy
            .iter()
            .map(|(k, v)| (k.clone(), v.vote_tally.clone()))
            .collect();
        let draft = DeviceRecord {
            id,
            name: metadata.title.clone(),
            source_kind,
            metadata,
            taxonomy,
            review_status: ReviewStatus::Pending,
            source_links: vec![doc.uri.clone()],
        };
        draft.validate(&self.schema)?;
        Ok(stage_for_review(draft, blocks, tallies))
    }

    fn paper_metadata(&self, title: &str, blocks: &[SourceBlock]) -> Result<Metadata, IngestError> {
        let mut metadata = match fetch_scholar_metadata(title, self.metadata.as_ref())? {
            MetadataLookup::Found(m) => m,
            MetadataLookup::Miss => {
                info!(%title, "no scholarly metadata; using the document itself");
                Metadata {
                    title: title.to_string(),
                    ..Metadata::default()
                }
            }
        };
        if metadata.title.trim().is_empty() {
            metadata.title = title.to_string();
        }
        if metadata.abstract_or_summary.trim().is_empty() {
            metadata.abstract_or_summary = document_abstract(title, blocks).ok_or_else(|| {
                IngestError::Document {
                    uri: blocks.first().map(|b| b.document_uri.clone()).unwrap_or_default(),
                    reason: "research paper has no abstract".into(),
                }
            })?;
        }
        Ok(metadata)
    }

    /// Id for a document: the id already holding this uri, else a fresh one.
    fn id_for(uri: &str, catalog: &Catalog, queue: &ReviewQueue, reserved: &BTreeMap<String, DeviceId>) -> Option<DeviceId> {
        if let Some(id) = reserved.get(uri) {
            return Some(*id);
        }
        catalog
            .records()
            .find(|r| r.source_links.iter().any(|l| l == uri))
            .map(|r| r.id)
            .or_else(|| {
                queue
                    .items()
                    .find(|i| i.draft.source_links.iter().any(|l| l == uri))
                    .map(|i| i.id())
            })
    }

    /// Drafts every document (in parallel) and stages the results in input
    /// order. Ids are reserved up front so the outcome does not depend on
    /// scheduling.
    pub fn ingest_batch(
        &self,
        docs: &[(SourceDocument, SourceKind)],
        catalog: &Catalog,
        queue: &mut ReviewQueue,
    ) -> BatchReport {
        let mut next = catalog.next_id().max(queue.max_id().map_or(1, |m| m + 1));
        let mut reserved = BTreeMap::new();
        let mut ids = Vec::with_capacity(docs.len());
        for (doc, _) in docs {
            let id = Self::id_for(&doc.uri, catalog, queue, &reserved).unwrap_or_else(|| {
                next += 1;
                next - 1
            });
            reserved.insert(doc.uri.clone(), id);
            ids.push(id);
        }

        let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(docs.len().max(1));
        let chunk = docs.len().div_ceil(workers).max(1);
        let drafts: Vec<Result<ReviewItem, IngestError>> = thread::scope(|s| {
            let handles: Vec<_> = docs
                .chunks(chunk)
                .zip(ids.chunks(chunk))
                .map(|(docs, ids)| {
                    s.spawn(move || {
                        docs.iter()
                            .zip(ids)
                            .map(|((doc, kind), id)| self.draft(doc, *kind, *id))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("ingestion worker panicked"))
                .collect()
        });

        let mut report = BatchReport::default();
        for ((doc, _), draft) in docs.iter().zip(drafts) {
            match draft.and_then(|item| {
                let id = item.id();
                queue.stage(item).map(|_| id)
            }) {
                Ok(id) => report.staged.push((doc.uri.clone(), id)),
                Err(e) => {
                    warn!(uri = %doc.uri, error = %e, "document not ingested");
                    report.errors.push((doc.uri.clone(), e.to_string()));
                }
            }
        }
        report
    }

    pub fn ingest(
        &self,
        doc: SourceDocument,
        source_kind: SourceKind,
        catalog: &Catalog,
        queue: &mut ReviewQueue,
    ) -> Result<DeviceId, IngestError> {
        let next = catalog.next_id().max(queue.max_id().map_or(1, |m| m + 1));
        let id = Self::id_for(&doc.uri, catalog, queue, &BTreeMap::new()).unwrap_or(next);
        let item = self.draft(&doc, source_kind, id)?;
        queue.stage(item)?;
        Ok(id)
    }

    /// Resolves a staged item and populates both stores. Nothing is written
    /// unless the decision applies and the embedding succeeds.
    pub fn resolve(
        &self,
        id: DeviceId,
        decision: ReviewDecision,
        queue: &mut ReviewQueue,
        catalog: &mut Catalog,
        log: &mut BlockLog,
    ) -> Result<DeviceRecord, IngestError> {
        let mut item = queue.get(id).cloned().ok_or(IngestError::UnknownReview(id))?;
        let record = resolve_review(&mut item, decision, &self.schema)?;
        let vector = embed_device(&record, &self.schema, self.providers.embedder.as_ref())?;
        log.append(&item.blocks)?;
        catalog.upsert(record.clone())?;
        catalog.put_embedding(id, vector)?;
        queue.stage(item)?;
        Ok(record)
    }
}

/// Abstract taken from the document: the paragraph headed "Abstract", else
/// the first text paragraph that is not the title.
fn document_abstract(title: &str, blocks: &[SourceBlock]) -> Option<String> {
    let texts = || blocks.iter().filter(|b| b.kind == BlockKind::Text);
    texts()
        .find_map(|b| {
            let rest = b.content.strip_prefix("Abstract")?;
            let rest = rest.trim_start_matches(|c: char| c == ':' || c == '.' || c == '-' || c.is_whitespace());
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .or_else(|| {
            texts()
                .map(|b| b.content.trim())
                .find(|c| !c.is_empty() && *c != title.trim())
                .map(str::to_string)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::DocumentKind;
    use crate::providers::FixtureMetadataClient;
    use crate::schema::Value;

    fn pipeline(metadata: &str) -> IngestionPipeline {
        let schema = Arc::new(TaxonomySchema::default_schema());
        let providers = Providers::mock(&schema, 256).unwrap();
        IngestionPipeline::new(
            schema,
            providers,
            Arc::new(FixtureMetadataClient::from_json(metadata).unwrap()),
        )
    }

    fn commercial() -> SourceDocument {
        SourceDocument::new(
            "https://shop.example/falcon",
            DocumentKind::PlainText,
            "Falcon Stylus\n\nThe Falcon is a grounded desktop device. It is fun.\n\nDOF | 6\n\nDOF | 6\n\nIt provides 7 degrees of freedom.\n",
        )
    }

    #[test]
    fn commercial_document_is_drafted_with_votes_and_summary() {
        let p = pipeline("{}");
        let item = p.draft(&commercial(), SourceKind::Commercial, 5).unwrap();
        let d = &item.draft;
        assert_eq!(d.name, "Falcon Stylus");
        assert_eq!(d.review_status, ReviewStatus::Pending);
        assert_eq!(d.taxonomy["dof"].value, Value::Number(6.0));
        assert_eq!(item.tallies["dof"].get("6"), Some(&4.0));
        assert_eq!(item.tallies["dof"].get("7"), Some(&1.0));
        assert_eq!(
            d.metadata.abstract_or_summary,
            "Falcon Stylus The Falcon is a grounded desktop device. It provides 7 degrees of freedom."
        );
    }

    #[test]
    fn paper_without_scholar_hit_uses_document_abstract() {
        let p = pipeline("{}");
        let doc = SourceDocument::new(
            "paper.txt",
            DocumentKind::PdfTextDump,
            "A Cable Glove\n\nAbstract: We present a wearable glove.\n\nBody.",
        );
        let item = p.draft(&doc, SourceKind::ResearchPaper, 1).unwrap();
        assert_eq!(item.draft.metadata.abstract_or_summary, "We present a wearable glove.");
        assert_eq!(item.draft.metadata.citation_count, None);
    }

    #[test]
    fn paper_with_scholar_hit_takes_its_metadata() {
        let p = pipeline(r#"{"A Cable Glove": {"title": "A Cable Glove", "abstract_or_summary": "Seeded.", "citation_count": 12}}"#);
        let doc = SourceDocument::new("paper.txt", DocumentKind::PdfTextDump, "A Cable Glove\n\nBody.");
        let item = p.draft(&doc, SourceKind::ResearchPaper, 1).unwrap();
        assert_eq!(item.draft.metadata.citation_count, Some(12));
        assert_eq!(item.draft.metadata.abstract_or_summary, "Seeded.");
    }

    #[test]
    fn batch_accounts_for_every_document() {
        let p = pipeline("{}");
        let catalog = Catalog::new(Arc::new(TaxonomySchema::default_schema()), 256);
        let mut queue = ReviewQueue::in_memory();
        let docs = vec![
            (commercial(), SourceKind::Commercial),
            (SourceDocument::new("empty", DocumentKind::PlainText, ""), SourceKind::Commercial),
            (SourceDocument::new("tables-only", DocumentKind::PlainText, "a | b"), SourceKind::Commercial),
        ];
        let report = p.ingest_batch(&docs, &catalog, &mut queue);
        assert_eq!(report.staged, vec![("https://shop.example/falcon".to_string(), 1)]);
        assert_eq!(report.errors.len(), 2);
        assert!(report.errors[0].1.contains("empty"));
    }

    #[test]
    fn resolution_populates_stores_and_block_log() {
        let p = pipeline("{}");
        let mut catalog = Catalog::new(Arc::new(TaxonomySchema::default_schema()), 256);
        let mut queue = ReviewQueue::in_memory();
        let mut log = BlockLog::in_memory();
        let id = p.ingest(commercial(), SourceKind::Commercial, &catalog, &mut queue).unwrap();
        let rec = p
            .resolve(id, ReviewDecision::Approve, &mut queue, &mut catalog, &mut log)
            .unwrap();
        assert_eq!(catalog.get(id), Some(&rec));
        assert!(catalog.get_embedding(id).is_some());
        for attr in rec.taxonomy.values() {
            assert!(attr.supporting_blocks.iter().all(|b| log.contains(b)));
        }
        assert!(matches!(
            p.resolve(id, ReviewDecision::Approve, &mut queue, &mut catalog, &mut log),
            Err(IngestError::AlreadyResolved(_))
        ));
        // re-ingesting the same uri keeps its id
        assert_eq!(p.ingest(commercial(), SourceKind::Commercial, &catalog, &mut queue).unwrap(), id);
    }

    #[test]
    fn block_log_persists_and_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blocks.jsonl");
        let blocks = parse_source(&commercial()).unwrap();
        let mut log = BlockLog::open(&path).unwrap();
        log.append(&blocks).unwrap();
        log.append(&blocks).unwrap();
        let reopened = BlockLog::open(&path).unwrap();
        assert_eq!(reopened.len(), blocks.len());
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), blocks.len());
    }
}
