mod common;

use std::sync::Arc;

use common::{fixture_documents, schema, scholar_fixture_json};
use haptic_core::ingestion::{BlockLog, IngestionPipeline, ReviewDecision, ReviewQueue};
use haptic_core::providers::{FixtureMetadataClient, Providers};
use haptic_core::schema::Value;
use haptic_core::{Catalog, DeviceId, ReviewStatus, DEFAULT_DIMENSION};

fn pipeline() -> IngestionPipeline {
    let schema = schema();
    let providers = Providers::mock(&schema, DEFAULT_DIMENSION).unwrap();
    let metadata = FixtureMetadataClient::from_json(&scholar_fixture_json()).unwrap();
    IngestionPipeline::new(schema, providers, Arc::new(metadata))
}

struct Stores {
    catalog: Catalog,
    queue: ReviewQueue,
    log: BlockLog,
}

impl Stores {
    fn new() -> Self {
        Self {
            catalog: Catalog::new(schema(), DEFAULT_DIMENSION),
            queue: ReviewQueue::in_memory(),
            log: BlockLog::in_memory(),
        }
    }

    /// Ingests every fixture document and approves every draft.
    fn ingest_and_approve(&mut self, p: &IngestionPipeline) -> Vec<DeviceId> {
        let report = p.ingest_batch(&fixture_documents(), &self.catalog, &mut self.queue);
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        let ids: Vec<DeviceId> = report.staged.iter().map(|(_, id)| *id).collect();
        for &id in &ids {
            p.resolve(id, ReviewDecision::Approve, &mut self.queue, &mut self.catalog, &mut self.log)
                .unwrap();
        }
        ids
    }
}

#[test]
fn ingesting_twice_is_byte_identical() {
    let p = pipeline();
    let mut a = Stores::new();
    let ids = a.ingest_and_approve(&p);
    let first = a.catalog.export_json();

    // same stores again: uris map back to the same ids
    assert_eq!(a.ingest_and_approve(&p), ids);
    assert_eq!(a.catalog.export_json(), first);

    // fresh stores
    let mut b = Stores::new();
    b.ingest_and_approve(&p);
    assert_eq!(b.catalog.export_json(), first);
}

#[test]
fn table_and_text_votes_resolve_dof() {
    let p = pipeline();
    let mut s = Stores::new();
    s.ingest_and_approve(&p);
    let gannet = s
        .catalog
        .records()
        .find(|r| r.name == "Gannet Teleoperation Arm")
        .unwrap();
    let dof = &gannet.taxonomy["dof"];
    assert_eq!(dof.value, Value::Number(6.0));
    assert_eq!(dof.vote_tally.len(), 2);
    assert_eq!(dof.vote_tally["6"], 4.0);
    assert_eq!(dof.vote_tally["7"], 1.0);
    // only the two table blocks back the winning value
    assert_eq!(dof.supporting_blocks.len(), 2);
}

#[test]
fn html_blocks_keep_document_order_and_weights() {
    let p = pipeline();
    let (doc, kind) = fixture_documents().into_iter().find(|(d, _)| d.uri.contains("swift-6")).unwrap();
    let item = p.draft(&doc, kind, 1).unwrap();
    let kinds: Vec<_> = item.blocks.iter().map(|b| format!("{:?}", b.kind)).collect();
    assert_eq!(kinds, ["Text", "Text", "Table", "ImageCaption"]);
    let r = &item.draft;
    assert_eq!(r.value("dof"), Some(&Value::Number(6.0)));
    assert_eq!(r.value("actuated_dof"), Some(&Value::Number(3.0)));
    assert_eq!(r.value("grounded"), Some(&Value::Bool(true)));
    assert_eq!(r.value("price"), Some(&Value::Number(4500.0)));
    // only the caption mentions surgery: one half-weight vote
    assert_eq!(r.taxonomy["application_domain"].vote_tally["medical"], 0.5);
}

#[test]
fn paper_metadata_comes_from_the_scholar_fixture() {
    let p = pipeline();
    let mut s = Stores::new();
    s.ingest_and_approve(&p);
    let fixture: serde_json::Value = serde_json::from_str(&scholar_fixture_json()).unwrap();
    let seeded = &fixture["Petrel: A Wearable Exoskeleton for Wrist Rehabilitation"];
    let petrel = s.catalog.records().find(|r| r.name.starts_with("Petrel")).unwrap();
    assert_eq!(petrel.metadata.citation_count, seeded["citation_count"].as_u64());
    assert_eq!(petrel.metadata.authors.len(), seeded["authors"].as_array().unwrap().len());

    // no fixture entry: the document's own abstract is used
    let skua = s.catalog.records().find(|r| r.name.starts_with("Skua")).unwrap();
    assert_eq!(skua.metadata.citation_count, None);
    assert!(skua.metadata.abstract_or_summary.starts_with("Skua combines a pantograph linkage"));
}

#[test]
fn nothing_reaches_the_catalog_before_review() {
    let p = pipeline();
    let mut s = Stores::new();
    let report = p.ingest_batch(&fixture_documents(), &s.catalog, &mut s.queue);
    assert_eq!(report.staged.len(), 4);
    assert!(s.catalog.is_empty());
    assert_eq!(s.queue.pending().count(), 4);

    let (_, id) = report.staged[1];
    let record = p
        .resolve(
            id,
            ReviewDecision::Correct(vec![("dof".into(), "7".into()), ("manufacturer".into(), String::new())]),
            &mut s.queue,
            &mut s.catalog,
            &mut s.log,
        )
        .unwrap();
    assert_eq!(record.review_status, ReviewStatus::Corrected);
    assert_eq!(record.value("dof"), Some(&Value::Number(7.0)));
    assert!(record.taxonomy["dof"].human_override);
    assert!(record.value("manufacturer").is_none());
    assert_eq!(s.catalog.len(), 1);
    assert!(s.catalog.get_embedding(id).is_some());
    assert!(!s.log.is_empty());
    assert!(p
        .resolve(id, ReviewDecision::Approve, &mut s.queue, &mut s.catalog, &mut s.log)
        .is_err());
}
