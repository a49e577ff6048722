use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::providers::EmbeddingProvider;
use crate::record::{AttributeValue, DeviceId, DeviceRecord, ReviewStatus};
use crate::schema::{SchemaError, TaxonomySchema, Value, ValueKind};
use crate::store::write_atomic;

use super::{IngestError, SourceBlock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    Approved,
    /// Reviewer edits; `None` removes the attribute.
    Corrected { edits: BTreeMap<String, Option<Value>> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReviewDecision {
    Approve,
    /// `(attribute, raw value)` edits; an empty value removes the attribute.
    Correct(Vec<(String, String)>),
}

/// A system-generated draft waiting for an expert's verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub draft: DeviceRecord,
    pub tallies: BTreeMap<String, BTreeMap<String, f64>>,
    pub blocks: Vec<SourceBlock>,
    pub state: ReviewState,
}

impl ReviewItem {
    pub fn id(&self) -> DeviceId {
        self.draft.id
    }

    pub fn is_pending(&self) -> bool {
        self.state == ReviewState::Pending
    }
}

pub fn stage_for_review(
    draft: DeviceRecord,
    blocks: Vec<SourceBlock>,
    tallies: BTreeMap<String, BTreeMap<String, f64>>,
) -> ReviewItem {
    ReviewItem {
        draft,
        tallies,
        blocks,
        state: ReviewState::Pending,
    }
}

/// Applies a decision to a pending item and returns the record to persist.
/// On error the item stays pending.
pub fn resolve_review(
    item: &mut ReviewItem,
    decision: ReviewDecision,
    schema: &TaxonomySchema,
) -> Result<DeviceRecord, IngestError> {
    if !item.is_pending() {
        return Err(IngestError::AlreadyResolved(item.id()));
    }
    let mut record = item.draft.clone();
    let next_state = match decision {
        ReviewDecision::Approve => {
            record.review_status = ReviewStatus::Approved;
            ReviewState::Approved
        }
        ReviewDecision::Correct(raw_edits) => {
            let mut edits = BTreeMap::new();
            for (attribute, raw) in raw_edits {
                let def = schema
                    .get(&attribute)
                    .ok_or_else(|| SchemaError::UnknownAttribute(attribute.clone()))?;
                if raw.trim().is_empty() {
                    record.taxonomy.remove(&attribute);
                    edits.insert(attribute, None);
                    continue;
                }
                let value = def
                    .kind
                    .parse_literal(&raw)
                    .map_err(|reason| SchemaError::InvalidValue {
                        attribute: attribute.clone(),
                        reason,
                    })?;
                let entry = record
                    .taxonomy
                    .entry(attribute.clone())
                    .or_insert_with(|| AttributeValue {
                        value: value.clone(),
                        vote_tally: BTreeMap::new(),
                        supporting_blocks: Vec::new(),
                        human_override: true,
                    });
                entry.value = value.clone();
                entry.human_override = true;
                edits.insert(attribute, Some(value));
            }
            record.review_status = ReviewStatus::Corrected;
            ReviewState::Corrected { edits }
        }
    };
    record.validate(schema)?;
    item.state = next_state;
    Ok(record)
}

/// Text the device embedding is computed from: title, abstract or summary,
/// then every enum and free-text attribute as a `name: value` line in schema
/// order.
pub fn canonical_text(record: &DeviceRecord, schema: &TaxonomySchema) -> String {
    let title = if record.metadata.title.trim().is_empty() {
        record.name.as_str()
    } else {
        record.metadata.title.as_str()
    };
    let mut lines = vec![title.trim().to_string()];
    let summary = record.metadata.abstract_or_summary.trim();
    if !summary.is_empty() {
        lines.push(summary.to_string());
    }
    for def in schema.attributes() {
        if !matches!(def.kind, ValueKind::Enum { .. } | ValueKind::FreeText) {
            continue;
        }
        if let Some(attr) = record.taxonomy.get(&def.name) {
            lines.push(format!("{}: {}", def.name, attr.value));
        }
    }
    lines.join("\n")
}

pub fn embed_device(
    record: &DeviceRecord,
    schema: &TaxonomySchema,
    embedder: &dyn EmbeddingProvider,
) -> Result<EmbeddingVector, IngestError> {
    if record.review_status == ReviewStatus::Pending {
        return Err(IngestError::NotReviewed(record.id));
    }
    Ok(embedder.embed(&canonical_text(record, schema))?)
}

/// Staged review items, persisted one JSON file per item so the pipeline
/// survives restarts.
#[derive(Debug, Default)]
pub struct ReviewQueue {
    dir: Option<PathBuf>,
    items: BTreeMap<DeviceId, ReviewItem>,
}

impl ReviewQueue {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let dir = dir.into();
        let mut items = BTreeMap::new();
        if dir.exists() {
            let entries = fs::read_dir(&dir).map_err(|e| IngestError::Io(e.to_string()))?;
            for entry in entries {
                let path = entry.map_err(|e| IngestError::Io(e.to_string()))?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let json = fs::read_to_string(&path).map_err(|e| IngestError::Io(e.to_string()))?;
                let item: ReviewItem = serde_json::from_str(&json)
                    .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
                items.insert(item.id(), item);
            }
        }
        Ok(Self {
            dir: Some(dir),
            items,
        })
    }

    pub fn max_id(&self) -> Option<DeviceId> {
        self.items.keys().next_back().copied()
    }

    pub fn get(&self, id: DeviceId) -> Option<&ReviewItem> {
        self.items.get(&id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    pub fn pending(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values().filter(|i| i.is_pending())
    }

    pub fn stage(&mut self, item: ReviewItem) -> Result<(), IngestError> {
        self.persist(&item)?;
        self.items.insert(item.id(), item);
        Ok(())
    }

    /// Resolves an item in place, persisting the new state. The caller
    /// stores the returned record.
    pub fn resolve(
        &mut self,
        id: DeviceId,
        decision: ReviewDecision,
        schema: &TaxonomySchema,
    ) -> Result<(DeviceRecord, Vec<SourceBlock>), IngestError> {
        let mut item = self.items.get(&id).cloned().ok_or(IngestError::UnknownReview(id))?;
        let record = resolve_review(&mut item, decision, schema)?;
        self.persist(&item)?;
        let blocks = item.blocks.clone();
        self.items.insert(id, item);
        Ok((record, blocks))
    }

    fn persist(&self, item: &ReviewItem) -> Result<(), IngestError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let json = serde_json::to_string_pretty(item).expect("review item serializes");
        write_atomic(&dir.join(format!("{}.json", item.id())), json.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::HashEmbedder;
    use crate::record::{Metadata, SourceKind};

    fn draft() -> DeviceRecord {
        let mut taxonomy = BTreeMap::new();
        let mut tally = BTreeMap::new();
        tally.insert("6".to_string(), 4.0);
        tally.insert("7".to_string(), 1.0);
        taxonomy.insert(
            "dof".to_string(),
            AttributeValue {
                value: Value::Number(6.0),
                vote_tally: tally,
                supporting_blocks: vec!["d#1".into()],
                human_override: false,
            },
        );
        taxonomy.insert(
            "mechanism".to_string(),
            AttributeValue::asserted(Value::Text("serial".into())),
        );
        DeviceRecord {
            id: 3,
            name: "Arm".into(),
            source_kind: SourceKind::Commercial,
            metadata: Metadata {
                title: "Arm".into(),
                abstract_or_summary: "A serial arm.".into(),
                ..Metadata::default()
            },
            taxonomy,
            review_status: ReviewStatus::Pending,
            source_links: vec!["https://example.org/arm".into()],
        }
    }

    fn item() -> ReviewItem {
        stage_for_review(draft(), vec![], BTreeMap::new())
    }

    #[test]
    fn approve_passes_draft_through() {
        let schema = TaxonomySchema::default_schema();
        let mut it = item();
        let rec = resolve_review(&mut it, ReviewDecision::Approve, &schema).unwrap();
        let mut expected = draft();
        expected.review_status = ReviewStatus::Approved;
        assert_eq!(rec, expected);
        assert_eq!(it.state, ReviewState::Approved);
    }

    #[test]
    fn correction_marks_override() {
        let schema = TaxonomySchema::default_schema();
        let mut it = item();
        let rec = resolve_review(
            &mut it,
            ReviewDecision::Correct(vec![("dof".into(), "7".into()), ("grounded".into(), "true".into())]),
            &schema,
        )
        .unwrap();
        assert_eq!(rec.review_status, ReviewStatus::Corrected);
        let dof = &rec.taxonomy["dof"];
        assert_eq!(dof.value, Value::Number(7.0));
        assert!(dof.human_override);
        assert_eq!(dof.vote_tally.get("6"), Some(&4.0));
        assert!(rec.taxonomy["grounded"].human_override);
    }

    #[test]
    fn double_resolution_is_rejected() {
        let schema = TaxonomySchema::default_schema();
        let mut it = item();
        resolve_review(&mut it, ReviewDecision::Approve, &schema).unwrap();
        assert!(matches!(
            resolve_review(&mut it, ReviewDecision::Approve, &schema),
            Err(IngestError::AlreadyResolved(3))
        ));
    }

    #[test]
    fn bad_correction_leaves_item_pending() {
        let schema = TaxonomySchema::default_schema();
        let mut it = item();
        let err = resolve_review(
            &mut it,
            ReviewDecision::Correct(vec![("dof".into(), "many".into())]),
            &schema,
        )
        .unwrap_err();
        assert!(err.to_string().contains("dof"));
        assert!(it.is_pending());
    }

    #[test]
    fn canonical_text_layout() {
        let schema = TaxonomySchema::default_schema();
        assert_eq!(
            canonical_text(&draft(), &schema),
            "Arm\nA serial arm.\nmechanism: serial"
        );
    }

    #[test]
    fn embedding_requires_review_and_is_stable() {
        let schema = TaxonomySchema::default_schema();
        let e = HashEmbedder::new(256);
        assert!(matches!(
            embed_device(&draft(), &schema, &e),
            Err(IngestError::NotReviewed(3))
        ));
        let mut rec = draft();
        rec.review_status = ReviewStatus::Approved;
        let a = embed_device(&rec, &schema, &e).unwrap();
        assert_eq!(a, embed_device(&rec, &schema, &e).unwrap());

        let mut twin = rec.clone();
        twin.id = 99;
        twin.taxonomy.get_mut("dof").unwrap().value = Value::Number(2.0);
        // numeric attributes are not part of the canonical text
        assert_eq!(embed_device(&twin, &schema, &e).unwrap(), a);

        let mut changed = rec.clone();
        changed.taxonomy.get_mut("mechanism").unwrap().value = Value::Text("parallel".into());
        let b = embed_device(&changed, &schema, &e).unwrap();
        assert!(a.cosine(&b) < 1.0);
    }

    #[test]
    fn queue_persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let schema = TaxonomySchema::default_schema();
        let mut q = ReviewQueue::open(dir.path()).unwrap();
        q.stage(item()).unwrap();
        assert_eq!(ReviewQueue::open(dir.path()).unwrap().pending().count(), 1);
        q.resolve(3, ReviewDecision::Approve, &schema).unwrap();
        let reopened = ReviewQueue::open(dir.path()).unwrap();
        assert_eq!(reopened.pending().count(), 0);
        assert_eq!(reopened.get(3).unwrap().state, ReviewState::Approved);
    }
}
