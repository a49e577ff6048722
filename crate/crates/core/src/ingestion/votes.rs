use std::collections::{BTreeMap, BTreeSet};

use tracing::warn;

use crate::providers::ExtractionProvider;
use crate::record::AttributeValue;
use crate::schema::{TaxonomySchema, Value};

use super::{AttributeAssignment, IngestError, SourceBlock};

/// Tags one block. The extractor walks every schema attribute; proposals it
/// cannot type against the schema are logged and skipped.
pub fn extract_tags(
    block: &SourceBlock,
    schema: &TaxonomySchema,
    extractor: &dyn ExtractionProvider,
) -> Result<Vec<AttributeAssignment>, IngestError> {
    let weight = block.kind.vote_weight();
    let mut out = Vec::new();
    for (attribute, raw) in extractor.tag(&block.content, schema)? {
        let Some(def) = schema.get(&attribute) else {
            warn!(block = %block.id, %attribute, "extractor proposed an unknown attribute");
            continue;
        };
        match def.kind.parse_literal(&raw) {
            Ok(value) => out.push(AttributeAssignment {
                block_id: block.id.clone(),
                attribute,
                value,
                weight,
            }),
            Err(reason) => {
                warn!(block = %block.id, %attribute, %raw, %reason, "malformed tag skipped")
            }
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Candidate {
    value: Option<Value>,
    weights: Vec<f64>,
    blocks: BTreeSet<String>,
}

impl Candidate {
    /// Weights are summed in sorted order so the total does not depend on
    /// the order assignments arrived in.
    fn total(&self) -> f64 {
        let mut w = self.weights.clone();
        w.sort_by(f64::total_cmp);
        w.iter().sum()
    }

    fn strongest(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

/// Weighted-vote consensus per attribute. The value with the largest total
/// weight wins; ties go to the value backed by the heaviest single block
/// kind, then to the lexicographically smaller canonical string.
pub fn aggregate_votes(assignments: &[AttributeAssignment]) -> BTreeMap<String, AttributeValue> {
    let mut by_attr: BTreeMap<&str, BTreeMap<String, Candidate>> = BTreeMap::new();
    for a in assignments {
        let c = by_attr
            .entry(&a.attribute)
            .or_default()
            .entry(a.value.canonical())
            .or_default();
        c.value.get_or_insert_with(|| a.value.clone());
        c.weights.push(a.weight);
        c.blocks.insert(a.block_id.clone());
    }

    by_attr
        .into_iter()
        .map(|(attr, candidates)| {
            let scored: Vec<(&String, &Candidate, f64)> = candidates
                .iter()
                .map(|(key, c)| (key, c, c.total()))
                .collect();
            let (_, winner, _) = scored
                .iter()
                .max_by(|a, b| {
                    a.2.total_cmp(&b.2)
                        .then(a.1.strongest().total_cmp(&b.1.strongest()))
                        // smaller key must compare as greater to win max_by
                        .then(b.0.cmp(a.0))
                })
                .expect("attribute has at least one candidate");
            let vote_tally = scored.iter().map(|(k, _, t)| ((*k).clone(), *t)).collect();
            (
                attr.to_string(),
                AttributeValue {
                    value: winner.value.clone().expect("candidate value set"),
                    vote_tally,
                    supporting_blocks: winner.blocks.iter().cloned().collect(),
                    human_override: false,
                },
            )
        })
        .collect()
}
