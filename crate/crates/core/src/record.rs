//! Device records and their taxonomy values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::schema::{SchemaError, TaxonomySchema, Value};

pub type DeviceId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    ResearchPaper,
    Commercial,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::ResearchPaper => "research_paper",
            SourceKind::Commercial => "commercial",
        }
    }
}

impl std::str::FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "research_paper" => Ok(SourceKind::ResearchPaper),
            "commercial" => Ok(SourceKind::Commercial),
            other => Err(format!("unknown source kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Approved,
    Corrected,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    /// The paper abstract for research papers, a generated summary for
    /// commercial devices.
    pub abstract_or_summary: String,
    #[serde(default)]
    pub publication_year: Option<i32>,
    #[serde(default)]
    pub citation_count: Option<u64>,
    #[serde(default)]
    pub citation_sources: Option<Vec<String>>,
}

/// A consensus taxonomy value together with the evidence that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeValue {
    pub value: Value,
    /// Accumulated vote weight per canonical candidate value.
    pub vote_tally: BTreeMap<String, f64>,
    #[serde(default)]
    pub supporting_blocks: Vec<String>,
    /// Set when a reviewer replaced the voted value; the tally is then kept
    /// as the machine evidence and need not contain `value`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub human_override: bool,
}

impl AttributeValue {
    /// A value asserted directly (fixture data, manual entry) with a single
    /// unit vote.
    pub fn asserted(value: Value) -> Self {
        let mut vote_tally = BTreeMap::new();
        vote_tally.insert(value.canonical(), 1.0);
        Self {
            value,
            vote_tally,
            supporting_blocks: Vec::new(),
            human_override: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub id: DeviceId,
    pub name: String,
    pub source_kind: SourceKind,
    pub metadata: Metadata,
    /// Sparse: a missing attribute means "unknown".
    #[serde(default)]
    pub taxonomy: BTreeMap<String, AttributeValue>,
    pub review_status: ReviewStatus,
    #[serde(default)]
    pub source_links: Vec<String>,
}

impl DeviceRecord {
    pub fn value(&self, attribute: &str) -> Option<&Value> {
        self.taxonomy.get(attribute).map(|a| &a.value)
    }

    /// Taxonomy entries in schema order; entries unknown to the schema are
    /// skipped.
    pub fn taxonomy_in_schema_order<'a>(
        &'a self,
        schema: &'a TaxonomySchema,
    ) -> impl Iterator<Item = (&'a str, &'a AttributeValue)> + 'a {
        schema
            .attributes()
            .iter()
            .filter_map(|def| self.taxonomy.get(&def.name).map(|v| (def.name.as_str(), v)))
    }

    pub fn validate(&self, schema: &TaxonomySchema) -> Result<(), SchemaError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "device name is empty"));
        }
        for (name, attr) in &self.taxonomy {
            schema.validate_value(name, &attr.value)?;
            if attr.vote_tally.values().any(|w| !(*w > 0.0) || !w.is_finite()) {
                return Err(invalid(name, "vote weights must be strictly positive"));
            }
            if !attr.human_override && !attr.vote_tally.contains_key(&attr.value.canonical()) {
                return Err(invalid(name, "value is missing from its vote tally"));
            }
        }
        if matches!(
            self.review_status,
            ReviewStatus::Approved | ReviewStatus::Corrected
        ) && self.source_links.is_empty()
        {
            return Err(invalid(
                "source_links",
                "reviewed records need at least one source link",
            ));
        }
        match self.source_kind {
            SourceKind::ResearchPaper => {
                if self.metadata.title.trim().is_empty() {
                    return Err(invalid("metadata.title", "research papers need a title"));
                }
                if self.metadata.abstract_or_summary.trim().is_empty() {
                    return Err(invalid(
                        "metadata.abstract_or_summary",
                        "research papers need an abstract",
                    ));
                }
            }
            SourceKind::Commercial => {
                if self.metadata.abstract_or_summary.trim().is_empty() {
                    return Err(invalid(
                        "metadata.abstract_or_summary",
                        "commercial devices need a summary",
                    ));
                }
            }
        }
        Ok(())
    }
}

fn invalid(attribute: &str, reason: &str) -> SchemaError {
    SchemaError::InvalidValue {
        attribute: attribute.to_string(),
        reason: reason.to_string(),
    }
}
