use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use tracing::warn;

use crate::embedding::EmbeddingVector;
use crate::providers::{EmbeddingProvider, ProviderError};
use crate::record::DeviceId;
use crate::schema::{Predicate, TaxonomySchema};
use crate::store::Catalog;

use super::{RetrievalError, RouteDecision, SummarizedQuery};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryPlan {
    pub predicates: Vec<Predicate>,
    pub semantic_text: String,
    pub n_all: usize,
}

impl QueryPlan {
    pub fn semantic_only(semantic_text: impl Into<String>) -> Self {
        Self {
            predicates: Vec::new(),
            semantic_text: semantic_text.into(),
            n_all: 0,
        }
    }
}

/// Keeps the constraints the schema accepts; the rest are logged and dropped.
pub fn plan_queries(summary: &SummarizedQuery, schema: &TaxonomySchema) -> QueryPlan {
    let predicates: Vec<Predicate> = summary
        .extracted_constraints
        .iter()
        .filter(|p| match schema.validate_predicate(p) {
            Ok(()) => true,
            Err(e) => {
                warn!(attribute = %p.attribute, error = %e, "constraint dropped from plan");
                false
            }
        })
        .cloned()
        .collect();
    QueryPlan {
        n_all: predicates.len(),
        predicates,
        semantic_text: summary.semantic_text.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPath {
    Conditional,
    Semantic,
    History,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Candidate {
    pub matched_predicate_count: usize,
    pub cosine: Option<f64>,
    pub provenance: BTreeSet<SearchPath>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    pub n_all: usize,
    /// Embedded query, used to score candidates found without a cosine.
    pub query_vector: Option<EmbeddingVector>,
    pub entries: BTreeMap<DeviceId, Candidate>,
}

impl CandidateSet {
    pub fn ids(&self) -> BTreeSet<DeviceId> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn embed_query(text: &str, embedder: &dyn EmbeddingProvider) -> Result<Option<EmbeddingVector>, RetrievalError> {
    match embedder.embed(text) {
        Ok(v) => Ok(Some(v)),
        Err(ProviderError::InvalidInput(reason)) => {
            warn!(%reason, "query has no embeddable text; semantic path skipped");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the candidate searches for one turn.
///
/// Relevant turns union one structured query per predicate (counting how
/// many predicates each device meets) with the semantic top-`k`. Irrelevant
/// turns only revisit the session's earlier recommendations.
pub fn gather_candidates(
    plan: &QueryPlan,
    route: &RouteDecision,
    recommended_log: &[DeviceId],
    catalog: &Catalog,
    embedder: &dyn EmbeddingProvider,
    k: usize,
) -> Result<CandidateSet, RetrievalError> {
    let query_vector = embed_query(&plan.semantic_text, embedder)?;
    let mut set = CandidateSet {
        n_all: plan.n_all,
        query_vector,
        entries: BTreeMap::new(),
    };

    if !route.relevant {
        for &id in recommended_log {
            if catalog.get(id).is_none() {
                warn!(id, "recommended device no longer in the catalog");
                continue;
            }
            let cosine = match (&set.query_vector, catalog.get_embedding(id)) {
                (Some(q), Some(v)) => Some(q.cosine(v)),
                _ => None,
            };
            let entry = set.entries.entry(id).or_default();
            entry.cosine = cosine;
            entry.provenance.insert(SearchPath::History);
        }
        return Ok(set);
    }

    for p in &plan.predicates {
        for record in catalog.query_structured(std::slice::from_ref(p))? {
            let entry = set.entries.entry(record.id).or_default();
            entry.matched_predicate_count += 1;
            entry.provenance.insert(SearchPath::Conditional);
        }
    }
    if let Some(q) = &set.query_vector {
        for (id, cosine) in catalog.vector_search(q, k)? {
            let entry = set.entries.entry(id).or_default();
            entry.cosine = Some(cosine);
            entry.provenance.insert(SearchPath::Semantic);
        }
    }
    Ok(set)
}
