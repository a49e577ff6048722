//! RankScore: the fraction of requested specifications a device meets plus
//! its cosine similarity to the query, and the top-N shortlist built on it.

use serde::Serialize;
use thiserror::Error;
use tracing::warn;

use crate::record::DeviceId;
use crate::retrieval::{CandidateSet, QueryPlan};
use crate::store::Catalog;

pub const DEFAULT_SHORTLIST: usize = 5;

/// Float slack tolerated on cosine inputs before they count as out of range.
const COSINE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RerankError {
    #[error("matched {n_pos} of {n_all} predicates")]
    CountExceedsTotal { n_pos: usize, n_all: usize },
    #[error("cosine {0} outside [-1, 1]")]
    CosineOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedDevice {
    pub id: DeviceId,
    pub n_pos: usize,
    pub n_all: usize,
    pub cosine: f64,
    pub rank_score: f64,
}

pub fn rank_score(n_pos: usize, n_all: usize, cosine: f64) -> Result<f64, RerankError> {
    if n_pos > n_all {
        return Err(RerankError::CountExceedsTotal { n_pos, n_all });
    }
    if !(cosine.abs() <= 1.0 + COSINE_SLACK) {
        return Err(RerankError::CosineOutOfRange(cosine));
    }
    let cosine = cosine.clamp(-1.0, 1.0);
    let spec_fraction = if n_all == 0 {
        0.0
    } else {
        n_pos as f64 / n_all as f64
    };
    Ok(spec_fraction + cosine)
}

/// Scores every candidate and keeps the best `n`, highest score first with
/// ties broken by ascending id. Candidates found only by structured search
/// are scored against the query vector from their stored embedding.
pub fn rerank(
    candidates: &CandidateSet,
    plan: &QueryPlan,
    catalog: &Catalog,
    n: usize,
) -> Result<Vec<RankedDevice>, RerankError> {
    let mut ranked = Vec::with_capacity(candidates.len());
    for (&id, c) in &candidates.entries {
        let cosine = match c.cosine {
            Some(cos) => cos,
            None => match (&candidates.query_vector, catalog.get_embedding(id)) {
                (Some(q), Some(v)) => q.cosine(v),
                _ => {
                    warn!(id, "no embedding to score against; cosine taken as 0");
                    0.0
                }
            },
        };
        let n_pos = c.matched_predicate_count;
        let score = rank_score(n_pos, plan.n_all, cosine)?;
        let cosine = cosine.clamp(-1.0, 1.0);
        ranked.push(RankedDevice {
            id,
            n_pos,
            n_all: plan.n_all,
            cosine,
            rank_score: score,
        });
    }
    ranked.sort_by(|a, b| b.rank_score.total_cmp(&a.rank_score).then(a.id.cmp(&b.id)));
    ranked.truncate(n);
    Ok(ranked)
}
