//! User-side query understanding: fold the conversation into one query,
//! decide whether it concerns haptic devices, and collect candidates from
//! the structured and vector stores.

mod search;
mod session;
mod summarize;

use thiserror::Error;

use crate::providers::ProviderError;
use crate::store::StoreError;

pub use search::{gather_candidates, plan_queries, Candidate, CandidateSet, QueryPlan, SearchPath};
pub use session::{ConversationSession, Role, SessionEvent, SessionStore, SharedSession, Turn};
pub use summarize::{
    extract_constraints, RouteDecision, Router, SummarizedQuery, Summarizer, DOMAIN_LEXICON,
};

pub const DEFAULT_WINDOW: usize = 4;
pub const DEFAULT_SEMANTIC_K: usize = 10;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid session id `{0}`")]
    InvalidSessionId(String),
    #[error("session log: {0}")]
    Session(String),
}

impl RetrievalError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, RetrievalError::Provider(p) if p.is_retryable())
    }
}
