//! One chat turn end to end: summarize, route, retrieve, rerank, prompt the
//! model with the shortlisted devices, and ground its answer.

mod postprocess;
mod prompt;
mod templates;

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;
use tracing::{info, warn};

use crate::patterns::PatternTable;
use crate::providers::{ProviderError, Providers};
use crate::rerank::{rerank, RankedDevice, RerankError, DEFAULT_SHORTLIST};
use crate::retrieval::{
    gather_candidates, plan_queries, CandidateSet, ConversationSession, QueryPlan, RetrievalError,
    RouteDecision, Router, SessionStore, SummarizedQuery, Summarizer, DEFAULT_SEMANTIC_K,
    DEFAULT_WINDOW,
};
use crate::schema::{SchemaError, TaxonomySchema};
use crate::store::{Catalog, StoreError};

pub use postprocess::{postprocess, AgentResponse, Recommendation, FALLBACK_ADVISORY};
pub use prompt::{assemble_prompt, reference_block, NO_MATCH_BLOCK};
pub use templates::{PromptTemplate, TemplateSet, TemplateTag};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("template: {0}")]
    Template(String),
    #[error("internal consistency: {0}")]
    Inconsistent(String),
    #[error("session `{0}` not found")]
    UnknownSession(String),
}

impl AgentError {
    pub fn is_retryable(&self) -> bool {
        match self {
            AgentError::Provider(p) => p.is_retryable(),
            AgentError::Retrieval(r) => r.is_retryable(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub window: usize,
    pub semantic_k: usize,
    pub shortlist: usize,
    pub answer_max_tokens: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            semantic_k: DEFAULT_SEMANTIC_K,
            shortlist: DEFAULT_SHORTLIST,
            answer_max_tokens: 512,
        }
    }
}

/// Every intermediate of one turn, for inspection and tests.
#[derive(Debug, Clone, Serialize)]
pub struct TurnTrace {
    pub summary: SummarizedQuery,
    pub route: RouteDecision,
    pub plan: QueryPlan,
    #[serde(skip)]
    pub candidates: CandidateSet,
    pub ranked: Vec<RankedDevice>,
    pub prompt: String,
    pub raw_answer: String,
    pub response: AgentResponse,
}

pub struct Agent {
    providers: Providers,
    summarizer: Summarizer,
    router: Router,
    templates: TemplateSet,
    config: AgentConfig,
}

impl Agent {
    pub fn new(
        schema: Arc<TaxonomySchema>,
        providers: Providers,
        templates: TemplateSet,
        config: AgentConfig,
    ) -> Result<Self, AgentError> {
        let constraints = PatternTable::constraint_default(&schema)?;
        let summarizer = Summarizer::new(
            schema.clone(),
            constraints,
            config.window,
            providers.prompt_char_budget,
        );
        let router = Router::default_rules(schema)?;
        Ok(Self {
            providers,
            summarizer,
            router,
            templates,
            config,
        })
    }

    pub fn with_defaults(schema: Arc<TaxonomySchema>, providers: Providers) -> Result<Self, AgentError> {
        Self::new(schema, providers, TemplateSet::default_set(), AgentConfig::default())
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn summarizer(&self) -> &Summarizer {
        &self.summarizer
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Runs a turn against a session snapshot without recording anything.
    pub fn respond(
        &self,
        session: &ConversationSession,
        prompt: &str,
        catalog: &Catalog,
    ) -> Result<TurnTrace, AgentError> {
        let summary = self
            .summarizer
            .summarize(session, prompt, self.providers.completion.as_ref())?;
        let route = self.router.route(&summary);
        let plan = if route.relevant {
            plan_queries(&summary, catalog.schema())
        } else {
            // revisit earlier recommendations, scored against the whole summary
            QueryPlan::semantic_only(summary.text.clone())
        };
        let candidates = gather_candidates(
            &plan,
            &route,
            &session.recommended_log,
            catalog,
            self.providers.embedder.as_ref(),
            self.config.semantic_k,
        )?;
        let ranked = rerank(&candidates, &plan, catalog, self.config.shortlist)?;
        let template = self.templates.select(&summary, &route);
        let prompt_text = assemble_prompt(template, &ranked, &summary, catalog)?;
        let raw_answer = self
            .providers
            .completion
            .complete(&prompt_text, self.config.answer_max_tokens)?;
        let response = postprocess(&raw_answer, &ranked, catalog, &template.id);
        Ok(TurnTrace {
            summary,
            route,
            plan,
            candidates,
            ranked,
            prompt: prompt_text,
            raw_answer,
            response,
        })
    }

    /// Runs and records one turn. The session is locked for the whole turn;
    /// on failure only an error event is appended.
    pub fn chat_turn(
        &self,
        sessions: &SessionStore,
        session_id: &str,
        prompt: &str,
        catalog: &Catalog,
    ) -> Result<TurnTrace, AgentError> {
        let shared = sessions
            .get(session_id)?
            .ok_or_else(|| AgentError::UnknownSession(session_id.to_string()))?;
        let mut session = shared.lock();
        match self.respond(&session, prompt, catalog) {
            Ok(trace) => {
                let ids: Vec<_> = trace.response.recommendations.iter().map(|r| r.id).collect();
                sessions.record_turn(&mut session, prompt.trim(), &trace.response.text, &ids)?;
                info!(session = session_id, template = %trace.response.template_id, recommended = ?ids, "turn complete");
                Ok(trace)
            }
            Err(e) => {
                warn!(session = session_id, error = %e, "turn failed");
                sessions.record_error(&mut session, &e.to_string(), e.is_retryable())?;
                Err(e)
            }
        }
    }
}
