use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;
use tracing::warn;

use crate::patterns::{PatternTable, RuleMatch};
use crate::providers::protocol::{PromptBuilder, TASK_SUMMARIZE_CONVERSATION};
use crate::providers::{turns_to_drop, CompletionProvider};
use crate::schema::{Operator, Predicate, SchemaError, TaxonomySchema};

use super::{ConversationSession, RetrievalError};

pub const DOMAIN_LEXICON: &str = include_str!("../../data/domain_lexicon.txt");

const SUMMARY_MAX_TOKENS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarizedQuery {
    /// Consolidated query over the recent conversation.
    pub text: String,
    /// The user's new prompt, verbatim.
    pub prompt: String,
    pub extracted_constraints: Vec<Predicate>,
    /// `text` with the constraint phrases cut out.
    pub semantic_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RouteDecision {
    pub relevant: bool,
    pub reason: String,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Typed predicates for the claimed constraint phrases in `text`, plus the
/// byte spans they cover. When one (attribute, operator) pair is stated
/// more than once the later statement wins.
pub fn extract_constraints(
    text: &str,
    table: &PatternTable,
    schema: &TaxonomySchema,
) -> (Vec<Predicate>, Vec<(usize, usize)>) {
    let matches = table.claim_matches(text);
    let spans = matches.iter().map(|m| (m.start, m.end)).collect();
    let mut latest: BTreeMap<(String, Operator), (usize, Predicate)> = BTreeMap::new();
    for m in &matches {
        match to_predicate(m, schema) {
            Ok(p) => {
                latest.insert((p.attribute.clone(), p.op), (m.start, p));
            }
            Err(e) => warn!(phrase = %&text[m.start..m.end], error = %e, "constraint skipped"),
        }
    }
    let mut ordered: Vec<(usize, Predicate)> = latest.into_values().collect();
    ordered.sort_by_key(|(start, _)| *start);
    (ordered.into_iter().map(|(_, p)| p).collect(), spans)
}

fn to_predicate(m: &RuleMatch, schema: &TaxonomySchema) -> Result<Predicate, SchemaError> {
    let def = schema
        .get(&m.attribute)
        .ok_or_else(|| SchemaError::UnknownAttribute(m.attribute.clone()))?;
    let value = def
        .kind
        .parse_literal(&m.value)
        .map_err(|reason| SchemaError::InvalidValue {
            attribute: m.attribute.clone(),
            reason,
        })?;
    let p = Predicate {
        attribute: m.attribute.clone(),
        op: m.op,
        value,
    };
    schema.validate_predicate(&p)?;
    Ok(p)
}

fn cut_spans(text: &str, spans: &[(usize, usize)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    let mut sorted = spans.to_vec();
    sorted.sort_unstable();
    for (start, end) in sorted {
        if start >= at {
            out.push_str(&text[at..start]);
            out.push(' ');
            at = end;
        }
    }
    out.push_str(&text[at..]);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Folds the recent conversation and the new prompt into one query.
pub struct Summarizer {
    schema: Arc<TaxonomySchema>,
    constraints: PatternTable,
    window: usize,
    char_budget: usize,
}

impl Summarizer {
    pub fn new(
        schema: Arc<TaxonomySchema>,
        constraints: PatternTable,
        window: usize,
        char_budget: usize,
    ) -> Self {
        Self {
            schema,
            constraints,
            window,
            char_budget,
        }
    }

    pub fn constraints(&self) -> &PatternTable {
        &self.constraints
    }

    pub fn summarize(
        &self,
        session: &ConversationSession,
        new_prompt: &str,
        provider: &dyn CompletionProvider,
    ) -> Result<SummarizedQuery, RetrievalError> {
        let prompt = new_prompt.trim();
        if prompt.is_empty() {
            return Err(RetrievalError::EmptyPrompt);
        }
        let history: Vec<&str> = session.user_turns().collect();
        let mut window: Vec<String> = history[history.len().saturating_sub(self.window)..]
            .iter()
            .map(|t| t.to_string())
            .collect();

        let instructions = PromptBuilder::task(TASK_SUMMARIZE_CONVERSATION)
            .line("Rewrite the conversation below as one self-contained request for a haptic device.")
            .line("Keep every requirement the user still holds; the newest prompt overrides older ones.");
        let fixed_len = instructions.len() + prompt.len();
        window.drain(..turns_to_drop(fixed_len, &window, self.char_budget));

        let mut request = instructions;
        for turn in &window {
            request = request.section("user", turn);
        }
        let request = request.section("prompt", prompt).build();
        let mut text = provider.complete(&request, SUMMARY_MAX_TOKENS)?.trim().to_string();
        if text.is_empty() {
            warn!("empty conversation summary; using the raw window");
            window.push(prompt.to_string());
            text = window.join(" ");
        }

        let (extracted_constraints, spans) = extract_constraints(&text, &self.constraints, &self.schema);
        let mut semantic_text = cut_spans(&text, &spans);
        if !semantic_text.chars().any(char::is_alphanumeric) {
            semantic_text = text.clone();
        }
        Ok(SummarizedQuery {
            text,
            prompt: prompt.to_string(),
            extracted_constraints,
            semantic_text,
        })
    }
}

/// Rule-based relevance classifier over the newest prompt: relevant when the
/// prompt names a domain term or schema attribute, or states a constraint.
pub struct Router {
    schema: Arc<TaxonomySchema>,
    lexicon: BTreeSet<String>,
    phrases: Vec<Vec<String>>,
    constraints: PatternTable,
}

impl Router {
    pub fn new(schema: Arc<TaxonomySchema>, lexicon: &str, constraints: PatternTable) -> Self {
        let lexicon = lexicon
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .flat_map(words)
            .collect();
        let phrases = schema.attributes().iter().map(|a| words(&a.name)).collect();
        Self {
            schema,
            lexicon,
            phrases,
            constraints,
        }
    }

    pub fn default_rules(schema: Arc<TaxonomySchema>) -> Result<Self, SchemaError> {
        let constraints = PatternTable::constraint_default(&schema)?;
        Ok(Self::new(schema, DOMAIN_LEXICON, constraints))
    }

    pub fn lexicon(&self) -> impl Iterator<Item = &str> {
        self.lexicon.iter().map(String::as_str)
    }

    pub fn route(&self, summary: &SummarizedQuery) -> RouteDecision {
        let tokens = words(&summary.prompt);
        if let Some(hit) = tokens.iter().find(|t| self.lexicon.contains(*t)) {
            return RouteDecision {
                relevant: true,
                reason: format!("domain term `{hit}`"),
            };
        }
        if let Some(phrase) = self
            .phrases
            .iter()
            .find(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
        {
            return RouteDecision {
                relevant: true,
                reason: format!("attribute `{}`", phrase.join("_")),
            };
        }
        let (constraints, _) = extract_constraints(&summary.prompt, &self.constraints, &self.schema);
        if !constraints.is_empty() {
            return RouteDecision {
                relevant: true,
                reason: format!("{} constraint(s) stated", constraints.len()),
            };
        }
        RouteDecision {
            relevant: false,
            reason: "no domain term or constraint in the prompt".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{MockCompletion, ProviderError};
    use crate::retrieval::SessionStore;
    use crate::schema::Value;
    use proptest::prelude::*;

    fn schema() -> Arc<TaxonomySchema> {
        Arc::new(TaxonomySchema::default_schema())
    }

    fn summarizer() -> Summarizer {
        let s = schema();
        let table = PatternTable::constraint_default(&s).unwrap();
        Summarizer::new(s, table, 4, 12_000)
    }

    fn pred(attribute: &str, op: Operator, value: Value) -> Predicate {
        Predicate {
            attribute: attribute.into(),
            op,
            value,
        }
    }

    fn session_with(user_turns: &[&str]) -> ConversationSession {
        let store = SessionStore::in_memory();
        let shared = store.create_with_id("t").unwrap();
        let mut s = shared.lock().clone();
        for t in user_turns {
            store.record_turn(&mut s, t, "ok", &[]).unwrap();
        }
        s
    }

    #[test]
    fn fresh_session_constraints() {
        let q = summarizer()
            .summarize(&session_with(&[]), "I need a grounded device with 6 DOF", &MockCompletion)
            .unwrap();
        assert_eq!(
            q.extracted_constraints,
            vec![
                pred("grounded", Operator::Eq, Value::Bool(true)),
                pred("dof", Operator::Eq, Value::Number(6.0)),
            ]
        );
        assert_eq!(q.semantic_text, "I need a device with");
        assert_eq!(q.text, "I need a grounded device with 6 DOF");
    }

    #[test]
    fn window_carries_earlier_constraints() {
        let s = session_with(&["Looking for a 6 DOF arm"]);
        let q = summarizer().summarize(&s, "make it portable instead", &MockCompletion).unwrap();
        assert!(q.extracted_constraints.contains(&pred("dof", Operator::Eq, Value::Number(6.0))));
        assert!(q
            .extracted_constraints
            .contains(&pred("portability", Operator::Eq, Value::Text("portable".into()))));
    }

    #[test]
    fn window_is_four_user_turns() {
        let s = session_with(&["one", "two", "three", "four", "five"]);
        let q = summarizer().summarize(&s, "six", &MockCompletion).unwrap();
        assert_eq!(q.text, "two three four five six");
    }

    #[test]
    fn later_statement_of_same_constraint_wins() {
        let s = session_with(&["I want 6 DOF"]);
        let q = summarizer().summarize(&s, "actually 3 DOF", &MockCompletion).unwrap();
        assert_eq!(q.extracted_constraints, vec![pred("dof", Operator::Eq, Value::Number(3.0))]);
    }

    #[test]
    fn no_constraints_keeps_full_text() {
        let q = summarizer()
            .summarize(&session_with(&[]), "something nice for my lab", &MockCompletion)
            .unwrap();
        assert!(q.extracted_constraints.is_empty());
        assert_eq!(q.semantic_text, q.text);
    }

    #[test]
    fn empty_prompt_and_provider_failure() {
        assert!(matches!(
            summarizer().summarize(&session_with(&[]), "  ", &MockCompletion),
            Err(RetrievalError::EmptyPrompt)
        ));
        struct Down;
        impl CompletionProvider for Down {
            fn name(&self) -> &str {
                "down"
            }
            fn complete(&self, _: &str, _: usize) -> Result<String, ProviderError> {
                Err(ProviderError::Retryable("503".into()))
            }
        }
        let err = summarizer().summarize(&session_with(&[]), "hi", &Down).unwrap_err();
        assert!(err.is_retryable());
    }

    fn query(prompt: &str) -> SummarizedQuery {
        SummarizedQuery {
            text: prompt.into(),
            prompt: prompt.into(),
            extracted_constraints: vec![],
            semantic_text: prompt.into(),
        }
    }

    #[test]
    fn routing_examples() {
        let r = Router::default_rules(schema()).unwrap();
        assert!(!r.route(&query("What's the weather today?")).relevant);
        assert!(r.route(&query("recommend a grounded force feedback device")).relevant);
        assert!(!r.route(&query("tell me more about the second one")).relevant);
        assert!(r.route(&query("anything with a max force above 5 N")).relevant);
        assert!(r.route(&query("something under $2,000")).relevant);
    }

    fn router() -> &'static Router {
        static R: std::sync::OnceLock<Router> = std::sync::OnceLock::new();
        R.get_or_init(|| Router::default_rules(schema()).unwrap())
    }

    const POOL: &[&str] = &[
        "what", "is", "the", "best", "option", "for", "my", "lab", "today", "weather", "6", "under",
        "$500", "please", "cheap", "one", "second", "tell", "me", "more",
    ];

    proptest! {
        #[test]
        fn routing_is_monotone_under_lexicon_insertion(
            picks in prop::collection::vec(0..POOL.len(), 0..12),
            word_idx in 0usize..1000,
            pos in 0usize..13,
        ) {
            let r = router();
            let lexicon: Vec<&str> = r.lexicon().collect();
            let mut words: Vec<&str> = picks.iter().map(|&i| POOL[i]).collect();
            let before = r.route(&query(&words.join(" ")));
            prop_assert_eq!(&before, &r.route(&query(&words.join(" "))));
            let at = pos.min(words.len());
            words.insert(at, lexicon[word_idx % lexicon.len()]);
            let after = r.route(&query(&words.join(" ")));
            prop_assert!(after.relevant || !before.relevant);
            prop_assert!(after.relevant);
        }
    }
}
