use crate::embedding::EmbeddingVector;

use super::protocol::{
    self, parse_prompt, parse_references, TASK_EXTRACT_TAXONOMY, TASK_SUMMARIZE_CONVERSATION,
    TASK_SUMMARIZE_DEVICE,
};
use super::{CompletionProvider, EmbeddingProvider, ProviderError};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercased alphanumeric tokens.
pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag-of-words embedder: each lowercase alphanumeric token is
/// hashed (64-bit FNV-1a) into one of `dim` buckets, counts are accumulated
/// and the result L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::InvalidInput("cannot embed empty text".into()));
        }
        let mut counts = vec![0f32; self.dim];
        for token in tokens(text) {
            counts[self.bucket(&token)] += 1.0;
        }
        EmbeddingVector::new(counts)
            .map_err(|_| ProviderError::InvalidInput(format!("no tokens to embed in `{text}`")))
    }
}

/// Deterministic completion provider. Behaviour depends on the prompt's
/// `#task:` line:
///
/// * `summarize_device`: first sentence of every `text` section, joined.
/// * `summarize_conversation`: every `user` and `prompt` section, joined.
/// * `extract_taxonomy`: empty answer.
/// * anything else: an answer listing each device reference block with its
///   marker and the first sentence of its summary.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockCompletion;

impl CompletionProvider for MockCompletion {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str, max_tokens: usize) -> Result<String, ProviderError> {
        let parsed = parse_prompt(prompt);
        let answer = match parsed.task.as_deref() {
            Some(TASK_SUMMARIZE_DEVICE) => parsed
                .sections
                .iter()
                .filter(|(label, _)| label == "text")
                .map(|(_, body)| first_sentence(body))
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
                .join(" "),
            Some(TASK_SUMMARIZE_CONVERSATION) => parsed
                .sections
                .iter()
                .filter(|(label, _)| label == "user" || label == "prompt")
                .map(|(_, body)| collapse_ws(body))
                .collect::<Vec<_>>()
                .join(" "),
            Some(TASK_EXTRACT_TAXONOMY) => String::new(),
            _ => recommendation_answer(prompt),
        };
        Ok(truncate_words(&answer, max_tokens))
    }
}

fn recommendation_answer(prompt: &str) -> String {
    let refs = parse_references(prompt);
    if refs.is_empty() {
        return "I could not find a device in the catalog that matches this request.".into();
    }
    let mut out = String::from("Here are the devices from the catalog that fit your request:\n");
    for (i, r) in refs.iter().enumerate() {
        let summary = r
            .fields
            .iter()
            .find(|(k, _)| k == "summary")
            .map(|(_, v)| first_sentence(v))
            .unwrap_or_default();
        out.push_str(&format!(
            "{}. {} {}: {}\n",
            i + 1,
            protocol::device_marker(r.id),
            r.name,
            summary
        ));
    }
    out.push_str("Follow the links of each device for full specifications.");
    out
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text up to and including the first `.`, `!` or `?` that ends a word.
pub(crate) fn first_sentence(text: &str) -> String {
    let text = collapse_ws(text);
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') && (i + 1 == bytes.len() || bytes[i + 1] == b' ') {
            return text[..=i].to_string();
        }
    }
    text
}

fn truncate_words(text: &str, max_words: usize) -> String {
    if text.split_whitespace().count() <= max_words {
        return text.to_string();
    }
    text.split_whitespace()
        .take(max_words)
        .collect::<Vec<_>>()
        .join(" ")
}
