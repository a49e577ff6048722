use crate::providers::protocol::{PromptBuilder, TASK_SUMMARIZE_DEVICE};
use crate::providers::{CompletionProvider, MetadataClient, MetadataLookup};

use super::{BlockKind, IngestError, SourceBlock};

const SUMMARY_MAX_TOKENS: usize = 256;

/// Looks up scholarly metadata for a paper title or DOI. A miss is not an
/// error: the record keeps the metadata derived from the document itself.
pub fn fetch_scholar_metadata(
    title_or_doi: &str,
    client: &dyn MetadataClient,
) -> Result<MetadataLookup, IngestError> {
    let query = title_or_doi.trim();
    if query.is_empty() {
        return Ok(MetadataLookup::Miss);
    }
    Ok(client.lookup(query)?)
}

/// Generates the abstract-style summary of a commercial device from all of
/// its text blocks.
pub fn summarize_commercial(
    blocks: &[SourceBlock],
    provider: &dyn CompletionProvider,
) -> Result<String, IngestError> {
    let texts: Vec<&SourceBlock> = blocks.iter().filter(|b| b.kind == BlockKind::Text).collect();
    if texts.is_empty() {
        return Err(IngestError::NoTextBlocks);
    }
    let mut prompt = PromptBuilder::task(TASK_SUMMARIZE_DEVICE)
        .line("Write a short abstract of the haptic device described below.")
        .line("Mention its purpose, mechanism and key specifications. Use only the given text.");
    for b in texts {
        prompt = prompt.section("text", &b.content);
    }
    let summary = provider.complete(&prompt.build(), SUMMARY_MAX_TOKENS)?;
    let summary = summary.trim();
    if summary.is_empty() {
        return Err(IngestError::EmptySummary);
    }
    Ok(summary.to_string())
}
