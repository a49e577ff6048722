use std::sync::Arc;

use tracing::warn;

use crate::patterns::{PatternTable, RuleMatch};
use crate::schema::{TaxonomySchema, ValueKind};

use super::protocol::{PromptBuilder, TASK_EXTRACT_TAXONOMY};
use super::{CompletionProvider, ExtractionProvider, ProviderError};

/// Offline extractor driven by the shipped regex table.
///
/// Within one attribute, rules are tried in table order and a later match
/// overlapping an earlier one is dropped, so "not grounded" is not also read
/// as "grounded". Matches for different attributes may overlap. Content is
/// matched line by line so no rule spans two table rows.
#[derive(Debug, Clone)]
pub struct RuleExtractor {
    table: PatternTable,
}

impl RuleExtractor {
    pub fn new(table: PatternTable) -> Self {
        Self { table }
    }
}

impl ExtractionProvider for RuleExtractor {
    fn tag(
        &self,
        content: &str,
        schema: &TaxonomySchema,
    ) -> Result<Vec<(String, String)>, ProviderError> {
        let mut kept: Vec<RuleMatch> = Vec::new();
        let mut offset = 0;
        let mut matches = Vec::new();
        for line in content.split('\n') {
            matches.extend(self.table.all_matches(line).into_iter().map(|mut m| {
                m.start += offset;
                m.end += offset;
                m
            }));
            offset += line.len() + 1;
        }
        for m in matches {
            let clash = kept
                .iter()
                .any(|k| k.attribute == m.attribute && m.start < k.end && k.start < m.end);
            if !clash {
                kept.push(m);
            }
        }
        // walk the schema so every attribute is asked about, in schema order
        let mut out: Vec<(String, String)> = Vec::new();
        for def in schema.attributes() {
            let mut hits: Vec<&RuleMatch> =
                kept.iter().filter(|m| m.attribute == def.name).collect();
            hits.sort_by_key(|m| m.start);
            for m in hits {
                let pair = (m.attribute.clone(), m.value.clone());
                if !out.contains(&pair) {
                    out.push(pair);
                }
            }
        }
        Ok(out)
    }
}

/// Extractor that asks a completion model to answer one `attribute: value`
/// line per attribute it finds evidence for.
pub struct LlmExtractor {
    completion: Arc<dyn CompletionProvider>,
}

impl LlmExtractor {
    pub fn new(completion: Arc<dyn CompletionProvider>) -> Self {
        Self { completion }
    }

    fn prompt(content: &str, schema: &TaxonomySchema) -> String {
        let mut b = PromptBuilder::task(TASK_EXTRACT_TAXONOMY)
            .line("You tag haptic device documentation with taxonomy attributes.")
            .line("Go through every attribute below. For each one the block gives evidence for, answer one line `attribute: value`.")
            .line("Skip attributes without evidence. Do not answer anything else.");
        for def in schema.attributes() {
            let kind = match &def.kind {
                ValueKind::Boolean => "true|false".to_string(),
                ValueKind::Number { unit } if unit.is_empty() => "number".to_string(),
                ValueKind::Number { unit } => format!("number in {unit}"),
                ValueKind::Enum { allowed } => allowed.join("|"),
                ValueKind::FreeText => "text".to_string(),
            };
            b = b.line(&format!("- {} ({kind}): {}", def.name, def.description));
        }
        b.section("block", content).build()
    }
}

impl ExtractionProvider for LlmExtractor {
    fn tag(
        &self,
        content: &str,
        schema: &TaxonomySchema,
    ) -> Result<Vec<(String, String)>, ProviderError> {
        let answer = self.completion.complete(&Self::prompt(content, schema), 512)?;
        let mut out = Vec::new();
        for line in answer.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let line = line.trim_start_matches(['-', '*', ' ']);
            let Some((name, value)) = line.split_once(':').or_else(|| line.split_once('=')) else {
                warn!(line, "unparseable extraction line skipped");
                continue;
            };
            let (name, value) = (name.trim().to_lowercase(), value.trim());
            if schema.get(&name).is_none() {
                warn!(attribute = %name, "extraction named an unknown attribute; skipped");
                continue;
            }
            if value.is_empty() || value.eq_ignore_ascii_case("none") || value.eq_ignore_ascii_case("unknown") {
                continue;
            }
            out.push((name, value.to_string()));
        }
        Ok(out)
    }
}
