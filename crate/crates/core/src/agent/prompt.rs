use std::fmt::Write;

use crate::providers::protocol::{device_marker, REFERENCE_PREFIX};
use crate::record::DeviceRecord;
use crate::rerank::RankedDevice;
use crate::retrieval::SummarizedQuery;
use crate::store::Catalog;

use super::{AgentError, PromptTemplate};

pub const NO_MATCH_BLOCK: &str = "### no matching devices\nThe catalog holds no device for this request.";

/// Serializes one device reference: header with marker and name, then one
/// `key: value` line per field, taxonomy in schema order.
pub fn reference_block(record: &DeviceRecord, ranked: &RankedDevice, catalog: &Catalog) -> String {
    let m = &record.metadata;
    let mut out = format!("{REFERENCE_PREFIX}{} {}\n", device_marker(record.id), record.name);
    let mut field = |k: &str, v: &str| {
        let v = v.split_whitespace().collect::<Vec<_>>().join(" ");
        if !v.is_empty() {
            let _ = writeln!(out, "{k}: {v}");
        }
    };
    field("source_kind", record.source_kind.as_str());
    field("title", &m.title);
    field("summary", &m.abstract_or_summary);
    field("authors", &m.authors.join("; "));
    if let Some(y) = m.publication_year {
        field("publication_year", &y.to_string());
    }
    if let Some(c) = m.citation_count {
        field("citation_count", &c.to_string());
    }
    for (name, attr) in record.taxonomy_in_schema_order(catalog.schema()) {
        field(name, &attr.value.canonical());
    }
    field(
        "score",
        &format!(
            "rank_score={:.6} n_pos={} n_all={} cosine={:.6}",
            ranked.rank_score, ranked.n_pos, ranked.n_all, ranked.cosine
        ),
    );
    field("links", &record.source_links.join(" "));
    out.trim_end().to_string()
}

/// Builds the generation prompt. Device references are always included in
/// full, in rank order; an empty shortlist yields an explicit no-match block.
pub fn assemble_prompt(
    template: &PromptTemplate,
    ranked: &[RankedDevice],
    summary: &SummarizedQuery,
    catalog: &Catalog,
) -> Result<String, AgentError> {
    let references = if ranked.is_empty() {
        NO_MATCH_BLOCK.to_string()
    } else {
        let mut blocks = Vec::with_capacity(ranked.len());
        for r in ranked {
            let record = catalog
                .get(r.id)
                .ok_or_else(|| AgentError::Inconsistent(format!("ranked device {} is not in the catalog", r.id)))?;
            blocks.push(reference_block(record, r, catalog));
        }
        blocks.join("\n\n")
    };
    Ok(template.render(&references, &summary.text))
}
