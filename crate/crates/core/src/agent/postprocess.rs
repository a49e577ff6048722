use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use tracing::warn;

use crate::providers::protocol::{device_marker, marker_regex};
use crate::record::DeviceId;
use crate::rerank::RankedDevice;
use crate::store::Catalog;

pub const FALLBACK_ADVISORY: &str = "I could not find a device in the catalog that matches this request. \
Try describing the device you need, for example its degrees of freedom, portability or intended use.";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub id: DeviceId,
    pub name: String,
    pub rank_score: f64,
    pub n_pos: usize,
    pub n_all: usize,
    pub cosine: f64,
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentResponse {
    pub text: String,
    pub recommendations: Vec<Recommendation>,
    pub template_id: String,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Whole-word occurrences of `needle` in `hay`.
fn word_occurrences(hay: &str, needle: &str) -> Vec<(usize, usize)> {
    let bytes = hay.as_bytes();
    hay.match_indices(needle)
        .map(|(start, m)| (start, start + m.len()))
        .filter(|&(s, e)| {
            (s == 0 || !is_word_byte(bytes[s - 1]) || !is_word_byte(bytes[s]))
                && (e == bytes.len() || !is_word_byte(bytes[e]) || !is_word_byte(bytes[e - 1]))
        })
        .collect()
}

/// Grounds raw model text in the shortlist.
///
/// Mentions are recognized by `[device:<id>]` marker or exact device name.
/// A line that mentions any catalog device outside the shortlist, or carries
/// a marker for one, is removed. Shortlisted names without a marker get one.
/// Recommendations follow rank order and carry the store's links.
pub fn postprocess(raw: &str, ranked: &[RankedDevice], catalog: &Catalog, template_id: &str) -> AgentResponse {
    let allowed: BTreeMap<DeviceId, &RankedDevice> = ranked.iter().map(|r| (r.id, r)).collect();
    let mut names: Vec<(&str, DeviceId)> = catalog
        .records()
        .filter(|r| !r.name.trim().is_empty())
        .map(|r| (r.name.as_str(), r.id))
        .collect();
    // longest first so "Falcon Pro" claims its span before "Falcon"
    names.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));

    let mut mentioned = BTreeSet::new();
    let mut kept = Vec::new();
    'lines: for line in raw.lines() {
        let mut line_ids = BTreeSet::new();
        for caps in marker_regex().captures_iter(line) {
            match caps[1].parse::<DeviceId>() {
                Ok(id) if allowed.contains_key(&id) => {
                    line_ids.insert(id);
                }
                _ => {
                    warn!(marker = &caps[0], "model referenced a device outside the shortlist; line removed");
                    continue 'lines;
                }
            }
        }

        let mut claimed: Vec<(usize, usize, DeviceId)> = Vec::new();
        for &(name, id) in &names {
            for (s, e) in word_occurrences(line, name) {
                if claimed.iter().all(|&(cs, ce, _)| e <= cs || s >= ce) {
                    claimed.push((s, e, id));
                }
            }
        }
        if let Some(&(s, e, _)) = claimed.iter().find(|c| !allowed.contains_key(&c.2)) {
            warn!(name = &line[s..e], "model named a device outside the shortlist; line removed");
            continue;
        }

        // tag the first bare mention of each shortlisted name
        claimed.sort_unstable();
        let mut out = String::with_capacity(line.len());
        let mut at = 0;
        for (_, e, id) in claimed {
            if line_ids.insert(id) {
                out.push_str(&line[at..e]);
                out.push(' ');
                out.push_str(&device_marker(id));
                at = e;
            }
        }
        out.push_str(&line[at..]);
        mentioned.extend(line_ids);
        kept.push(out);
    }

    let text = kept.join("\n").trim().to_string();
    if text.is_empty() {
        return AgentResponse {
            text: FALLBACK_ADVISORY.to_string(),
            recommendations: Vec::new(),
            template_id: template_id.to_string(),
        };
    }

    let recommendations = ranked
        .iter()
        .filter(|r| mentioned.contains(&r.id))
        .filter_map(|r| {
            let record = catalog.get(r.id)?;
            if record.source_links.is_empty() {
                warn!(id = r.id, "device has no source link; not recommended");
                return None;
            }
            Some(Recommendation {
                id: r.id,
                name: record.name.clone(),
                rank_score: r.rank_score,
                n_pos: r.n_pos,
                n_all: r.n_all,
                cosine: r.cosine,
                links: record.source_links.clone(),
            })
        })
        .collect();
    AgentResponse {
        text,
        recommendations,
        template_id: template_id.to_string(),
    }
}
