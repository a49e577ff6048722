use std::fmt::Write;

use haptic_core::agent::AgentResponse;
use haptic_core::providers::protocol::marker_regex;
use haptic_core::{Catalog, DeviceId};

/// Replaces `[device:<id>]` markers with device names. A marker standing
/// right next to its own name is dropped instead of doubling the name;
/// markers for unknown ids are left as they are.
pub fn resolve_markers(text: &str, name_of: impl Fn(DeviceId) -> Option<String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for caps in marker_regex().captures_iter(text) {
        let m = caps.get(0).expect("whole match");
        let Some(name) = caps[1].parse().ok().and_then(&name_of) else {
            continue;
        };
        let before = &text[at..m.start()];
        let after = &text[m.end()..];
        if before.trim_end().ends_with(name.as_str()) {
            out.push_str(before.trim_end());
        } else if after.trim_start().starts_with(name.as_str()) {
            out.push_str(before);
            // the name that follows stands in for the marker
            at = m.end() + (after.len() - after.trim_start().len());
            continue;
        } else {
            out.push_str(before);
            out.push_str(&name);
        }
        at = m.end();
    }
    out.push_str(&text[at..]);
    out
}

/// Plain-text rendering of one agent answer: the text with names resolved,
/// then each recommendation with its score decomposition and links. Scores
/// print at full precision so they equal the API payload.
pub fn render_response(response: &AgentResponse, catalog: &Catalog) -> String {
    let mut out = resolve_markers(&response.text, |id| catalog.get(id).map(|r| r.name.clone()));
    out.push('\n');
    if !response.recommendations.is_empty() {
        out.push_str("\nRecommendations:\n");
        for (i, r) in response.recommendations.iter().enumerate() {
            let _ = writeln!(out, "{}. {} (device {})", i + 1, r.name, r.id);
            let _ = writeln!(
                out,
                "   rank_score={} n_pos={} n_all={} cosine={}",
                r.rank_score, r.n_pos, r.n_all, r.cosine
            );
            for link in &r.links {
                let _ = writeln!(out, "   {link}");
            }
        }
    }
    out
}
