use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::retrieval::{RouteDecision, SummarizedQuery};

use super::AgentError;

const DEFAULT_TEMPLATES: [&str; 4] = [
    include_str!("../../data/templates/device_recommendation.toml"),
    include_str!("../../data/templates/device_detail.toml"),
    include_str!("../../data/templates/comparison.toml"),
    include_str!("../../data/templates/off_topic.toml"),
];

const SLOTS: [&str; 4] = ["task", "references", "summary", "cues"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateTag {
    DeviceRecommendation,
    DeviceDetail,
    Comparison,
    OffTopic,
}

impl TemplateTag {
    pub const ALL: [TemplateTag; 4] = [
        TemplateTag::DeviceRecommendation,
        TemplateTag::DeviceDetail,
        TemplateTag::Comparison,
        TemplateTag::OffTopic,
    ];
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub tag: TemplateTag,
    pub task: String,
    pub cues: String,
    /// Prompt layout with `{task}`, `{references}`, `{summary}` and `{cues}`
    /// slots.
    pub layout: String,
}

impl PromptTemplate {
    pub fn from_toml(text: &str) -> Result<Self, AgentError> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| AgentError::Template(e.to_string()))?;
        for slot in SLOTS {
            if !t.layout.contains(&format!("{{{slot}}}")) {
                return Err(AgentError::Template(format!("template `{}` has no {{{slot}}} slot", t.id)));
            }
        }
        Ok(t)
    }

    /// Fills the slots in one pass, so slot-like text inside the values is
    /// left alone.
    pub fn render(&self, references: &str, summary: &str) -> String {
        let mut out = String::with_capacity(self.layout.len() + references.len() + summary.len());
        let mut rest = self.layout.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let slot = after.find('}').map(|close| (&after[..close], close));
            let value = match slot {
                Some(("task", _)) => Some(self.task.trim()),
                Some(("references", _)) => Some(references.trim()),
                Some(("summary", _)) => Some(summary.trim()),
                Some(("cues", _)) => Some(self.cues.trim()),
                _ => None,
            };
            match (value, slot) {
                (Some(v), Some((_, close))) => {
                    out.push_str(v);
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// The shipped template for every tag.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: Vec<PromptTemplate>,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn has_phrase(tokens: &[String], phrases: &[&str]) -> bool {
    phrases.iter().any(|p| {
        let p = words(p);
        tokens.windows(p.len()).any(|w| w == p.as_slice())
    })
}

const DETAIL_PHRASES: &[&str] = &[
    "tell me more",
    "more about",
    "more details",
    "details",
    "detail",
    "specs of",
    "specifications of",
    "describe",
    "explain",
];

const COMPARISON_PHRASES: &[&str] = &[
    "compare",
    "comparison",
    "versus",
    "vs",
    "difference",
    "differences",
    "better than",
];

impl TemplateSet {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self, AgentError> {
        for tag in TemplateTag::ALL {
            if !templates.iter().any(|t| t.tag == tag) {
                return Err(AgentError::Template(format!("no template for {tag:?}")));
            }
        }
        Ok(Self { templates })
    }

    pub fn default_set() -> Self {
        let templates = DEFAULT_TEMPLATES
            .iter()
            .map(|t| PromptTemplate::from_toml(t).expect("shipped template is valid"))
            .collect();
        Self::new(templates).expect("shipped templates cover every tag")
    }

    /// Loads every `*.toml` file in `dir`, in file-name order.
    pub fn from_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| AgentError::Template(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("toml"))
            .collect();
        paths.sort();
        let mut templates = Vec::new();
        for p in paths {
            let text = fs::read_to_string(&p)
                .map_err(|e| AgentError::Template(format!("{}: {e}", p.display())))?;
            templates.push(PromptTemplate::from_toml(&text)?);
        }
        Self::new(templates)
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn get(&self, tag: TemplateTag) -> &PromptTemplate {
        self.templates
            .iter()
            .find(|t| t.tag == tag)
            .expect("every tag has a template")
    }

    /// Detail requests win, then comparisons; otherwise the route decides
    /// between recommending and the off-topic fallback.
    pub fn select(&self, summary: &SummarizedQuery, route: &RouteDecision) -> &PromptTemplate {
        let tokens = words(&summary.prompt);
        let tag = if has_phrase(&tokens, DETAIL_PHRASES) {
            TemplateTag::DeviceDetail
        } else if has_phrase(&tokens, COMPARISON_PHRASES) {
            TemplateTag::Comparison
        } else if route.relevant {
            TemplateTag::DeviceRecommendation
        } else {
            TemplateTag::OffTopic
        };
        self.get(tag)
    }
}
