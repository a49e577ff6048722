//! Plain-text prompt layout shared by prompt builders and the mock
//! completion provider.
//!
//! A prompt may open with a `#task: <name>` line and carry labelled sections
//! introduced by `>>> <label>` lines. Device references use a
//! `### [device:<id>] <name>` header followed by `key: value` lines.

use std::sync::OnceLock;

use regex::Regex;

use crate::record::DeviceId;

pub const TASK_PREFIX: &str = "#task: ";
pub const SECTION_PREFIX: &str = ">>> ";
pub const REFERENCE_PREFIX: &str = "### ";

pub const TASK_SUMMARIZE_DEVICE: &str = "summarize_device";
pub const TASK_SUMMARIZE_CONVERSATION: &str = "summarize_conversation";
pub const TASK_EXTRACT_TAXONOMY: &str = "extract_taxonomy";

pub fn device_marker(id: DeviceId) -> String {
    format!("[device:{id}]")
}

/// Matches `[device:<id>]` markers; group 1 is the id.
pub fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[device:\s*([0-9]+)\s*\]").expect("valid marker regex"))
}

/// Accumulates a prompt in the shared layout.
#[derive(Debug, Default, Clone)]
pub struct PromptBuilder {
    out: String,
}

impl PromptBuilder {
    pub fn task(name: &str) -> Self {
        Self {
            out: format!("{TASK_PREFIX}{name}\n"),
        }
    }

    pub fn line(mut self, text: &str) -> Self {
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn section(mut self, label: &str, content: &str) -> Self {
        self.out.push_str(SECTION_PREFIX);
        self.out.push_str(label);
        self.out.push('\n');
        self.out.push_str(content.trim());
        self.out.push('\n');
        self
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn build(self) -> String {
        self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPrompt {
    pub task: Option<String>,
    pub sections: Vec<(String, String)>,
}

pub fn parse_prompt(prompt: &str) -> ParsedPrompt {
    let mut task = None;
    let mut sections: Vec<(String, String)> = Vec::new();
    for (i, line) in prompt.lines().enumerate() {
        if i == 0 {
            if let Some(t) = line.strip_prefix(TASK_PREFIX) {
                task = Some(t.trim().to_string());
                continue;
            }
        }
        if let Some(label) = line.strip_prefix(SECTION_PREFIX) {
            sections.push((label.trim().to_string(), String::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            if !body.is_empty() {
                body.push('\n');
            }
            body.push_str(line);
        }
    }
    for (_, body) in &mut sections {
        *body = body.trim().to_string();
    }
    ParsedPrompt { task, sections }
}

/// A device reference block found in a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBlock {
    pub id: DeviceId,
    pub name: String,
    pub fields: Vec<(String, String)>,
}

pub fn parse_references(prompt: &str) -> Vec<ReferenceBlock> {
    let mut out: Vec<ReferenceBlock> = Vec::new();
    let mut in_block = false;
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix(REFERENCE_PREFIX) {
            in_block = false;
            if let Some(caps) = marker_regex().captures(rest) {
                let whole = caps.get(0).expect("group 0");
                if whole.start() == 0 {
                    if let Ok(id) = caps[1].parse() {
                        out.push(ReferenceBlock {
                            id,
                            name: rest[whole.end()..].trim().to_string(),
                            fields: Vec::new(),
                        });
                        in_block = true;
                    }
                }
            }
        } else if in_block {
            if line.trim().is_empty() {
                in_block = false;
            } else if let Some((k, v)) = line.split_once(':') {
                if let Some(block) = out.last_mut() {
                    block.fields.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
        }
    }
    out
}
