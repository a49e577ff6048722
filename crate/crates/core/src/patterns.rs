//! Versioned regex tables mapping text to taxonomy values.
//!
//! Two tables ship with the crate: one tags source blocks during ingestion,
//! the other turns user phrasing into query predicates. Each rule names an
//! attribute, a regex, and a value template that may reference capture
//! groups (`$1`).

use regex::Regex;
use serde::Deserialize;

use crate::schema::{Operator, SchemaError, TaxonomySchema};

pub const EXTRACTION_PATTERNS_JSON: &str = include_str!("../data/extraction_patterns.json");
pub const CONSTRAINT_PATTERNS_JSON: &str = include_str!("../data/constraint_patterns.json");

#[derive(Debug, Deserialize)]
struct TableFile {
    version: u32,
    rules: Vec<RuleSpec>,
}

#[derive(Debug, Deserialize)]
struct RuleSpec {
    attribute: String,
    #[serde(default)]
    op: Option<String>,
    pattern: String,
    value: String,
}

#[derive(Debug, Clone)]
pub struct PatternRule {
    pub attribute: String,
    pub op: Operator,
    pub regex: Regex,
    pub value: String,
}

/// A match of one rule against a piece of text.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleMatch {
    pub rule_index: usize,
    pub attribute: String,
    pub op: Operator,
    /// The expanded value template, still untyped.
    pub value: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct PatternTable {
    version: u32,
    rules: Vec<PatternRule>,
}

impl PatternTable {
    /// Parses and compiles a table, checking every attribute against the
    /// schema so a stale table fails at load rather than mid-pipeline.
    pub fn from_json(json: &str, schema: &TaxonomySchema) -> Result<Self, SchemaError> {
        let file: TableFile =
            serde_json::from_str(json).map_err(|e| SchemaError::Malformed(e.to_string()))?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for spec in file.rules {
            let def = schema
                .get(&spec.attribute)
                .ok_or_else(|| SchemaError::UnknownAttribute(spec.attribute.clone()))?;
            let op = match &spec.op {
                Some(op) => op.parse().map_err(SchemaError::Malformed)?,
                None => Operator::Eq,
            };
            if !def.kind.supports(op) {
                return Err(SchemaError::IncompatibleOperator {
                    attribute: spec.attribute,
                    op,
                    kind: def.kind.label(),
                });
            }
            let regex = Regex::new(&spec.pattern)
                .map_err(|e| SchemaError::Malformed(format!("{}: {e}", spec.pattern)))?;
            rules.push(PatternRule {
                attribute: spec.attribute,
                op,
                regex,
                value: spec.value,
            });
        }
        Ok(Self {
            version: file.version,
            rules,
        })
    }

    pub fn extraction_default(schema: &TaxonomySchema) -> Result<Self, SchemaError> {
        Self::from_json(EXTRACTION_PATTERNS_JSON, schema)
    }

    pub fn constraint_default(schema: &TaxonomySchema) -> Result<Self, SchemaError> {
        Self::from_json(CONSTRAINT_PATTERNS_JSON, schema)
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn rules(&self) -> &[PatternRule] {
        &self.rules
    }

    /// Every match of every rule, in rule order then text order. Overlaps
    /// between rules are kept.
    pub fn all_matches(&self, text: &str) -> Vec<RuleMatch> {
        let mut out = Vec::new();
        for (i, rule) in self.rules.iter().enumerate() {
            for caps in rule.regex.captures_iter(text) {
                out.push(expand(i, rule, &caps));
            }
        }
        out
    }

    /// Non-overlapping matches: rules are tried in table order and a match
    /// is kept only if its span is still unclaimed, so earlier (more
    /// specific) rules win. Result is sorted by position.
    pub fn claim_matches(&self, text: &str) -> Vec<RuleMatch> {
        let mut claimed: Vec<RuleMatch> = Vec::new();
        for (i, rule) in self.rules.iter().enumerate() {
            for caps in rule.regex.captures_iter(text) {
                let m = expand(i, rule, &caps);
                if claimed.iter().all(|c| m.end <= c.start || m.start >= c.end) {
                    claimed.push(m);
                }
            }
        }
        claimed.sort_by_key(|m| (m.start, m.rule_index));
        claimed
    }
}

fn expand(rule_index: usize, rule: &PatternRule, caps: &regex::Captures<'_>) -> RuleMatch {
    let whole = caps.get(0).expect("group 0 always present");
    let mut value = String::new();
    caps.expand(&rule.value, &mut value);
    RuleMatch {
        rule_index,
        attribute: rule.attribute.clone(),
        op: rule.op,
        value: value.trim().to_string(),
        start: whole.start(),
        end: whole.end(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_tables_compile_against_default_schema() {
        let schema = TaxonomySchema::default_schema();
        assert!(!PatternTable::extraction_default(&schema).unwrap().rules().is_empty());
        assert!(!PatternTable::constraint_default(&schema).unwrap().rules().is_empty());
    }

    #[test]
    fn unknown_attribute_fails_at_load() {
        let schema = TaxonomySchema::default_schema();
        let json = r#"{"version":1,"rules":[{"attribute":"antigravity","pattern":"x","value":"1"}]}"#;
        assert!(matches!(
            PatternTable::from_json(json, &schema),
            Err(SchemaError::UnknownAttribute(_))
        ));
    }

    #[test]
    fn earlier_rules_claim_spans() {
        let schema = TaxonomySchema::default_schema();
        let json = r#"{"version":1,"rules":[
            {"attribute":"dof","op":"ge","pattern":"at least (\\d+) dof","value":"$1"},
            {"attribute":"dof","pattern":"(\\d+) dof","value":"$1"}]}"#;
        let t = PatternTable::from_json(json, &schema).unwrap();
        let m = t.claim_matches("at least 6 dof, or 3 dof");
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].op, m[0].value.as_str()), (Operator::Ge, "6"));
        assert_eq!((m[1].op, m[1].value.as_str()), (Operator::Eq, "3"));
    }
}
