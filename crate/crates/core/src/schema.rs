//! Taxonomy schema: the attribute catalog every device record is validated
//! against, plus the typed values and predicates used to query it.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_SCHEMA_JSON: &str = include_str!("../data/schema.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("invalid value for attribute `{attribute}`: {reason}")]
    InvalidValue { attribute: String, reason: String },
    #[error("operator `{op}` is not applicable to {kind} attribute `{attribute}`")]
    IncompatibleOperator {
        attribute: String,
        op: Operator,
        kind: &'static str,
    },
    #[error("malformed schema: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Machine,
    Usage,
    Context,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Machine, Group::Usage, Group::Context];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Machine => "machine",
            Group::Usage => "usage",
            Group::Context => "context",
        }
    }
}

/// How values of an attribute are typed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueKind {
    Boolean,
    /// Numeric value with a unit; an empty unit means dimensionless.
    Number { unit: String },
    Enum { allowed: Vec<String> },
    FreeText,
}

impl ValueKind {
    pub fn label(&self) -> &'static str {
        match self {
            ValueKind::Boolean => "boolean",
            ValueKind::Number { .. } => "number",
            ValueKind::Enum { .. } => "enum",
            ValueKind::FreeText => "free_text",
        }
    }

    pub fn supports(&self, op: Operator) -> bool {
        use Operator::*;
        match self {
            ValueKind::Boolean => matches!(op, Eq | Ne),
            ValueKind::Number { .. } => !matches!(op, Contains),
            ValueKind::Enum { .. } | ValueKind::FreeText => matches!(op, Eq | Ne | Contains),
        }
    }

    /// Whether `value` is a legal member of this kind.
    pub fn accepts(&self, value: &Value) -> bool {
        match (self, value) {
            (ValueKind::Boolean, Value::Bool(_)) => true,
            (ValueKind::Number { .. }, Value::Number(n)) => n.is_finite(),
            (ValueKind::Enum { allowed }, Value::Text(s)) => allowed.iter().any(|a| a == s),
            (ValueKind::FreeText, Value::Text(s)) => !s.trim().is_empty(),
            _ => false,
        }
    }

    /// Parses a textual literal into a typed value, normalizing enum spellings
    /// ("Magnetic levitation" becomes `magnetic_levitation`).
    pub fn parse_literal(&self, raw: &str) -> Result<Value, String> {
        let raw = raw.trim();
        match self {
            ValueKind::Boolean => match raw.to_ascii_lowercase().as_str() {
                "true" | "yes" | "y" | "1" => Ok(Value::Bool(true)),
                "false" | "no" | "n" | "0" => Ok(Value::Bool(false)),
                other => Err(format!("`{other}` is not a boolean")),
            },
            ValueKind::Number { .. } => raw
                .replace(',', "")
                .parse::<f64>()
                .ok()
                .filter(|n| n.is_finite())
                .map(Value::Number)
                .ok_or_else(|| format!("`{raw}` is not a number")),
            ValueKind::Enum { allowed } => {
                let norm = normalize_enum_literal(raw);
                if allowed.iter().any(|a| *a == norm) {
                    Ok(Value::Text(norm))
                } else {
                    Err(format!("`{raw}` is not one of {}", allowed.join(", ")))
                }
            }
            ValueKind::FreeText => {
                if raw.is_empty() {
                    Err("empty text".to_string())
                } else {
                    Ok(Value::Text(raw.to_string()))
                }
            }
        }
    }
}

fn normalize_enum_literal(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub group: Group,
    #[serde(flatten)]
    pub kind: ValueKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

/// A typed attribute value. Enum and free-text attributes share the `Text`
/// representation; the owning [`AttributeDef`] decides which applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl Value {
    /// Canonical string form, used as the vote-tally key and for
    /// lexicographic tie-breaking.
    pub fn canonical(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Number(n) => n.to_string(),
            Value::Text(s) => s.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Ne => "!=",
            Operator::Lt => "<",
            Operator::Le => "<=",
            Operator::Gt => ">",
            Operator::Ge => ">=",
            Operator::Contains => "contains",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "=" | "==" | "eq" => Operator::Eq,
            "!=" | "≠" | "ne" | "neq" => Operator::Ne,
            "<" | "lt" => Operator::Lt,
            "<=" | "≤" | "le" | "lte" => Operator::Le,
            ">" | "gt" => Operator::Gt,
            ">=" | "≥" | "ge" | "gte" => Operator::Ge,
            "contains" | "has" => Operator::Contains,
            other => return Err(format!("unknown operator `{other}`")),
        })
    }
}

/// One conditional-search clause: `attribute op literal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: String,
    pub op: Operator,
    pub value: Value,
}

impl Predicate {
    pub fn new(attribute: impl Into<String>, op: Operator, value: Value) -> Self {
        Self {
            attribute: attribute.into(),
            op,
            value,
        }
    }

    /// Evaluates the clause against a stored value. Values of a different
    /// type never match.
    pub fn matches(&self, stored: &Value) -> bool {
        use Operator::*;
        match (stored, &self.value) {
            (Value::Bool(a), Value::Bool(b)) => match self.op {
                Eq => a == b,
                Ne => a != b,
                _ => false,
            },
            (Value::Number(a), Value::Number(b)) => match self.op {
                Eq => a == b,
                Ne => a != b,
                Lt => a < b,
                Le => a <= b,
                Gt => a > b,
                Ge => a >= b,
                Contains => false,
            },
            (Value::Text(a), Value::Text(b)) => match self.op {
                Eq => a == b,
                Ne => a != b,
                Contains => a.to_lowercase().contains(&b.to_lowercase()),
                _ => false,
            },
            _ => false,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.attribute, self.op, self.value)
    }
}

#[derive(Deserialize)]
struct SchemaFile {
    version: u32,
    attributes: Vec<AttributeDef>,
}

/// The ordered attribute catalog. Attribute order is significant: it fixes
/// the serialization order of taxonomy attributes everywhere.
#[derive(Debug, Clone)]
pub struct TaxonomySchema {
    version: u32,
    attributes: Vec<AttributeDef>,
    index: HashMap<String, usize>,
}

impl TaxonomySchema {
    pub fn new(version: u32, attributes: Vec<AttributeDef>) -> Result<Self, SchemaError> {
        let mut index = HashMap::with_capacity(attributes.len());
        for (i, def) in attributes.iter().enumerate() {
            if def.name.trim().is_empty() {
                return Err(SchemaError::Malformed(format!("attribute #{i} has no name")));
            }
            if index.insert(def.name.clone(), i).is_some() {
                return Err(SchemaError::Malformed(format!(
                    "duplicate attribute `{}`",
                    def.name
                )));
            }
            if let ValueKind::Enum { allowed } = &def.kind {
                if allowed.len() < 2 {
                    return Err(SchemaError::Malformed(format!(
                        "enum attribute `{}` needs at least two allowed values",
                        def.name
                    )));
                }
            }
        }
        Ok(Self {
            version,
            attributes,
            index,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, SchemaError> {
        let file: SchemaFile =
            serde_json::from_str(json).map_err(|e| SchemaError::Malformed(e.to_string()))?;
        Self::new(file.version, file.attributes)
    }

    /// The shipped schema: 41 machine, 18 usage and 12 context attributes.
    pub fn default_schema() -> Self {
        Self::from_json(DEFAULT_SCHEMA_JSON).expect("embedded schema is valid")
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn get(&self, name: &str) -> Option<&AttributeDef> {
        self.index.get(name).map(|&i| &self.attributes[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn count(&self, group: Group) -> usize {
        self.attributes.iter().filter(|a| a.group == group).count()
    }

    pub fn validate_value(&self, name: &str, value: &Value) -> Result<(), SchemaError> {
        let def = self
            .get(name)
            .ok_or_else(|| SchemaError::UnknownAttribute(name.to_string()))?;
        if def.kind.accepts(value) {
            Ok(())
        } else {
            Err(SchemaError::InvalidValue {
                attribute: name.to_string(),
                reason: format!("`{value}` is not a valid {}", def.kind.label()),
            })
        }
    }

    pub fn validate_predicate(&self, p: &Predicate) -> Result<(), SchemaError> {
        let def = self
            .get(&p.attribute)
            .ok_or_else(|| SchemaError::UnknownAttribute(p.attribute.clone()))?;
        if !def.kind.supports(p.op) {
            return Err(SchemaError::IncompatibleOperator {
                attribute: p.attribute.clone(),
                op: p.op,
                kind: def.kind.label(),
            });
        }
        let literal_ok = match (&def.kind, &p.value) {
            // substring search over enums may use any fragment
            (ValueKind::Enum { .. }, Value::Text(s)) if p.op == Operator::Contains => {
                !s.is_empty()
            }
            (kind, v) => kind.accepts(v),
        };
        if literal_ok {
            Ok(())
        } else {
            Err(SchemaError::InvalidValue {
                attribute: p.attribute.clone(),
                reason: format!("literal `{}` does not fit a {}", p.value, def.kind.label()),
            })
        }
    }

    /// Builds a predicate from textual parts, typing the literal by the
    /// attribute's kind.
    pub fn parse_predicate(
        &self,
        attribute: &str,
        op: &str,
        literal: &str,
    ) -> Result<Predicate, SchemaError> {
        let def = self
            .get(attribute)
            .ok_or_else(|| SchemaError::UnknownAttribute(attribute.to_string()))?;
        let op: Operator = op.parse().map_err(|reason| SchemaError::InvalidValue {
            attribute: attribute.to_string(),
            reason,
        })?;
        let value = match (&def.kind, op) {
            (ValueKind::Enum { .. }, Operator::Contains) => {
                Value::Text(literal.trim().to_lowercase())
            }
            (kind, _) => kind
                .parse_literal(literal)
                .map_err(|reason| SchemaError::InvalidValue {
                    attribute: attribute.to_string(),
                    reason,
                })?,
        };
        let p = Predicate::new(attribute, op, value);
        self.validate_predicate(&p)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_group_counts() {
        let schema = TaxonomySchema::default_schema();
        assert_eq!(schema.count(Group::Machine), 41);
        assert_eq!(schema.count(Group::Usage), 18);
        assert_eq!(schema.count(Group::Context), 12);
        assert_eq!(schema.attributes().len(), 71);
    }

    #[test]
    fn rejects_duplicate_names() {
        let def = AttributeDef {
            name: "dof".into(),
            group: Group::Machine,
            kind: ValueKind::Boolean,
            description: String::new(),
        };
        let err = TaxonomySchema::new(1, vec![def.clone(), def]).unwrap_err();
        assert!(matches!(err, SchemaError::Malformed(_)));
    }

    #[test]
    fn rejects_single_value_enum() {
        let def = AttributeDef {
            name: "x".into(),
            group: Group::Usage,
            kind: ValueKind::Enum {
                allowed: vec!["only".into()],
            },
            description: String::new(),
        };
        assert!(TaxonomySchema::new(1, vec![def]).is_err());
    }

    #[test]
    fn operator_compatibility() {
        let schema = TaxonomySchema::default_schema();
        assert!(schema.parse_predicate("dof", ">=", "6").is_ok());
        assert!(matches!(
            schema.parse_predicate("grounded", "<", "true"),
            Err(SchemaError::IncompatibleOperator { .. })
        ));
        assert!(matches!(
            schema.parse_predicate("dof", "contains", "6"),
            Err(SchemaError::IncompatibleOperator { .. })
        ));
        assert!(matches!(
            schema.parse_predicate("antigravity", "=", "true"),
            Err(SchemaError::UnknownAttribute(_))
        ));
    }

    #[test]
    fn enum_literals_are_normalized() {
        let schema = TaxonomySchema::default_schema();
        let p = schema
            .parse_predicate("mechanism", "=", "Magnetic levitation")
            .unwrap();
        assert_eq!(p.value, Value::Text("magnetic_levitation".into()));
        assert!(schema.parse_predicate("portability", "=", "flying").is_err());
    }

    #[test]
    fn canonical_numbers_drop_trailing_zero() {
        assert_eq!(Value::Number(6.0).canonical(), "6");
        assert_eq!(Value::Number(3.3).canonical(), "3.3");
        assert_eq!(Value::Bool(true).canonical(), "true");
    }

    #[test]
    fn predicate_type_mismatch_never_matches() {
        let p = Predicate::new("dof", Operator::Eq, Value::Number(6.0));
        assert!(!p.matches(&Value::Text("6".into())));
        assert!(p.matches(&Value::Number(6.0)));
    }
}
