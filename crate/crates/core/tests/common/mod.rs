//! Fixture access and reference implementations shared by integration and
//! acceptance tests. The references work on the raw corpus JSON and never
//! call the code they check.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use haptic_core::schema::ValueKind;
use haptic_core::{Catalog, DeviceId, TaxonomySchema, DEFAULT_DIMENSION};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value as Json;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus_json() -> String {
    std::fs::read_to_string(fixtures_dir().join("corpus.json")).expect("fixture corpus")
}

pub fn schema() -> Arc<TaxonomySchema> {
    Arc::new(TaxonomySchema::default_schema())
}

pub fn fixture_catalog() -> Catalog {
    Catalog::import_json(schema(), DEFAULT_DIMENSION, &corpus_json()).expect("fixture corpus imports")
}

pub fn raw_entries() -> Vec<Json> {
    serde_json::from_str(&corpus_json()).expect("fixture corpus is JSON")
}

/// One clause in textual form, as a user or the HTTP API would state it.
#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub attribute: String,
    pub op: &'static str,
    pub literal: String,
}

fn stored<'a>(entry: &'a Json, attribute: &str) -> Option<&'a Json> {
    entry.get("taxonomy")?.get(attribute)?.get("value")
}

/// Reference evaluation of one clause against a raw corpus entry. A missing
/// attribute or a value of another type never matches.
pub fn clause_holds(entry: &Json, kind: &ValueKind, c: &Clause) -> bool {
    let Some(v) = stored(entry, &c.attribute) else {
        return false;
    };
    match kind {
        ValueKind::Boolean => {
            let Some(a) = v.as_bool() else { return false };
            let b = c.literal == "true";
            match c.op {
                "eq" => a == b,
                "ne" => a != b,
                _ => false,
            }
        }
        ValueKind::Number { .. } => {
            let (Some(a), Ok(b)) = (v.as_f64(), c.literal.parse::<f64>()) else {
                return false;
            };
            match c.op {
                "eq" => a == b,
                "ne" => a != b,
                "lt" => a < b,
                "lte" => a <= b,
                "gt" => a > b,
                "gte" => a >= b,
                _ => false,
            }
        }
        ValueKind::Enum { .. } | ValueKind::FreeText => {
            let Some(a) = v.as_str() else { return false };
            match c.op {
                "eq" => a == c.literal,
                "ne" => a != c.literal,
                "contains" => a.to_lowercase().contains(&c.literal.to_lowercase()),
                _ => false,
            }
        }
    }
}

/// Ids of raw entries satisfying every clause, ascending.
pub fn linear_scan(entries: &[Json], schema: &TaxonomySchema, clauses: &[Clause]) -> Vec<DeviceId> {
    let mut ids: Vec<DeviceId> = entries
        .iter()
        .filter(|e| {
            clauses.iter().all(|c| {
                let kind = &schema.get(&c.attribute).expect("clause attribute exists").kind;
                clause_holds(e, kind, c)
            })
        })
        .map(|e| e["id"].as_u64().expect("numeric id"))
        .collect();
    ids.sort_unstable();
    ids
}

fn json_literal(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        Json::Bool(b) => b.to_string(),
        Json::Number(n) => n.as_f64().expect("finite").to_string(),
        other => panic!("unexpected stored value {other}"),
    }
}

/// A random clause over an attribute of the schema. Literals are mostly
/// drawn from values present in the corpus so that results are non-trivial.
pub fn random_clause(rng: &mut impl Rng, schema: &TaxonomySchema, entries: &[Json]) -> Clause {
    let def = schema.attributes().choose(rng).expect("schema has attributes");
    let present: Vec<&Json> = entries.iter().filter_map(|e| stored(e, &def.name)).collect();
    let pick = |rng: &mut _| present.choose(rng).map(|v| json_literal(v));
    let (op, literal) = match &def.kind {
        ValueKind::Boolean => (
            *["eq", "ne"].choose(rng).unwrap(),
            if rng.gen() { "true" } else { "false" }.to_string(),
        ),
        ValueKind::Number { .. } => {
            let op = *["eq", "ne", "lt", "lte", "gt", "gte"].choose(rng).unwrap();
            let lit = match pick(rng) {
                Some(l) if rng.gen_bool(0.8) => l,
                _ => (rng.gen_range(0..200) as f64 / 4.0).to_string(),
            };
            (op, lit)
        }
        ValueKind::Enum { allowed } => {
            let op = *["eq", "ne", "contains"].choose(rng).unwrap();
            let base = pick(rng).unwrap_or_else(|| allowed.choose(rng).unwrap().clone());
            let lit = if op == "contains" {
                let end = rng.gen_range(1..=base.len());
                base[..end].to_string()
            } else {
                base
            };
            (op, lit)
        }
        ValueKind::FreeText => {
            let op = *["eq", "ne", "contains"].choose(rng).unwrap();
            let base = pick(rng).unwrap_or_else(|| "linux".to_string());
            let lit = if op == "contains" {
                base.split_whitespace().next().unwrap_or("a").to_lowercase()
            } else {
                base
            };
            (op, lit)
        }
    };
    Clause {
        attribute: def.name.clone(),
        op,
        literal,
    }
}

/// Reference top-k by cosine: f64 dot products over the stored vectors,
/// descending, ties to the lower id.
pub fn exhaustive_top_k(catalog: &Catalog, query: &[f32], k: usize) -> Vec<(DeviceId, f64)> {
    let qn = query.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    let mut all: Vec<(DeviceId, f64)> = catalog
        .ids()
        .filter_map(|id| {
            let v = catalog.get_embedding(id)?.values();
            let dot: f64 = v.iter().zip(query).map(|(&a, &b)| a as f64 * b as f64).sum();
            let vn = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            Some((id, dot / (qn * vn)))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Random query text mixing corpus vocabulary with unrelated words.
pub fn random_query(rng: &mut impl Rng, entries: &[Json]) -> String {
    const EXTRA: [&str; 12] = [
        "weather", "cheap", "robot", "kitchen", "precise", "light", "music", "table", "surgery",
        "fingers", "game", "lab",
    ];
    let mut words: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(1..8) {
        if rng.gen_bool(0.7) {
            let e = entries.choose(rng).unwrap();
            let text = e["metadata"]["abstract_or_summary"].as_str().unwrap_or_default();
            let w: Vec<&str> = text
                .split_whitespace()
                .filter(|w| w.chars().any(char::is_alphanumeric))
                .collect();
            if let Some(w) = w.choose(rng) {
                words.push(w.to_string());
            }
        } else {
            words.push(EXTRA.choose(rng).unwrap().to_string());
        }
    }
    words.join(" ")
}

#[derive(serde::Deserialize)]
struct ManifestEntry {
    path: String,
    uri: String,
    kind: haptic_core::ingestion::DocumentKind,
    source_kind: haptic_core::SourceKind,
}

/// The shipped ingestion documents, in manifest order, with their public uris.
pub fn fixture_documents() -> Vec<(haptic_core::ingestion::SourceDocument, haptic_core::SourceKind)> {
    let dir = fixtures_dir().join("documents");
    let manifest: Vec<ManifestEntry> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    manifest
        .into_iter()
        .map(|e| {
            let content = std::fs::read_to_string(dir.join(&e.path)).unwrap();
            (
                haptic_core::ingestion::SourceDocument::new(e.uri, e.kind, content),
                e.source_kind,
            )
        })
        .collect()
}

pub fn scholar_fixture_json() -> String {
    std::fs::read_to_string(fixtures_dir().join("scholar_metadata.json")).unwrap()
}
