use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use haptic_core::ingestion::{DocumentKind, ReviewDecision, SourceDocument};
use haptic_core::{DeviceId, SourceKind};
use serde::Deserialize;
use tracing::info;

use crate::config::ServerConfig;
use crate::engine::Engine;
use crate::error::ApiError;
use crate::http::{router, AppState};
use crate::render::render_response;

#[derive(Debug, Parser)]
#[command(name = "haptic-agent", version, about = "Conversational recommender for haptic devices")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Store directory (overrides config and HAPTIC_STORE).
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        /// Listen address, e.g. 127.0.0.1:8080.
        #[arg(long)]
        addr: Option<String>,
        /// Corpus file to serve instead of the store's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Draft device records from source documents and stage them for review.
    Ingest(IngestArgs),
    /// Inspect and resolve staged drafts.
    #[command(subcommand)]
    Review(ReviewCommand),
    /// Run one chat turn and print the answer.
    Query {
        /// What the user asks, in plain language.
        prompt: String,
        /// Continue (or start) a named session kept in the store.
        #[arg(long)]
        session: Option<String>,
        /// Corpus file to answer from instead of the store's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Print the API response JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write the store's corpus to a JSON file.
    Export { path: PathBuf },
    /// Replace the store's corpus with a JSON file.
    Import {
        path: PathBuf,
        /// Embed reviewed records that carry no vector.
        #[arg(long)]
        embed_missing: bool,
    },
    /// Store maintenance.
    #[command(subcommand)]
    Db(DbCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Local path or http(s) URL.
    #[arg(required_unless_present = "manifest")]
    pub source: Option<String>,
    /// Document format; inferred from .html/.htm/.txt/.md when omitted.
    #[arg(long)]
    pub kind: Option<DocumentKindArg>,
    /// Where the document comes from.
    #[arg(long)]
    pub source_kind: Option<SourceKindArg>,
    /// Identifier stored as the device's source link (defaults to the source).
    #[arg(long)]
    pub uri: Option<String>,
    /// JSON manifest listing several documents.
    #[arg(long, conflicts_with = "source")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum DocumentKindArg {
    PdfTextDump,
    Html,
    PlainText,
}

impl From<DocumentKindArg> for DocumentKind {
    fn from(k: DocumentKindArg) -> Self {
        match k {
            DocumentKindArg::PdfTextDump => DocumentKind::PdfTextDump,
            DocumentKindArg::Html => DocumentKind::Html,
            DocumentKindArg::PlainText => DocumentKind::PlainText,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SourceKindArg {
    ResearchPaper,
    Commercial,
}

impl From<SourceKindArg> for SourceKind {
    fn from(k: SourceKindArg) -> Self {
        match k {
            SourceKindArg::ResearchPaper => SourceKind::ResearchPaper,
            SourceKindArg::Commercial => SourceKind::Commercial,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum ReviewCommand {
    /// List drafts awaiting review.
    List,
    /// Accept a draft as it stands.
    Approve { id: DeviceId },
    /// Accept a draft with edited attributes; an empty value removes one.
    Correct {
        id: DeviceId,
        #[arg(long = "set", value_name = "ATTR=VALUE", required = true)]
        set: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DbCommand {
    /// Print catalog counts.
    Stats {
        /// Corpus file to count instead of the store's corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

/// One manifest entry; `path` is relative to the manifest file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    path: String,
    uri: Option<String>,
    kind: DocumentKind,
    source_kind: SourceKind,
}

fn kind_from_extension(path: &str) -> Option<DocumentKind> {
    let lower = path.to_ascii_lowercase();
    if lower.ends_with(".html") || lower.ends_with(".htm") {
        Some(DocumentKind::Html)
    } else if lower.ends_with(".txt") || lower.ends_with(".md") {
        Some(DocumentKind::PlainText)
    } else {
        None
    }
}

fn io_err(e: std::io::Error) -> ApiError {
    ApiError::internal(format!("write: {e}"))
}

impl Cli {
    pub fn config(&self) -> Result<ServerConfig, ApiError> {
        let mut cfg = ServerConfig::load(self.config.as_deref())?;
        if let Some(store) = &self.store {
            cfg.store = store.clone();
        }
        match &self.command {
            Command::Serve { addr, corpus } => {
                if let Some(a) = addr {
                    cfg.addr = a.clone();
                }
                if let Some(c) = corpus {
                    cfg.corpus = Some(c.clone());
                }
            }
            Command::Query { corpus: Some(c), .. } | Command::Db(DbCommand::Stats { corpus: Some(c) }) => {
                cfg.corpus = Some(c.clone());
            }
            _ => {}
        }
        Ok(cfg)
    }
}

/// Runs a command other than `serve`, writing its output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), ApiError> {
    let cfg = cli.config()?;
    match &cli.command {
        Command::Serve { .. } => serve(&cfg),
        Command::Ingest(args) => {
            let engine = Engine::from_config(&cfg, false, false)?;
            ingest(&engine, args, out)
        }
        Command::Review(cmd) => {
            let engine = Engine::from_config(&cfg, false, false)?;
            review(&engine, cmd, out)
        }
        Command::Query {
            prompt,
            session,
            json,
            ..
        } => {
            let engine = Engine::from_config(&cfg, true, session.is_some())?;
            query(&engine, prompt, session.as_deref(), *json, out)
        }
        Command::Export { path } => {
            let engine = Engine::from_config(&cfg, false, false)?;
            write_file(path, &engine.export())?;
            writeln!(out, "exported {} devices to {}", engine.stats().devices, path.display()).map_err(io_err)
        }
        Command::Import { path, embed_missing } => {
            let engine = Engine::from_config(&cfg, false, false)?;
            let json = fs::read_to_string(path)
                .map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
            let report = engine.import(&json, *embed_missing)?;
            writeln!(
                out,
                "imported {} devices ({} embedded now)",
                report.devices, report.embedded
            )
            .map_err(io_err)
        }
        Command::Db(DbCommand::Stats { .. }) => {
            let engine = Engine::from_config(&cfg, true, false)?;
            let s = engine.stats();
            writeln!(
                out,
                "devices: {}\nembedded: {}\napproved: {}\npending_review: {}\ndimension: {}\nschema: v{} ({} machine, {} usage, {} context attributes)",
                s.devices,
                s.embedded,
                s.approved,
                s.pending_review,
                s.dimension,
                s.schema_version,
                s.machine_attributes,
                s.usage_attributes,
                s.context_attributes
            )
            .map_err(io_err)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), ApiError> {
    fs::write(path, text).map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))
}

fn ingest(engine: &Engine, args: &IngestArgs, out: &mut dyn Write) -> Result<(), ApiError> {
    let mut docs = Vec::new();
    if let Some(manifest) = &args.manifest {
        let text = fs::read_to_string(manifest)
            .map_err(|e| ApiError::bad_request(format!("{}: {e}", manifest.display())))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
            .map_err(|e| ApiError::bad_request(format!("{}: {e}", manifest.display())))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        for e in entries {
            let path = base.join(&e.path);
            let mut doc = engine.load_document(&path.to_string_lossy(), e.kind, true)?;
            doc.uri = e.uri.unwrap_or(e.path);
            docs.push((doc, e.source_kind));
        }
    } else {
        let source = args.source.as_deref().expect("clap requires a source without a manifest");
        let kind = args
            .kind
            .map(DocumentKind::from)
            .or_else(|| kind_from_extension(source))
            .ok_or_else(|| ApiError::bad_request(format!("cannot infer the kind of `{source}`; pass --kind")))?;
        let source_kind = args
            .source_kind
            .ok_or_else(|| ApiError::bad_request("--source-kind is required"))?;
        let mut doc: SourceDocument = engine.load_document(source, kind, true)?;
        if let Some(uri) = &args.uri {
            doc.uri = uri.clone();
        }
        docs.push((doc, source_kind.into()));
    }
    let report = engine.ingest(&docs);
    for (uri, id) in &report.staged {
        writeln!(out, "staged {id} {uri}").map_err(io_err)?;
    }
    for (uri, err) in &report.errors {
        writeln!(out, "failed {uri}: {err}").map_err(io_err)?;
    }
    if !report.errors.is_empty() {
        return Err(ApiError::bad_request(format!("{} document(s) not ingested", report.errors.len())));
    }
    Ok(())
}

fn review(engine: &Engine, cmd: &ReviewCommand, out: &mut dyn Write) -> Result<(), ApiError> {
    match cmd {
        ReviewCommand::List => {
            let items = engine.pending_reviews();
            if items.is_empty() {
                writeln!(out, "no drafts awaiting review").map_err(io_err)?;
            }
            for item in items {
                let d = &item.draft;
                writeln!(out, "{} {} [{}]", d.id, d.name, d.source_links.join(" ")).map_err(io_err)?;
                for (attr, value) in d.taxonomy_in_schema_order(engine.schema()) {
                    let tally = item
                        .tallies
                        .get(attr)
                        .map(|t| {
                            t.iter()
                                .map(|(v, w)| format!("{v}:{w}"))
                                .collect::<Vec<_>>()
                                .join(", ")
                        })
                        .unwrap_or_default();
                    writeln!(out, "   {attr} = {}  {{{tally}}}", value.value.canonical()).map_err(io_err)?;
                }
            }
            Ok(())
        }
        ReviewCommand::Approve { id } => {
            let record = engine.resolve_review(*id, ReviewDecision::Approve)?;
            writeln!(out, "approved {} {}", record.id, record.name).map_err(io_err)
        }
        ReviewCommand::Correct { id, set } => {
            let mut edits = Vec::with_capacity(set.len());
            for pair in set {
                let (attr, value) = pair
                    .split_once('=')
                    .ok_or_else(|| ApiError::bad_request(format!("`{pair}`: expected attr=value")))?;
                edits.push((attr.trim().to_string(), value.trim().to_string()));
            }
            let record = engine.resolve_review(*id, ReviewDecision::Correct(edits))?;
            writeln!(out, "corrected {} {}", record.id, record.name).map_err(io_err)
        }
    }
}

fn query(
    engine: &Engine,
    prompt: &str,
    session: Option<&str>,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), ApiError> {
    let session_id = match session {
        Some(id) => {
            engine.ensure_session(id)?;
            id.to_string()
        }
        None => engine.create_session()?,
    };
    let trace = engine.chat(&session_id, prompt)?;
    let text = if json {
        let mut s = serde_json::to_string_pretty(&trace.response).expect("response serializes");
        s.push('\n');
        s
    } else {
        render_response(&trace.response, &engine.catalog().read())
    };
    out.write_all(text.as_bytes()).map_err(io_err)
}

fn serve(cfg: &ServerConfig) -> Result<(), ApiError> {
    // providers hold blocking HTTP clients, so build them outside the runtime
    let engine = Arc::new(Engine::from_config(cfg, true, true)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ApiError::internal(format!("runtime: {e}")))?;
    runtime.block_on(async {
        let app = router(AppState::new(engine.clone()), cfg.cors_origin.as_deref())?;
        let listener = tokio::net::TcpListener::bind(&cfg.addr)
            .await
            .map_err(|e| ApiError::internal(format!("bind {}: {e}", cfg.addr)))?;
        info!(addr = %cfg.addr, devices = engine.stats().devices, "serving");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| ApiError::internal(format!("server: {e}")))
    })
}
