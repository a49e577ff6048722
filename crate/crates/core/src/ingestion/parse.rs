use std::sync::OnceLock;

use regex::Regex;
use scraper::{ElementRef, Html, Selector};

use super::{BlockKind, DocumentKind, IngestError, SourceBlock, SourceDocument};

/// Splits a document into ordered blocks.
///
/// HTML: `<p>` elements become text blocks, `<table>` elements table blocks,
/// and `<figure>` captions or `<img>` alt text image-caption blocks.
/// Plain text and PDF text dumps: blank-line-separated paragraphs become
/// text blocks and runs of tab- or pipe-delimited lines become table
/// blocks; in PDF dumps a paragraph opening with `Fig.`/`Figure N` is the
/// extracted figure caption.
pub fn parse_source(doc: &SourceDocument) -> Result<Vec<SourceBlock>, IngestError> {
    if doc.uri.trim().is_empty() {
        return Err(IngestError::Document {
            uri: String::new(),
            reason: "document uri is empty".into(),
        });
    }
    let pieces = match doc.kind {
        DocumentKind::Html => parse_html(&doc.content),
        DocumentKind::PlainText => parse_text(&doc.content, false),
        DocumentKind::PdfTextDump => parse_text(&doc.content, true),
    };
    if pieces.is_empty() {
        return Err(IngestError::Document {
            uri: doc.uri.clone(),
            reason: "no content blocks found".into(),
        });
    }
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(position, (kind, content))| SourceBlock {
            id: format!("{}#{position}", doc.uri),
            document_uri: doc.uri.clone(),
            kind,
            content,
            position,
        })
        .collect())
}

/// Best-effort document title: `<title>` or the first `<h1>` for HTML, the
/// first non-empty line otherwise.
pub fn document_title(doc: &SourceDocument) -> Option<String> {
    match doc.kind {
        DocumentKind::Html => {
            let html = Html::parse_document(&doc.content);
            ["title", "h1"].iter().find_map(|tag| {
                let sel = Selector::parse(tag).expect("static selector");
                html.select(&sel)
                    .map(|e| collapse(&e.text().collect::<String>()))
                    .find(|t| !t.is_empty())
            })
        }
        DocumentKind::PlainText | DocumentKind::PdfTextDump => doc
            .content
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(str::to_string),
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_html(content: &str) -> Vec<(BlockKind, String)> {
    let html = Html::parse_document(content);
    let sel = Selector::parse("p, table, figure, img").expect("static selector");
    let mut out = Vec::new();
    for el in html.select(&sel) {
        if has_ancestor(el, &["table", "figure"]) {
            continue;
        }
        match el.value().name() {
            "p" => {
                let text = collapse(&el.text().collect::<String>());
                if !text.is_empty() {
                    out.push((BlockKind::Text, text));
                }
            }
            "table" => {
                let rows = table_rows(el);
                if !rows.is_empty() {
                    out.push((BlockKind::Table, rows.join("\n")));
                }
            }
            "figure" => {
                let caption_sel = Selector::parse("figcaption").expect("static selector");
                let img_sel = Selector::parse("img").expect("static selector");
                let caption = el
                    .select(&caption_sel)
                    .map(|c| collapse(&c.text().collect::<String>()))
                    .find(|t| !t.is_empty())
                    .or_else(|| el.select(&img_sel).find_map(alt_text));
                if let Some(caption) = caption {
                    out.push((BlockKind::ImageCaption, caption));
                }
            }
            "img" => {
                if let Some(alt) = alt_text(el) {
                    out.push((BlockKind::ImageCaption, alt));
                }
            }
            _ => {}
        }
    }
    out
}

fn has_ancestor(el: ElementRef<'_>, names: &[&str]) -> bool {
    el.ancestors()
        .filter_map(ElementRef::wrap)
        .any(|a| names.contains(&a.value().name()))
}

fn alt_text(img: ElementRef<'_>) -> Option<String> {
    img.value()
        .attr("alt")
        .map(collapse)
        .filter(|a| !a.is_empty())
}

fn table_rows(table: ElementRef<'_>) -> Vec<String> {
    let row_sel = Selector::parse("tr").expect("static selector");
    let cell_sel = Selector::parse("th, td").expect("static selector");
    table
        .select(&row_sel)
        .map(|row| {
            row.select(&cell_sel)
                .map(|c| collapse(&c.text().collect::<String>()))
                .collect::<Vec<_>>()
                .join(" | ")
        })
        .filter(|r| !r.trim().is_empty())
        .collect()
}

fn caption_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:Fig\.|Figure)\s*[0-9]+").expect("valid caption regex"))
}

fn is_delimited(line: &str) -> bool {
    line.contains('\t') || line.contains('|')
}

fn table_row(line: &str) -> String {
    let cells: Vec<&str> = line.split(['\t', '|']).map(str::trim).collect();
    // "| a | b |" yields empty edge cells
    let start = cells.iter().position(|c| !c.is_empty()).unwrap_or(0);
    let end = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |i| i + 1);
    cells[start..end].join(" | ")
}

fn parse_text(content: &str, detect_captions: bool) -> Vec<(BlockKind, String)> {
    let mut out = Vec::new();
    let mut paragraph: Vec<&str> = Vec::new();
    let flush = |paragraph: &mut Vec<&str>, out: &mut Vec<(BlockKind, String)>| {
        let mut run: Vec<&str> = Vec::new();
        let mut run_is_table = false;
        for line in paragraph.drain(..) {
            let delimited = is_delimited(line);
            if !run.is_empty() && delimited != run_is_table {
                out.push(finish_run(&run, run_is_table, detect_captions));
                run.clear();
            }
            run_is_table = delimited;
            run.push(line);
        }
        if !run.is_empty() {
            out.push(finish_run(&run, run_is_table, detect_captions));
        }
    };
    for line in content.lines() {
        if line.trim().is_empty() {
            flush(&mut paragraph, &mut out);
        } else {
            paragraph.push(line);
        }
    }
    flush(&mut paragraph, &mut out);
    out.retain(|(_, c)| !c.is_empty());
    out
}

fn finish_run(lines: &[&str], table: bool, detect_captions: bool) -> (BlockKind, String) {
    if table {
        let rows: Vec<String> = lines
            .iter()
            .map(|l| table_row(l))
            .filter(|r| !r.is_empty() && !r.chars().all(|c| matches!(c, '-' | ':' | '|' | ' ')))
            .collect();
        return (BlockKind::Table, rows.join("\n"));
    }
    let text = collapse(&lines.join(" "));
    if detect_captions && caption_regex().is_match(&text) {
        (BlockKind::ImageCaption, text)
    } else {
        (BlockKind::Text, text)
    }
}
