//! Reading extracted corpus files.
//!
//! A corpus is a directory tree of UTF-8 files produced by a Wikipedia
//! text extractor. Three record layouts are understood:
//!
//! * `*.json` / `*.jsonl`: one `{"id", "text", ...}` object per line
//!   (WikiExtractor `--json`);
//! * files containing `<doc id="..." title="...">` ... `</doc>` blocks
//!   (WikiExtractor default); the title line opening each body is dropped;
//! * anything else: one document per non-empty line.
//!
//! In pre-segmented mode every non-empty line is taken as one passage that
//! was already cut with the model tokenizer.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::par;

use super::index::PatternIndex;
use super::scan::{ScanHits, Scanner, TraceResult};
use super::segment::{segment_document, Document, Passage, PassageId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusOptions {
    pub max_tokens: usize,
    pub presegmented: bool,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            max_tokens: super::segment::DEFAULT_MAX_TOKENS,
            presegmented: false,
        }
    }
}

/// Regular files under `root`, sorted, hidden files skipped.
pub fn corpus_files(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::Dependency(format!("corpus directory {} does not exist", root.display())));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io(root, e.into()))?;
        let hidden = entry.file_name().to_str().is_some_and(|n| n.starts_with('.'));
        if entry.file_type().is_file() && !hidden {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

pub fn read_utf8(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Encoding {
        path: path.to_owned(),
        offset: e.utf8_error().valid_up_to(),
    })
}

#[derive(Deserialize)]
struct JsonDoc {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    title: Option<String>,
    text: String,
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!("{name}=\"");
    let start = tag.find(&key)? + key.len();
    let len = tag[start..].find('"')?;
    Some(&tag[start..start + len])
}

/// Splits file contents into documents. `name` prefixes generated ids.
pub fn parse_documents(name: &str, contents: &str, is_json: bool) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    if is_json {
        for (i, line) in contents.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let d: JsonDoc = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{name}: {e}"),
            })?;
            let id = match d.id {
                Some(serde_json::Value::String(s)) => s,
                Some(v) => v.to_string(),
                None => format!("{name}:{}", i + 1),
            };
            let mut text = d.text;
            if let Some(title) = d.title {
                if let Some(rest) = text.strip_prefix(title.as_str()) {
                    text = rest.trim_start_matches('\n').to_owned();
                }
            }
            docs.push(Document { id, text });
        }
    } else if contents.contains("<doc") {
        let mut rest = contents;
        let mut n = 0;
        while let Some(open) = rest.find("<doc") {
            let after = &rest[open..];
            let Some(tag_end) = after.find('>') else { break };
            let tag = &after[..tag_end];
            let body_start = tag_end + 1;
            let body_len = after[body_start..].find("</doc>").unwrap_or(after.len() - body_start);
            let mut body = after[body_start..body_start + body_len].trim_start_matches('\n');
            if let Some(title) = attr(tag, "title") {
                if let Some(first_nl) = body.find('\n') {
                    if body[..first_nl].trim() == title {
                        body = &body[first_nl + 1..];
                    }
                } else if body.trim() == title {
                    body = "";
                }
            }
            n += 1;
            let id = attr(tag, "id").map_or_else(|| format!("{name}:{n}"), str::to_owned);
            docs.push(Document {
                id,
                text: body.to_owned(),
            });
            rest = &after[(body_start + body_len).min(after.len())..];
        }
    } else {
        for (i, line) in contents.lines().enumerate() {
            if !line.trim().is_empty() {
                docs.push(Document {
                    id: format!("{name}:{}", i + 1),
                    text: line.to_owned(),
                });
            }
        }
    }
    Ok(docs)
}

/// Reads and segments one corpus file.
pub fn read_passages(root: &Path, path: &Path, opts: CorpusOptions) -> Result<Vec<Passage>> {
    let contents = read_utf8(path)?;
    let name = path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/");
    if opts.presegmented {
        return Ok(contents
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .flat_map(|(i, l)| {
                let doc = Document {
                    id: format!("{name}:{}", i + 1),
                    text: l.to_owned(),
                };
                segment_document(&doc, opts.max_tokens)
            })
            .collect());
    }
    let is_json = path.extension().is_some_and(|e| e == "json" || e == "jsonl");
    let docs = parse_documents(&name, &contents, is_json)?;
    Ok(docs.iter().flat_map(|d| segment_document(d, opts.max_tokens)).collect())
}

/// Traces every fact of `index` through the files of a corpus. Files are
/// scanned in parallel; per-file hits merge by earliest stream position
/// (file order, then passage order), so the result does not depend on the
/// worker count.
pub fn trace_corpus(root: &Path, files: &[PathBuf], index: &PatternIndex, opts: CorpusOptions) -> Result<Vec<TraceResult>> {
    let numbered: Vec<(u64, &PathBuf)> = files.iter().enumerate().map(|(i, p)| (i as u64, p)).collect();
    let per_file: Vec<Result<ScanHits>> = par::map(&numbered, |&(file_no, path)| {
        let passages = read_passages(root, path, opts)?;
        let mut scanner = Scanner::new(index);
        for (i, p) in passages.iter().enumerate() {
            scanner.scan(p, (file_no << 32) | i as u64);
        }
        Ok(scanner.finish())
    });
    let mut merged = ScanHits::default();
    for hits in per_file {
        merged = merged.merge(hits?);
    }
    Ok(merged.into_results(index))
}

/// Passage id helper for callers that synthesize passages.
pub fn passage_id(doc: impl Into<String>, segment: u32) -> PassageId {
    PassageId {
        doc: doc.into(),
        segment,
    }
}
