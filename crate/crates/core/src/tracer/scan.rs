//! Subject/object co-occurrence scanning.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactUid, LanguageCode};
use crate::par;
use crate::text::{fold_for_matching, fold_into};

use super::index::{FactPatterns, PatternIndex};
use super::segment::{Passage, PassageId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceResult {
    pub uid: FactUid,
    #[serde(rename = "lang")]
    pub language: LanguageCode,
    pub present: bool,
    pub evidence: Option<PassageId>,
}

/// First co-occurrence found per fact. Positions are global stream order,
/// so merging shards by minimum position reproduces single-stream evidence.
#[derive(Debug, Clone, Default)]
pub struct ScanHits {
    hits: HashMap<u32, (u64, PassageId)>,
}

impl ScanHits {
    fn record(&mut self, fact: u32, position: u64, passage: &PassageId) {
        match self.hits.get(&fact) {
            Some((p, _)) if *p <= position => {}
            _ => {
                self.hits.insert(fact, (position, passage.clone()));
            }
        }
    }

    fn has(&self, fact: u32) -> bool {
        self.hits.contains_key(&fact)
    }

    /// Associative, commutative merge: keeps the earliest hit per fact.
    pub fn merge(mut self, other: ScanHits) -> ScanHits {
        for (fact, (pos, id)) in other.hits {
            self.record(fact, pos, &id);
        }
        self
    }

    pub fn into_results(self, index: &PatternIndex) -> Vec<TraceResult> {
        let mut hits = self.hits;
        index
            .facts
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let evidence = hits.remove(&(i as u32)).map(|(_, id)| id);
                TraceResult {
                    uid: f.uid,
                    language: index.language.clone(),
                    present: evidence.is_some(),
                    evidence,
                }
            })
            .collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn at_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
    let after = text[end..].chars().next().is_none_or(|c| !is_word_char(c));
    before && after
}

/// Reusable per-worker buffers.
pub struct Scanner<'a> {
    index: &'a PatternIndex,
    folded: String,
    /// Stamp per pattern; equal to `stamp` when matched in the current passage.
    seen: Vec<u32>,
    stamp: u32,
    matched: Vec<u32>,
    hits: ScanHits,
}

impl<'a> Scanner<'a> {
    pub fn new(index: &'a PatternIndex) -> Self {
        Scanner {
            index,
            folded: String::new(),
            seen: vec![0; index.patterns.len()],
            stamp: 0,
            matched: Vec::new(),
            hits: ScanHits::default(),
        }
    }

    fn next_stamp(&mut self) {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
    }

    /// Scans one passage at stream position `position`.
    pub fn scan(&mut self, passage: &Passage, position: u64) {
        self.scan_text(&passage.text, &passage.id, position);
    }

    pub fn scan_text(&mut self, text: &str, id: &PassageId, position: u64) {
        let index = self.index;
        if index.patterns.is_empty() {
            return;
        }
        fold_into(text, &mut self.folded);
        self.next_stamp();
        self.matched.clear();
        for m in index.automaton.find_overlapping_iter(self.folded.as_str()) {
            let p = m.pattern().as_u32();
            if self.seen[p as usize] == self.stamp {
                continue;
            }
            if index.word_boundary && !at_word_boundary(&self.folded, m.start(), m.end()) {
                continue;
            }
            self.seen[p as usize] = self.stamp;
            self.matched.push(p);
        }
        for &p in &self.matched {
            for &fact in &index.facts_by_subject[p as usize] {
                if self.hits.has(fact) {
                    continue;
                }
                if let Some(obj) = index.object_pattern[fact as usize] {
                    if self.seen[obj as usize] == self.stamp {
                        self.hits.record(fact, position, id);
                    }
                }
            }
        }
    }

    pub fn finish(self) -> ScanHits {
        self.hits
    }
}

/// Single pass over a passage stream. Evidence is the first co-occurring
/// passage in stream order.
pub fn scan_passages<'p, I>(passages: I, index: &PatternIndex) -> Vec<TraceResult>
where
    I: IntoIterator<Item = &'p Passage>,
{
    let mut scanner = Scanner::new(index);
    for (i, p) in passages.into_iter().enumerate() {
        scanner.scan(p, i as u64);
    }
    scanner.finish().into_results(index)
}

/// Sharded scan; results are identical to `scan_passages` on the same slice.
pub fn scan_passages_sharded(passages: &[Passage], index: &PatternIndex, shard_size: usize) -> Vec<TraceResult> {
    let shard_size = shard_size.max(1);
    par::map_chunks(passages, shard_size, |shard, chunk| {
        let mut scanner = Scanner::new(index);
        let base = (shard * shard_size) as u64;
        for (i, p) in chunk.iter().enumerate() {
            scanner.scan(p, base + i as u64);
        }
        scanner.finish()
    })
    .into_iter()
    .fold(ScanHits::default(), ScanHits::merge)
    .into_results(index)
}

/// Reference implementation: per-fact substring search with no automaton.
pub fn naive_scan_oracle(
    passages: &[Passage],
    language: &LanguageCode,
    patterns: &[FactPatterns],
    word_boundary: bool,
) -> Vec<TraceResult> {
    let folded: Vec<String> = passages.iter().map(|p| fold_for_matching(&p.text)).collect();
    let contains = |hay: &str, needle: &str| -> bool {
        if needle.is_empty() {
            return false;
        }
        if !word_boundary {
            return hay.contains(needle);
        }
        // match_indices skips overlapping occurrences, so step one char at a time
        let mut from = 0;
        while let Some(off) = hay[from..].find(needle) {
            let start = from + off;
            if at_word_boundary(hay, start, start + needle.len()) {
                return true;
            }
            from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
        }
        false
    };
    patterns
        .iter()
        .map(|f| {
            let evidence = passages
                .iter()
                .zip(&folded)
                .find(|(_, text)| contains(text, &f.subject) && contains(text, &f.object))
                .map(|(p, _)| p.id.clone());
            TraceResult {
                uid: f.uid,
                language: language.clone(),
                present: evidence.is_some(),
                evidence,
            }
        })
        .collect()
}

pub fn write_traces<W: Write>(mut w: W, traces: &[TraceResult]) -> Result<()> {
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w).map_err(|e| Error::io("<traces>", e))?;
    }
    Ok(())
}

pub fn read_traces<R: BufRead>(r: R) -> Result<Vec<TraceResult>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<traces>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
