//! Splitting documents into passages of bounded token length.
//!
//! Tokens are Unicode word-boundary segments that are not pure whitespace,
//! so punctuation counts as a token. Passages are packed from whole
//! sentences where possible; a sentence longer than the limit is cut into
//! limit-sized pieces.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

pub const DEFAULT_MAX_TOKENS: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PassageId {
    pub doc: String,
    pub segment: u32,
}

impl fmt::Display for PassageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc, self.segment)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: PassageId,
    pub text: String,
    pub token_count: usize,
}

/// Byte spans of the tokens of `text`.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    text.split_word_bound_indices()
        .filter(|(_, s)| !s.chars().all(char::is_whitespace))
        .map(|(i, s)| (i, i + s.len()))
        .collect()
}

pub fn count_tokens(text: &str) -> usize {
    text.split_word_bounds()
        .filter(|s| !s.chars().all(char::is_whitespace))
        .count()
}

/// Splits one document. Empty or whitespace-only documents give no
/// passages. `max_tokens` of 0 is treated as 1.
pub fn segment_document(doc: &Document, max_tokens: usize) -> Vec<Passage> {
    let max_tokens = max_tokens.max(1);
    let tokens = token_spans(&doc.text);
    if tokens.is_empty() {
        return Vec::new();
    }

    // Token index at which each sentence starts.
    let mut sentence_starts = Vec::new();
    let mut t = 0;
    for (start, s) in doc.text.split_sentence_bound_indices() {
        let end = start + s.len();
        if t < tokens.len() && tokens[t].0 < end {
            sentence_starts.push(t);
            while t < tokens.len() && tokens[t].0 < end {
                t += 1;
            }
        }
    }
    sentence_starts.push(tokens.len());

    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for w in sentence_starts.windows(2) {
        let (s, e) = (w[0], w[1]);
        match open {
            Some((a, b)) if (b - a) + (e - s) <= max_tokens => open = Some((a, e)),
            _ => {
                if let Some(r) = open.take() {
                    ranges.push(r);
                }
                let mut a = s;
                while e - a > max_tokens {
                    ranges.push((a, a + max_tokens));
                    a += max_tokens;
                }
                open = Some((a, e));
            }
        }
    }
    ranges.extend(open);

    ranges
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| Passage {
            id: PassageId {
                doc: doc.id.clone(),
                segment: i as u32,
            },
            text: doc.text[tokens[a].0..tokens[b - 1].1].to_owned(),
            token_count: b - a,
        })
        .collect()
}

/// Lazily segments a stream of documents.
pub fn segment_corpus<I>(docs: I, max_tokens: usize) -> impl Iterator<Item = Passage>
where
    I: IntoIterator<Item = Document>,
{
    docs.into_iter().flat_map(move |d| segment_document(&d, max_tokens))
}
