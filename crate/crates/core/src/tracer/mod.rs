//! Tracing facts back to a text corpus by subject/object co-occurrence.

pub mod absence;
pub mod corpus;
pub mod index;
pub mod scan;
pub mod segment;

pub use absence::{absence_report, AbsenceCounts, AbsenceReport};
pub use corpus::{corpus_files, trace_corpus, CorpusOptions};
pub use index::{build_pattern_index, FactPatterns, PatternIndex};
pub use scan::{naive_scan_oracle, scan_passages, scan_passages_sharded, ScanHits, Scanner, TraceResult};
pub use segment::{count_tokens, segment_corpus, segment_document, Document, Passage, PassageId, DEFAULT_MAX_TOKENS};
