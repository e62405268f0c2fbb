//! Multi-pattern index over the normalized subject and object strings of a
//! set of facts.

use std::collections::HashMap;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

use crate::error::{Error, Result};
use crate::model::{FactTriple, FactUid, LanguageCode};
use crate::text::fold_for_matching;

/// Normalized entity strings per fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactPatterns {
    pub uid: FactUid,
    pub subject: String,
    pub object: String,
}

/// Immutable after construction and shared read-only between scan workers.
#[derive(Debug, Clone)]
pub struct PatternIndex {
    pub(crate) language: LanguageCode,
    pub(crate) facts: Vec<FactPatterns>,
    /// Distinct non-empty patterns; automaton pattern ids index this.
    pub(crate) patterns: Vec<String>,
    pub(crate) object_pattern: Vec<Option<u32>>,
    /// Pattern id -> indices of facts whose subject it is.
    pub(crate) facts_by_subject: Vec<Vec<u32>>,
    pub(crate) automaton: AhoCorasick,
    pub(crate) word_boundary: bool,
}

impl PatternIndex {
    pub fn language(&self) -> &LanguageCode {
        &self.language
    }

    pub fn facts(&self) -> &[FactPatterns] {
        &self.facts
    }

    /// Distinct normalized patterns, in first-seen order.
    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn word_boundary(&self) -> bool {
        self.word_boundary
    }
}

/// Builds the index for facts of one language. Identical entity strings are
/// stored once and fan out to every fact that owns them. Entities that
/// normalize to the empty string get no pattern, so their facts are never
/// present.
pub fn build_pattern_index(facts: &[FactTriple], word_boundary: bool) -> Result<PatternIndex> {
    let first = facts
        .first()
        .ok_or_else(|| Error::contract("cannot build a pattern index from zero facts"))?;
    let language = first.language.clone();
    if let Some(f) = facts.iter().find(|f| f.language != language) {
        return Err(Error::contract(format!(
            "pattern index mixes languages {language} and {}",
            f.language
        )));
    }

    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut patterns: Vec<String> = Vec::new();
    let mut intern = |s: &str| -> Option<u32> {
        if s.is_empty() {
            return None;
        }
        Some(*ids.entry(s.to_owned()).or_insert_with(|| {
            patterns.push(s.to_owned());
            (patterns.len() - 1) as u32
        }))
    };

    let mut fact_patterns = Vec::with_capacity(facts.len());
    let mut subject_pattern = Vec::with_capacity(facts.len());
    let mut object_pattern = Vec::with_capacity(facts.len());
    for f in facts {
        let subject = fold_for_matching(&f.subject_label);
        let object = fold_for_matching(&f.object_label);
        subject_pattern.push(intern(&subject));
        object_pattern.push(intern(&object));
        fact_patterns.push(FactPatterns {
            uid: f.uid,
            subject,
            object,
        });
    }

    let mut facts_by_subject = vec![Vec::new(); patterns.len()];
    for (i, s) in subject_pattern.iter().enumerate() {
        if let Some(p) = s {
            facts_by_subject[*p as usize].push(i as u32);
        }
    }

    let automaton = AhoCorasickBuilder::new()
        .match_kind(MatchKind::Standard)
        .build(&patterns)
        .map_err(|e| Error::contract(format!("automaton construction failed: {e}")))?;

    Ok(PatternIndex {
        language,
        facts: fact_patterns,
        patterns,
        object_pattern,
        facts_by_subject,
        automaton,
        word_boundary,
    })
}
