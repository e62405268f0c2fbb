//! Rule-based classification of facts that are predictable but have no
//! corpus evidence.
//!
//! Rules apply in order: shared entity tokens, then naming cues, then other.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactTriple, FactUid, LanguageCode, TokenizationTable};
use crate::text::normalize_entity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactCategory {
    SharedEntityTokens,
    NamingCues,
    Other,
}

impl FactCategory {
    pub const ALL: [FactCategory; 3] = [FactCategory::SharedEntityTokens, FactCategory::NamingCues, FactCategory::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            FactCategory::SharedEntityTokens => "shared_entity_tokens",
            FactCategory::NamingCues => "naming_cues",
            FactCategory::Other => "other",
        }
    }
}

/// Relations whose objects (languages, countries, religions) can often be
/// guessed from the form of a person or place name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamingRelationList(BTreeSet<String>);

impl Default for NamingRelationList {
    fn default() -> Self {
        NamingRelationList(["P103", "P17", "P140", "P1412", "P27"].into_iter().map(String::from).collect())
    }
}

impl NamingRelationList {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = ids.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(Error::contract("naming relation list is empty"));
        }
        Ok(NamingRelationList(set))
    }

    pub fn contains(&self, relation_id: &str) -> bool {
        self.0.contains(relation_id)
    }

    /// Ids not used by any of `relations`.
    pub fn unknown<'a>(&'a self, relations: &BTreeSet<&str>) -> Vec<&'a str> {
        self.0.iter().map(String::as_str).filter(|r| !relations.contains(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubwordOverlap {
    pub shared: bool,
    /// Set when a label had no tokenization, so only the substring rule ran.
    pub fallback: bool,
}

fn meaningful_piece(token: &str) -> Option<String> {
    let bare = token
        .strip_prefix("##")
        .unwrap_or(token)
        .trim_start_matches(['\u{2581}', '\u{120}']);
    let norm = normalize_entity(bare);
    let mut chars = norm.chars();
    let long_enough = chars.next().is_some() && chars.next().is_some();
    let has_word_char = norm.chars().any(char::is_alphanumeric);
    (long_enough && has_word_char).then_some(norm)
}

/// True when the normalized object is a substring of the normalized
/// subject, or their tokenizer pieces overlap (single-character and
/// punctuation-only pieces excluded).
pub fn shares_subwords(language: &LanguageCode, subject: &str, object: &str, vocab: &TokenizationTable) -> SubwordOverlap {
    let s = normalize_entity(subject);
    let o = normalize_entity(object);
    if !o.is_empty() && s.contains(&o) {
        return SubwordOverlap {
            shared: true,
            fallback: false,
        };
    }
    let (Some(st), Some(ot)) = (vocab.tokens(language, subject), vocab.tokens(language, object)) else {
        return SubwordOverlap {
            shared: false,
            fallback: true,
        };
    };
    let pieces: BTreeSet<String> = st.iter().filter_map(|t| meaningful_piece(t)).collect();
    let shared = ot.iter().filter_map(|t| meaningful_piece(t)).any(|p| pieces.contains(&p));
    SubwordOverlap {
        shared,
        fallback: false,
    }
}

pub fn classify_fact(f: &FactTriple, naming: &NamingRelationList, vocab: &TokenizationTable) -> FactCategory {
    if shares_subwords(&f.language, &f.subject_label, &f.object_label, vocab).shared {
        FactCategory::SharedEntityTokens
    } else if naming.contains(&f.relation_id) {
        FactCategory::NamingCues
    } else {
        FactCategory::Other
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedFact {
    pub uid: FactUid,
    #[serde(rename = "lang")]
    pub language: LanguageCode,
    pub category: FactCategory,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CategoryCounts {
    pub shared_entity_tokens: usize,
    pub naming_cues: usize,
    pub other: usize,
}

impl CategoryCounts {
    pub fn add(&mut self, c: FactCategory) {
        match c {
            FactCategory::SharedEntityTokens => self.shared_entity_tokens += 1,
            FactCategory::NamingCues => self.naming_cues += 1,
            FactCategory::Other => self.other += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.shared_entity_tokens + self.naming_cues + self.other
    }
}

/// Counts per (language, category). `languages` seeds zero rows so that
/// languages without absent facts still appear.
pub fn category_report(classified: &[ClassifiedFact], languages: &[LanguageCode]) -> BTreeMap<LanguageCode, CategoryCounts> {
    let mut out: BTreeMap<LanguageCode, CategoryCounts> = languages.iter().map(|l| (l.clone(), CategoryCounts::default())).collect();
    for c in classified {
        out.entry(c.language.clone()).or_default().add(c.category);
    }
    out
}

pub fn write_classified<W: Write>(mut w: W, facts: &[ClassifiedFact]) -> Result<()> {
    for f in facts {
        serde_json::to_writer(&mut w, f)?;
        writeln!(w).map_err(|e| Error::io("<categories>", e))?;
    }
    Ok(())
}

pub fn read_classified<R: std::io::BufRead>(r: R) -> Result<Vec<ClassifiedFact>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<categories>", e))?;
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

pub fn write_category_csv<W: Write>(w: W, counts: &BTreeMap<LanguageCode, CategoryCounts>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["language", "shared_entity_tokens", "naming_cues", "other"])?;
    for (lang, c) in counts {
        out.write_record([
            lang.to_string(),
            c.shared_entity_tokens.to_string(),
            c.naming_cues.to_string(),
            c.other.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<category counts>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang(s: &str) -> LanguageCode {
        LanguageCode::new(s).unwrap()
    }

    fn table(lang_code: &str, entries: &[(&str, &[&str])]) -> TokenizationTable {
        let mut m = BTreeMap::new();
        for (label, toks) in entries {
            m.insert((lang(lang_code), label.to_string()), toks.iter().map(|s| s.to_string()).collect());
        }
        TokenizationTable::new(m, BTreeSet::new()).unwrap()
    }

    #[test]
    fn substring_overlap() {
        let t = TokenizationTable::default();
        assert!(shares_subwords(&lang("en"), "Sega Sports R&D", "Sega", &t).shared);
        assert!(shares_subwords(&lang("ceb"), "Nokia X", "Nokia", &t).shared);
        let r = shares_subwords(&lang("en"), "Crime & Punishment", "NBC", &t);
        assert!(!r.shared);
        assert!(r.fallback);
    }

    #[test]
    fn piece_overlap_ignores_trivial_pieces() {
        let t = table(
            "en",
            &[
                ("Crime & Punishment", &["Crime", "&", "Pun", "##ish", "##ment"]),
                ("NBC", &["NBC"]),
                ("Jamaica Plain", &["Jam", "##aica", "Plain"]),
                ("Jamaican", &["Jam", "##aic", "##an"]),
                ("A & B", &["A", "&", "B"]),
                ("A-B", &["A", "-", "B"]),
            ],
        );
        let en = lang("en");
        let r = shares_subwords(&en, "Crime & Punishment", "NBC", &t);
        assert!(!r.shared && !r.fallback);
        // not a substring, but "jam" is shared
        assert!(shares_subwords(&en, "Jamaica Plain", "Jamaican", &t).shared);
        // only single-character and punctuation pieces in common
        assert!(!shares_subwords(&en, "A & B", "A-B", &t).shared);
    }

    #[test]
    fn han_variants_unify() {
        let t = TokenizationTable::default();
        assert!(shares_subwords(&lang("zh"), "意大利雜菜湯", "汤", &t).shared);
    }

    #[test]
    fn rule_order() {
        let t = TokenizationTable::default();
        let naming = NamingRelationList::default();
        let f = FactTriple::new("P127", lang("en"), "Sega Sports R&D", "Sega", None);
        assert_eq!(classify_fact(&f, &naming, &t), FactCategory::SharedEntityTokens);
        let f = FactTriple::new("P103", lang("en"), "Hamidou Benmassoud", "French", None);
        assert_eq!(classify_fact(&f, &naming, &t), FactCategory::NamingCues);
        let f = FactTriple::new("P19", lang("en"), "Aleksandar Novaković", "Belgrade", None);
        assert_eq!(classify_fact(&f, &naming, &t), FactCategory::Other);
        // shared tokens win over a naming relation
        let f = FactTriple::new("P17", lang("de"), "Frankreich-Verein", "Frankreich", None);
        assert_eq!(classify_fact(&f, &naming, &t), FactCategory::SharedEntityTokens);
    }

    #[test]
    fn reports_partition_input() {
        let en = lang("en");
        let c = |cat| ClassifiedFact {
            uid: FactUid(0),
            language: en.clone(),
            category: cat,
        };
        let r = category_report(&[c(FactCategory::SharedEntityTokens), c(FactCategory::NamingCues), c(FactCategory::Other)], &[]);
        assert_eq!(
            r[&en],
            CategoryCounts {
                shared_entity_tokens: 1,
                naming_cues: 1,
                other: 1
            }
        );
        let r = category_report(&[], std::slice::from_ref(&en));
        assert_eq!(r[&en].total(), 0);
    }

    #[test]
    fn empty_naming_list_is_rejected() {
        assert!(NamingRelationList::new(Vec::<String>::new()).is_err());
        let l = NamingRelationList::new(["P27"]).unwrap();
        assert!(l.contains("P27"));
        assert_eq!(l.unknown(&["P19"].into_iter().collect()), vec!["P27"]);
    }
}
