//! Shared data model: languages, relation templates, fact triples,
//! tokenization tables, and dataset validation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SUBJECT_PLACEHOLDER: &str = "[X]";
pub const OBJECT_PLACEHOLDER: &str = "[Y]";

/// Lowercase ISO-639 code with an optional subtag, e.g. `en`, `ceb`, `zh-hans`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        let (base, sub) = match code.split_once(['-', '_']) {
            Some((b, s)) => (b, Some(s)),
            None => (code.as_str(), None),
        };
        let base_ok = (2..=3).contains(&base.len()) && base.bytes().all(|b| b.is_ascii_lowercase());
        let sub_ok = sub.is_none_or(|s| {
            !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
        });
        if base_ok && sub_ok {
            Ok(LanguageCode(code))
        } else {
            Err(Error::contract(format!("invalid language code {code:?}")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageCode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        LanguageCode::new(s)
    }
}

impl From<LanguageCode> for String {
    fn from(l: LanguageCode) -> String {
        l.0
    }
}

impl FromStr for LanguageCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LanguageCode::new(s)
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Stable 64-bit fact identifier, rendered as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FactUid(pub u64);

impl FactUid {
    /// Hash of the unit-separator-joined fields. Pure function of its inputs.
    pub fn derive(relation_id: &str, language: &str, subject: &str, object: &str) -> Self {
        FactUid(hash64(&[relation_id, language, subject, object]))
    }
}

fn hash64(fields: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            h.update([0x1f]);
        }
        h.update(f.as_bytes());
    }
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

impl fmt::Display for FactUid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for FactUid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 16 {
            return Err(Error::contract(format!("uid {s:?} is not 16 hex digits")));
        }
        u64::from_str_radix(s, 16)
            .map(FactUid)
            .map_err(|_| Error::contract(format!("uid {s:?} is not hex")))
    }
}

impl TryFrom<String> for FactUid {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FactUid> for String {
    fn from(u: FactUid) -> String {
        u.to_string()
    }
}

/// Identity of a fact across languages (mLAMA's `uuid`). Sets of predictable
/// facts from different languages are compared through this key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactKey(pub String);

impl FactKey {
    /// Fallback key when the source gives none: labels that are identical
    /// across languages then align.
    pub fn from_labels(relation_id: &str, subject: &str, object: &str) -> Self {
        FactKey(format!("{:016x}", hash64(&[relation_id, subject, object])))
    }
}

impl fmt::Display for FactKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTemplate {
    pub relation_id: String,
    pub language: LanguageCode,
    pub pattern: String,
}

impl RelationTemplate {
    pub fn new(relation_id: impl Into<String>, language: LanguageCode, pattern: impl Into<String>) -> Result<Self> {
        let relation_id = relation_id.into();
        let pattern = pattern.into();
        let fail = |reason: String| Error::Template {
            relation: relation_id.clone(),
            reason,
        };
        for ph in [SUBJECT_PLACEHOLDER, OBJECT_PLACEHOLDER] {
            let n = pattern.matches(ph).count();
            if n != 1 {
                return Err(fail(format!("pattern {pattern:?} has {n} `{ph}` placeholders, expected 1")));
            }
        }
        let rest = pattern.replace(SUBJECT_PLACEHOLDER, "").replace(OBJECT_PLACEHOLDER, "");
        if rest.trim().is_empty() {
            return Err(fail("pattern is empty apart from placeholders".into()));
        }
        Ok(RelationTemplate {
            relation_id,
            language,
            pattern,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactTriple {
    pub uid: FactUid,
    pub fact_key: FactKey,
    pub relation_id: String,
    pub language: LanguageCode,
    pub subject_label: String,
    pub object_label: String,
}

impl FactTriple {
    pub fn new(
        relation_id: impl Into<String>,
        language: LanguageCode,
        subject_label: impl Into<String>,
        object_label: impl Into<String>,
        fact_key: Option<FactKey>,
    ) -> Self {
        let relation_id = relation_id.into();
        let subject_label = subject_label.into();
        let object_label = object_label.into();
        let uid = FactUid::derive(&relation_id, language.as_str(), &subject_label, &object_label);
        let fact_key = fact_key.unwrap_or_else(|| FactKey::from_labels(&relation_id, &subject_label, &object_label));
        FactTriple {
            uid,
            fact_key,
            relation_id,
            language,
            subject_label,
            object_label,
        }
    }
}

// On-disk record shapes. Field order here fixes the serialized order.
#[derive(Serialize)]
struct TripleRecordOut<'a> {
    sub: &'a str,
    obj: &'a str,
    rel: &'a str,
    lang: &'a str,
    fact: &'a str,
    uid: String,
}

#[derive(Serialize)]
struct TemplateRecordOut<'a> {
    rel: &'a str,
    lang: &'a str,
    pattern: &'a str,
}

fn object_at(line: usize, text: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::Parse {
            line,
            message: "expected a JSON object".into(),
        }),
        Err(e) => Err(Error::Parse {
            line,
            message: e.to_string(),
        }),
    }
}

fn str_field<'a>(map: &'a Map<String, Value>, keys: &[&str], line: usize) -> Result<&'a str> {
    opt_str_field(map, keys, line)?.ok_or_else(|| Error::Schema {
        line,
        field: keys[0].into(),
    })
}

fn opt_str_field<'a>(map: &'a Map<String, Value>, keys: &[&str], line: usize) -> Result<Option<&'a str>> {
    for k in keys {
        match map.get(*k) {
            Some(Value::String(s)) => return Ok(Some(s)),
            Some(_) => {
                return Err(Error::Schema {
                    line,
                    field: (*k).into(),
                })
            }
            None => {}
        }
    }
    Ok(None)
}

fn lang_field(map: &Map<String, Value>, line: usize, lang: Option<&LanguageCode>) -> Result<LanguageCode> {
    match (opt_str_field(map, &["lang"], line)?, lang) {
        (Some(s), _) => LanguageCode::new(s).map_err(|_| Error::Schema {
            line,
            field: "lang".into(),
        }),
        (None, Some(l)) => Ok(l.clone()),
        (None, None) => Err(Error::Schema {
            line,
            field: "lang".into(),
        }),
    }
}

fn for_each_record<R: BufRead>(reader: R, mut f: impl FnMut(usize, Map<String, Value>) -> Result<()>) -> Result<()> {
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        f(line_no, object_at(line_no, &line)?)?;
    }
    Ok(())
}

fn triple_from_record(map: &Map<String, Value>, line: usize, defaults: (Option<&str>, Option<&LanguageCode>)) -> Result<FactTriple> {
    let sub = str_field(map, &["sub", "sub_label"], line)?;
    let obj = str_field(map, &["obj", "obj_label"], line)?;
    let rel = match (opt_str_field(map, &["rel", "predicate_id"], line)?, defaults.0) {
        (Some(r), _) | (None, Some(r)) => r,
        (None, None) => {
            return Err(Error::Schema {
                line,
                field: "rel".into(),
            })
        }
    };
    let lang = lang_field(map, line, defaults.1)?;
    let key = opt_str_field(map, &["fact", "uuid"], line)?.map(|s| FactKey(s.to_owned()));
    let triple = FactTriple::new(rel, lang, sub, obj, key);
    if let Some(given) = opt_str_field(map, &["uid"], line)? {
        if given != triple.uid.to_string() {
            return Err(Error::Schema {
                line,
                field: "uid".into(),
            });
        }
    }
    Ok(triple)
}

/// Parses line-delimited fact records `{sub, obj, rel, lang}`; `uid` and
/// `fact` are optional. A supplied `uid` must equal the derived one.
pub fn parse_triples<R: BufRead>(reader: R) -> Result<Vec<FactTriple>> {
    let mut out = Vec::new();
    for_each_record(reader, |line, map| {
        out.push(triple_from_record(&map, line, (None, None))?);
        Ok(())
    })?;
    Ok(out)
}

/// Parses line-delimited template records `{rel, lang, pattern}`.
pub fn parse_templates<R: BufRead>(reader: R) -> Result<Vec<RelationTemplate>> {
    parse_templates_with(reader, None)
}

fn parse_templates_with<R: BufRead>(reader: R, lang: Option<&LanguageCode>) -> Result<Vec<RelationTemplate>> {
    let mut out = Vec::new();
    for_each_record(reader, |line, map| {
        let rel = str_field(&map, &["rel", "relation"], line)?;
        let lang = lang_field(&map, line, lang)?;
        let pattern = str_field(&map, &["pattern", "template"], line)?;
        out.push(RelationTemplate::new(rel, lang, pattern)?);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_triples<W: Write>(mut w: W, triples: &[FactTriple]) -> Result<()> {
    for t in triples {
        let rec = TripleRecordOut {
            sub: &t.subject_label,
            obj: &t.object_label,
            rel: &t.relation_id,
            lang: t.language.as_str(),
            fact: &t.fact_key.0,
            uid: t.uid.to_string(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w).map_err(|e| Error::io("<triples>", e))?;
    }
    Ok(())
}

pub fn write_templates<W: Write>(mut w: W, templates: &[RelationTemplate]) -> Result<()> {
    for t in templates {
        let rec = TemplateRecordOut {
            rel: &t.relation_id,
            lang: t.language.as_str(),
            pattern: &t.pattern,
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w).map_err(|e| Error::io("<templates>", e))?;
    }
    Ok(())
}

/// Reads an mLAMA-style directory: `<root>/<lang>/templates.jsonl` plus one
/// `<relation>.jsonl` file of facts per relation. Languages and relations are
/// visited in sorted order so the result is deterministic.
pub fn read_mlama_dir(root: &Path) -> Result<(Vec<FactTriple>, Vec<RelationTemplate>)> {
    let mut lang_dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    lang_dirs.sort();

    let mut triples = Vec::new();
    let mut templates = Vec::new();
    for dir in lang_dirs {
        let Some(lang) = dir.file_name().and_then(|n| n.to_str()).and_then(|n| LanguageCode::new(n).ok()) else {
            continue;
        };
        let tpl_path = dir.join("templates.jsonl");
        if tpl_path.exists() {
            let f = std::fs::File::open(&tpl_path).map_err(|e| Error::io(&tpl_path, e))?;
            templates.extend(parse_templates_with(std::io::BufReader::new(f), Some(&lang))?);
        }
        let mut files: Vec<_> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl") && p.file_stem().is_some_and(|s| s != "templates"))
            .collect();
        files.sort();
        for path in files {
            let rel = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            for_each_record(std::io::BufReader::new(f), |line, map| {
                triples.push(triple_from_record(&map, line, (Some(&rel), Some(&lang)))?);
                Ok(())
            })?;
        }
    }
    Ok((triples, templates))
}

/// Per-(language, label) model token sequences plus the model vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizationTable {
    entries: BTreeMap<(LanguageCode, String), Vec<String>>,
    vocabulary: BTreeSet<String>,
}

#[derive(Deserialize)]
struct TokenizationRecord {
    lang: LanguageCode,
    label: String,
    tokens: Vec<String>,
}

#[derive(Serialize)]
struct TokenizationRecordOut<'a> {
    lang: &'a str,
    label: &'a str,
    tokens: &'a [String],
}

impl TokenizationTable {
    /// Builds a table; every token list must be non-empty and, when a
    /// vocabulary is given, drawn from it.
    pub fn new(entries: BTreeMap<(LanguageCode, String), Vec<String>>, vocabulary: BTreeSet<String>) -> Result<Self> {
        for ((lang, label), toks) in &entries {
            if toks.is_empty() {
                return Err(Error::contract(format!("empty tokenization for {lang}:{label:?}")));
            }
            if !vocabulary.is_empty() {
                if let Some(t) = toks.iter().find(|t| !vocabulary.contains(*t)) {
                    return Err(Error::contract(format!("token {t:?} of {lang}:{label:?} is not in the vocabulary")));
                }
            }
        }
        Ok(TokenizationTable { entries, vocabulary })
    }

    /// Reads the adapter export: `{lang, label, tokens}` lines plus an
    /// optional one-token-per-line vocabulary.
    pub fn parse<R: BufRead, V: BufRead>(table: R, vocab: Option<V>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in table.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TokenizationRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.insert((rec.lang, rec.label), rec.tokens);
        }
        let mut vocabulary = BTreeSet::new();
        if let Some(v) = vocab {
            for line in v.lines() {
                let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
                if !line.is_empty() {
                    vocabulary.insert(line);
                }
            }
        }
        Self::new(entries, vocabulary)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for ((lang, label), tokens) in &self.entries {
            serde_json::to_writer(
                &mut w,
                &TokenizationRecordOut {
                    lang: lang.as_str(),
                    label,
                    tokens,
                },
            )?;
            writeln!(w).map_err(|e| Error::io("<tokenization>", e))?;
        }
        Ok(())
    }

    pub fn tokens(&self, language: &LanguageCode, label: &str) -> Option<&[String]> {
        self.entries.get(&(language.clone(), label.to_owned())).map(Vec::as_slice)
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub triples: Vec<FactTriple>,
    pub templates: Vec<RelationTemplate>,
    pub languages: Vec<LanguageCode>,
}

impl Dataset {
    pub fn new(triples: Vec<FactTriple>, templates: Vec<RelationTemplate>, languages: Vec<LanguageCode>) -> Self {
        Dataset {
            triples,
            templates,
            languages,
        }
    }

    /// Template lookup keyed by (relation, language). Later duplicates are
    /// ignored here; `validate_dataset` reports them.
    pub fn template_index(&self) -> HashMap<(&str, &LanguageCode), &RelationTemplate> {
        let mut idx = HashMap::new();
        for t in &self.templates {
            idx.entry((t.relation_id.as_str(), &t.language)).or_insert(t);
        }
        idx
    }

    /// Keeps only triples and templates in `languages` (no-op when empty).
    pub fn restrict_languages(&mut self, languages: &[LanguageCode]) {
        if languages.is_empty() {
            return;
        }
        let keep: HashSet<&LanguageCode> = languages.iter().collect();
        self.triples.retain(|t| keep.contains(&t.language));
        self.templates.retain(|t| keep.contains(&t.language));
        self.languages = languages.to_vec();
    }

    /// Languages present in the triples, sorted.
    pub fn observed_languages(&self) -> Vec<LanguageCode> {
        let set: BTreeSet<_> = self.triples.iter().map(|t| t.language.clone()).collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub duplicate_uids: Vec<FactUid>,
    pub orphan_triples: Vec<FactUid>,
    pub empty_labels: Vec<FactUid>,
    pub duplicate_templates: Vec<(String, LanguageCode)>,
    pub unlisted_languages: Vec<LanguageCode>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.duplicate_uids.is_empty()
            && self.orphan_triples.is_empty()
            && self.empty_labels.is_empty()
            && self.duplicate_templates.is_empty()
            && self.unlisted_languages.is_empty()
    }
}

/// Checks dataset invariants without modifying anything. Each offending uid
/// is listed once per category, in first-seen order.
pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut tpl_seen = HashSet::new();
    let mut tpl_dup = BTreeSet::new();
    for t in &d.templates {
        if !tpl_seen.insert((t.relation_id.as_str(), &t.language)) {
            tpl_dup.insert((t.relation_id.clone(), t.language.clone()));
        }
    }
    report.duplicate_templates = tpl_dup.into_iter().collect();

    let mut uid_seen = HashSet::new();
    let mut uid_dup = HashSet::new();
    let listed: HashSet<&LanguageCode> = d.languages.iter().collect();
    let mut unlisted = BTreeSet::new();
    for t in &d.triples {
        if !uid_seen.insert(t.uid) && uid_dup.insert(t.uid) {
            report.duplicate_uids.push(t.uid);
        }
        if !tpl_seen.contains(&(t.relation_id.as_str(), &t.language)) {
            report.orphan_triples.push(t.uid);
        }
        if t.subject_label.trim().is_empty() || t.object_label.trim().is_empty() {
            report.empty_labels.push(t.uid);
        }
        if !listed.is_empty() && !listed.contains(&t.language) {
            unlisted.insert(t.language.clone());
        }
    }
    report.unlisted_languages = unlisted.into_iter().collect();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn en() -> LanguageCode {
        LanguageCode::new("en").unwrap()
    }

    #[test]
    fn parses_a_triple() {
        let src = r#"{"sub":"The Beatles","obj":"rock","rel":"P136","lang":"en"}"#;
        let ts = parse_triples(src.as_bytes()).unwrap();
        assert_eq!(ts.len(), 1);
        let t = &ts[0];
        assert_eq!(t.subject_label, "The Beatles");
        assert_eq!(t.object_label, "rock");
        assert_eq!(t.relation_id, "P136");
        assert_eq!(t.language, en());
        assert_eq!(t.uid, FactUid::derive("P136", "en", "The Beatles", "rock"));
    }

    #[test]
    fn empty_stream_yields_nothing() {
        assert!(parse_triples(&b""[..]).unwrap().is_empty());
        assert!(parse_triples(&b"\n\n"[..]).unwrap().is_empty());
    }

    #[test]
    fn duplicate_records_share_a_uid() {
        let line = r#"{"sub":"The Beatles","obj":"rock","rel":"P136","lang":"en"}"#;
        let src = format!("{line}\n{line}\n");
        let ts = parse_triples(src.as_bytes()).unwrap();
        assert_eq!(ts[0].uid, ts[1].uid);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = "{\"sub\":\"a\",\"obj\":\"b\",\"rel\":\"P1\",\"lang\":\"en\"}\n{not json\n";
        match parse_triples(src.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_a_schema_error() {
        let src = r#"{"sub":"a","rel":"P1","lang":"en"}"#;
        match parse_triples(src.as_bytes()) {
            Err(Error::Schema { line: 1, field }) => assert_eq!(field, "obj"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_uid_is_rejected() {
        let src = r#"{"sub":"a","obj":"b","rel":"P1","lang":"en","uid":"0000000000000000"}"#;
        assert!(matches!(parse_triples(src.as_bytes()), Err(Error::Schema { .. })));
    }

    #[test]
    fn templates_validate_placeholders() {
        let src = concat!(
            r#"{"rel":"P136","lang":"en","pattern":"[X] plays [Y] music."}"#,
            "\n",
            r#"{"rel":"P17","lang":"en","pattern":"[X] is located in [Y]."}"#
        );
        let ts = parse_templates(src.as_bytes()).unwrap();
        assert_eq!(ts.len(), 2);

        let bad = r#"{"rel":"Pbad","lang":"en","pattern":"[X] only"}"#;
        match parse_templates(bad.as_bytes()) {
            Err(Error::Template { relation, .. }) => assert_eq!(relation, "Pbad"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(RelationTemplate::new("P1", en(), "[X][Y]").is_err());
        assert!(RelationTemplate::new("P1", en(), "[X] [Y] [Y]").is_err());
    }

    #[test]
    fn language_codes() {
        for ok in ["en", "ceb", "zh-hans", "pt_br"] {
            assert!(LanguageCode::new(ok).is_ok(), "{ok}");
        }
        for bad in ["", "e", "EN", "engl", "en-", "e1"] {
            assert!(LanguageCode::new(bad).is_err(), "{bad}");
        }
    }

    fn dataset(triples: Vec<FactTriple>) -> Dataset {
        let tpl = RelationTemplate::new("P136", en(), "[X] plays [Y] music.").unwrap();
        Dataset::new(triples, vec![tpl], vec![en()])
    }

    #[test]
    fn validation_reports() {
        let good = FactTriple::new("P136", en(), "The Beatles", "rock", None);
        assert!(validate_dataset(&dataset(vec![good.clone()])).is_empty());

        let orphan = FactTriple::new("P17", en(), "Noyon", "France", None);
        let r = validate_dataset(&dataset(vec![good.clone(), orphan.clone()]));
        assert_eq!(r.orphan_triples, vec![orphan.uid]);
        assert!(r.duplicate_uids.is_empty());

        let r = validate_dataset(&dataset(vec![good.clone(), good.clone()]));
        assert_eq!(r.duplicate_uids, vec![good.uid]);
        assert_eq!(r, validate_dataset(&dataset(vec![good.clone(), good.clone()])));

        let empty = FactTriple::new("P136", en(), "X", " ", None);
        assert_eq!(validate_dataset(&dataset(vec![empty.clone()])).empty_labels, vec![empty.uid]);
    }

    #[test]
    fn tokenization_table_checks_vocabulary() {
        let table = r#"{"lang":"en","label":"rock","tokens":["rock"]}"#;
        let vocab = "rock\njazz\n";
        let t = TokenizationTable::parse(table.as_bytes(), Some(vocab.as_bytes())).unwrap();
        assert_eq!(t.tokens(&en(), "rock"), Some(&["rock".to_string()][..]));
        assert!(TokenizationTable::parse(table.as_bytes(), Some("jazz\n".as_bytes())).is_err());
        let empty = r#"{"lang":"en","label":"rock","tokens":[]}"#;
        assert!(TokenizationTable::parse(empty.as_bytes(), None::<&[u8]>).is_err());
    }

    #[test]
    fn reads_mlama_layout() {
        let dir = tempfile::tempdir().unwrap();
        let en_dir = dir.path().join("en");
        std::fs::create_dir_all(&en_dir).unwrap();
        std::fs::write(en_dir.join("templates.jsonl"), "{\"relation\":\"P17\",\"template\":\"[X] is located in [Y] .\"}\n").unwrap();
        std::fs::write(en_dir.join("P17.jsonl"), "{\"sub_label\":\"Noyon\",\"obj_label\":\"France\",\"uuid\":\"u-1\"}\n").unwrap();
        let (triples, templates) = read_mlama_dir(dir.path()).unwrap();
        assert_eq!(templates.len(), 1);
        assert_eq!(triples.len(), 1);
        assert_eq!(triples[0].relation_id, "P17");
        assert_eq!(triples[0].fact_key, FactKey("u-1".into()));
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(
            sub in "\\PC{1,20}", obj in "\\PC{1,20}", rel in "P[0-9]{1,4}",
            lang in "[a-z]{2,3}", key in proptest::option::of("[a-z0-9-]{1,12}")
        ) {
            let t = FactTriple::new(rel, LanguageCode::new(lang).unwrap(), sub, obj, key.map(FactKey));
            let mut buf = Vec::new();
            write_triples(&mut buf, std::slice::from_ref(&t)).unwrap();
            let back = parse_triples(&buf[..]).unwrap();
            prop_assert_eq!(back, vec![t]);
        }
    }
}
