//! Full- and partial-match scoring of prediction dumps, P@1 aggregation,
//! and the cross-language fact-sharing matrix.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactKey, FactUid, LanguageCode};
use crate::prompt::VariantPlan;
use crate::similarity::{jaccard, SimilarityMatrix};

/// Ranked candidates for each mask position of one query variant.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub uid: FactUid,
    pub language: LanguageCode,
    pub mask_count: usize,
    pub positions: Vec<Vec<(String, f64)>>,
}

#[derive(Deserialize)]
struct PredictionLine {
    uid: FactUid,
    lang: LanguageCode,
    mask_count: usize,
    positions: Vec<Vec<(String, f64)>>,
}

#[derive(Serialize)]
struct PredictionLineOut<'a> {
    uid: String,
    lang: &'a str,
    mask_count: usize,
    positions: &'a [Vec<(String, f64)>],
}

impl PredictionRecord {
    pub fn new(uid: FactUid, language: LanguageCode, positions: Vec<Vec<(String, f64)>>) -> Result<Self> {
        let rec = PredictionRecord {
            uid,
            language,
            mask_count: positions.len(),
            positions,
        };
        rec.check()?;
        Ok(rec)
    }

    fn check(&self) -> Result<()> {
        if self.mask_count == 0 || self.positions.len() != self.mask_count {
            return Err(Error::contract(format!(
                "prediction for {} has {} positions for mask count {}",
                self.uid,
                self.positions.len(),
                self.mask_count
            )));
        }
        for (i, cands) in self.positions.iter().enumerate() {
            if cands.is_empty() {
                return Err(Error::contract(format!("prediction for {} has no candidates at position {i}", self.uid)));
            }
            if cands.windows(2).any(|w| w[0].1 < w[1].1) {
                return Err(Error::contract(format!(
                    "prediction for {} position {i} is not sorted by descending score",
                    self.uid
                )));
            }
        }
        Ok(())
    }

    /// Top-ranked token at every position.
    pub fn top1(&self) -> Vec<&str> {
        self.positions.iter().map(|c| c[0].0.as_str()).collect()
    }
}

/// Reads a prediction dump of `{uid, lang, mask_count, positions}` lines.
pub fn parse_predictions<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let rec = PredictionRecord {
            uid: p.uid,
            language: p.lang,
            mask_count: p.mask_count,
            positions: p.positions,
        };
        rec.check().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut w: W, records: &[PredictionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(
            &mut w,
            &PredictionLineOut {
                uid: r.uid.to_string(),
                lang: r.language.as_str(),
                mask_count: r.mask_count,
                positions: &r.positions,
            },
        )?;
        writeln!(w).map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraTokenTag {
    None,
    WhitespaceOnly,
    OtherExtras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Full,
    Partial,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Full => "full",
            Protocol::Partial => "partial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub uid: FactUid,
    pub language: LanguageCode,
    pub full_match: bool,
    pub partial_match: bool,
    pub matched_variant: Option<usize>,
    pub extra_token_tag: Option<ExtraTokenTag>,
}

impl MatchOutcome {
    pub fn correct(&self, protocol: Protocol) -> bool {
        match protocol {
            Protocol::Full => self.full_match,
            Protocol::Partial => self.partial_match,
        }
    }
}

/// All positions' top-1 tokens equal the gold tokens.
pub fn eval_full_match(p: &PredictionRecord, gold: &[String]) -> Result<bool> {
    if p.mask_count != gold.len() {
        return Err(Error::contract(format!(
            "full match for {} needs {} masks, record has {}",
            p.uid,
            gold.len(),
            p.mask_count
        )));
    }
    Ok(p.positions.iter().zip(gold).all(|(c, g)| c[0].0 == *g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialMatch {
    pub matched_variant: usize,
    pub extra_token_tag: ExtraTokenTag,
}

fn is_blank_token(t: &str) -> bool {
    // '▁' is the sentencepiece word marker.
    t.trim_matches(|c: char| c.is_whitespace() || c == '\u{2581}').is_empty()
}

/// Looks for the gold tokens as a contiguous run in the top-1 sequence of
/// each variant, smallest mask count first. `records` must cover every
/// count in `counts`.
pub fn eval_partial_match(
    records: &[&PredictionRecord],
    counts: RangeInclusive<usize>,
    gold: &[String],
) -> Result<Option<PartialMatch>> {
    if gold.is_empty() {
        return Err(Error::contract("gold token list is empty"));
    }
    let by_count: HashMap<usize, &PredictionRecord> = records.iter().map(|r| (r.mask_count, *r)).collect();
    for n in counts.clone() {
        if !by_count.contains_key(&n) {
            return Err(Error::Dependency(format!("missing prediction variant with {n} mask(s)")));
        }
    }
    for n in counts {
        let top1 = by_count[&n].top1();
        if top1.len() < gold.len() {
            continue;
        }
        let hit = top1
            .windows(gold.len())
            .position(|w| w.iter().zip(gold).all(|(a, b)| *a == b));
        if let Some(at) = hit {
            let extras = top1[..at].iter().chain(&top1[at + gold.len()..]);
            let tag = if top1.len() == gold.len() {
                ExtraTokenTag::None
            } else if extras.clone().all(|t| is_blank_token(t)) {
                ExtraTokenTag::WhitespaceOnly
            } else {
                ExtraTokenTag::OtherExtras
            };
            return Ok(Some(PartialMatch {
                matched_variant: n,
                extra_token_tag: tag,
            }));
        }
    }
    Ok(None)
}

/// Scores one fact under both protocols.
pub fn evaluate_fact(
    plan: &VariantPlan,
    language: &LanguageCode,
    records: &[&PredictionRecord],
    gold: &[String],
) -> Result<MatchOutcome> {
    if gold.len() != plan.exact_count {
        return Err(Error::contract(format!(
            "gold tokens for {} ({}) disagree with the plan's exact count {}",
            plan.uid,
            gold.len(),
            plan.exact_count
        )));
    }
    let exact = records
        .iter()
        .find(|r| r.mask_count == plan.exact_count)
        .ok_or_else(|| Error::Dependency(format!("no exact-count prediction for {}", plan.uid)))?;
    let full_match = eval_full_match(exact, gold)?;
    let partial = eval_partial_match(records, plan.enumerated_counts(), gold)?;
    Ok(MatchOutcome {
        uid: plan.uid,
        language: language.clone(),
        full_match,
        partial_match: partial.is_some(),
        matched_variant: partial.map(|p| p.matched_variant),
        extra_token_tag: partial.map(|p| p.extra_token_tag),
    })
}

/// P@1 of outcomes that all share one language.
pub fn score_language(outcomes: &[MatchOutcome], protocol: Protocol) -> Result<f64> {
    let Some(first) = outcomes.first() else {
        return Err(Error::UndefinedScore("no outcomes to score".into()));
    };
    if outcomes.iter().any(|o| o.language != first.language) {
        return Err(Error::contract("score_language given outcomes from several languages"));
    }
    let correct = outcomes.iter().filter(|o| o.correct(protocol)).count();
    Ok(correct as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecisionRow {
    pub language: LanguageCode,
    pub protocol: Protocol,
    pub p_at_1: f64,
    pub n_facts: usize,
}

/// P@1 per language for each requested protocol, languages sorted.
pub fn precision_table(outcomes: &[MatchOutcome], protocols: &[Protocol]) -> Result<Vec<PrecisionRow>> {
    let mut by_lang: BTreeMap<&LanguageCode, Vec<MatchOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_lang.entry(&o.language).or_default().push(o.clone());
    }
    let mut rows = Vec::new();
    for (lang, os) in by_lang {
        for &p in protocols {
            rows.push(PrecisionRow {
                language: lang.clone(),
                protocol: p,
                p_at_1: score_language(&os, p)?,
                n_facts: os.len(),
            });
        }
    }
    Ok(rows)
}

/// Splits outcomes by whether the gold object has exactly `tokens` tokens.
/// The two parts together are the input.
pub fn split_by_token_count<'a>(
    outcomes: &'a [MatchOutcome],
    plans: &BTreeMap<FactUid, VariantPlan>,
    tokens: usize,
) -> (Vec<&'a MatchOutcome>, Vec<&'a MatchOutcome>) {
    outcomes
        .iter()
        .partition(|o| plans.get(&o.uid).is_some_and(|p| p.exact_count == tokens))
}

/// Facts of one language that are predictable under a protocol, keyed by
/// cross-language fact identity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactSet {
    pub language: LanguageCode,
    pub keys: BTreeSet<FactKey>,
}

pub fn fact_sets(
    outcomes: &[MatchOutcome],
    protocol: Protocol,
    key_of: &HashMap<FactUid, FactKey>,
) -> Vec<FactSet> {
    let mut by_lang: BTreeMap<LanguageCode, BTreeSet<FactKey>> = BTreeMap::new();
    for o in outcomes {
        let keys = by_lang.entry(o.language.clone()).or_default();
        if o.correct(protocol) {
            if let Some(k) = key_of.get(&o.uid) {
                keys.insert(k.clone());
            }
        }
    }
    by_lang
        .into_iter()
        .map(|(language, keys)| FactSet { language, keys })
        .collect()
}

pub fn fact_set_jaccard(a: &FactSet, b: &FactSet) -> f64 {
    jaccard(&a.keys, &b.keys)
}

/// Language x language Jaccard of predictable-fact sets.
pub fn sharing_matrix(sets: &[FactSet]) -> Result<SimilarityMatrix> {
    if sets.len() < 2 {
        return Err(Error::contract("sharing matrix needs at least two languages"));
    }
    let mut m = SimilarityMatrix::new(sets.iter().map(|s| s.language.clone()).collect());
    for i in 0..sets.len() {
        for j in i..sets.len() {
            m.set(i, j, Some(fact_set_jaccard(&sets[i], &sets[j])));
        }
    }
    Ok(m)
}

pub fn write_outcomes<W: Write>(mut w: W, outcomes: &[MatchOutcome]) -> Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut w, o)?;
        writeln!(w).map_err(|e| Error::io("<outcomes>", e))?;
    }
    Ok(())
}

pub fn read_outcomes<R: BufRead>(r: R) -> Result<Vec<MatchOutcome>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<outcomes>", e))?;
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

pub fn write_precision_csv<W: Write>(w: W, rows: &[PrecisionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["language", "protocol", "p_at_1", "n_facts"])?;
    for r in rows {
        out.write_record([
            r.language.to_string(),
            r.protocol.as_str().to_owned(),
            crate::fmt::sig6(r.p_at_1),
            r.n_facts.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<p_at_1>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> LanguageCode {
        LanguageCode::new("en").unwrap()
    }

    fn rec(tokens: &[&str]) -> PredictionRecord {
        PredictionRecord::new(
            FactUid(1),
            en(),
            tokens.iter().map(|t| vec![(t.to_string(), 0.9), ("other".to_string(), 0.1)]).collect(),
        )
        .unwrap()
    }

    fn gold(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn full_match_cases() {
        assert!(eval_full_match(&rec(&["rock"]), &gold(&["rock"])).unwrap());
        assert!(!eval_full_match(&rec(&["rock"]), &gold(&["jazz"])).unwrap());
        assert!(matches!(
            eval_full_match(&rec(&["ro", "##ck"]), &gold(&["rock"])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn partial_match_with_trailing_extras() {
        let v1 = rec(&["Paris"]);
        let v2 = rec(&["Paris", "France"]);
        let v3 = rec(&["Prague", "(", ")"]);
        let got = eval_partial_match(&[&v1, &v2, &v3], 1..=3, &gold(&["Prague"])).unwrap();
        assert_eq!(
            got,
            Some(PartialMatch {
                matched_variant: 3,
                extra_token_tag: ExtraTokenTag::OtherExtras
            })
        );
    }

    #[test]
    fn partial_match_exact_containment() {
        let v1 = rec(&["rock"]);
        let got = eval_partial_match(&[&v1], 1..=1, &gold(&["rock"])).unwrap().unwrap();
        assert_eq!(got.matched_variant, 1);
        assert_eq!(got.extra_token_tag, ExtraTokenTag::None);
    }

    #[test]
    fn partial_match_respects_order() {
        let v1 = rec(&["b"]);
        let v2 = rec(&["b", "a"]);
        assert_eq!(eval_partial_match(&[&v1, &v2], 1..=2, &gold(&["a", "b"])).unwrap(), None);
    }

    #[test]
    fn whitespace_extras_are_tagged() {
        let v1 = rec(&["x"]);
        let v2 = rec(&["Prague", " "]);
        let got = eval_partial_match(&[&v1, &v2], 1..=2, &gold(&["Prague"])).unwrap().unwrap();
        assert_eq!(got.extra_token_tag, ExtraTokenTag::WhitespaceOnly);
        let v2 = rec(&["\u{2581}", "Prague"]);
        let got = eval_partial_match(&[&v1, &v2], 1..=2, &gold(&["Prague"])).unwrap().unwrap();
        assert_eq!(got.extra_token_tag, ExtraTokenTag::WhitespaceOnly);
    }

    #[test]
    fn missing_variant_is_a_dependency_error() {
        let v1 = rec(&["rock"]);
        assert!(matches!(
            eval_partial_match(&[&v1], 1..=2, &gold(&["rock"])),
            Err(Error::Dependency(_))
        ));
    }

    fn outcome(correct: bool) -> MatchOutcome {
        MatchOutcome {
            uid: FactUid(0),
            language: en(),
            full_match: correct,
            partial_match: correct,
            matched_variant: correct.then_some(1),
            extra_token_tag: correct.then_some(ExtraTokenTag::None),
        }
    }

    #[test]
    fn language_scores() {
        let os = vec![outcome(true), outcome(false), outcome(true), outcome(false)];
        assert_eq!(score_language(&os, Protocol::Full).unwrap(), 0.5);
        let all = vec![outcome(true); 3];
        assert_eq!(score_language(&all, Protocol::Partial).unwrap(), 1.0);
        assert!(matches!(score_language(&[], Protocol::Full), Err(Error::UndefinedScore(_))));
    }

    fn fs(lang: &str, keys: &[&str]) -> FactSet {
        FactSet {
            language: LanguageCode::new(lang).unwrap(),
            keys: keys.iter().map(|k| FactKey(k.to_string())).collect(),
        }
    }

    #[test]
    fn fact_set_jaccard_cases() {
        assert_eq!(fact_set_jaccard(&fs("en", &["f1", "f2"]), &fs("de", &["f2", "f3"])), 1.0 / 3.0);
        assert_eq!(fact_set_jaccard(&fs("en", &["f1"]), &fs("de", &["f1"])), 1.0);
        assert_eq!(fact_set_jaccard(&fs("en", &["f1"]), &fs("de", &[])), 0.0);
    }

    #[test]
    fn sharing_matrix_cases() {
        let m = sharing_matrix(&[fs("en", &["a"]), fs("de", &["b"])]).unwrap();
        assert_eq!(m.get(0, 1), Some(0.0));
        assert_eq!(m.get(0, 0), Some(1.0));

        let same = ["a", "b"];
        let m = sharing_matrix(&[fs("en", &same), fs("de", &same), fs("fr", &same)]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), Some(1.0));
            }
        }

        // |A∩B| = 3, |A∪B| = 5, computed by hand from the sets below.
        let a = fs("en", &["1", "2", "3", "4"]);
        let b = fs("de", &["2", "3", "4", "5"]);
        let m = sharing_matrix(&[a, b]).unwrap();
        assert_eq!(m.get(0, 1), Some(0.6));
    }

    #[test]
    fn predictions_round_trip_and_reject_unsorted() {
        let r = rec(&["a", "b"]);
        let mut buf = Vec::new();
        write_predictions(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(parse_predictions(&buf[..]).unwrap(), vec![r]);

        let bad = r#"{"uid":"0000000000000001","lang":"en","mask_count":1,"positions":[[["a",0.1],["b",0.9]]]}"#;
        assert!(matches!(parse_predictions(bad.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let short = r#"{"uid":"0000000000000001","lang":"en","mask_count":2,"positions":[[["a",0.1]]]}"#;
        assert!(parse_predictions(short.as_bytes()).is_err());
    }

    #[test]
    fn one_token_split_conserves_counts() {
        let mut plans = BTreeMap::new();
        let mut outcomes = Vec::new();
        for i in 0..10u64 {
            plans.insert(
                FactUid(i),
                VariantPlan {
                    uid: FactUid(i),
                    exact_count: 1 + (i as usize % 3),
                    max_count: 3,
                },
            );
            let mut o = outcome(i % 2 == 0);
            o.uid = FactUid(i);
            outcomes.push(o);
        }
        let (one, rest) = split_by_token_count(&outcomes, &plans, 1);
        assert_eq!(one.len() + rest.len(), outcomes.len());
        assert_eq!(one.len(), 4);
    }
}
