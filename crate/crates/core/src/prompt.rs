//! Cloze query rendering and mask-count variant planning.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, FactTriple, FactUid, LanguageCode, RelationTemplate, TokenizationTable, OBJECT_PLACEHOLDER, SUBJECT_PLACEHOLDER};

pub const DEFAULT_MASK: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClozeQuery {
    pub uid: FactUid,
    pub mask_count: usize,
    pub text: String,
    pub language: LanguageCode,
}

/// Mask counts to probe for one fact: the gold count, and every count from
/// 1 up to the longest object of the fact's (relation, language).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantPlan {
    pub uid: FactUid,
    pub exact_count: usize,
    pub max_count: usize,
}

impl VariantPlan {
    pub fn enumerated_counts(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.max_count
    }
}

pub fn render_query(t: &RelationTemplate, f: &FactTriple, n: usize) -> Result<ClozeQuery> {
    render_query_with(t, f, n, DEFAULT_MASK)
}

/// Renders `t` with the subject substituted for `[X]` and `n` space-joined
/// mask literals for `[Y]`.
pub fn render_query_with(t: &RelationTemplate, f: &FactTriple, n: usize, mask: &str) -> Result<ClozeQuery> {
    if n == 0 {
        return Err(Error::contract("mask count must be at least 1"));
    }
    if t.relation_id != f.relation_id || t.language != f.language {
        return Err(Error::contract(format!(
            "template {}/{} does not match fact {} ({}/{})",
            t.relation_id, t.language, f.uid, f.relation_id, f.language
        )));
    }
    if f.subject_label.contains(mask) {
        return Err(Error::contract(format!("subject of {} contains the mask literal", f.uid)));
    }
    let masks = vec![mask; n].join(" ");

    // Substitute by position so that placeholder-like text inside the
    // subject is never re-expanded.
    let x = t.pattern.find(SUBJECT_PLACEHOLDER).expect("validated template");
    let y = t.pattern.find(OBJECT_PLACEHOLDER).expect("validated template");
    let mut text = String::with_capacity(t.pattern.len() + f.subject_label.len() + masks.len());
    let (first, first_len, first_val, second, second_len, second_val) = if x < y {
        (x, SUBJECT_PLACEHOLDER.len(), f.subject_label.as_str(), y, OBJECT_PLACEHOLDER.len(), masks.as_str())
    } else {
        (y, OBJECT_PLACEHOLDER.len(), masks.as_str(), x, SUBJECT_PLACEHOLDER.len(), f.subject_label.as_str())
    };
    text.push_str(&t.pattern[..first]);
    text.push_str(first_val);
    text.push_str(&t.pattern[first + first_len..second]);
    text.push_str(second_val);
    text.push_str(&t.pattern[second + second_len..]);

    Ok(ClozeQuery {
        uid: f.uid,
        mask_count: n,
        text,
        language: f.language.clone(),
    })
}

fn token_count(table: &TokenizationTable, lang: &LanguageCode, label: &str) -> Result<usize> {
    table
        .tokens(lang, label)
        .map(<[String]>::len)
        .ok_or_else(|| Error::Dependency(format!("no tokenization for entity {lang}:{label:?}")))
}

/// Plans variants for `f`. `relation_objects` are the objects of all facts
/// sharing `f`'s (relation, language); `f`'s own object always counts.
pub fn plan_variants(f: &FactTriple, table: &TokenizationTable, relation_objects: &[&str]) -> Result<VariantPlan> {
    let exact_count = token_count(table, &f.language, &f.object_label)?;
    let mut max_count = exact_count;
    for obj in relation_objects {
        max_count = max_count.max(token_count(table, &f.language, obj)?);
    }
    Ok(VariantPlan {
        uid: f.uid,
        exact_count,
        max_count,
    })
}

/// Plans every fact of the dataset, in dataset order.
pub fn plan_dataset(d: &Dataset, table: &TokenizationTable) -> Result<Vec<VariantPlan>> {
    let mut max_by_group: HashMap<(&str, &LanguageCode), usize> = HashMap::new();
    for f in &d.triples {
        let n = token_count(table, &f.language, &f.object_label)?;
        let e = max_by_group.entry((f.relation_id.as_str(), &f.language)).or_insert(0);
        *e = (*e).max(n);
    }
    d.triples
        .iter()
        .map(|f| {
            Ok(VariantPlan {
                uid: f.uid,
                exact_count: token_count(table, &f.language, &f.object_label)?,
                max_count: max_by_group[&(f.relation_id.as_str(), &f.language)],
            })
        })
        .collect()
}

/// Renders every variant of every planned fact.
pub fn render_all(d: &Dataset, plans: &[VariantPlan], mask: &str) -> Result<Vec<ClozeQuery>> {
    let templates = d.template_index();
    let facts: HashMap<FactUid, &FactTriple> = d.triples.iter().map(|f| (f.uid, f)).collect();
    let mut out = Vec::new();
    for p in plans {
        let f = facts
            .get(&p.uid)
            .ok_or_else(|| Error::Dependency(format!("plan for unknown fact {}", p.uid)))?;
        let t = templates
            .get(&(f.relation_id.as_str(), &f.language))
            .ok_or_else(|| Error::Dependency(format!("no template for {}/{}", f.relation_id, f.language)))?;
        for n in p.enumerated_counts() {
            out.push(render_query_with(t, f, n, mask)?);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct QueryOut<'a> {
    uid: String,
    mask_count: usize,
    text: &'a str,
    language: &'a str,
}

pub fn write_queries<W: Write>(mut w: W, queries: &[ClozeQuery]) -> Result<()> {
    for q in queries {
        serde_json::to_writer(
            &mut w,
            &QueryOut {
                uid: q.uid.to_string(),
                mask_count: q.mask_count,
                text: &q.text,
                language: q.language.as_str(),
            },
        )?;
        writeln!(w).map_err(|e| Error::io("<queries>", e))?;
    }
    Ok(())
}

pub fn write_plans<W: Write>(mut w: W, plans: &[VariantPlan]) -> Result<()> {
    for p in plans {
        serde_json::to_writer(&mut w, p)?;
        writeln!(w).map_err(|e| Error::io("<plans>", e))?;
    }
    Ok(())
}

pub fn read_plans<R: BufRead>(r: R) -> Result<BTreeMap<FactUid, VariantPlan>> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<plans>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: VariantPlan = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(p.uid, p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, BTreeSet};

    fn en() -> LanguageCode {
        LanguageCode::new("en").unwrap()
    }

    fn beatles() -> (RelationTemplate, FactTriple) {
        (
            RelationTemplate::new("P136", en(), "[X] plays [Y] music.").unwrap(),
            FactTriple::new("P136", en(), "The Beatles", "rock", None),
        )
    }

    fn table(entries: &[(&str, &[&str])]) -> TokenizationTable {
        let mut m = BTreeMap::new();
        for (label, toks) in entries {
            m.insert((en(), label.to_string()), toks.iter().map(|s| s.to_string()).collect());
        }
        TokenizationTable::new(m, BTreeSet::new()).unwrap()
    }

    #[test]
    fn renders_single_and_multi_mask() {
        let (t, f) = beatles();
        assert_eq!(render_query(&t, &f, 1).unwrap().text, "The Beatles plays [MASK] music.");
        assert_eq!(
            render_query(&t, &f, 4).unwrap().text,
            "The Beatles plays [MASK] [MASK] [MASK] [MASK] music."
        );
    }

    #[test]
    fn zero_masks_is_a_contract_error() {
        let (t, f) = beatles();
        assert!(matches!(render_query(&t, &f, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn mismatched_template_is_rejected() {
        let (_, f) = beatles();
        let t = RelationTemplate::new("P17", en(), "[X] is located in [Y].").unwrap();
        assert!(matches!(render_query(&t, &f, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn object_before_subject() {
        let t = RelationTemplate::new("P36", en(), "[Y] is the capital of [X].").unwrap();
        let f = FactTriple::new("P36", en(), "France", "Paris", None);
        assert_eq!(render_query_with(&t, &f, 2, "<mask>").unwrap().text, "<mask> <mask> is the capital of France.");
    }

    #[test]
    fn subject_with_placeholder_text_is_not_reexpanded() {
        let (t, _) = beatles();
        let f = FactTriple::new("P136", en(), "[Y] Band", "rock", None);
        assert_eq!(render_query(&t, &f, 1).unwrap().text, "[Y] Band plays [MASK] music.");
    }

    #[test]
    fn plans_span_the_relation_maximum() {
        let (_, f) = beatles();
        let tab = table(&[("rock", &["rock"]), ("hip hop music", &["hip", "hop", "mu", "##sic"])]);
        let p = plan_variants(&f, &tab, &["rock", "hip hop music"]).unwrap();
        assert_eq!(p.exact_count, 1);
        assert_eq!(p.enumerated_counts().collect::<Vec<_>>(), vec![1, 2, 3, 4]);

        let tab = table(&[("rock", &["rock"]), ("jazz", &["jazz"])]);
        let p = plan_variants(&f, &tab, &["rock", "jazz"]).unwrap();
        assert_eq!(p.enumerated_counts().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn missing_tokenization_is_a_dependency_error() {
        let (_, f) = beatles();
        let tab = table(&[("jazz", &["jazz"])]);
        match plan_variants(&f, &tab, &["jazz"]) {
            Err(Error::Dependency(msg)) => assert!(msg.contains("rock")),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn plans_are_order_invariant_and_renderable(
            lens in proptest::collection::vec(1usize..6, 1..8),
            gold in 0usize..8,
            seed in any::<u64>(),
        ) {
            let gold = gold % lens.len();
            let labels: Vec<String> = (0..lens.len()).map(|i| format!("obj{i}")).collect();
            let entries: Vec<(String, Vec<String>)> = labels.iter().zip(&lens)
                .map(|(l, &n)| (l.clone(), (0..n).map(|j| format!("t{j}")).collect())).collect();
            let mut m = BTreeMap::new();
            for (l, toks) in &entries { m.insert((en(), l.clone()), toks.clone()); }
            let tab = TokenizationTable::new(m, BTreeSet::new()).unwrap();

            let (t, _) = beatles();
            let f = FactTriple::new("P136", en(), "Subj", labels[gold].clone(), None);
            let objs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let mut shuffled = objs.clone();
            shuffled.rotate_left((seed as usize) % objs.len());
            shuffled.reverse();

            let p1 = plan_variants(&f, &tab, &objs).unwrap();
            let p2 = plan_variants(&f, &tab, &shuffled).unwrap();
            prop_assert_eq!(&p1, &p2);
            prop_assert!(p1.exact_count <= p1.max_count);
            for n in p1.enumerated_counts() {
                let q = render_query(&t, &f, n).unwrap();
                prop_assert_eq!(q.text.matches(DEFAULT_MASK).count(), n);
                prop_assert!(q.text.contains("Subj"));
            }
        }
    }
}
