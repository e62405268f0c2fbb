//! Cross-language overlap of active neuron sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FactKey, LanguageCode};
use crate::similarity::{jaccard, SimilarityMatrix};

use super::{ActiveNeuronSet, NeuronId};

/// Jaccard of two languages' active sets for the same fact.
pub fn neuron_jaccard(a: &ActiveNeuronSet, b: &ActiveNeuronSet) -> Result<f64> {
    if a.fact != b.fact {
        return Err(Error::contract(format!(
            "neuron sets belong to different facts ({} vs {})",
            a.fact, b.fact
        )));
    }
    let sa: BTreeSet<NeuronId> = a.neurons.iter().copied().collect();
    let sb: BTreeSet<NeuronId> = b.neurons.iter().copied().collect();
    Ok(jaccard(&sa, &sb))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairJaccard {
    pub fact: FactKey,
    pub a: LanguageCode,
    pub b: LanguageCode,
    pub jaccard: f64,
}

/// Jaccard for every fact and every pair of `languages` in which the fact
/// has an active set. Pairs are ordered `a < b`.
pub fn pairwise_fact_jaccards(sets: &[ActiveNeuronSet], languages: &[LanguageCode]) -> Result<Vec<PairJaccard>> {
    let keep: BTreeSet<&LanguageCode> = languages.iter().collect();
    let mut by_fact: BTreeMap<&FactKey, BTreeMap<&LanguageCode, &ActiveNeuronSet>> = BTreeMap::new();
    for s in sets.iter().filter(|s| keep.contains(&s.language)) {
        by_fact.entry(&s.fact).or_default().insert(&s.language, s);
    }
    let mut out = Vec::new();
    for (fact, langs) in by_fact {
        let entries: Vec<_> = langs.into_iter().collect();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                out.push(PairJaccard {
                    fact: fact.clone(),
                    a: entries[i].0.clone(),
                    b: entries[j].0.clone(),
                    jaccard: neuron_jaccard(entries[i].1, entries[j].1)?,
                });
            }
        }
    }
    Ok(out)
}

/// Mean per-fact Jaccard for each language pair. Pairs without a shared
/// fact are left missing; the diagonal is 1.
pub fn language_similarity_matrix(values: &[PairJaccard], languages: &[LanguageCode]) -> SimilarityMatrix {
    let mut m = SimilarityMatrix::new(languages.to_vec());
    let mut per_pair: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for v in values {
        let (Some(i), Some(j)) = (m.index_of(&v.a), m.index_of(&v.b)) else {
            continue;
        };
        if i != j {
            per_pair.entry((i.min(j), i.max(j))).or_default().push(v.jaccard);
        }
    }
    for i in 0..languages.len() {
        m.set(i, i, Some(1.0));
    }
    for ((i, j), mut vs) in per_pair {
        // Fixed summation order, independent of input order.
        vs.sort_by(f64::total_cmp);
        m.set(i, j, Some(vs.iter().sum::<f64>() / vs.len() as f64));
    }
    m
}

/// The `n` languages with the highest P@1, ties by language code.
pub fn top_languages(scores: &[(LanguageCode, f64)], n: usize) -> Vec<LanguageCode> {
    let mut v: Vec<&(LanguageCode, f64)> = scores.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(n).map(|(l, _)| l.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FactUid;

    fn lang(s: &str) -> LanguageCode {
        LanguageCode::new(s).unwrap()
    }

    fn set(fact: &str, l: &str, ids: impl IntoIterator<Item = u32>) -> ActiveNeuronSet {
        ActiveNeuronSet {
            uid: FactUid(0),
            fact: FactKey(fact.into()),
            language: lang(l),
            neurons: ids.into_iter().map(|i| NeuronId { layer: i / 100, index: i % 100 }).collect(),
        }
    }

    #[test]
    fn jaccard_cases() {
        let a = set("f", "en", 0..50);
        assert_eq!(neuron_jaccard(&a, &set("f", "zh", 0..50)).unwrap(), 1.0);
        assert_eq!(neuron_jaccard(&a, &set("f", "zh", 50..100)).unwrap(), 0.0);
        assert_eq!(neuron_jaccard(&a, &set("f", "zh", 25..75)).unwrap(), 1.0 / 3.0);
        assert!(neuron_jaccard(&a, &set("g", "zh", 0..50)).is_err());
    }

    #[test]
    fn single_shared_fact_sets_the_entry() {
        let langs = vec![lang("en"), lang("zh")];
        let v = vec![PairJaccard {
            fact: FactKey("f".into()),
            a: lang("en"),
            b: lang("zh"),
            jaccard: 0.21,
        }];
        let m = language_similarity_matrix(&v, &langs);
        assert_eq!(m.get(0, 1), Some(0.21));
        assert_eq!(m.get(1, 0), Some(0.21));
        assert_eq!(m.get(0, 0), Some(1.0));
    }

    #[test]
    fn hand_averaged_fixture() {
        let langs = vec![lang("de"), lang("en"), lang("fr")];
        let pj = |f: &str, a: &str, b: &str, j: f64| PairJaccard {
            fact: FactKey(f.into()),
            a: lang(a),
            b: lang(b),
            jaccard: j,
        };
        let v = vec![
            pj("f1", "de", "en", 0.5),
            pj("f2", "de", "en", 0.25),
            pj("f1", "de", "fr", 0.125),
            pj("f3", "en", "fr", 1.0),
            pj("f4", "en", "fr", 0.0),
            pj("f5", "en", "fr", 0.5),
        ];
        let m = language_similarity_matrix(&v, &langs);
        assert_eq!(m.get(0, 1), Some(0.375));
        assert_eq!(m.get(0, 2), Some(0.125));
        assert_eq!(m.get(1, 2), Some(0.5));
        assert!(m.is_symmetric());

        let only = language_similarity_matrix(&v[..1], &langs);
        assert_eq!(only.get(1, 2), None);
    }

    #[test]
    fn pairs_cover_every_language_pair_of_a_fact() {
        let sets = vec![set("f", "en", 0..4), set("f", "de", 2..6), set("f", "zh", 0..4), set("g", "en", 0..4)];
        let langs = vec![lang("de"), lang("en")];
        let pairs = pairwise_fact_jaccards(&sets, &langs).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].jaccard, 2.0 / 6.0);
        assert_eq!(pairwise_fact_jaccards(&sets, &[lang("de"), lang("en"), lang("zh")]).unwrap().len(), 3);
    }

    #[test]
    fn top_languages_by_score() {
        let s = vec![(lang("en"), 0.19), (lang("de"), 0.12), (lang("af"), 0.12), (lang("ja"), 0.01)];
        assert_eq!(top_languages(&s, 3), vec![lang("en"), lang("af"), lang("de")]);
        assert_eq!(top_languages(&s, 30).len(), 4);
    }
}
