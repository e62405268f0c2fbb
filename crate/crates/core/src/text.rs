//! Text normalization shared by pattern building, corpus scanning and
//! fact classification.

use std::collections::HashMap;
use std::sync::OnceLock;

use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

static TRAD_TO_SIMP_TSV: &str = include_str!("../data/trad_to_simp.tsv");

fn trad_to_simp_table() -> &'static HashMap<char, char> {
    static TABLE: OnceLock<HashMap<char, char>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::with_capacity(4200);
        for line in TRAD_TO_SIMP_TSV.lines() {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(t), Some(s)) = (cols.next(), cols.next()) else {
                continue;
            };
            let (mut t, mut s) = (t.chars(), s.chars());
            if let (Some(t), None, Some(s), None) = (t.next(), t.next(), s.next(), s.next()) {
                map.insert(t, s);
            }
        }
        map
    })
}

/// Number of traditional characters the bundled table maps.
pub fn trad_to_simp_len() -> usize {
    trad_to_simp_table().len()
}

/// Maps a single traditional Han character to its simplified form; other
/// characters pass through.
pub fn simplify_char(c: char) -> char {
    // Han blocks all sit above U+2E80.
    if (c as u32) < 0x2E80 {
        return c;
    }
    trad_to_simp_table().get(&c).copied().unwrap_or(c)
}

fn nfc(s: &str) -> String {
    match is_nfc_quick(s.chars()) {
        IsNormalized::Yes => s.to_owned(),
        _ => s.nfc().collect(),
    }
}

/// NFC + lowercase. This is the normalization used for corpus matching;
/// patterns and passage text must both go through it.
pub fn fold_for_matching(s: &str) -> String {
    if s.is_ascii() {
        return s.to_ascii_lowercase();
    }
    let lowered = nfc(s).to_lowercase();
    nfc(&lowered)
}

/// Writes the matching normalization of `s` into `out`, reusing its
/// allocation. Equivalent to `fold_for_matching`.
pub fn fold_into(s: &str, out: &mut String) {
    out.clear();
    if s.is_ascii() {
        out.push_str(s);
        out.make_ascii_lowercase();
    } else {
        out.push_str(&fold_for_matching(s));
    }
}

/// Entity normalization for classification: matching normalization plus
/// traditional to simplified Han unification.
pub fn normalize_entity(label: &str) -> String {
    let folded = fold_for_matching(label);
    if folded.is_ascii() {
        return folded;
    }
    let simplified: String = folded.chars().map(simplify_char).collect();
    nfc(&simplified)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn case_folds_ascii() {
        assert_eq!(normalize_entity("Sega"), "sega");
        assert_eq!(fold_for_matching("Noyon"), "noyon");
    }

    #[test]
    fn unifies_traditional_han() {
        assert_eq!(normalize_entity("雜"), "杂");
        assert_eq!(normalize_entity("湯"), "汤");
        assert_eq!(normalize_entity("意大利雜菜湯"), "意大利杂菜汤");
        // simplified input is untouched
        assert_eq!(normalize_entity("汤"), "汤");
    }

    #[test]
    fn empty_is_identity() {
        assert_eq!(normalize_entity(""), "");
        assert_eq!(fold_for_matching(""), "");
    }

    #[test]
    fn composes_to_nfc() {
        // "e" + combining acute vs precomposed
        assert_eq!(fold_for_matching("Cafe\u{301}"), "caf\u{e9}");
        assert_eq!(fold_for_matching("CAF\u{c9}"), "caf\u{e9}");
    }

    #[test]
    fn table_is_populated() {
        assert!(trad_to_simp_len() > 4000);
    }

    #[test]
    fn fold_into_matches_fold() {
        let mut buf = String::new();
        for s in ["ABC def", "Über", "Ελληνικά", "Noyon IS in France"] {
            fold_into(s, &mut buf);
            assert_eq!(buf, fold_for_matching(s));
        }
    }

    proptest! {
        #[test]
        fn normalize_entity_is_idempotent(s in "\\PC{0,24}") {
            let once = normalize_entity(&s);
            prop_assert_eq!(normalize_entity(&once), once);
        }

        #[test]
        fn fold_is_idempotent(s in "\\PC{0,24}") {
            let once = fold_for_matching(&s);
            prop_assert_eq!(fold_for_matching(&once), once);
        }
    }
}
