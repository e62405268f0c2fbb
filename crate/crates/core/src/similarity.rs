//! Set Jaccard similarity and language x language similarity matrices.

use std::collections::BTreeSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::model::LanguageCode;

/// Intersection and union sizes of two sorted sets.
pub fn jaccard_counts<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> (usize, usize) {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(x)).count();
    (inter, a.len() + b.len() - inter)
}

/// |A ∩ B| / |A ∪ B|, with J(∅, ∅) = 0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    match jaccard_counts(a, b) {
        (_, 0) => 0.0,
        (i, u) => i as f64 / u as f64,
    }
}

/// Symmetric language x language matrix. Entries may be missing when a
/// pair has no data.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    languages: Vec<LanguageCode>,
    values: Vec<Option<f64>>,
}

impl SimilarityMatrix {
    pub fn new(languages: Vec<LanguageCode>) -> Self {
        let n = languages.len();
        SimilarityMatrix {
            languages,
            values: vec![None; n * n],
        }
    }

    pub fn languages(&self) -> &[LanguageCode] {
        &self.languages
    }

    pub fn len(&self) -> usize {
        self.languages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.len() + j]
    }

    /// Sets both (i, j) and (j, i).
    pub fn set(&mut self, i: usize, j: usize, v: Option<f64>) {
        let n = self.len();
        self.values[i * n + j] = v;
        self.values[j * n + i] = v;
    }

    pub fn index_of(&self, lang: &LanguageCode) -> Option<usize> {
        self.languages.iter().position(|l| l == lang)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// CSV with a header row; missing entries are written as `NA`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["language".to_owned()];
        header.extend(self.languages.iter().map(|l| l.to_string()));
        out.write_record(&header)?;
        for (i, lang) in self.languages.iter().enumerate() {
            let mut row = vec![lang.to_string()];
            row.extend((0..self.len()).map(|j| self.get(i, j).map_or_else(|| "NA".to_owned(), sig6)));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<matrix>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[u32]) -> BTreeSet<u32> {
        xs.iter().copied().collect()
    }

    #[test]
    fn jaccard_basics() {
        assert_eq!(jaccard(&set(&[1, 2]), &set(&[2, 3])), 1.0 / 3.0);
        assert_eq!(jaccard(&set(&[1, 2]), &set(&[1, 2])), 1.0);
        assert_eq!(jaccard(&set(&[1]), &set(&[])), 0.0);
        assert_eq!(jaccard::<u32>(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn matrix_csv_marks_missing() {
        let langs = vec![LanguageCode::new("en").unwrap(), LanguageCode::new("zh").unwrap()];
        let mut m = SimilarityMatrix::new(langs);
        m.set(0, 0, Some(1.0));
        m.set(1, 1, Some(1.0));
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "language,en,zh\nen,1,NA\nzh,NA,1\n");
        m.set(0, 1, Some(0.21));
        assert!(m.is_symmetric());
        assert_eq!(m.get(1, 0), Some(0.21));
    }
}
