//! Correlation of probing precision with training-data volume and with the
//! token length of gold objects.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::model::LanguageCode;

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::contract(format!("series lengths differ ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} sample(s); need at least 2", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub language: LanguageCode,
    pub page_count: u64,
    pub bytes_articles: u64,
    pub bytes_articles_compressed: u64,
    pub bytes_abstracts: u64,
    pub bytes_abstracts_compressed: u64,
}

/// Reads the corpus inventory CSV (header row required, columns named as
/// the `CorpusStats` fields).
pub fn read_corpus_stats<R: Read>(r: R) -> Result<Vec<CorpusStats>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CorpusStats>().enumerate() {
        let s = row?;
        if s.bytes_articles_compressed > s.bytes_articles || s.bytes_abstracts_compressed > s.bytes_abstracts {
            return Err(Error::Schema {
                line: i + 2,
                field: "compressed size exceeds raw size".into(),
            });
        }
        out.push(s);
    }
    Ok(out)
}

pub const VOLUME_METRICS: [&str; 5] = [
    "page_count",
    "articles",
    "articles_compressed",
    "abstracts",
    "abstracts_compressed",
];

impl CorpusStats {
    /// Value of `VOLUME_METRICS[i]`.
    pub fn metric(&self, i: usize) -> f64 {
        (match i {
            0 => self.page_count,
            1 => self.bytes_articles,
            2 => self.bytes_articles_compressed,
            3 => self.bytes_abstracts,
            _ => self.bytes_abstracts_compressed,
        }) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub metric: String,
    pub r: f64,
    pub n: usize,
}

/// One row per volume metric, over languages that have both stats and P@1.
pub fn volume_correlation_table(stats: &[CorpusStats], p_at_1: &BTreeMap<LanguageCode, f64>) -> Result<Vec<CorrelationRow>> {
    let mut joined: Vec<(&CorpusStats, f64)> = stats
        .iter()
        .filter_map(|s| p_at_1.get(&s.language).map(|p| (s, *p)))
        .collect();
    joined.sort_by(|a, b| a.0.language.cmp(&b.0.language));
    if joined.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "{} language(s) with both corpus stats and P@1",
            joined.len()
        )));
    }
    let p: Vec<f64> = joined.iter().map(|(_, p)| *p).collect();
    VOLUME_METRICS
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let x: Vec<f64> = joined.iter().map(|(s, _)| s.metric(i)).collect();
            Ok(CorrelationRow {
                metric: (*name).to_owned(),
                r: pearson(&x, &p)?,
                n: joined.len(),
            })
        })
        .collect()
}

/// Correlation between mean gold-object token count and P@1 across languages.
pub fn subword_correlation(token_counts: &BTreeMap<LanguageCode, f64>, p_at_1: &BTreeMap<LanguageCode, f64>) -> Result<CorrelationRow> {
    let (x, y): (Vec<f64>, Vec<f64>) = token_counts
        .iter()
        .filter_map(|(l, c)| p_at_1.get(l).map(|p| (*c, *p)))
        .unzip();
    Ok(CorrelationRow {
        metric: "subword_count".into(),
        r: pearson(&x, &y)?,
        n: x.len(),
    })
}

/// Writes rows as `metric,r,n`; `None` values (undefined correlations) are
/// written as `NA`.
pub fn write_correlation_csv<W: Write>(w: W, rows: &[(String, Option<f64>, usize)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["metric", "r", "n"])?;
    for (metric, r, n) in rows {
        out.write_record([metric.clone(), r.map_or_else(|| "NA".into(), sig6), n.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<correlations>", e))?;
    Ok(())
}
