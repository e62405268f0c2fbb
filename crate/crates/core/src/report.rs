//! Report bundle: gathers stage outputs into `reports/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::matching::precision_table;
use crate::model::{FactUid, LanguageCode};
use crate::pipeline::config::RunConfig;
use crate::pipeline::manifest::StageManifest;
use crate::pipeline::stages::{load_dataset, load_outcomes, open, stage_output, Stage};
use crate::prompt::read_plans;
use crate::stats::{pearson, read_corpus_stats, write_correlation_csv, VOLUME_METRICS};

/// Files written to `reports/`.
pub const REPORT_FILES: [&str; 7] = [
    "p_at_1.csv",
    "correlations.csv",
    "fact_sharing.csv",
    "neuron_similarity.csv",
    "absence_counts.csv",
    "category_counts.csv",
    "heatmap.csv",
];

/// Upstream files copied verbatim into the bundle.
const COPIED: [(Stage, &str, &str); 5] = [
    (Stage::Evaluate, "fact_sharing.csv", "fact_sharing.csv"),
    (Stage::Neurons, "neuron_similarity.csv", "neuron_similarity.csv"),
    (Stage::Trace, "absence_counts.csv", "absence_counts.csv"),
    (Stage::Classify, "category_counts.csv", "category_counts.csv"),
    (Stage::Neurons, "heatmap.csv", "heatmap.csv"),
];

/// Writes the report bundle under `out/reports` and returns the written
/// paths. Every upstream stage must have run.
pub fn render_reports(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    // Resolve all sources first so nothing is written when one is missing.
    let mut sources = Vec::new();
    for (stage, file, dest) in COPIED {
        sources.push((stage_output(out, stage, file)?, dest));
    }
    let d = load_dataset(cfg, out)?;
    let plans = read_plans(open(&stage_output(out, Stage::GenQueries, "plans.jsonl")?)?)?;
    let outcomes = load_outcomes(out)?;
    let stats_path = cfg.input(&cfg.corpus.stats, "corpus stats CSV")?;
    let stats = read_corpus_stats(open(&stats_path)?)?;

    let dir = out.join(Stage::Report.dir());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut manifest = StageManifest::new(Stage::Report.command(), cfg.snapshot());
    manifest.input("corpus_stats", &stats_path)?;

    let rows = precision_table(&outcomes, &cfg.protocol.reported())?;
    let p = dir.join("p_at_1.csv");
    crate::matching::write_precision_csv(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?, &rows)?;

    let primary = cfg.protocol.primary();
    let p1: BTreeMap<LanguageCode, f64> = rows
        .iter()
        .filter(|r| r.protocol == primary)
        .map(|r| (r.language.clone(), r.p_at_1))
        .collect();
    let correlations = correlation_rows(&stats, &p1, &mean_token_counts(&d.triples, &plans));
    let p = dir.join("correlations.csv");
    write_correlation_csv(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?, &correlations)?;

    for (src, dest) in sources {
        let to = dir.join(dest);
        std::fs::copy(&src, &to).map_err(|e| Error::io(&to, e))?;
    }
    manifest.count("languages", p1.len());
    manifest.finish(&dir)?;
    Ok(REPORT_FILES.iter().map(|f| dir.join(f)).collect())
}

/// Mean gold-object token count per language over all planned facts.
fn mean_token_counts(
    triples: &[crate::model::FactTriple],
    plans: &BTreeMap<FactUid, crate::prompt::VariantPlan>,
) -> BTreeMap<LanguageCode, f64> {
    let mut acc: BTreeMap<LanguageCode, (usize, usize)> = BTreeMap::new();
    for f in triples {
        if let Some(p) = plans.get(&f.uid) {
            let e = acc.entry(f.language.clone()).or_default();
            e.0 += p.exact_count;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(l, (s, n))| (l, s as f64 / n as f64)).collect()
}

/// Volume rows then the subword row. An undefined correlation (too few
/// languages, constant series) becomes `None` rather than failing the run.
fn correlation_rows(
    stats: &[crate::stats::CorpusStats],
    p1: &BTreeMap<LanguageCode, f64>,
    token_counts: &BTreeMap<LanguageCode, f64>,
) -> Vec<(String, Option<f64>, usize)> {
    let mut joined: Vec<_> = stats.iter().filter_map(|s| p1.get(&s.language).map(|p| (s, *p))).collect();
    joined.sort_by(|a, b| a.0.language.cmp(&b.0.language));
    let y: Vec<f64> = joined.iter().map(|(_, p)| *p).collect();
    let mut rows = Vec::new();
    for (i, name) in VOLUME_METRICS.iter().enumerate() {
        let x: Vec<f64> = joined.iter().map(|(s, _)| s.metric(i)).collect();
        rows.push(((*name).to_owned(), defined(name, pearson(&x, &y)), x.len()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = token_counts
        .iter()
        .filter_map(|(l, c)| p1.get(l).map(|p| (*c, *p)))
        .unzip();
    rows.push(("subword_count".to_owned(), defined("subword_count", pearson(&x, &y)), x.len()));
    rows
}

fn defined(metric: &str, r: Result<f64>) -> Option<f64> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            warn!("{metric}: {e}");
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::CorpusStats;

    fn lang(s: &str) -> LanguageCode {
        LanguageCode::new(s).unwrap()
    }

    fn stats(l: &str, pages: u64) -> CorpusStats {
        CorpusStats {
            language: lang(l),
            page_count: pages,
            bytes_articles: pages * 10,
            bytes_articles_compressed: pages * 3,
            bytes_abstracts: 7,
            bytes_abstracts_compressed: 2,
        }
    }

    #[test]
    fn constant_metric_is_na_others_defined() {
        let s = vec![stats("de", 2), stats("en", 4), stats("fr", 1)];
        let p1: BTreeMap<_, _> = [(lang("de"), 0.2), (lang("en"), 0.4), (lang("fr"), 0.1)].into();
        let tc: BTreeMap<_, _> = [(lang("de"), 2.0), (lang("en"), 1.0), (lang("fr"), 3.0)].into();
        let rows = correlation_rows(&s, &p1, &tc);
        assert_eq!(rows.len(), 6);
        assert!((rows[0].1.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rows[3].1, None);
        assert_eq!(rows[3].2, 3);
        assert_eq!(rows[5].0, "subword_count");
        assert!(rows[5].1.unwrap() < -0.9);
    }

    #[test]
    fn missing_trace_output_names_corpus_tracer() {
        let dir = tempfile::tempdir().unwrap();
        for (stage, file) in [
            (Stage::Evaluate, "fact_sharing.csv"),
            (Stage::Neurons, "neuron_similarity.csv"),
        ] {
            let d = dir.path().join(stage.dir());
            std::fs::create_dir_all(&d).unwrap();
            std::fs::write(d.join(file), "x\n").unwrap();
        }
        let err = render_reports(&RunConfig::default(), dir.path()).unwrap_err();
        assert!(matches!(&err, Error::MissingStage(m) if m == "corpus-tracer"), "{err}");
        assert!(!dir.path().join("reports").exists());
    }
}
