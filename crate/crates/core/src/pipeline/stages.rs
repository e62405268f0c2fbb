use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::manifest::StageManifest;
use crate::classify::{category_report, classify_fact, write_category_csv, write_classified, ClassifiedFact, NamingRelationList};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::matching::{
    evaluate_fact, fact_sets, parse_predictions, precision_table, read_outcomes, sharing_matrix, split_by_token_count,
    write_outcomes, write_precision_csv, MatchOutcome, PredictionRecord,
};
use crate::model::{
    parse_templates, parse_triples, read_mlama_dir, validate_dataset, write_templates, write_triples, Dataset, FactKey,
    FactTriple, FactUid, LanguageCode, TokenizationTable,
};
use crate::neurons::{
    activity_scores, bin_heatmap, language_similarity_matrix, pairwise_fact_jaccards, top_k_neurons, top_languages,
    ActiveNeuronSet, ActivationRecord, AdapterManifest, CohortSums, DumpReader,
};
use crate::par;
use crate::prompt::{plan_dataset, read_plans, render_all, write_plans, write_queries};
use crate::similarity::SimilarityMatrix;
use crate::tracer::scan::write_traces;
use crate::tracer::{absence_report, build_pattern_index, corpus_files, trace_corpus, AbsenceCounts, CorpusOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    GenQueries,
    Evaluate,
    Trace,
    Classify,
    Neurons,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::GenQueries,
        Stage::Evaluate,
        Stage::Trace,
        Stage::Classify,
        Stage::Neurons,
        Stage::Report,
    ];

    /// Subcommand name.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::GenQueries => "gen-queries",
            Stage::Evaluate => "evaluate",
            Stage::Trace => "trace",
            Stage::Classify => "classify",
            Stage::Neurons => "neurons",
            Stage::Report => "report",
        }
    }

    /// Component that owns the stage; used in missing-stage errors.
    pub fn module(self) -> &'static str {
        match self {
            Stage::Ingest => "core-model",
            Stage::GenQueries => "prompt-engine",
            Stage::Evaluate => "match-evaluator",
            Stage::Trace => "corpus-tracer",
            Stage::Classify => "fact-classifier",
            Stage::Neurons => "neuron-analyzer",
            Stage::Report => "stats-reporter",
        }
    }

    /// Directory under the output root.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::GenQueries => "queries",
            Stage::Evaluate => "evaluate",
            Stage::Trace => "trace",
            Stage::Classify => "classify",
            Stage::Neurons => "neurons",
            Stage::Report => "reports",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.command() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Runs one stage (or, for `None`, every stage in order).
pub fn run_stage(stage: Option<Stage>, cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let out = cfg.out_root()?;
    par::with_jobs(cfg.jobs, || {
        let stages: Vec<Stage> = match stage {
            Some(s) => vec![s],
            None => Stage::ALL.to_vec(),
        };
        for s in stages {
            info!("running stage {}", s.command());
            let ctx = Ctx { cfg, out: &out };
            match s {
                Stage::Ingest => ingest(&ctx)?,
                Stage::GenQueries => gen_queries(&ctx)?,
                Stage::Evaluate => evaluate(&ctx)?,
                Stage::Trace => trace(&ctx)?,
                Stage::Classify => classify(&ctx)?,
                Stage::Neurons => neurons(&ctx)?,
                Stage::Report => {
                    crate::report::render_reports(cfg, &out)?;
                }
            }
        }
        Ok(())
    })
}

pub(crate) struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
}

impl Ctx<'_> {
    fn stage_dir(&self, s: Stage) -> Result<PathBuf> {
        let d = self.out.join(s.dir());
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }
}

/// Path of an upstream stage's output file; missing means the stage has
/// not run.
pub(crate) fn stage_output(out: &Path, s: Stage, file: &str) -> Result<PathBuf> {
    let p = out.join(s.dir()).join(file);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingStage(s.module().to_owned()))
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn finish_file(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = create(path)?;
    f(&mut w)?;
    finish_file(path, w)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_with(path, |w| {
        for it in items {
            serde_json::to_writer(&mut *w, it)?;
            writeln!(w).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
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

/// Dataset as written by `ingest`.
pub(crate) fn load_dataset(cfg: &RunConfig, out: &Path) -> Result<Dataset> {
    let triples = parse_triples(open(&stage_output(out, Stage::Ingest, "triples.jsonl")?)?)?;
    let templates = parse_templates(open(&stage_output(out, Stage::Ingest, "templates.jsonl")?)?)?;
    let mut d = Dataset::new(triples, templates, Vec::new());
    d.languages = if cfg.languages.is_empty() {
        d.observed_languages()
    } else {
        let mut l = cfg.languages.clone();
        l.sort();
        l.dedup();
        l
    };
    Ok(d)
}

fn load_tokenization(cfg: &RunConfig) -> Result<(TokenizationTable, Vec<(String, PathBuf)>)> {
    let table_path = cfg.input(&cfg.adapter.tokenization, "tokenization table")?;
    let mut inputs = vec![("tokenization".to_owned(), table_path.clone())];
    let table = match &cfg.adapter.vocabulary {
        Some(_) => {
            let vocab_path = cfg.input(&cfg.adapter.vocabulary, "vocabulary")?;
            inputs.push(("vocabulary".to_owned(), vocab_path.clone()));
            TokenizationTable::parse(open(&table_path)?, Some(open(&vocab_path)?))?
        }
        None => TokenizationTable::parse(open(&table_path)?, None::<BufReader<File>>)?,
    };
    Ok((table, inputs))
}

pub(crate) fn load_outcomes(out: &Path) -> Result<Vec<MatchOutcome>> {
    read_outcomes(open(&stage_output(out, Stage::Evaluate, "outcomes.jsonl")?)?)
}

fn ingest(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut manifest = StageManifest::new(Stage::Ingest.command(), cfg.snapshot());
    let (triples, templates) = if cfg.dataset.triples.is_some() || cfg.dataset.mlama_dir.is_none() {
        let tp = cfg.input(&cfg.dataset.triples, "triples file")?;
        let pp = cfg.input(&cfg.dataset.templates, "templates file")?;
        manifest.input("triples", &tp)?;
        manifest.input("templates", &pp)?;
        (parse_triples(open(&tp)?)?, parse_templates(open(&pp)?)?)
    } else {
        let root = cfg.input(&cfg.dataset.mlama_dir, "mLAMA directory")?;
        manifest.input("mlama_dir", &root)?;
        read_mlama_dir(&root)?
    };

    let mut d = Dataset::new(triples, templates, cfg.languages.clone());
    let report = validate_dataset(&d);
    if let Some(u) = report.duplicate_uids.first() {
        return Err(Error::contract(format!(
            "{} duplicate fact uid(s), first {u}",
            report.duplicate_uids.len()
        )));
    }
    if let Some((rel, lang)) = report.duplicate_templates.first() {
        return Err(Error::contract(format!("duplicate template for {rel} in {lang}")));
    }
    if !report.unlisted_languages.is_empty() {
        info!("ignoring {} language(s) not in the configured list", report.unlisted_languages.len());
    }
    d.restrict_languages(&cfg.languages);
    let drop: BTreeSet<FactUid> = report
        .orphan_triples
        .iter()
        .chain(&report.empty_labels)
        .copied()
        .collect();
    let before = d.triples.len();
    d.triples.retain(|t| !drop.contains(&t.uid));
    if before != d.triples.len() {
        warn!("dropped {} fact(s) without a template or with an empty label", before - d.triples.len());
    }
    if d.triples.is_empty() {
        return Err(Error::contract("no facts left after ingest"));
    }

    let dir = ctx.stage_dir(Stage::Ingest)?;
    write_with(&dir.join("triples.jsonl"), |w| write_triples(w, &d.triples))?;
    write_with(&dir.join("templates.jsonl"), |w| write_templates(w, &d.templates))?;
    let path = dir.join("validation.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    manifest.count("facts", d.triples.len());
    manifest.count("templates", d.templates.len());
    manifest.count("dropped_facts", before - d.triples.len());
    manifest.finish(&dir)
}

fn gen_queries(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let d = load_dataset(cfg, ctx.out)?;
    let (table, inputs) = load_tokenization(cfg)?;
    let mut manifest = StageManifest::new(Stage::GenQueries.command(), cfg.snapshot());
    for (name, p) in &inputs {
        manifest.input(name, p)?;
    }
    let plans = plan_dataset(&d, &table)?;
    let queries = render_all(&d, &plans, &cfg.mask_token)?;
    let dir = ctx.stage_dir(Stage::GenQueries)?;
    write_with(&dir.join("plans.jsonl"), |w| write_plans(w, &plans))?;
    write_with(&dir.join("queries.jsonl"), |w| write_queries(w, &queries))?;
    manifest.count("facts", plans.len());
    manifest.count("queries", queries.len());
    manifest.finish(&dir)
}

fn evaluate(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let d = load_dataset(cfg, ctx.out)?;
    let plans = read_plans(open(&stage_output(ctx.out, Stage::GenQueries, "plans.jsonl")?)?)?;
    let (table, inputs) = load_tokenization(cfg)?;
    let pred_path = cfg.input(&cfg.adapter.predictions, "prediction dump")?;
    let mut manifest = StageManifest::new(Stage::Evaluate.command(), cfg.snapshot());
    for (name, p) in &inputs {
        manifest.input(name, p)?;
    }
    manifest.input("predictions", &pred_path)?;

    let predictions = parse_predictions(open(&pred_path)?)?;
    let mut by_uid: HashMap<FactUid, Vec<&PredictionRecord>> = HashMap::new();
    for p in &predictions {
        by_uid.entry(p.uid).or_default().push(p);
    }

    let results: Vec<Result<Option<MatchOutcome>>> = par::map(&d.triples, |f| {
        let plan = plans
            .get(&f.uid)
            .ok_or_else(|| Error::contract(format!("fact {} has no query plan; rerun gen-queries", f.uid)))?;
        let gold = table
            .tokens(&f.language, &f.object_label)
            .ok_or_else(|| Error::Dependency(format!("no tokenization for entity {}:{:?}", f.language, f.object_label)))?;
        let Some(records) = by_uid.get(&f.uid) else {
            return Ok(None);
        };
        match evaluate_fact(plan, &f.language, records, gold) {
            Ok(o) => Ok(Some(o)),
            Err(Error::Dependency(msg)) => {
                warn!("skipping fact: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    });
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        if let Some(o) = r? {
            outcomes.push(o);
        }
    }
    let skipped = d.triples.len() - outcomes.len();
    if skipped > 0 {
        warn!("{skipped} fact(s) had no usable predictions and were skipped");
    }
    if outcomes.is_empty() {
        return Err(Error::Dependency("prediction dump covers none of the ingested facts".into()));
    }

    let dir = ctx.stage_dir(Stage::Evaluate)?;
    write_with(&dir.join("outcomes.jsonl"), |w| write_outcomes(w, &outcomes))?;
    let rows = precision_table(&outcomes, &cfg.protocol.reported())?;
    write_with(&dir.join("p_at_1.csv"), |w| write_precision_csv(w, &rows))?;

    // P@1 on facts whose object is a single token, and on the rest.
    let (one, rest) = split_by_token_count(&outcomes, &plans, 1);
    let mut split_rows = Vec::new();
    for (subset, part) in [("one_token", one), ("multi_token", rest)] {
        let owned: Vec<MatchOutcome> = part.into_iter().cloned().collect();
        if owned.is_empty() {
            continue;
        }
        for r in precision_table(&owned, &cfg.protocol.reported())? {
            split_rows.push((subset, r));
        }
    }
    write_with(&dir.join("p_at_1_by_token_count.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["subset", "language", "protocol", "p_at_1", "n_facts"])?;
        for (subset, r) in &split_rows {
            out.write_record([
                subset.to_string(),
                r.language.to_string(),
                r.protocol.as_str().to_owned(),
                sig6(r.p_at_1),
                r.n_facts.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<p_at_1_by_token_count>", e))
    })?;

    let key_of: HashMap<FactUid, FactKey> = d.triples.iter().map(|f| (f.uid, f.fact_key.clone())).collect();
    let sets = fact_sets(&outcomes, cfg.protocol.primary(), &key_of);
    let matrix = if sets.len() >= 2 {
        sharing_matrix(&sets)?
    } else {
        let mut m = SimilarityMatrix::new(sets.iter().map(|s| s.language.clone()).collect());
        for i in 0..m.len() {
            m.set(i, i, Some(1.0));
        }
        m
    };
    write_with(&dir.join("fact_sharing.csv"), |w| matrix.write_csv(w))?;

    manifest.count("evaluated", outcomes.len());
    manifest.count("skipped", skipped);
    manifest.finish(&dir)
}

#[derive(Serialize, Deserialize)]
struct FactRef {
    uid: FactUid,
    lang: LanguageCode,
}

fn trace(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let d = load_dataset(cfg, ctx.out)?;
    let outcomes = load_outcomes(ctx.out)?;
    let root = cfg.input(&cfg.corpus.root, "corpus directory")?;
    let mut manifest = StageManifest::new(Stage::Trace.command(), cfg.snapshot());
    manifest.input("corpus", &root)?;
    let opts = CorpusOptions {
        max_tokens: cfg.max_tokens,
        presegmented: cfg.corpus.presegmented,
    };

    let mut by_lang: BTreeMap<&LanguageCode, Vec<FactTriple>> = BTreeMap::new();
    for f in &d.triples {
        by_lang.entry(&f.language).or_default().push(f.clone());
    }
    let primary = cfg.protocol.primary();
    let mut all_traces = Vec::new();
    let mut counts: Vec<(LanguageCode, AbsenceCounts)> = Vec::new();
    let mut absent_refs = Vec::new();
    for (lang, facts) in by_lang {
        let lang_root = root.join(lang.as_str());
        let files = corpus_files(&lang_root)?;
        let index = build_pattern_index(&facts, cfg.word_boundary)?;
        let traces = trace_corpus(&lang_root, &files, &index, opts)?;
        let all: BTreeSet<FactUid> = facts.iter().map(|f| f.uid).collect();
        let predicted: BTreeSet<FactUid> = outcomes
            .iter()
            .filter(|o| &o.language == lang && o.correct(primary) && all.contains(&o.uid))
            .map(|o| o.uid)
            .collect();
        let report = absence_report(&traces, &predicted, &all)?;
        info!(
            "{lang}: {} of {} facts present in {} file(s)",
            report.counts.all_present,
            all.len(),
            files.len()
        );
        for u in &report.predicted_absent {
            absent_refs.push(FactRef {
                uid: *u,
                lang: lang.clone(),
            });
        }
        counts.push((lang.clone(), report.counts));
        all_traces.extend(traces);
    }

    let dir = ctx.stage_dir(Stage::Trace)?;
    write_with(&dir.join("traces.jsonl"), |w| write_traces(w, &all_traces))?;
    write_jsonl(&dir.join("predicted_absent.jsonl"), &absent_refs)?;
    write_with(&dir.join("absence_counts.csv"), |w| write_absence_csv(w, &counts))?;
    manifest.count("facts", all_traces.len());
    manifest.count("present", all_traces.iter().filter(|t| t.present).count());
    manifest.count("predicted_absent", absent_refs.len());
    manifest.finish(&dir)
}

fn write_absence_csv<W: Write>(w: W, rows: &[(LanguageCode, AbsenceCounts)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "language",
        "all_present",
        "all_absent",
        "predicted_present",
        "predicted_absent",
        "all_absent_rate",
        "predicted_absent_rate",
    ])?;
    for (lang, c) in rows {
        out.write_record([
            lang.to_string(),
            c.all_present.to_string(),
            c.all_absent.to_string(),
            c.predicted_present.to_string(),
            c.predicted_absent.to_string(),
            sig6(c.all_absent_rate),
            if c.predicted_empty {
                "NA".to_owned()
            } else {
                sig6(c.predicted_absent_rate)
            },
        ])?;
    }
    out.flush().map_err(|e| Error::io("<absence_counts>", e))?;
    Ok(())
}

fn classify(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let d = load_dataset(cfg, ctx.out)?;
    let absent: Vec<FactRef> = read_jsonl(&stage_output(ctx.out, Stage::Trace, "predicted_absent.jsonl")?)?;
    let (table, inputs) = load_tokenization(cfg)?;
    let mut manifest = StageManifest::new(Stage::Classify.command(), cfg.snapshot());
    for (name, p) in &inputs {
        manifest.input(name, p)?;
    }
    let naming = NamingRelationList::new(cfg.naming_relations.iter().cloned())?;
    let relations: BTreeSet<&str> = d.triples.iter().map(|f| f.relation_id.as_str()).collect();
    for r in naming.unknown(&relations) {
        info!("naming relation {r} does not occur in the dataset");
    }

    let facts: HashMap<FactUid, &FactTriple> = d.triples.iter().map(|f| (f.uid, f)).collect();
    let targets: Vec<&FactTriple> = absent
        .iter()
        .map(|r| {
            facts
                .get(&r.uid)
                .copied()
                .ok_or_else(|| Error::contract(format!("traced fact {} is not in the dataset; rerun trace", r.uid)))
        })
        .collect::<Result<_>>()?;
    let classified: Vec<ClassifiedFact> = par::map(&targets, |f| ClassifiedFact {
        uid: f.uid,
        language: f.language.clone(),
        category: classify_fact(f, &naming, &table),
    });
    let counts = category_report(&classified, &d.languages);

    let dir = ctx.stage_dir(Stage::Classify)?;
    write_with(&dir.join("categories.jsonl"), |w| write_classified(w, &classified))?;
    write_with(&dir.join("category_counts.csv"), |w| write_category_csv(w, &counts))?;
    manifest.count("classified", classified.len());
    manifest.finish(&dir)
}

/// Records handed to scoring workers at a time.
const NEURON_BATCH: usize = 256;

fn open_dump(path: &Path, manifest: Option<&AdapterManifest>) -> Result<DumpReader<BufReader<File>>> {
    let reader = DumpReader::new(open(path)?)?;
    if let Some(m) = manifest {
        m.check_header(&reader.header())?;
    }
    Ok(reader)
}

struct ScoredFact {
    set: ActiveNeuronSet,
    heatmap: Vec<f64>,
}

fn neurons(ctx: &Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let d = load_dataset(cfg, ctx.out)?;
    let outcomes = load_outcomes(ctx.out)?;
    let dump_path = cfg.input(&cfg.adapter.activations, "activation dump")?;
    let mut manifest = StageManifest::new(Stage::Neurons.command(), cfg.snapshot());
    manifest.input("activations", &dump_path)?;
    let adapter_manifest = match &cfg.adapter.manifest {
        Some(_) => {
            let p = cfg.input(&cfg.adapter.manifest, "adapter manifest")?;
            manifest.input("adapter_manifest", &p)?;
            Some(serde_json::from_reader::<_, AdapterManifest>(open(&p)?)?)
        }
        None => None,
    };

    let primary = cfg.protocol.primary();
    let p1: Vec<(LanguageCode, f64)> = precision_table(&outcomes, &[primary])?
        .into_iter()
        .map(|r| (r.language, r.p_at_1))
        .collect();
    let languages = {
        let mut l = top_languages(&p1, cfg.top_n_languages);
        l.sort();
        l
    };
    let keep: BTreeSet<&LanguageCode> = languages.iter().collect();
    let correct: BTreeSet<FactUid> = outcomes
        .iter()
        .filter(|o| o.correct(primary) && keep.contains(&o.language))
        .map(|o| o.uid)
        .collect();
    let facts: HashMap<FactUid, &FactTriple> = d.triples.iter().map(|f| (f.uid, f)).collect();
    let eligible = |r: &ActivationRecord| -> Option<&FactTriple> {
        if !correct.contains(&r.uid) {
            return None;
        }
        facts.get(&r.uid).copied().filter(|f| f.language == r.language)
    };

    // Pass 1: per (relation, language) sums over correct facts.
    let mut reader = open_dump(&dump_path, adapter_manifest.as_ref())?;
    let header = reader.header();
    let (n_layers, ffn_dim) = (header.n_layers as usize, header.ffn_dim as usize);
    if cfg.bins > ffn_dim {
        return Err(Error::Config(format!("bins ({}) exceeds the FFN width {ffn_dim}", cfg.bins)));
    }
    let mut cohorts: HashMap<(String, LanguageCode), CohortSums> = HashMap::new();
    let mut seen = BTreeSet::new();
    for rec in &mut reader {
        let rec = rec?;
        let Some(f) = eligible(&rec) else { continue };
        if !seen.insert(rec.uid) {
            return Err(Error::Dump(format!("fact {} appears twice in the activation dump", rec.uid)));
        }
        cohorts
            .entry((f.relation_id.clone(), f.language.clone()))
            .or_insert_with(|| CohortSums::new(n_layers, ffn_dim))
            .add(&rec.values)?;
    }
    let missing = correct.len() - seen.len();
    if missing > 0 {
        warn!("{missing} correctly predicted fact(s) have no activations");
    }

    // Pass 2: score each fact against its leave-one-out cohort mean.
    let score = |rec: &ActivationRecord| -> Result<Option<ScoredFact>> {
        let Some(f) = eligible(rec) else { return Ok(None) };
        let sums = &cohorts[&(f.relation_id.clone(), f.language.clone())];
        let mean = match sums.leave_one_out_mean(rec) {
            Ok(m) => m,
            Err(Error::InsufficientCohort { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let scores = activity_scores(&rec.values, &mean)?;
        let neurons = top_k_neurons(&scores, cfg.top_k)?;
        let heat = bin_heatmap(&scores, cfg.bins)?;
        Ok(Some(ScoredFact {
            set: ActiveNeuronSet {
                uid: rec.uid,
                fact: f.fact_key.clone(),
                language: rec.language.clone(),
                neurons,
            },
            heatmap: heat.values,
        }))
    };
    let mut scored: Vec<ScoredFact> = Vec::new();
    let mut batch: Vec<ActivationRecord> = Vec::with_capacity(NEURON_BATCH);
    let flush = |batch: &mut Vec<ActivationRecord>, scored: &mut Vec<ScoredFact>| -> Result<()> {
        for r in par::map(batch, |r| score(r)) {
            if let Some(s) = r? {
                scored.push(s);
            }
        }
        batch.clear();
        Ok(())
    };
    for rec in open_dump(&dump_path, adapter_manifest.as_ref())? {
        let rec = rec?;
        if eligible(&rec).is_none() {
            continue;
        }
        batch.push(rec);
        if batch.len() == NEURON_BATCH {
            flush(&mut batch, &mut scored)?;
        }
    }
    flush(&mut batch, &mut scored)?;
    let insufficient = seen.len() - scored.len();
    if insufficient > 0 {
        warn!("{insufficient} fact(s) skipped: fewer than two facts share their relation and language");
    }

    // Per-language mean heatmap, summed in dump order.
    let cells = n_layers * cfg.bins;
    let mut heat_sum: BTreeMap<&LanguageCode, (Vec<f64>, usize)> = BTreeMap::new();
    for s in &scored {
        let e = heat_sum.entry(&s.set.language).or_insert_with(|| (vec![0.0; cells], 0));
        for (acc, v) in e.0.iter_mut().zip(&s.heatmap) {
            *acc += v;
        }
        e.1 += 1;
    }

    let sets: Vec<ActiveNeuronSet> = scored.iter().map(|s| s.set.clone()).collect();
    let pairs = pairwise_fact_jaccards(&sets, &languages)?;
    let matrix = language_similarity_matrix(&pairs, &languages);

    let dir = ctx.stage_dir(Stage::Neurons)?;
    write_jsonl(&dir.join("active_neurons.jsonl"), &sets)?;
    write_with(&dir.join("neuron_similarity.csv"), |w| matrix.write_csv(w))?;
    write_with(&dir.join("heatmap.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["language", "layer", "bin", "value"])?;
        for (lang, (sum, n)) in &heat_sum {
            for l in 0..n_layers {
                for b in 0..cfg.bins {
                    out.write_record([
                        lang.to_string(),
                        l.to_string(),
                        b.to_string(),
                        sig6(sum[l * cfg.bins + b] / *n as f64),
                    ])?;
                }
            }
        }
        out.flush().map_err(|e| Error::io("<heatmap>", e))
    })?;
    manifest.count("languages", languages.len());
    manifest.count("eligible_facts", correct.len());
    manifest.count("missing_activations", missing);
    manifest.count("insufficient_cohort", insufficient);
    manifest.count("scored_facts", scored.len());
    manifest.finish(&dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.command().parse::<Stage>().unwrap(), s);
        }
        assert!("pipeline".parse::<Stage>().is_err());
    }

    #[test]
    fn missing_stage_output_names_the_module() {
        let dir = tempfile::tempdir().unwrap();
        let err = stage_output(dir.path(), Stage::Trace, "traces.jsonl").unwrap_err();
        assert!(matches!(&err, Error::MissingStage(m) if m == "corpus-tracer"));
        assert!(err.to_string().contains("corpus-tracer"));
    }

    #[test]
    fn later_stage_before_ingest_is_a_missing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            out: Some(dir.path().to_owned()),
            ..RunConfig::default()
        };
        let err = run_stage(Some(Stage::GenQueries), &cfg).unwrap_err();
        assert!(err.is_missing_dependency(), "{err}");
    }

    #[test]
    fn absence_csv_writes_na_for_empty_prediction_set() {
        let c = AbsenceCounts {
            all_present: 1,
            all_absent: 1,
            predicted_present: 0,
            predicted_absent: 0,
            all_absent_rate: 0.5,
            predicted_absent_rate: 0.0,
            predicted_empty: true,
        };
        let mut buf = Vec::new();
        write_absence_csv(&mut buf, &[(LanguageCode::new("en").unwrap(), c)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "en,1,1,0,0,0.5,NA");
    }
}
