//! Regenerates the bundled fixture under `crates/core/fixtures` (or the
//! directory given as the first argument). Output is a pure function of
//! the seed below.
//!
//!     cargo run -p factrace-core --example make_fixture

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use factrace_core::matching::{write_predictions, PredictionRecord};
use factrace_core::model::{write_templates, write_triples, FactKey, FactTriple, LanguageCode, RelationTemplate, TokenizationTable};
use factrace_core::neurons::{AdapterManifest, DumpHeader, DumpWriter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5eed_f0c7;
const LANGS: [&str; 4] = ["en", "de", "fr", "zh"];
const N_LAYERS: u16 = 4;
const FFN_DIM: u32 = 64;

/// Chance that a fact is predicted correctly, per language.
const ACCURACY: [f64; 4] = [0.75, 0.55, 0.5, 0.3];
/// Chance that a fact co-occurs in the language's corpus.
const COVERAGE: [f64; 4] = [0.8, 0.6, 0.65, 0.4];

struct Relation {
    id: &'static str,
    templates: [&'static str; 4],
    /// (subject labels, object labels) per language.
    facts: Vec<([&'static str; 4], [&'static str; 4])>,
}

fn same(s: &'static str) -> [&'static str; 4] {
    [s, s, s, s]
}

const CITIES: [[&str; 4]; 10] = [
    ["Berlin", "Berlin", "Berlin", "柏林"],
    ["Rome", "Rom", "Rome", "罗马"],
    ["Paris", "Paris", "Paris", "巴黎"],
    ["Vienna", "Wien", "Vienne", "维也纳"],
    ["London", "London", "Londres", "伦敦"],
    ["Madrid", "Madrid", "Madrid", "马德里"],
    ["Prague", "Prag", "Prague", "布拉格"],
    ["Warsaw", "Warschau", "Varsovie", "华沙"],
    ["Lisbon", "Lissabon", "Lisbonne", "里斯本"],
    ["Athens", "Athen", "Athènes", "雅典"],
];

const COUNTRIES: [[&str; 4]; 10] = [
    ["Germany", "Deutschland", "Allemagne", "德国"],
    ["Italy", "Italien", "Italie", "意大利"],
    ["France", "Frankreich", "France", "法国"],
    ["Austria", "Österreich", "Autriche", "奥地利"],
    ["United Kingdom", "Vereinigtes Königreich", "Royaume-Uni", "英国"],
    ["Spain", "Spanien", "Espagne", "西班牙"],
    ["Czechia", "Tschechien", "Tchéquie", "捷克"],
    ["Poland", "Polen", "Pologne", "波兰"],
    ["Portugal", "Portugal", "Portugal", "葡萄牙"],
    ["Greece", "Griechenland", "Grèce", "希腊"],
];

const LANGUAGES: [[&str; 4]; 8] = [
    ["French", "Französisch", "français", "法语"],
    ["German", "Deutsch", "allemand", "德语"],
    ["Italian", "Italienisch", "italien", "意大利语"],
    ["Spanish", "Spanisch", "espagnol", "西班牙语"],
    ["English", "Englisch", "anglais", "英语"],
    ["Polish", "Polnisch", "polonais", "波兰语"],
    ["Greek", "Griechisch", "grec", "希腊语"],
    ["Portuguese", "Portugiesisch", "portugais", "葡萄牙语"],
];

fn relations() -> Vec<Relation> {
    let people = [
        "Anna Keller",
        "Marco Ricci",
        "Louis Durand",
        "Franz Huber",
        "Emily Clarke",
        "Carlos Ortega",
        "Jan Dvořák",
        "Piotr Nowak",
        "João Silva",
        "Nikos Pappas",
    ];
    let speakers = [
        "Jean Moreau",
        "Klaus Becker",
        "Giulia Romano",
        "Lucía Fernández",
        "Oliver Bennett",
        "Agnieszka Kowalska",
        "Eleni Georgiou",
        "Rui Costa",
    ];
    let products = [
        ("Nokia X", "Nokia"),
        ("Honda Express", "Honda"),
        ("Sony Alpha 99", "Sony"),
        ("BMW N52", "BMW"),
        ("Cadillac Series 60", "Cadillac"),
        ("Toyota Corolla", "Toyota"),
        ("Canon EOS 5D", "Canon"),
        ("Boeing 747", "Boeing"),
    ];
    vec![
        Relation {
            id: "P19",
            templates: ["[X] was born in [Y] .", "[X] wurde in [Y] geboren .", "[X] est né à [Y] .", "[X]出生于[Y]。"],
            facts: people.iter().zip(CITIES).map(|(p, c)| (same(p), c)).collect(),
        },
        Relation {
            id: "P103",
            templates: [
                "The native language of [X] is [Y] .",
                "Die Muttersprache von [X] ist [Y] .",
                "La langue maternelle de [X] est le [Y] .",
                "[X]的母语是[Y]。",
            ],
            facts: speakers.iter().zip(LANGUAGES).map(|(p, l)| (same(p), l)).collect(),
        },
        Relation {
            id: "P36",
            templates: [
                "The capital of [X] is [Y] .",
                "Die Hauptstadt von [X] ist [Y] .",
                "La capitale de [X] est [Y] .",
                "[X]的首都是[Y]。",
            ],
            facts: COUNTRIES.into_iter().zip(CITIES).map(|(c, city)| (c, city)).collect(),
        },
        Relation {
            id: "P176",
            templates: [
                "[X] is produced by [Y] .",
                "[X] wird von [Y] hergestellt .",
                "[X] est produit par [Y] .",
                "[X]是由[Y]生产的。",
            ],
            facts: products.iter().map(|(p, m)| (same(p), same(m))).collect(),
        },
    ]
}

/// Toy subword tokenizer: CJK characters are single tokens; longer Latin
/// words split into a 4-character head and a `##` tail.
fn tokenize(label: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in label.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        if chars.iter().any(|c| ('\u{4e00}'..='\u{9fff}').contains(c)) {
            out.extend(chars.iter().map(|c| c.to_string()));
        } else if chars.len() <= 5 {
            out.push(word.to_owned());
        } else {
            out.push(chars[..4].iter().collect());
            out.push(format!("##{}", chars[4..].iter().collect::<String>()));
        }
    }
    out
}

struct Fact {
    triple: FactTriple,
    lang_idx: usize,
    rel_idx: usize,
    fact_idx: usize,
}

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    if dir.exists() {
        fs::remove_dir_all(&dir).expect("clear fixture dir");
    }
    fs::create_dir_all(&dir).expect("create fixture dir");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let rels = relations();
    let langs: Vec<LanguageCode> = LANGS.iter().map(|l| LanguageCode::new(*l).unwrap()).collect();

    // Dataset.
    let mut templates = Vec::new();
    let mut facts = Vec::new();
    for (ri, rel) in rels.iter().enumerate() {
        for (li, lang) in langs.iter().enumerate() {
            templates.push(RelationTemplate::new(rel.id, lang.clone(), rel.templates[li]).unwrap());
            for (fi, (sub, obj)) in rel.facts.iter().enumerate() {
                let key = FactKey(format!("{}-{:02}", rel.id, fi));
                facts.push(Fact {
                    triple: FactTriple::new(rel.id, lang.clone(), sub[li], obj[li], Some(key)),
                    lang_idx: li,
                    rel_idx: ri,
                    fact_idx: fi,
                });
            }
        }
    }
    let triples: Vec<FactTriple> = facts.iter().map(|f| f.triple.clone()).collect();
    write_triples(BufWriter::new(fs::File::create(dir.join("triples.jsonl")).unwrap()), &triples).unwrap();
    write_templates(BufWriter::new(fs::File::create(dir.join("templates.jsonl")).unwrap()), &templates).unwrap();

    // Tokenization of every entity label, plus the vocabulary.
    let mut entries = BTreeMap::new();
    for f in &facts {
        for label in [&f.triple.subject_label, &f.triple.object_label] {
            entries.insert((f.triple.language.clone(), label.clone()), tokenize(label));
        }
    }
    let extras = ["(", ")", ",", "the", "der", "le", "的"];
    let mut vocab: BTreeSet<String> = entries.values().flatten().cloned().collect();
    vocab.extend(extras.iter().map(|s| s.to_string()));
    let table = TokenizationTable::new(entries, vocab.clone()).unwrap();
    table.write(BufWriter::new(fs::File::create(dir.join("tokenization.jsonl")).unwrap())).unwrap();
    let mut vtext = String::new();
    for t in &vocab {
        writeln!(vtext, "{t}").unwrap();
    }
    fs::write(dir.join("vocab.txt"), vtext).unwrap();

    // Longest object per (relation, language), as the planner computes it.
    let mut max_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for f in &facts {
        let n = tokenize(&f.triple.object_label).len();
        let e = max_count.entry((f.rel_idx, f.lang_idx)).or_insert(0);
        *e = (*e).max(n);
    }

    // Predictions. A fact's latent difficulty is shared across languages so
    // predictable-fact sets overlap.
    let difficulty: BTreeMap<(usize, usize), f64> = rels
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| (0..r.facts.len()).map(move |fi| (ri, fi)))
        .map(|k| (k, rng.random::<f64>()))
        .collect();
    let mut records = Vec::new();
    for f in &facts {
        let gold = tokenize(&f.triple.object_label);
        let pool: Vec<String> = facts
            .iter()
            .filter(|g| g.rel_idx == f.rel_idx && g.lang_idx == f.lang_idx && g.fact_idx != f.fact_idx)
            .flat_map(|g| tokenize(&g.triple.object_label))
            .collect();
        let u = 0.65 * difficulty[&(f.rel_idx, f.fact_idx)] + 0.35 * rng.random::<f64>();
        let full = u < ACCURACY[f.lang_idx];
        let max = max_count[&(f.rel_idx, f.lang_idx)];
        // Partial-only hits: gold surrounded by an extra token in a longer variant.
        let partial_at = if !full && gold.len() < max && rng.random::<f64>() < 0.35 {
            Some(gold.len() + 1)
        } else {
            None
        };
        for n in 1..=max {
            let top1: Vec<String> = if full && n == gold.len() {
                gold.clone()
            } else if partial_at == Some(n) {
                let mut v = gold.clone();
                let extra = extras[rng.random_range(0..3)].to_owned();
                if rng.random::<bool>() {
                    v.push(extra);
                } else {
                    v.insert(0, extra);
                }
                v
            } else {
                let mut v: Vec<String> = (0..n).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
                if v == gold {
                    v[0] = "the".into();
                }
                v
            };
            let positions = top1
                .into_iter()
                .map(|t| {
                    let s1 = 0.4 + 0.5 * rng.random::<f64>();
                    let s2 = s1 * rng.random::<f64>();
                    let s3 = s2 * rng.random::<f64>();
                    let mut cands = vec![(t.clone(), s1)];
                    for s in [s2, s3] {
                        let mut c = pool[rng.random_range(0..pool.len())].clone();
                        if c == t {
                            c = extras[3].to_owned();
                        }
                        cands.push((c, s));
                    }
                    cands
                })
                .collect();
            records.push(PredictionRecord::new(f.triple.uid, f.triple.language.clone(), positions).unwrap());
        }
    }
    write_predictions(BufWriter::new(fs::File::create(dir.join("predictions.jsonl")).unwrap()), &records).unwrap();

    // Activations: noise, a per-relation pattern (removed by the cohort
    // mean), a per-fact pattern shared across languages, and a per-language
    // pattern. The lowest-accuracy language gets extra shallow-layer noise.
    let cells = N_LAYERS as usize * FFN_DIM as usize;
    let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> { (0..n).map(|_| rng.random_range(0..cells)).collect() };
    let rel_pattern: Vec<Vec<usize>> = rels.iter().map(|_| pick(&mut rng, 6)).collect();
    let lang_pattern: Vec<Vec<usize>> = LANGS.iter().map(|_| pick(&mut rng, 4)).collect();
    let fact_pattern: BTreeMap<(usize, usize), Vec<usize>> = difficulty.keys().map(|k| (*k, pick(&mut rng, 8))).collect();
    let header = DumpHeader::new(N_LAYERS, FFN_DIM);
    let mut dump = DumpWriter::new(BufWriter::new(fs::File::create(dir.join("activations.fatr")).unwrap()), header).unwrap();
    for f in &facts {
        let mut v: Vec<f32> = (0..cells)
            .map(|i| {
                let scale = if f.lang_idx == 3 && i < FFN_DIM as usize { 1.5 } else { 0.5 };
                (scale * (rng.random::<f64>() + rng.random::<f64>() - 1.0)) as f32
            })
            .collect();
        for &i in &rel_pattern[f.rel_idx] {
            v[i] += 5.0;
        }
        for &i in &lang_pattern[f.lang_idx] {
            v[i] += 2.5;
        }
        for &i in &fact_pattern[&(f.rel_idx, f.fact_idx)] {
            v[i] += 3.0 + rng.random::<f32>();
        }
        dump.write_record(&f.triple.uid, &f.triple.language, &v).unwrap();
    }
    dump.finish().unwrap();
    let manifest = AdapterManifest {
        model: "fixture-synthetic".into(),
        n_layers: N_LAYERS,
        ffn_dim: FFN_DIM,
        mask_token: "[MASK]".into(),
        vocab_size: vocab.len(),
        format_version: header.version,
    };
    fs::write(
        dir.join("adapter_manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap() + "\n",
    )
    .unwrap();

    // Corpus: one extracted-text file per language, WikiExtractor layout.
    let filler = [
        "The weather was mild that year.",
        "Die Sitzung wurde vertagt.",
        "Le marché ouvre à huit heures.",
        "这座城市有很多公园。",
    ];
    for (li, lang) in LANGS.iter().enumerate() {
        let mut text = String::new();
        let mut doc = 0;
        for f in facts.iter().filter(|f| f.lang_idx == li) {
            let t = &f.triple;
            let body = if rng.random::<f64>() < COVERAGE[li] {
                let tpl = rels[f.rel_idx].templates[li];
                format!("{} {}", tpl.replace("[X]", &t.subject_label).replace("[Y]", &t.object_label), filler[li])
            } else if t.subject_label.contains(t.object_label.as_str()) {
                // Any subject mention would also mention the object.
                filler[li].to_owned()
            } else {
                // Subject and object never share a passage.
                format!("{} {}", t.subject_label, filler[li])
            };
            doc += 1;
            writeln!(text, "<doc id=\"{doc}\" url=\"\" title=\"{}\">", t.subject_label).unwrap();
            writeln!(text, "{}\n{body}\n</doc>", t.subject_label).unwrap();
        }
        let d = dir.join("corpus").join(lang).join("AA");
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join("wiki_00"), text).unwrap();
    }

    // Corpus inventory, loosely tracking accuracy.
    let mut stats = String::from(
        "language,page_count,bytes_articles,bytes_articles_compressed,bytes_abstracts,bytes_abstracts_compressed\n",
    );
    for (li, lang) in LANGS.iter().enumerate() {
        let pages = (ACCURACY[li] * 4_000_000.0 * (0.8 + 0.4 * rng.random::<f64>())) as u64;
        let articles = pages * rng.random_range(2_000..4_000);
        let abstracts = pages * rng.random_range(150..400);
        writeln!(
            stats,
            "{lang},{pages},{articles},{},{abstracts},{}",
            articles / rng.random_range(3..6),
            abstracts / rng.random_range(3..6)
        )
        .unwrap();
    }
    fs::write(dir.join("corpus_stats.csv"), stats).unwrap();

    fs::write(
        dir.join("config.toml"),
        r#"languages = ["de", "en", "fr", "zh"]
protocol = "both"
top_k = 10
bins = 16
max_tokens = 64
top_n_languages = 30

[dataset]
triples = "triples.jsonl"
templates = "templates.jsonl"

[adapter]
tokenization = "tokenization.jsonl"
vocabulary = "vocab.txt"
predictions = "predictions.jsonl"
activations = "activations.fatr"
manifest = "adapter_manifest.json"

[corpus]
root = "corpus"
stats = "corpus_stats.csv"
"#,
    )
    .unwrap();
    println!("fixture written to {}", dir.display());
}
