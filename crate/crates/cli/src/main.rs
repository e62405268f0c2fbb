use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factrace_core::model::LanguageCode;
use factrace_core::pipeline::{run_stage, ProtocolChoice, RunConfig, Stage};
use factrace_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_MISSING: u8 = 3;

/// Config file looked up in the working directory when `--config` is absent.
const DEFAULT_CONFIG: &str = "factrace.toml";

#[derive(Parser, Debug)]
#[command(name = "factrace", version, about = "Trace multilingual factual predictions back to data and neurons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Validate and normalize the fact dataset.
    Ingest,
    /// Render cloze queries for the model adapter.
    GenQueries,
    /// Score the prediction dump under full and partial match.
    Evaluate,
    /// Search the corpus for subject/object co-occurrence.
    Trace,
    /// Categorize predictable facts that are absent from the corpus.
    Classify,
    /// Find active neurons and cross-language overlap.
    Neurons,
    /// Write the report bundle.
    Report,
    /// Run every stage in order.
    Pipeline,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Restrict to a language; repeatable.
    #[arg(long = "lang", global = true, value_name = "CODE")]
    langs: Vec<String>,
    #[arg(long, global = true, value_name = "full|partial|both")]
    protocol: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    top_k: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    bins: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    max_tokens: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output root; falls back to FACTRACE_OUT.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        match self {
            Command::Ingest => Some(Stage::Ingest),
            Command::GenQueries => Some(Stage::GenQueries),
            Command::Evaluate => Some(Stage::Evaluate),
            Command::Trace => Some(Stage::Trace),
            Command::Classify => Some(Stage::Classify),
            Command::Neurons => Some(Stage::Neurons),
            Command::Report => Some(Stage::Report),
            Command::Pipeline => None,
        }
    }
}

fn load_config(o: &Overrides) -> factrace_core::Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None if std::path::Path::new(DEFAULT_CONFIG).is_file() => RunConfig::load(std::path::Path::new(DEFAULT_CONFIG))?,
        None => RunConfig::default(),
    };
    if !o.langs.is_empty() {
        cfg.languages = o
            .langs
            .iter()
            .map(|l| LanguageCode::new(l.as_str()).map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    if let Some(p) = &o.protocol {
        cfg.protocol = p.parse::<ProtocolChoice>()?;
    }
    if let Some(k) = o.top_k {
        cfg.top_k = k;
    }
    if let Some(b) = o.bins {
        cfg.bins = b;
    }
    if let Some(m) = o.max_tokens {
        cfg.max_tokens = m;
    }
    if let Some(j) = o.jobs {
        cfg.jobs = j;
    }
    if let Some(out) = &o.out {
        // Flag paths are relative to the working directory, not the config.
        cfg.out = Some(std::path::absolute(out).unwrap_or_else(|_| out.clone()));
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        e if e.is_missing_dependency() => EXIT_MISSING,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = load_config(&cli.opts).and_then(|cfg| run_stage(cli.command.stage(), &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
