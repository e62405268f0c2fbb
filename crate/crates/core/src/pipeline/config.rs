use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::Protocol;
use crate::model::LanguageCode;
use crate::neurons::{DEFAULT_BINS, DEFAULT_TOP_K};
use crate::prompt::DEFAULT_MASK;
use crate::tracer::DEFAULT_MAX_TOKENS;

pub const DEFAULT_TOP_N_LANGUAGES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolChoice {
    #[default]
    Full,
    Partial,
    Both,
}

impl ProtocolChoice {
    /// Protocols reported in P@1 tables.
    pub fn reported(self) -> Vec<Protocol> {
        match self {
            ProtocolChoice::Full => vec![Protocol::Full],
            ProtocolChoice::Partial => vec![Protocol::Partial],
            ProtocolChoice::Both => vec![Protocol::Full, Protocol::Partial],
        }
    }

    /// Protocol that defines the predictable-fact sets used downstream.
    pub fn primary(self) -> Protocol {
        match self {
            ProtocolChoice::Partial => Protocol::Partial,
            _ => Protocol::Full,
        }
    }
}

impl std::str::FromStr for ProtocolChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ProtocolChoice::Full),
            "partial" => Ok(ProtocolChoice::Partial),
            "both" => Ok(ProtocolChoice::Both),
            _ => Err(Error::Config(format!("unknown protocol {s:?} (expected full, partial or both)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPaths {
    pub triples: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    /// mLAMA-style directory; used when `triples` is not set.
    pub mlama_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterPaths {
    pub tokenization: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub activations: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    /// Directory holding one sub-directory of extracted text per language.
    pub root: Option<PathBuf>,
    pub presegmented: bool,
    pub stats: Option<PathBuf>,
}

/// Everything a run needs. Relative paths resolve against `base_dir`
/// (the config file's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub languages: Vec<LanguageCode>,
    pub protocol: ProtocolChoice,
    pub top_k: usize,
    pub bins: usize,
    pub max_tokens: usize,
    pub top_n_languages: usize,
    /// Worker threads, 0 for all cores. Not part of the snapshot: results
    /// do not depend on it.
    #[serde(skip_serializing)]
    pub jobs: usize,
    pub mask_token: String,
    pub word_boundary: bool,
    pub naming_relations: Vec<String>,
    pub dataset: DatasetPaths,
    pub adapter: AdapterPaths,
    pub corpus: CorpusPaths,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            languages: Vec::new(),
            protocol: ProtocolChoice::Full,
            top_k: DEFAULT_TOP_K,
            bins: DEFAULT_BINS,
            max_tokens: DEFAULT_MAX_TOKENS,
            top_n_languages: DEFAULT_TOP_N_LANGUAGES,
            jobs: 0,
            mask_token: DEFAULT_MASK.to_owned(),
            word_boundary: false,
            naming_relations: ["P103", "P17", "P140", "P1412", "P27"].into_iter().map(String::from).collect(),
            dataset: DatasetPaths::default(),
            adapter: AdapterPaths::default(),
            corpus: CorpusPaths::default(),
            out: None,
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_owned();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        if self.top_n_languages == 0 {
            return Err(Error::Config("top_n_languages must be at least 1".into()));
        }
        if self.mask_token.is_empty() {
            return Err(Error::Config("mask_token is empty".into()));
        }
        if self.naming_relations.is_empty() {
            return Err(Error::Config("naming_relations is empty".into()));
        }
        Ok(())
    }

    /// Resolves a configured path against the config directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolves a required input path and checks that it exists.
    pub fn input(&self, p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let p = p
            .as_ref()
            .ok_or_else(|| Error::Dependency(format!("{what} path is not configured")))?;
        let full = self.resolve(p);
        if !full.exists() {
            return Err(Error::Dependency(format!("{what} {} does not exist", full.display())));
        }
        Ok(full)
    }

    pub fn out_root(&self) -> Result<PathBuf> {
        let out = self
            .out
            .clone()
            .or_else(|| std::env::var_os("FACTRACE_OUT").map(PathBuf::from))
            .ok_or_else(|| Error::Config("no output directory (use --out, `out` in the config, or FACTRACE_OUT)".into()))?;
        Ok(if out.is_absolute() { out } else { self.resolve(&out) })
    }

    /// Config as recorded in stage manifests (output root excluded).
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.top_k, 50);
        assert_eq!(c.bins, 16);
        assert_eq!(c.max_tokens, 512);
        assert_eq!(c.top_n_languages, 30);
        assert_eq!(c.protocol.primary(), Protocol::Full);
    }

    #[test]
    fn parses_toml_and_rejects_unknown_keys() {
        let c = RunConfig::from_toml(
            "languages = [\"en\", \"de\"]\nprotocol = \"both\"\ntop_k = 5\n[corpus]\nroot = \"corpus\"\n",
            Path::new("/tmp/x"),
        )
        .unwrap();
        assert_eq!(c.languages.len(), 2);
        assert_eq!(c.protocol, ProtocolChoice::Both);
        assert_eq!(c.resolve(c.corpus.root.as_ref().unwrap()), PathBuf::from("/tmp/x/corpus"));
        assert!(RunConfig::from_toml("nonsense = 1\n", Path::new(".")).is_err());
        assert!(RunConfig::from_toml("languages = [\"EN\"]\n", Path::new(".")).is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.top_k = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn snapshot_omits_output_root() {
        let mut c = RunConfig::default();
        c.out = Some("/somewhere".into());
        let snap = c.snapshot();
        assert!(snap.get("out").is_none());
        assert!(snap.get("base_dir").is_none());
        assert!(snap.get("jobs").is_none());
    }
}
