use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Written as `manifest.json` in every stage directory. Holds no timestamps
/// or absolute output paths so reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    /// Input name -> sha256 hex.
    pub inputs: BTreeMap<String, String>,
    /// Output file name -> sha256 hex.
    pub outputs: BTreeMap<String, String>,
    /// Stage-specific counters (skipped facts and the like).
    pub counts: BTreeMap<String, u64>,
    pub config: serde_json::Value,
}

impl StageManifest {
    pub fn new(stage: &str, config: serde_json::Value) -> Self {
        StageManifest {
            stage: stage.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            config,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.to_owned(), sha256_path(path)?);
        Ok(())
    }

    pub fn count(&mut self, name: &str, n: usize) {
        self.counts.insert(name.to_owned(), n as u64);
    }

    /// Hashes every regular file in `dir` except the manifest itself and
    /// writes `dir/manifest.json`.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != "manifest.json" && entry.path().is_file() {
                names.push(name);
            }
        }
        names.sort();
        for name in names {
            self.outputs.insert(name.clone(), sha256_file(&dir.join(&name))?);
        }
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// File hash, or for a directory a hash over its sorted relative paths and
/// file hashes.
pub fn sha256_path(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut entries = Vec::new();
    for e in walkdir::WalkDir::new(path).sort_by_file_name() {
        let e = e.map_err(|e| Error::Dependency(format!("cannot walk {}: {e}", path.display())))?;
        if e.file_type().is_file() {
            let rel = e.path().strip_prefix(path).unwrap_or(e.path());
            let rel = rel.to_string_lossy().replace('\\', "/");
            entries.push((rel, sha256_file(e.path())?));
        }
    }
    let mut h = Sha256::new();
    for (rel, digest) in entries {
        h.update(rel.as_bytes());
        h.update([0u8]);
        h.update(digest.as_bytes());
        h.update([b'\n']);
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn directory_hash_depends_on_names_and_contents() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("en")).unwrap();
        std::fs::write(dir.path().join("en/a.txt"), "x").unwrap();
        let h1 = sha256_path(dir.path()).unwrap();
        assert_eq!(h1, sha256_path(dir.path()).unwrap());
        std::fs::write(dir.path().join("en/a.txt"), "y").unwrap();
        let h2 = sha256_path(dir.path()).unwrap();
        assert_ne!(h1, h2);
        std::fs::rename(dir.path().join("en/a.txt"), dir.path().join("en/b.txt")).unwrap();
        assert_ne!(h2, sha256_path(dir.path()).unwrap());
    }

    #[test]
    fn manifest_lists_outputs_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("z.csv"), "1").unwrap();
        std::fs::write(dir.path().join("a.csv"), "2").unwrap();
        let mut m = StageManifest::new("evaluate", serde_json::json!({}));
        m.count("skipped", 3);
        m.finish(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let back: StageManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.outputs.keys().collect::<Vec<_>>(), ["a.csv", "z.csv"]);
        assert_eq!(back.counts["skipped"], 3);
        assert!(text.find("a.csv").unwrap() < text.find("z.csv").unwrap());
    }
}
