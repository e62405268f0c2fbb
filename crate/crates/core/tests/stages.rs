use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use factrace_core::pipeline::{run_stage, RunConfig, Stage};
use factrace_core::Error;

fn config(out: &Path) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/config.toml");
    let mut cfg = RunConfig::load(&path).unwrap();
    cfg.out = Some(out.to_owned());
    cfg
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(root).unwrap().to_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn pipeline_equals_stages_run_one_by_one() {
    let whole = tempfile::tempdir().unwrap();
    run_stage(None, &config(whole.path())).unwrap();

    let split = tempfile::tempdir().unwrap();
    let cfg = config(split.path());
    for stage in Stage::ALL {
        run_stage(Some(stage), &cfg).unwrap();
    }
    let (a, b) = (tree(whole.path()), tree(split.path()));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(b[k] == *v, "{} differs", k.display());
    }
    for stage in Stage::ALL {
        assert!(a.contains_key(&Path::new(stage.dir()).join("manifest.json")));
    }
}

#[test]
fn stages_refuse_to_run_without_upstream() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config(out.path());
    for stage in &Stage::ALL[1..] {
        match run_stage(Some(*stage), &cfg) {
            Err(Error::MissingStage(m)) => assert!(!m.is_empty()),
            other => panic!("{stage:?} on empty out: {other:?}"),
        }
        assert!(!out.path().join(stage.dir()).join("manifest.json").exists());
    }
}

#[test]
fn manifests_record_hashes_of_their_outputs() {
    let out = tempfile::tempdir().unwrap();
    run_stage(None, &config(out.path())).unwrap();
    for stage in Stage::ALL {
        let dir = out.path().join(stage.dir());
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        let outputs = m["outputs"].as_object().unwrap();
        assert!(!outputs.is_empty(), "{:?}", stage);
        for (name, hash) in outputs {
            let got = factrace_core::pipeline::sha256_file(&dir.join(name)).unwrap();
            assert_eq!(hash.as_str().unwrap(), got);
        }
        assert!(m["config"].get("out").is_none());
        assert!(m["config"].get("jobs").is_none());
    }
}
