//! Stage runners. Each stage reads its inputs from the config and earlier
//! stage directories under the output root, and writes its own directory
//! with a `manifest.json`.

pub mod config;
pub mod manifest;
pub mod stages;

pub use config::{ProtocolChoice, RunConfig};
pub use manifest::{sha256_file, sha256_path, StageManifest};
pub use stages::{run_stage, Stage};
