//! The `run.json` record written next to every command's outputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argv; replaying it reproduces the outputs.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub jobs: usize,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// `None` on success, otherwise the error message.
    pub error: Option<String>,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> tspfcn::Result<()> {
        tspfcn::eval::write_json(&dir.join(RUN_MANIFEST), self)
    }
}
