use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::failure::Failure;

/// Record of one command invocation, written next to its primary output
/// before any heavy computation starts.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    /// Every flag as parsed, plus any resolved configuration.
    pub config: Value,
    pub seed: Option<u64>,
    pub code_version: &'static str,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &'static str, config: impl Serialize, seed: Option<u64>) -> Self {
        RunManifest {
            command,
            config: serde_json::to_value(config).expect("flags serialize"),
            seed,
            code_version: env!("CARGO_PKG_VERSION"),
            outputs: Vec::new(),
        }
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    /// Write beside `primary` as `<primary>.manifest.json`; returns the file name
    /// that outputs embed to reference it.
    pub fn write(&self, primary: &Path) -> Result<String, Failure> {
        let path = path_for(primary);
        write_json(&path, self)?;
        Ok(path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default())
    }
}

pub fn path_for(primary: &Path) -> PathBuf {
    let mut name: OsString = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).expect("outputs serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}
