//! Output files and the sidecar manifests that record seed and version.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const TOOL: &str = "tastenet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct FileEntry {
    /// What the file is for, e.g. `performance` or `network`.
    pub kind: String,
    pub path: String,
    pub parameters: Value,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub parameters: Value,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, parameters: Value) -> Self {
        Manifest {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seed,
            parameters,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, kind: &str, path: &Path, parameters: Value) {
        self.files.push(FileEntry {
            kind: kind.to_string(),
            path: path.display().to_string(),
            parameters,
        });
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_text(path, &(serde_json::to_string_pretty(self)? + "\n"))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// `<file>.manifest.json` next to `file`.
pub fn sidecar(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

/// Compact label for a float in file names: `1`, `0.5` -> `0p5`.
pub fn num_label(x: f64) -> String {
    x.to_string().replace('.', "p").replace('-', "m")
}

pub fn safe_label(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
