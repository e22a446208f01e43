//! Deterministic artifact emission.
//!
//! Everything written to disk must be a pure function of config and seed, so
//! the writers here format floats with the shortest round-trip notation and
//! keep timings out of files entirely (they go to stdout only).

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Places `name` under the `--out` directory when one was given.
pub fn artifact_path(out_dir: Option<&Path>, name: &str) -> PathBuf {
    match out_dir {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

pub fn ensure_out_dir(out_dir: Option<&Path>) -> Result<(), CliError> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// One CSV cell; absent values become empty cells.
pub fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Plain-text run report: stable `key: value` lines.
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            lines: vec![format!("command: {command}")],
        }
    }

    pub fn kv(&mut self, key: &str, value: impl Display) {
        self.lines.push(format!("{key}: {value}"));
    }

    pub fn line(&mut self, text: impl Into<String>) {
        self.lines.push(text.into());
    }

    pub fn blank(&mut self) {
        self.lines.push(String::new());
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}
