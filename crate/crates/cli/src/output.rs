//! Output directory bookkeeping: artifacts, per-item errors and status.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct ItemError {
    pub item: String,
    pub error: String,
}

#[derive(Serialize)]
struct Status<'a> {
    command: &'a str,
    ok: bool,
    exit_code: i32,
    n_errors: usize,
    outputs: &'a [String],
    message: Option<&'a str>,
}

pub struct RunOutput {
    dir: PathBuf,
    command: String,
    written: Vec<String>,
    pub errors: Vec<ItemError>,
}

impl RunOutput {
    pub fn create(dir: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            written: Vec::new(),
            errors: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s)
    }

    pub fn item_error(&mut self, item: impl Into<String>, error: impl std::fmt::Display) {
        let item = item.into();
        log::error!("{item}: {error}");
        self.errors.push(ItemError {
            item,
            error: error.to_string(),
        });
    }

    /// Write `errors.json` and `status.json`; returns the exit code.
    pub fn finish(mut self, fatal: Option<&anyhow::Error>) -> i32 {
        let code = match (fatal, self.errors.is_empty()) {
            (Some(_), _) => 2,
            (None, false) => 1,
            (None, true) => 0,
        };
        let mut errors = self.errors.clone();
        if let Some(e) = fatal {
            errors.push(ItemError {
                item: self.command.clone(),
                error: format!("{e:#}"),
            });
        }
        let message = fatal.map(|e| format!("{e:#}"));
        let outputs = self.written.clone();
        let command = self.command.clone();
        let status = Status {
            command: &command,
            ok: code == 0,
            exit_code: code,
            n_errors: errors.len(),
            outputs: &outputs,
            message: message.as_deref(),
        };
        let result = self
            .write_json("errors.json", &errors)
            .and_then(|_| self.write_json("status.json", &status));
        match result {
            Ok(()) => code,
            Err(e) => {
                log::error!("could not write status: {e:#}");
                2
            }
        }
    }
}
