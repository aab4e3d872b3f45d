use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
}

/// Output directory that records every file written to it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    /// Creates the directory and checks that it accepts writes.
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Output(format!("cannot create {}: {e}", root.display())))?;
        let probe = root.join(".asymdiv-write-probe");
        File::create(&probe)
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| CliError::Output(format!("{} is not writable: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes `rel` through `body` and records it.
    pub fn write_with<F>(&mut self, rel: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
        }
        let io = |e: std::io::Error| CliError::Output(format!("cannot write {}: {e}", path.display()));
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        drop(w);
        let bytes = fs::metadata(&path).map_err(io)?.len();
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry { path: rel.to_string(), bytes });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write_with(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}

/// Collected by a mode run and written last as `manifest.json`.
#[derive(Debug)]
pub struct Manifest {
    command: String,
    config: Value,
    started: Instant,
    started_unix: f64,
    pub results: Value,
    pub diagnostics: Value,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a Value,
    started_unix: f64,
    wall_seconds: f64,
    files: &'a [FileEntry],
    results: &'a Value,
    diagnostics: &'a Value,
    warnings: &'a [String],
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Manifest {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            started: Instant::now(),
            started_unix,
            results: Value::Null,
            diagnostics: Value::Null,
            warnings: Vec::new(),
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn finish(&self, out: &mut OutputDir) -> Result<(), CliError> {
        let files = out.files().to_vec();
        let m = ManifestFile {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config: &self.config,
            started_unix: self.started_unix,
            wall_seconds: self.started.elapsed().as_secs_f64(),
            files: &files,
            results: &self.results,
            diagnostics: &self.diagnostics,
            warnings: &self.warnings,
        };
        out.write_json(MANIFEST, &m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_are_recorded_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write_with("a.csv", |w| writeln!(w, "x")).unwrap();
        out.write_with("a.csv", |w| writeln!(w, "xy")).unwrap();
        out.write_json("sub/b.json", &[1, 2]).unwrap();
        let paths: Vec<_> = out.files().iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["a.csv", "sub/b.json"]);
        assert_eq!(out.files()[0].bytes, 3);
    }
}
