//! Output files: CSV tables, canonical JSON envelopes and the run manifest.
//!
//! Every file written here carries the config hash, and nothing in it
//! depends on time, host or thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{OutputFormat, RunConfig};
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = concat!("ionwork ", env!("CARGO_PKG_VERSION"));

/// Pretty JSON with sorted keys and shortest round-trip floats, newline-terminated.
pub fn canonical_json(value: &Value) -> String {
    // serde_json's Map is a BTreeMap here, so keys come out sorted.
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable value")
}

/// Shortest representation that round-trips; `inf`/`nan` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub struct OutputSink {
    dir: PathBuf,
    format: OutputFormat,
    subcommand: String,
    config: Value,
    hash: String,
    files: Vec<String>,
}

impl OutputSink {
    pub fn new(dir: &Path, subcommand: &str, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(OutputSink {
            dir: dir.to_path_buf(),
            format: cfg.output.format,
            subcommand: subcommand.into(),
            config: cfg.to_value(),
            hash: cfg.hash(),
            files: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.into());
        }
        Ok(())
    }

    /// Writes `name` if CSV output is enabled, or unconditionally when `force` is set.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>], force: bool) -> Result<()> {
        if !(force || self.format.csv()) {
            return Ok(());
        }
        let mut text = format!("# config_hash: {}\n{}\n", self.hash, header.join(","));
        for row in rows {
            let _ = writeln!(text, "{}", row.join(","));
        }
        self.write(name, &text)
    }

    /// Writes a `{kind, payload, manifest}` envelope if JSON output is enabled.
    pub fn json(&mut self, name: &str, kind: &str, payload: Value) -> Result<()> {
        if !self.format.json() {
            return Ok(());
        }
        let envelope = json!({
            "kind": kind,
            "payload": payload,
            "manifest": {
                "artifact_version": ARTIFACT_VERSION,
                "config_hash": self.hash,
                "subcommand": self.subcommand,
            },
        });
        self.write(name, &canonical_json(&envelope))
    }

    pub fn svg(&mut self, name: &str, svg: &str) -> Result<()> {
        let text = format!("{}<!-- config_hash: {} -->\n", svg, self.hash);
        self.write(name, &text)
    }

    /// `manifest.json` and `config.resolved.json`; the latter re-runs the same outputs.
    pub fn finish(mut self) -> Result<Vec<String>> {
        self.write("config.resolved.json", &canonical_json(&self.config.clone()))?;
        let mut files = self.files.clone();
        files.sort();
        let manifest = json!({
            "artifact_version": ARTIFACT_VERSION,
            "subcommand": self.subcommand,
            "config_hash": self.hash,
            "config": self.config,
            "files": files,
        });
        self.write("manifest.json", &canonical_json(&manifest))?;
        Ok(self.files)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
