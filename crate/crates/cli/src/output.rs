use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Command, Format, RunConfig};
use crate::{CliError, Exit};

pub const TOOL: &str = "robdiv";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub generated_at: String,
}

impl Meta {
    /// The hash covers the resolved options and the model contents, not the
    /// file locations, so the same run from another directory hashes equal.
    pub fn new(command: Command, cfg: &RunConfig, model: &robdiv::SurplusModel) -> Self {
        let mut hashed = cfg.clone();
        hashed.model = None;
        hashed.out_dir = None;
        hashed.format = Format::Both;
        let payload = serde_json::to_vec(&json!({ "config": hashed, "model": model })).expect("config serializes");
        let digest = Sha256::digest(&payload);
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.name(),
            config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed: cfg.simulate.seed,
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    fn csv_comment(&self) -> String {
        format!(
            "# {} {} command={} config_hash={} seed={} generated_at={}\n",
            self.tool, self.version, self.command, self.config_hash, self.seed, self.generated_at
        )
    }
}

pub struct Writer {
    dir: PathBuf,
    format: Format,
    meta: Meta,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(Exit::Config, format!("cannot write {}: {e}", path.display()))
}

impl Writer {
    pub fn new(dir: PathBuf, format: Format, meta: Meta) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            dir,
            format,
            meta,
            written: Vec::new(),
        })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn set_command(&mut self, command: Command) {
        self.meta.command = command.name();
    }

    /// Writes `{"meta": …, ..body}` when JSON output is enabled.
    pub fn json(&mut self, name: &str, body: Value) -> Result<(), CliError> {
        if !self.format.json() {
            return Ok(());
        }
        let mut obj = match body {
            Value::Object(map) => map,
            other => {
                let mut m = serde_json::Map::new();
                m.insert("data".into(), other);
                m
            }
        };
        obj.insert("meta".into(), serde_json::to_value(&self.meta).expect("meta serializes"));
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("report serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes a CSV with a leading `#` provenance line when CSV output is
    /// enabled.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        if !self.format.csv() {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| io_err(&path, e))?;
        }
        let body = w.into_inner().map_err(|e| io_err(&path, e))?;
        let mut bytes = self.meta.csv_comment().into_bytes();
        bytes.extend_from_slice(&body);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
