//! Artifact writing. Every file embeds the run configuration and lands via
//! write-to-temp-then-rename.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kendall_core::datagen::MarginalKind;
use kendall_core::hoeffding::ProjectionMode;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Format;
use crate::error::{CliError, CliResult};

/// Resolved parameters of one invocation; enough to rerun it.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub seed: u64,
    pub seeds: usize,
    pub marginal: MarginalKind,
    pub mode: ProjectionMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Subcommand-specific values.
    pub params: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(key.to_string(), serde_json::to_value(value).expect("serializable parameter"));
        self
    }
}

pub struct Output {
    dir: PathBuf,
    config: Value,
    config_line: String,
    written: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, config: &RunConfig) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
        let config = serde_json::to_value(config)?;
        let config_line = format!("# config={}", serde_json::to_string(&config)?);
        Ok(Self { dir: dir.to_path_buf(), config, config_line, written: Vec::new() })
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn persist(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        let err = |source| CliError::Write { path: path.clone(), source };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(err)?;
        tmp.write_all(bytes).map_err(err)?;
        tmp.as_file().sync_all().map_err(err)?;
        tmp.persist(&path).map_err(|e| err(e.error))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    /// CSV whose first line is `# config=<json>`.
    pub fn csv<F>(&mut self, name: &str, body: F) -> CliResult<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> kendall_core::Result<()>,
    {
        let mut buf = Vec::new();
        writeln!(buf, "{}", self.config_line).expect("write to memory");
        body(&mut buf)?;
        self.persist(name, &buf)
    }

    /// JSON object with the configuration under `config`.
    pub fn json(&mut self, name: &str, value: impl Serialize) -> CliResult<PathBuf> {
        let mut value = serde_json::to_value(value)?;
        match value.as_object_mut() {
            Some(obj) => {
                obj.insert("config".into(), self.config.clone());
            }
            None => value = json!({ "config": self.config, "value": value }),
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.persist(name, text.as_bytes())
    }

    /// Raw bytes, for formats that cannot carry the configuration; a
    /// `<name>.config.json` sidecar holds it instead.
    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.persist(name, bytes)?;
        self.json(&format!("{name}.config.json"), json!({ "artifact": name }))?;
        Ok(path)
    }

    /// Plain text with a leading `# config=` comment.
    pub fn text(&mut self, name: &str, body: &str) -> CliResult<PathBuf> {
        let text = format!("{}\n{body}", self.config_line);
        self.persist(name, text.as_bytes())
    }
}
