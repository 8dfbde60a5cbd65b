//! CLI configuration file: a JSON document whose values serve as defaults
//! for the corresponding flags. The path comes from `--config` or the
//! `SYNCHRONIC_CONFIG` environment variable.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CliConfig {
    pub endpoint: Option<String>,
    pub key_file: Option<PathBuf>,
    pub global_path: Option<String>,
    pub periodicity: Option<u32>,
    pub store_dir: Option<PathBuf>,
    pub chain_file: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(explicit: Option<&Path>) -> anyhow::Result<Self> {
        let path = match explicit {
            Some(path) => Some(path.to_path_buf()),
            None => std::env::var_os("SYNCHRONIC_CONFIG").map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(CliConfig::default());
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
