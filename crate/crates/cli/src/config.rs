use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hpo_core::{EndpointConfig, PromptTemplate, TpeConfig};
use serde::Deserialize;

/// Optional JSON file shared by the subcommands. Every section may be omitted.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub tpe: TpeConfig,
    pub endpoint: Option<EndpointConfig>,
    #[serde(default)]
    pub template: PromptTemplate,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => read_json(path),
        }
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
