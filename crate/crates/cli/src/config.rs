// SPDX-License-Identifier: Apache-2.0

//! Campaign file: a TOML document holding defaults for every subcommand.
//! Command-line flags win over file values. Paths are taken relative to the
//! working directory.
//!
//! The only value that may reference the environment is `llm.api_key`, and it
//! must do so: it is written as `"${NAME}"` and never as a literal key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub mode: Option<String>,
    pub fixtures: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub max_in_flight: Option<usize>,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractSection {
    pub spec: Option<PathBuf>,
    pub bugs: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Runtime id to source tree.
    #[serde(default)]
    pub trees: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub spec: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub guidelines: Option<PathBuf>,
    pub seed: Option<u64>,
    pub descriptions_per_prompt: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Runtime id to `builtin:<profile>` or `plugin:<path>`.
    #[serde(default)]
    pub runtimes: BTreeMap<String, String>,
    pub timeout_ms: Option<u64>,
    pub jobs: Option<usize>,
}

impl CampaignFile {
    pub fn load(path: &Path) -> anyhow::Result<CampaignFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: CampaignFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(key) = &file.llm.api_key {
            env_reference(key)?;
        }
        Ok(file)
    }
}

/// Name of the variable in a `${NAME}` reference.
fn env_reference(value: &str) -> anyhow::Result<&str> {
    let name = value
        .strip_prefix("${")
        .and_then(|v| v.strip_suffix('}'))
        .filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_'));
    match name {
        Some(n) => Ok(n),
        None => bail!("llm.api_key must be an environment reference like \"${{DIFFHARNESS_API_KEY}}\"; keys are never stored in files"),
    }
}

/// Resolve `llm.api_key` against the environment. An unset variable yields
/// `None`.
pub fn resolve_api_key(value: &str) -> anyhow::Result<Option<String>> {
    let name = env_reference(value)?;
    Ok(std::env::var(name).ok().filter(|v| !v.is_empty()))
}
