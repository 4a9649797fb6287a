use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::parse::{toml_error, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// Runs to the end without a failure tag and meets every assertion.
    #[default]
    Pass,
    /// Ends with a failure tag and meets every assertion.
    Fail,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    /// Scenario file, relative to the manifest.
    pub config: PathBuf,
    #[serde(default)]
    pub expect: Expectation,
    /// Replaces the scenario's seed.
    #[serde(default)]
    pub seed: Option<u64>,
    /// `<summary key> <op> <number>` or `outcome == <tag>`.
    #[serde(default)]
    pub assert: Vec<String>,
}

/// Relative spread `(max - min) / mean` of one summary key across scenarios.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadCheck {
    pub name: String,
    pub scenarios: Vec<String>,
    pub key: String,
    pub below: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Vec<ManifestEntry>,
    #[serde(default)]
    pub spread: Vec<SpreadCheck>,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{0}")]
    Syntax(#[from] ConfigError),
    #[error("duplicate scenario name `{0}`")]
    DuplicateName(String),
    #[error("scenario `{name}`: config file {path} does not exist")]
    MissingFile { name: String, path: PathBuf },
    #[error("spread `{spread}` refers to unknown scenario `{name}`")]
    UnknownScenario { spread: String, name: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<SuiteManifest, ManifestError> {
    let mut m: SuiteManifest = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    m.base_dir = base_dir.to_path_buf();
    let mut names = BTreeSet::new();
    for e in &m.scenario {
        if !names.insert(e.name.as_str()) {
            return Err(ManifestError::DuplicateName(e.name.clone()));
        }
        let path = m.base_dir.join(&e.config);
        if !path.is_file() {
            return Err(ManifestError::MissingFile {
                name: e.name.clone(),
                path,
            });
        }
    }
    for s in &m.spread {
        if let Some(name) = s.scenarios.iter().find(|n| !names.contains(n.as_str())) {
            return Err(ManifestError::UnknownScenario {
                spread: s.name.clone(),
                name: name.clone(),
            });
        }
    }
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<SuiteManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
