use beamsteer_core::config::ScenarioConfig;
use beamsteer_core::Error;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    Parse {
        line: usize,
        column: usize,
        message: String,
        suggestion: Option<String>,
    },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

/// 1-based line and column of a byte offset.
pub(crate) fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Closest expected name for an unknown key or variant in a serde message.
pub(crate) fn suggest(message: &str) -> Option<String> {
    let unknown = ["unknown field `", "unknown variant `"]
        .iter()
        .find_map(|marker| message.split_once(marker).map(|(_, rest)| rest))?;
    let (name, rest) = unknown.split_once('`')?;
    rest.split('`')
        .skip(1)
        .step_by(2)
        .map(|cand| (strsim::levenshtein(name, cand), cand))
        .filter(|(d, cand)| *d <= 2.max(cand.len() / 3))
        .min()
        .map(|(_, cand)| cand.to_string())
}

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
    let message = e.message().trim().to_string();
    ConfigError::Parse {
        line,
        column,
        suggestion: suggest(&message),
        message,
    }
}

/// Parses a scenario file, fills every default and validates it.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut config: ScenarioConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
    config.resolve_defaults();
    config.validate().map_err(|e| match e {
        Error::Invalid { field, reason } => ConfigError::Validation { field, reason },
        other => ConfigError::Validation {
            field: "scenario".into(),
            reason: other.to_string(),
        },
    })?;
    Ok(config)
}

/// The configuration with every default spelled out.
pub fn emit_config(config: &ScenarioConfig) -> String {
    toml::to_string(config).expect("scenario configs always serialize")
}
