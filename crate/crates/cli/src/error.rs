use std::path::PathBuf;

use thiserror::Error;

use crate::config::{ConfigSource, Task};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{source_name}{}: {message}", location(.line, .column))]
    Parse {
        source_name: String,
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },

    #[error("missing field `{0}`")]
    Missing(String),

    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("unknown preset `{name}` (known: {})", crate::presets::NAMES.join(", "))]
    UnknownPreset { name: String },

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("output directory {} is not writable: {source}", path.display())]
    OutputDir {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn location(line: &Option<usize>, column: &Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(", line {l}, column {c}"),
        (Some(l), None) => format!(", line {l}"),
        _ => String::new(),
    }
}

impl ConfigError {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(source: &ConfigSource, text: &str, err: &toml::de::Error) -> Self {
        let (line, column) = match err.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (Some(line), Some(column))
            }
            None => (None, None),
        };
        ConfigError::Parse {
            source_name: source.to_string(),
            line,
            column,
            message: err.message().trim().to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{}: {context}: {source}", task.name())]
    Task {
        task: Task,
        context: String,
        source: bohmflow::Error,
    },

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Task { source, .. } if source.is_numerical() => 3,
            CliError::Task { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }
}
