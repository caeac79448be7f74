//! Command implementations behind the `drexhage` binary.

use std::fmt;

pub mod commands;
pub mod config;
pub mod render;

/// Exit-code contract: 0 ok, 2 config/format, 3 numeric, 4 analysis.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or malformed input files (exit 2).
    Config(String),
    /// Numeric failure during evaluation (exit 3).
    Numeric(String),
    /// Analysis produced no usable result (exit 4).
    Analysis(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(msg.into())
    }

    pub fn analysis(msg: impl Into<String>) -> Self {
        CliError::Analysis(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Analysis(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Analysis(m) => write!(f, "analysis error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<drexhage::CollectionError> for CliError {
    fn from(e: drexhage::CollectionError) -> Self {
        use drexhage::CollectionError as CE;
        match &e {
            CE::Io { .. } | CE::Format { .. } | CE::BadGeometry(_) | CE::GridError(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<drexhage::DipoleError> for CliError {
    fn from(e: drexhage::DipoleError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<drexhage::PipelineError> for CliError {
    fn from(e: drexhage::PipelineError) -> Self {
        use drexhage::PipelineError as PE;
        match &e {
            PE::NoFringes { .. } => CliError::Analysis(e.to_string()),
            PE::ModelGeneration(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
