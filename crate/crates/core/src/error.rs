use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("delta_n must be even, got {0}")]
    OddVolumeGap(i32),
    #[error("|delta_n| must not exceed 4(n_bar - 1) = {limit}, got {gap}")]
    VolumeGapTooLarge { gap: i32, limit: i64 },
    #[error("{param} = {value} violates bound: {bound}")]
    OutOfRange { param: &'static str, value: f64, bound: &'static str },
    #[error("{param} must be an integer, got {value}")]
    NotInteger { param: &'static str, value: f64 },
    #[error("unknown scenario parameter `{0}`")]
    UnknownParameter(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("sweep over {0} needs a value list (no bundled grid for it)")]
    NoPresetGrid(String),
    #[error("sweep value rejected: {0}")]
    Sweep(#[from] ScenarioError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("dataset has no patients")]
    Empty,
    #[error("model form {0:?} has no random effects")]
    NotRandomEffects(crate::glmm::ModelForm),
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error("inconsistent model data: {0}")]
    Inconsistent(String),
    #[error("expected a {expected:?} fit, got {found:?}")]
    WrongForm { expected: crate::glmm::ModelForm, found: crate::glmm::ModelForm },
    #[error("fit is not usable ({0:?})")]
    Unusable(crate::glmm::FitStatus),
    #[error("fit covers {fit} {kind}s but the dataset has {data}")]
    SizeMismatch { kind: &'static str, fit: usize, data: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    /// True for errors caused by user input rather than by the run itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Scenario(_) | Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
