use std::fmt;

use mnri::glm::GlmError;
use mnri::inference::InferenceError;
use mnri::reclass::ReclassError;
use mnri::sim::SimError;
use mnri::spline::SplineError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: missing columns, non-binary outcome, unreadable files.
    Data(String),
    /// A model fit failed.
    Fit(String),
    /// The outcome has no events or no non-events.
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Fit(m) => write!(f, "fit error: {m}"),
            CliError::Degenerate(m) => write!(f, "degenerate outcome: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<GlmError> for CliError {
    fn from(e: GlmError) -> Self {
        match e {
            GlmError::InvalidData(m) => CliError::Data(m),
            GlmError::DegenerateOutcome(v) => CliError::Degenerate(format!("every outcome is {v}")),
            e @ GlmError::Fit { .. } => CliError::Fit(e.to_string()),
            GlmError::Numerics(n) => CliError::Fit(n.to_string()),
        }
    }
}

impl From<ReclassError> for CliError {
    fn from(e: ReclassError) -> Self {
        match e {
            ReclassError::Glm(g) => g.into(),
            ReclassError::DegenerateOutcome { .. } => CliError::Degenerate(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Glm(g) => g.into(),
            InferenceError::Reclass(r) => r.into(),
            InferenceError::DegenerateOutcome(_) => CliError::Degenerate(e.to_string()),
            InferenceError::NoNewCovariates => CliError::Data(e.to_string()),
            other => CliError::Fit(other.to_string()),
        }
    }
}

impl From<SplineError> for CliError {
    fn from(e: SplineError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Glm(g) => g.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
