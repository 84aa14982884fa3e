//! Error-to-exit-code mapping. The contract is stable: 1 for usage errors
//! (bad flags, bad config values), 2 for data errors (unreadable, malformed,
//! or inconsistent inputs), 3 for numeric failures (divergence,
//! non-convergence).

use std::fmt;

use twinlab_core::analysis::AnalysisError;
use twinlab_core::baselines::BaselineError;
use twinlab_core::data::DataError;
use twinlab_core::nn::NnError;
use twinlab_core::vae::{CheckpointError, VaeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ExitKind::Data,
            message: message.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let kind = match &e {
            DataError::BadSynthConfig(_) | DataError::BadFraction(_) => ExitKind::Usage,
            _ => ExitKind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<VaeError> for CliError {
    fn from(e: VaeError) -> Self {
        let kind = match &e {
            VaeError::InvalidConfig(_) => ExitKind::Usage,
            VaeError::Numeric { .. } | VaeError::Nn(_) => ExitKind::Numeric,
            VaeError::Data(inner) => return CliError::from_data_ref(inner),
            _ => ExitKind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl CliError {
    fn from_data_ref(e: &DataError) -> Self {
        let kind = match e {
            DataError::BadSynthConfig(_) | DataError::BadFraction(_) => ExitKind::Usage,
            _ => ExitKind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError {
            kind: ExitKind::Numeric,
            message: e.to_string(),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let kind = match &e {
            AnalysisError::BadQuantile(_)
            | AnalysisError::BadAlpha(_)
            | AnalysisError::BadDimension { .. }
            | AnalysisError::BadClusterCount { .. }
            | AnalysisError::BadIterationBudget => ExitKind::Usage,
            _ => ExitKind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        let kind = match &e {
            BaselineError::BadComponentCount { .. } => ExitKind::Usage,
            BaselineError::NoConvergence(_) | BaselineError::Numeric(_) => ExitKind::Numeric,
            _ => ExitKind::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}
