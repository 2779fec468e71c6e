//! Application errors carrying the documented exit codes.
//!
//! Exit code map: 0 success, 2 invalid configuration or input, 3 IO failure,
//! 4 numerical/statistical failure. Numerical failures additionally print a
//! structured JSON document to stdout so harnesses aggregating thousands of
//! runs can read the reason without parsing prose.

use hdqlr_core::baselines::BaselineError;
use hdqlr_core::crossfit::CrossfitError;
use hdqlr_core::data::DataError;
use hdqlr_core::dgp::DgpError;
use hdqlr_core::inference::InferenceError;
use serde::Serialize;
use thiserror::Error;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{kind}: {message}")]
    Numerical { kind: &'static str, message: String },
}

/// Body of the machine-readable error document (`schemas/error.schema.json`).
#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    pub exit_code: u8,
}

#[derive(Debug, Serialize)]
pub struct ErrorDoc {
    pub error: ErrorBody,
}

impl AppError {
    pub fn numerical(kind: &'static str, err: impl core::fmt::Display) -> Self {
        AppError::Numerical { kind, message: err.to_string() }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Io(_) => EXIT_IO,
            AppError::Numerical { .. } => EXIT_NUMERICAL,
        }
    }

    /// The JSON document emitted for numerical failures.
    pub fn document(&self) -> Option<ErrorDoc> {
        match self {
            AppError::Numerical { kind, message } => Some(ErrorDoc {
                error: ErrorBody {
                    kind: (*kind).to_string(),
                    message: message.clone(),
                    exit_code: EXIT_NUMERICAL,
                },
            }),
            _ => None,
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(err: std::io::Error) -> Self {
        AppError::Io(err.to_string())
    }
}

impl From<DataError> for AppError {
    fn from(err: DataError) -> Self {
        AppError::Config(err.to_string())
    }
}

impl From<CrossfitError> for AppError {
    fn from(err: CrossfitError) -> Self {
        match err {
            CrossfitError::Config(m) => AppError::Config(m.to_string()),
            CrossfitError::Folds(e) => e.into(),
            CrossfitError::Solver { .. } => AppError::numerical("solver_failure", err),
            CrossfitError::NonConvergence { .. } => AppError::numerical("non_convergence", err),
            CrossfitError::Score { .. } => AppError::numerical("score_failure", err),
        }
    }
}

impl From<InferenceError> for AppError {
    fn from(err: InferenceError) -> Self {
        match err {
            InferenceError::Config(m) => AppError::Config(m.to_string()),
            InferenceError::Crossfit(e) => e.into(),
            InferenceError::DegenerateVariance { .. } => {
                AppError::numerical("degenerate_variance", err)
            }
            InferenceError::GridRequired(_) => AppError::numerical("grid_required", err),
            InferenceError::NonFinite(_) => AppError::numerical("non_finite", err),
        }
    }
}

impl From<BaselineError> for AppError {
    fn from(err: BaselineError) -> Self {
        match err {
            BaselineError::Config(m) => AppError::Config(m.to_string()),
            BaselineError::Crossfit(e) => e.into(),
            BaselineError::Inference(e) => e.into(),
            BaselineError::WeakDenominator(_) => AppError::numerical("weak_denominator", err),
            BaselineError::SingularFit { .. } => AppError::numerical("singular_fit", err),
            BaselineError::Score(_) => AppError::numerical("score_failure", err),
            BaselineError::Linalg(_) => AppError::numerical("linear_algebra", err),
            BaselineError::NonFinite(_) => AppError::numerical("non_finite", err),
        }
    }
}

impl From<DgpError> for AppError {
    fn from(err: DgpError) -> Self {
        match err {
            DgpError::Config(m) => AppError::Config(m.to_string()),
            DgpError::Data(e) => e.into(),
            DgpError::Linalg(_) => AppError::numerical("linear_algebra", err),
            DgpError::TooManyFailures { .. } => AppError::numerical("too_many_failures", err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(AppError::Config("x".into()).exit_code(), 2);
        assert_eq!(AppError::Io("x".into()).exit_code(), 3);
        let num = AppError::from(BaselineError::WeakDenominator(1e-15));
        assert_eq!(num.exit_code(), 4);
        let doc = num.document().unwrap();
        assert_eq!(doc.error.kind, "weak_denominator");
        assert_eq!(doc.error.exit_code, 4);
        assert!(AppError::Config("x".into()).document().is_none());
    }

    #[test]
    fn nested_core_errors_classify_by_leaf() {
        let e = InferenceError::Crossfit(CrossfitError::Config("bad k"));
        assert_eq!(AppError::from(e).exit_code(), 2);
        let e = BaselineError::Inference(InferenceError::DegenerateVariance {
            theta: 1.0,
            value: 0.0,
        });
        let app = AppError::from(e);
        assert_eq!(app.exit_code(), 4);
        assert_eq!(app.document().unwrap().error.kind, "degenerate_variance");
    }
}
