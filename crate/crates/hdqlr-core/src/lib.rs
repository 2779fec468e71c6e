//! Identification-robust inference for the local average treatment effect
//! with many covariates.
//!
//! The crate implements a conditional quasi-likelihood-ratio (QLR) test and
//! confidence intervals for the LATE in the canonical binary-instrument,
//! binary-treatment model, where the nuisance functions (instrument
//! propensity, first stage, reduced form) are estimated by l1-penalized
//! regressions on cross-fitting folds. The score is Neyman orthogonal and
//! linear in the target parameter, so the whole conditional test reduces to
//! five scalar moments per fit; critical values are simulated from the
//! conditional distribution of the statistic.
//!
//! The crate is `no_std` + `alloc`: all IO, file formats, and the CLI live in
//! the companion `hdqlr` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod baselines;
pub mod crossfit;
pub mod data;
pub mod dgp;
pub mod inference;
pub mod lasso;
pub mod linalg;
pub mod rng;
pub mod score;
pub mod stats;

/// Inference method selector shared by the power harness and the CLI.
///
/// Tags match the wire format: `hdqlr`, `am16`, `dml`, `dml_nocf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Conditional QLR test with lasso nuisances on cross-fitting folds.
    Hdqlr,
    /// Same conditional test with unpenalized full-sample nuisance fits.
    Am16,
    /// Cross-fitted double machine learning t-test.
    Dml,
    /// DML t-test with full-sample (no cross-fitting) lasso nuisances.
    DmlNoCrossfit,
}

impl Method {
    /// Stable wire tag used in CSV/JSON outputs and CLI flags.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Hdqlr => "hdqlr",
            Method::Am16 => "am16",
            Method::Dml => "dml",
            Method::DmlNoCrossfit => "dml_nocf",
        }
    }

    /// Parse a wire tag.
    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "hdqlr" => Some(Method::Hdqlr),
            "am16" => Some(Method::Am16),
            "dml" => Some(Method::Dml),
            "dml_nocf" => Some(Method::DmlNoCrossfit),
            _ => None,
        }
    }
}
