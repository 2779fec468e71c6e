//! Machine-readable result documents: JSON reports for `simulate`, `test`,
//! and `ci` (schemas under `/schemas`), and the tidy power-curve CSV.

use hdqlr_core::baselines::DmlEstimate;
use hdqlr_core::dgp::PowerCurve;
use hdqlr_core::inference::{ConfidenceRegion, TestOutcome};
use hdqlr_core::stats::normal_quantile;
use serde::Serialize;

use crate::config::GridSpec;
use crate::error::AppError;

/// Stdout summary written by `simulate` next to the dataset file.
#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub command: &'static str,
    pub n: usize,
    pub p: usize,
    /// Empirical share of compliers among the generated units.
    pub complier_share: f64,
    pub design_id: String,
    pub seed: u64,
    pub path: String,
}

#[derive(Debug, Serialize)]
pub struct RepRecordDoc {
    pub statistic: f64,
    pub critical_value: f64,
}

/// One hypothesis test, any method. For the conditional (QLR) methods the
/// statistic is `R` with its simulated critical value; for the DML methods
/// it is the squared t-ratio against the squared normal quantile, with the
/// point estimate attached.
#[derive(Debug, Serialize)]
pub struct TestReport {
    pub command: &'static str,
    pub method: &'static str,
    pub theta0: f64,
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_rep: Option<Vec<RepRecordDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl TestReport {
    pub fn from_outcome(method: &'static str, o: &TestOutcome, n: usize, p: usize) -> Self {
        TestReport {
            command: "test",
            method,
            theta0: o.theta0,
            statistic: o.statistic,
            critical_value: o.critical_value,
            alpha: o.alpha,
            reject: o.reject,
            reps: o.per_rep.len(),
            seed: o.seed,
            n,
            p,
            draws: Some(o.draws_used),
            per_rep: Some(
                o.per_rep
                    .iter()
                    .map(|r| RepRecordDoc {
                        statistic: r.statistic,
                        critical_value: r.critical_value,
                    })
                    .collect(),
            ),
            point_estimate: None,
            std_error: None,
        }
    }

    pub fn from_dml(
        method: &'static str,
        est: &DmlEstimate,
        theta0: f64,
        reps: usize,
        seed: u64,
        n: usize,
        p: usize,
    ) -> Self {
        let t = (est.theta_hat - theta0) / est.std_error;
        let z = normal_quantile(1.0 - est.alpha / 2.0);
        TestReport {
            command: "test",
            method,
            theta0,
            statistic: t * t,
            critical_value: z * z,
            alpha: est.alpha,
            // the decision is the CI check so test and ci agree bit-exactly
            reject: theta0 < est.ci[0] || theta0 > est.ci[1],
            reps,
            seed,
            n,
            p,
            draws: None,
            per_rep: None,
            point_estimate: Some(est.theta_hat),
            std_error: Some(est.std_error),
        }
    }
}

/// Confidence region for any method: accepted intervals plus total length
/// (the headline reporting number). Grid-inversion methods carry the grid
/// and per-repetition intervals; DML methods carry the point estimate.
#[derive(Debug, Serialize)]
pub struct CiReport {
    pub command: &'static str,
    pub method: &'static str,
    pub alpha: f64,
    pub intervals: Vec<[f64; 2]>,
    pub total_length: f64,
    pub empty: bool,
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_rep: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl CiReport {
    pub fn from_region(method: &'static str, r: &ConfidenceRegion, n: usize, p: usize) -> Self {
        CiReport {
            command: "ci",
            method,
            alpha: r.alpha,
            intervals: r.intervals.clone(),
            total_length: r.length,
            empty: r.is_empty(),
            reps: r.per_rep.len(),
            seed: r.seed,
            n,
            p,
            grid: Some(GridSpec {
                lo: r.grid.lo(),
                hi: r.grid.hi(),
                points: r.grid.points(),
            }),
            per_rep: Some(r.per_rep.clone()),
            point_estimate: None,
            std_error: None,
        }
    }

    pub fn from_dml(
        method: &'static str,
        est: &DmlEstimate,
        reps: usize,
        seed: u64,
        n: usize,
        p: usize,
    ) -> Self {
        CiReport {
            command: "ci",
            method,
            alpha: est.alpha,
            intervals: vec![est.ci],
            total_length: est.ci[1] - est.ci[0],
            empty: false,
            reps,
            seed,
            n,
            p,
            grid: None,
            per_rep: None,
            point_estimate: Some(est.theta_hat),
            std_error: Some(est.std_error),
        }
    }
}

/// Tidy CSV: one row per (hypothesis, method) with columns
/// `theta,method,rate,reps,design_id`.
pub fn power_csv(curve: &PowerCurve) -> Result<String, AppError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["theta", "method", "rate", "reps", "design_id"])
        .map_err(|e| AppError::Io(e.to_string()))?;
    let design_id = curve.design.design_id();
    for (mi, method) in curve.methods.iter().enumerate() {
        for (ti, theta) in curve.theta_values.iter().enumerate() {
            writer
                .write_record([
                    format!("{theta}"),
                    method.tag().to_string(),
                    format!("{}", curve.rates[mi][ti]),
                    format!("{}", curve.reps),
                    design_id.clone(),
                ])
                .map_err(|e| AppError::Io(e.to_string()))?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| AppError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AppError::Io(e.to_string()))
}

/// Pretty JSON plus trailing newline, the format of every stdout document.
pub fn to_json_line<T: Serialize>(doc: &T) -> Result<String, AppError> {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| AppError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
