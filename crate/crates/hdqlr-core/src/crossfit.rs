//! K-fold cross-fitting of the nuisance functions and the closed-form moment
//! kernel of the linear score.
//!
//! Per fold k: fit the three nuisance regressions on the complement
//! `I_k^c` — lasso-logit of D on (Z, X), lasso-logit of Z on X, lasso-OLS of
//! Y on (Z, X), each with penalty `default_penalty(|I_k^c|, q, scale)` — and
//! score the held-out fold. Because `psi(theta) = psi_a * theta + psi_b`,
//! the empirical process and covariance kernel of the pooled scores reduce to
//! five scalars:
//!
//! `q_hat(theta)          = sqrt(N) (mean_a * theta + mean_b)`
//! `omega(theta1, theta2) = theta1 theta2 c_aa + (theta1 + theta2) c_ab + c_bb`
//!
//! with centered second moments `c_..`, matching the V-statistic form
//! `mean(psi(t1) psi(t2)) - mean(psi(t1)) mean(psi(t2))`.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::data::{assign_folds, DataError, Dataset};
use crate::lasso::{
    default_penalty, solve_lasso_logit, solve_lasso_ols, Family, LassoConfig, LassoError,
    LassoProblem,
};
use crate::linalg::Mat;
use crate::score::{evaluate_score, NuisanceFit, ScoreDecomposition, ScoreError};

#[derive(Debug, Error, PartialEq)]
pub enum CrossfitError {
    #[error("fold construction: {0}")]
    Folds(#[from] DataError),
    #[error("solver failed in fold {fold} ({stage}): {source}")]
    Solver { fold: usize, stage: Stage, source: LassoError },
    #[error("solver did not converge in fold {fold} ({stage}) after {iterations} iterations")]
    NonConvergence { fold: usize, stage: Stage, iterations: usize },
    #[error("scoring failed in fold {fold}: {source}")]
    Score { fold: usize, source: ScoreError },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}

/// Which of the three nuisance regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    FirstStage,
    Propensity,
    ReducedForm,
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Stage::FirstStage => "first stage D ~ (Z, X)",
            Stage::Propensity => "propensity Z ~ X",
            Stage::ReducedForm => "reduced form Y ~ (Z, X)",
        })
    }
}

/// The five scalars that determine the empirical process of a linear score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub mean_a: f64,
    pub mean_b: f64,
    pub c_aa: f64,
    pub c_ab: f64,
    pub c_bb: f64,
    pub n: usize,
}

/// Centered sample moments of the pooled score decomposition.
pub fn moments_from_scores(scores: &ScoreDecomposition) -> KernelMoments {
    let n = scores.n();
    let mean_a = crate::stats::mean(&scores.psi_a);
    let mean_b = crate::stats::mean(&scores.psi_b);
    let (mut c_aa, mut c_ab, mut c_bb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let da = scores.psi_a[i] - mean_a;
        let db = scores.psi_b[i] - mean_b;
        c_aa += da * da;
        c_ab += da * db;
        c_bb += db * db;
    }
    let nf = n.max(1) as f64;
    KernelMoments { mean_a, mean_b, c_aa: c_aa / nf, c_ab: c_ab / nf, c_bb: c_bb / nf, n }
}

/// Covariance kernel `Omega_hat(theta1, theta2)`.
#[inline]
pub fn omega(m: &KernelMoments, theta1: f64, theta2: f64) -> f64 {
    theta1 * theta2 * m.c_aa + (theta1 + theta2) * m.c_ab + m.c_bb
}

/// Scaled empirical moment `q_hat_N(theta) = N^{-1/2} sum_i psi_i(theta)`.
#[inline]
pub fn q_hat(m: &KernelMoments, theta: f64) -> f64 {
    libm::sqrt(m.n as f64) * (m.mean_a * theta + m.mean_b)
}

/// Per-fold penalty levels and selected-support sizes, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldDiagnostics {
    pub fold: usize,
    pub n_fit: usize,
    pub lambda_first_stage: f64,
    pub lambda_propensity: f64,
    pub lambda_reduced_form: f64,
    pub support_first_stage: usize,
    pub support_propensity: usize,
    pub support_reduced_form: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossfitResult {
    pub scores: ScoreDecomposition,
    /// One fit per fold, index 0 holding fold 1's fit.
    pub fits: Vec<NuisanceFit>,
    pub moments: KernelMoments,
    pub diagnostics: Vec<FoldDiagnostics>,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CrossfitConfig {
    /// Multiplier on `sqrt(n ln(q n))` in the stage penalties.
    pub lambda_scale: f64,
    /// Propensity clipping bound passed into every fold's fit.
    pub clip_epsilon: f64,
    pub lasso: LassoConfig,
}

impl Default for CrossfitConfig {
    fn default() -> Self {
        CrossfitConfig { lambda_scale: 0.5, clip_epsilon: 0.01, lasso: LassoConfig::default() }
    }
}

fn check_config(cfg: &CrossfitConfig) -> Result<(), CrossfitError> {
    if !(cfg.lambda_scale > 0.0) || !cfg.lambda_scale.is_finite() {
        return Err(CrossfitError::Config("lambda_scale must be finite and > 0"));
    }
    if !(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 0.5) {
        return Err(CrossfitError::Config("clip_epsilon must lie in (0, 0.5)"));
    }
    Ok(())
}

/// Fit the three nuisance regressions on `rows` and return the fold's fit
/// plus diagnostics.
fn fit_nuisances(
    ds: &Dataset,
    rows: &[usize],
    cfg: &CrossfitConfig,
    fold: usize,
) -> Result<(NuisanceFit, FoldDiagnostics), CrossfitError> {
    let n_fit = rows.len();
    let p = ds.p();
    let x_fit = ds.x().subset_rows(rows);
    let take = |v: &[f64]| -> Vec<f64> { rows.iter().map(|&r| v[r]).collect() };
    let z_fit = take(ds.z());
    let d_fit = take(ds.d());
    let y_fit = take(ds.y());

    // design (Z, X) shared by the first stage and the reduced form
    let mut zx = Mat::zeros(n_fit, p + 1);
    zx.col_mut(0).copy_from_slice(&z_fit);
    for j in 0..p {
        zx.col_mut(j + 1).copy_from_slice(x_fit.col(j));
    }

    let lam1 = default_penalty(n_fit, p + 1, cfg.lambda_scale)
        .map_err(|source| CrossfitError::Solver { fold, stage: Stage::FirstStage, source })?;
    let lam2 = default_penalty(n_fit, p, cfg.lambda_scale)
        .map_err(|source| CrossfitError::Solver { fold, stage: Stage::Propensity, source })?;
    let lam3 = default_penalty(n_fit, p + 1, cfg.lambda_scale)
        .map_err(|source| CrossfitError::Solver { fold, stage: Stage::ReducedForm, source })?;

    let run = |prob: &LassoProblem, stage: Stage| {
        let sol = match prob.family {
            Family::Binomial => solve_lasso_logit(prob, &cfg.lasso),
            Family::Gaussian => solve_lasso_ols(prob, &cfg.lasso),
        }
        .map_err(|source| CrossfitError::Solver { fold, stage, source })?;
        if !sol.converged {
            return Err(CrossfitError::NonConvergence { fold, stage, iterations: sol.iterations });
        }
        Ok(sol)
    };

    let first = run(
        &LassoProblem {
            design: zx.clone(),
            response: d_fit,
            lambda: lam1,
            family: Family::Binomial,
            penalty_weights: None,
        },
        Stage::FirstStage,
    )?;
    let prop = run(
        &LassoProblem {
            design: x_fit,
            response: z_fit,
            lambda: lam2,
            family: Family::Binomial,
            penalty_weights: None,
        },
        Stage::Propensity,
    )?;
    let reduced = run(
        &LassoProblem {
            design: zx,
            response: y_fit,
            lambda: lam3,
            family: Family::Gaussian,
            penalty_weights: None,
        },
        Stage::ReducedForm,
    )?;

    let support = |coefs: &[f64]| coefs.iter().filter(|&&c| c != 0.0).count();
    let fit = NuisanceFit {
        beta11: first.coefficients[0],
        beta12: first.coefficients[1..].to_vec(),
        beta21: reduced.coefficients[0],
        beta22: reduced.coefficients[1..].to_vec(),
        gamma: prop.coefficients.clone(),
        clip_epsilon: cfg.clip_epsilon,
    };
    let diag = FoldDiagnostics {
        fold,
        n_fit,
        lambda_first_stage: lam1,
        lambda_propensity: lam2,
        lambda_reduced_form: lam3,
        support_first_stage: support(&first.coefficients),
        support_propensity: support(&prop.coefficients),
        support_reduced_form: support(&reduced.coefficients),
    };
    Ok((fit, diag))
}

/// One full cross-fitting pass: split, fit on complements, score held-out
/// folds, pool.
pub fn run_crossfit(
    ds: &Dataset,
    k: usize,
    cfg: &CrossfitConfig,
    seed: u64,
) -> Result<CrossfitResult, CrossfitError> {
    check_config(cfg)?;
    let folds = assign_folds(ds.n(), k, seed)?;
    let n = ds.n();
    let mut psi_a = vec![0.0; n];
    let mut psi_b = vec![0.0; n];
    let mut fits = Vec::with_capacity(k);
    let mut diagnostics = Vec::with_capacity(k);
    for fold in 1..=k {
        let rows_fit = folds.complement_rows(fold);
        let rows_score = folds.fold_rows(fold);
        let (fit, diag) = fit_nuisances(ds, &rows_fit, cfg, fold)?;
        let part = evaluate_score(ds, &fit, &rows_score)
            .map_err(|source| CrossfitError::Score { fold, source })?;
        for (t, &row) in part.rows.iter().enumerate() {
            psi_a[row] = part.psi_a[t];
            psi_b[row] = part.psi_b[t];
        }
        fits.push(fit);
        diagnostics.push(diag);
    }
    let scores = ScoreDecomposition { psi_a, psi_b, fold_of: folds.fold_of().to_vec() };
    let moments = moments_from_scores(&scores);
    Ok(CrossfitResult { scores, fits, moments, diagnostics, k, seed })
}

/// Degenerate no-split pass: fit once on the full sample and score in-sample
/// (fold id 1 everywhere). This is the nuisance path of the no-cross-fitting
/// baselines and of the lambda -> 0 bridge used in regression tests.
pub fn full_sample_lasso_scores(
    ds: &Dataset,
    cfg: &CrossfitConfig,
) -> Result<CrossfitResult, CrossfitError> {
    check_config(cfg)?;
    let rows: Vec<usize> = (0..ds.n()).collect();
    let (fit, diag) = fit_nuisances(ds, &rows, cfg, 1)?;
    let part = evaluate_score(ds, &fit, &rows)
        .map_err(|source| CrossfitError::Score { fold: 1, source })?;
    let scores = ScoreDecomposition {
        psi_a: part.psi_a,
        psi_b: part.psi_b,
        fold_of: vec![1; ds.n()],
    };
    let moments = moments_from_scores(&scores);
    Ok(CrossfitResult { scores, fits: vec![fit], moments, diagnostics: vec![diag], k: 1, seed: 0 })
}

/// `reps` independent cross-fitting passes with derived seeds
/// `seed + 1 ..= seed + reps`.
pub fn repeat_crossfit(
    ds: &Dataset,
    k: usize,
    cfg: &CrossfitConfig,
    reps: usize,
    seed: u64,
) -> Result<Vec<CrossfitResult>, CrossfitError> {
    if reps == 0 {
        return Err(CrossfitError::Config("reps must be >= 1"));
    }
    let mut out = Vec::with_capacity(reps);
    for r in 1..=reps {
        out.push(run_crossfit(ds, k, cfg, seed.wrapping_add(r as u64))?);
    }
    Ok(out)
}
