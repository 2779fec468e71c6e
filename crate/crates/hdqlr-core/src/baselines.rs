//! Comparison methods: the double-ML point estimator with a normal CI (with
//! and without cross-fitting) and the conditional test with unpenalized
//! full-sample nuisance fits.
//!
//! All three reuse the score decomposition and, for the conditional variant,
//! the same statistic/critical-value machinery as the main test; they differ
//! only in how nuisances are estimated and in how uncertainty is quantified.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::crossfit::{
    full_sample_lasso_scores, moments_from_scores, omega, repeat_crossfit, CrossfitConfig,
    CrossfitError, KernelMoments,
};
use crate::data::Dataset;
use crate::inference::{
    confidence_interval_from_moments, test_from_moments, ConfidenceRegion, InferenceConfig,
    InferenceError, TestOutcome,
};
use crate::lasso::{log1pexp, logistic};
use crate::linalg::{cholesky_in_place, cholesky_solve, dot, Mat};
use crate::score::{evaluate_score, NuisanceFit, ScoreDecomposition, ScoreError};
use crate::stats::normal_quantile;

/// Denominators smaller than this are treated as unidentified.
pub const WEAK_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error(
        "weak denominator |mean(-psi_a)| = {0:e}: the normal-approximation point estimate \
         is unreliable; use the conditional (hdqlr) test instead"
    )]
    WeakDenominator(f64),
    #[error("unpenalized fit needs n > p + 2 (got n = {n}, p = {p})")]
    SingularFit { n: usize, p: usize },
    #[error("cross-fitting failed: {0}")]
    Crossfit(#[from] CrossfitError),
    #[error("inference failed: {0}")]
    Inference(#[from] InferenceError),
    #[error("scoring failed: {0}")]
    Score(#[from] ScoreError),
    #[error("linear algebra failed in the unpenalized fit: {0}")]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Point estimate and standard error implied by a score decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmlCore {
    pub theta_hat: f64,
    pub std_error: f64,
}

/// `theta_hat = mean(psi_b) / mean(-psi_a)` with the sandwich standard error
/// `mean(psi(theta_hat)^2) / mean(psi_a)^2 / n`, both read off the five
/// kernel moments.
pub fn dml_from_moments(m: &KernelMoments) -> Result<DmlCore, BaselineError> {
    let denom = -m.mean_a;
    if denom.abs() < WEAK_DENOMINATOR {
        return Err(BaselineError::WeakDenominator(denom.abs()));
    }
    let theta_hat = m.mean_b / denom;
    // uncentered second moment of psi(theta_hat); the mean term is zero up
    // to rounding but kept for exactness of the sandwich form
    let resid = m.mean_a * theta_hat + m.mean_b;
    let second = omega(m, theta_hat, theta_hat) + resid * resid;
    let var = second / (m.mean_a * m.mean_a) / m.n as f64;
    if !var.is_finite() || !theta_hat.is_finite() {
        return Err(BaselineError::NonFinite("point estimate"));
    }
    Ok(DmlCore { theta_hat, std_error: libm::sqrt(var) })
}

/// Normal-approximation estimate and CI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmlEstimate {
    pub theta_hat: f64,
    pub std_error: f64,
    pub ci: [f64; 2],
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub alpha: f64,
    pub k: usize,
    /// Cross-fitting repetitions averaged over (ignored without
    /// cross-fitting, where the fit is deterministic).
    pub reps: usize,
    pub seed: u64,
    pub crossfit: CrossfitConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            alpha: 0.05,
            k: 3,
            reps: 1,
            seed: 0,
            crossfit: CrossfitConfig::default(),
        }
    }
}

/// Average per-repetition point estimates and standard errors, then attach
/// the normal CI.
pub fn dml_aggregate(cores: &[DmlCore], alpha: f64) -> Result<DmlEstimate, BaselineError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BaselineError::Config("alpha must lie in (0, 1)"));
    }
    if cores.is_empty() {
        return Err(BaselineError::Config("at least one repetition is required"));
    }
    let k = cores.len() as f64;
    let theta_hat = cores.iter().map(|c| c.theta_hat).sum::<f64>() / k;
    let std_error = cores.iter().map(|c| c.std_error).sum::<f64>() / k;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(DmlEstimate {
        theta_hat,
        std_error,
        ci: [theta_hat - z * std_error, theta_hat + z * std_error],
        alpha,
    })
}

/// Double-ML point estimate with a normal CI. `crossfit = true` scores
/// held-out folds; `false` reuses the full-sample penalized fits in-sample.
pub fn dml_estimate(
    ds: &Dataset,
    crossfit: bool,
    cfg: &BaselineConfig,
) -> Result<DmlEstimate, BaselineError> {
    let cores: Vec<DmlCore> = if crossfit {
        repeat_crossfit(ds, cfg.k, &cfg.crossfit, cfg.reps, cfg.seed)?
            .iter()
            .map(|r| dml_from_moments(&r.moments))
            .collect::<Result<_, _>>()?
    } else {
        vec![dml_from_moments(&full_sample_lasso_scores(ds, &cfg.crossfit)?.moments)?]
    };
    dml_aggregate(&cores, cfg.alpha)
}

/// Unpenalized-fit controls for the full-covariate conditional baseline.
#[derive(Debug, Clone)]
pub struct MleConfig {
    /// Newton iteration cap. On separable data the logistic likelihood has no
    /// finite optimum; the capped fit (saturated probabilities) is exactly
    /// the regime this baseline is studied in, so hitting the cap is not an
    /// error.
    pub max_iter: usize,
    /// Diagonal jitter keeping the Newton/normal-equation systems solvable.
    pub ridge: f64,
    /// Gradient sup-norm declaring convergence.
    pub grad_tol: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig { max_iter: 40, ridge: 1e-10, grad_tol: 1e-8 }
    }
}

fn logit_objective(eta: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += log1pexp(eta[i]) - y[i] * eta[i];
    }
    s / y.len() as f64
}

/// Damped-Newton logistic MLE. Returns the capped iterate when the optimum
/// is at infinity (separation) or the cap is hit.
fn newton_logit(w: &Mat, y: &[f64], cfg: &MleConfig) -> Result<Vec<f64>, BaselineError> {
    let n = w.n_rows();
    let q = w.n_cols();
    let nf = n as f64;
    let mut beta = vec![0.0; q];
    let mut eta = vec![0.0; n];
    let mut obj = logit_objective(&eta, y);
    for _ in 0..cfg.max_iter {
        let pi: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
        let resid: Vec<f64> = (0..n).map(|i| pi[i] - y[i]).collect();
        let grad: Vec<f64> = (0..q).map(|j| dot(w.col(j), &resid) / nf).collect();
        if grad.iter().all(|g| g.abs() < cfg.grad_tol) {
            break;
        }
        // H = W' diag(pi (1 - pi)) W / n + ridge I, built column against column
        let wt: Vec<f64> = pi.iter().map(|&p| p * (1.0 - p)).collect();
        let mut h = vec![0.0; q * q];
        let mut scaled = vec![0.0; n];
        for a in 0..q {
            let ca = w.col(a);
            for i in 0..n {
                scaled[i] = ca[i] * wt[i];
            }
            for b in a..q {
                let v = dot(&scaled, w.col(b)) / nf;
                h[b * q + a] = v;
                h[a * q + b] = v;
            }
            h[a * q + a] += cfg.ridge;
        }
        cholesky_in_place(&mut h, q)?;
        let delta = cholesky_solve(&h, q, &grad);
        let slope: f64 = dot(&grad, &delta);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> =
                beta.iter().zip(&delta).map(|(b, d)| b - step * d).collect();
            let cand_eta = w.matvec(&cand);
            let cand_obj = logit_objective(&cand_eta, y);
            if cand_obj <= obj - 1e-4 * step * slope {
                let improved = obj - cand_obj;
                beta = cand;
                eta = cand_eta;
                obj = cand_obj;
                accepted = true;
                if improved < 1e-13 * (1.0 + obj.abs()) {
                    return Ok(beta);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(beta)
}

/// OLS through ridge-jittered normal equations.
fn ols_fit(w: &Mat, y: &[f64], ridge: f64) -> Result<Vec<f64>, BaselineError> {
    let n = w.n_rows();
    let q = w.n_cols();
    let nf = n as f64;
    let mut g = vec![0.0; q * q];
    for a in 0..q {
        for b in a..q {
            let v = dot(w.col(a), w.col(b)) / nf;
            g[b * q + a] = v;
            g[a * q + b] = v;
        }
        g[a * q + a] += ridge;
    }
    let rhs: Vec<f64> = (0..q).map(|j| dot(w.col(j), y) / nf).collect();
    cholesky_in_place(&mut g, q)?;
    Ok(cholesky_solve(&g, q, &rhs))
}

fn design_zx(ds: &Dataset) -> Mat {
    let n = ds.n();
    let p = ds.p();
    let mut zx = Mat::zeros(n, p + 1);
    zx.col_mut(0).copy_from_slice(ds.z());
    for j in 0..p {
        zx.col_mut(j + 1).copy_from_slice(ds.x().col(j));
    }
    zx
}

/// Unpenalized full-sample nuisance fit: MLE logits for the first stage and
/// the propensity, OLS for the reduced form, all covariates included.
pub fn unpenalized_nuisance_fit(
    ds: &Dataset,
    clip_epsilon: f64,
    mle: &MleConfig,
) -> Result<NuisanceFit, BaselineError> {
    let (n, p) = (ds.n(), ds.p());
    if n <= p + 2 {
        return Err(BaselineError::SingularFit { n, p });
    }
    let zx = design_zx(ds);
    let first = newton_logit(&zx, ds.d(), mle)?;
    let gamma = newton_logit(ds.x(), ds.z(), mle)?;
    let reduced = ols_fit(&zx, ds.y(), mle.ridge)?;
    Ok(NuisanceFit {
        beta11: first[0],
        beta12: first[1..].to_vec(),
        beta21: reduced[0],
        beta22: reduced[1..].to_vec(),
        gamma,
        clip_epsilon,
    })
}

/// Full-sample scores and moments under the unpenalized fit (fold id 1).
pub fn unpenalized_scores(
    ds: &Dataset,
    clip_epsilon: f64,
    mle: &MleConfig,
) -> Result<(ScoreDecomposition, KernelMoments, NuisanceFit), BaselineError> {
    let fit = unpenalized_nuisance_fit(ds, clip_epsilon, mle)?;
    let rows: Vec<usize> = (0..ds.n()).collect();
    let part = evaluate_score(ds, &fit, &rows)?;
    let scores = ScoreDecomposition {
        psi_a: part.psi_a,
        psi_b: part.psi_b,
        fold_of: vec![1; ds.n()],
    };
    let moments = moments_from_scores(&scores);
    Ok((scores, moments, fit))
}

/// Conditional test with unpenalized full-sample nuisances. The statistic,
/// critical-value simulation, grid handling, and seeding are shared with the
/// main test; `cfg.reps`, `cfg.k`, and the penalized-fit settings are unused
/// because the fit is deterministic.
pub fn am16_test(
    ds: &Dataset,
    theta0: f64,
    cfg: &InferenceConfig,
    mle: &MleConfig,
) -> Result<TestOutcome, BaselineError> {
    let (_, moments, _) = unpenalized_scores(ds, cfg.crossfit.clip_epsilon, mle)?;
    Ok(test_from_moments(&[moments], theta0, cfg)?)
}

/// Test inversion for the unpenalized conditional baseline.
pub fn am16_confidence_interval(
    ds: &Dataset,
    cfg: &InferenceConfig,
    mle: &MleConfig,
) -> Result<ConfidenceRegion, BaselineError> {
    let (_, moments, _) = unpenalized_scores(ds, cfg.crossfit.clip_epsilon, mle)?;
    Ok(confidence_interval_from_moments(&[moments], cfg)?)
}
