//! l1-penalized least squares and logistic regression.
//!
//! Both solvers minimize `mean(loss) + (lambda / n) * sum_j w_j |beta_j|`
//! over the raw design — no implicit intercept, every coordinate penalized
//! unless a penalty weight says otherwise. The Gaussian solver is cyclic
//! coordinate descent with soft-thresholding and an active-set refinement;
//! the binomial solver wraps the same weighted coordinate descent inside a
//! damped proximal-Newton (IRLS) outer loop. Solutions carry a KKT
//! certificate; non-convergence is reported, never hidden.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::linalg::Mat;

#[derive(Debug, Error, PartialEq)]
pub enum LassoError {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("perfect separation: the unpenalized logistic likelihood has no finite optimum")]
    Separation,
    #[error("objective became non-finite at iteration {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Binomial,
}

/// A penalized regression problem. `lambda` is on the raw-sum scale of the
/// estimating equations; the solver divides by the sample size internally, so
/// the effective per-observation penalty is `lambda / n`.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    pub design: Mat,
    pub response: Vec<f64>,
    pub lambda: f64,
    pub family: Family,
    /// Optional per-coordinate penalty weights (default all one). A zero
    /// entry leaves that coordinate unpenalized.
    pub penalty_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LassoConfig {
    /// Convergence: max absolute coefficient change per sweep.
    pub coef_tol: f64,
    /// Convergence: max KKT violation.
    pub kkt_tol: f64,
    /// Cap on outer iterations (sweeps for Gaussian, IRLS steps for binomial).
    pub max_outer: usize,
    /// Record the penalized objective after each outer iteration.
    pub trace: bool,
    /// Deviation switch: treat design column 0 as an unpenalized intercept.
    /// Off by default; the cross-fitting pipeline never sets it.
    pub unpenalized_intercept: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            coef_tol: 1e-7,
            kkt_tol: 1e-6,
            max_outer: 10_000,
            trace: false,
            unpenalized_intercept: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub coefficients: Vec<f64>,
    /// Penalized objective recomputed from the returned coefficients.
    pub objective_value: f64,
    /// Outer iterations consumed.
    pub iterations: usize,
    /// True only when both the coefficient-change and KKT criteria held.
    pub converged: bool,
    /// Largest KKT subgradient violation at the returned coefficients.
    pub kkt_violation: f64,
    /// Objective after each outer iteration when tracing was requested.
    pub trace: Vec<f64>,
}

/// Rule-of-thumb penalty `scale * sqrt(n * ln(p * n))`.
pub fn default_penalty(n: usize, p: usize, scale: f64) -> Result<f64, LassoError> {
    if n < 2 {
        return Err(LassoError::InvalidInput("default_penalty needs n >= 2"));
    }
    if p < 1 {
        return Err(LassoError::InvalidInput("default_penalty needs p >= 1"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(LassoError::InvalidInput("default_penalty needs scale > 0"));
    }
    Ok(scale * libm::sqrt(n as f64 * libm::log(p as f64 * n as f64)))
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Numerically stable `ln(1 + exp(x))`.
#[inline]
pub fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Logistic function, stable in both tails.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn validate(prob: &LassoProblem, cfg: &LassoConfig) -> Result<Vec<f64>, LassoError> {
    let n = prob.design.n_rows();
    let q = prob.design.n_cols();
    if n == 0 || q == 0 {
        return Err(LassoError::InvalidInput("empty design"));
    }
    if prob.response.len() != n {
        return Err(LassoError::InvalidInput("response length != design rows"));
    }
    if !(prob.lambda >= 0.0) || !prob.lambda.is_finite() {
        return Err(LassoError::InvalidInput("lambda must be finite and >= 0"));
    }
    if prob.response.iter().any(|v| !v.is_finite()) {
        return Err(LassoError::InvalidInput("non-finite response"));
    }
    if prob.design.iter_all().any(|v| !v.is_finite()) {
        return Err(LassoError::InvalidInput("non-finite design entry"));
    }
    if prob.family == Family::Binomial && prob.response.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(LassoError::InvalidInput("binomial response must be 0/1"));
    }
    let mut weights = match &prob.penalty_weights {
        Some(w) => {
            if w.len() != q {
                return Err(LassoError::InvalidInput("penalty_weights length != columns"));
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(LassoError::InvalidInput("penalty weights must be finite and >= 0"));
            }
            w.clone()
        }
        None => vec![1.0; q],
    };
    if cfg.unpenalized_intercept {
        weights[0] = 0.0;
    }
    Ok(weights)
}

/// Penalty term `(lambda / n) * sum_j w_j |beta_j|`.
fn penalty(beta: &[f64], weights: &[f64], lambda: f64, n: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..beta.len() {
        s += weights[j] * libm::fabs(beta[j]);
    }
    lambda / n as f64 * s
}

fn gaussian_objective(resid: &[f64], beta: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let n = resid.len();
    let mut mse = 0.0;
    for &r in resid {
        mse += r * r;
    }
    mse / n as f64 + penalty(beta, weights, lambda, n)
}

fn binomial_objective(eta: &[f64], y: &[f64], beta: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let n = eta.len();
    let mut nll = 0.0;
    for i in 0..n {
        nll += log1pexp(eta[i]) - y[i] * eta[i];
    }
    nll / n as f64 + penalty(beta, weights, lambda, n)
}

/// Largest KKT violation for the Gaussian problem: at zero coordinates
/// `|2 mean(x_j r)|` may not exceed `w_j lambda / n`; at active coordinates it
/// must equal `sign(beta_j) w_j lambda / n`.
fn gaussian_kkt(design: &Mat, resid: &[f64], beta: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let n = design.n_rows() as f64;
    let mut worst = 0.0_f64;
    for j in 0..design.n_cols() {
        let g = 2.0 * crate::linalg::dot(design.col(j), resid) / n;
        let t = weights[j] * lambda / n;
        let v = if beta[j] == 0.0 {
            (libm::fabs(g) - t).max(0.0)
        } else {
            libm::fabs(g - t * sign(beta[j]))
        };
        worst = worst.max(v);
    }
    worst
}

/// Binomial analog with gradient `mean(x_j (logistic(eta) - y))`.
fn binomial_kkt(design: &Mat, eta: &[f64], y: &[f64], beta: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let n = design.n_rows();
    let mut grad_src = vec![0.0; n];
    for i in 0..n {
        grad_src[i] = logistic(eta[i]) - y[i];
    }
    let mut worst = 0.0_f64;
    for j in 0..design.n_cols() {
        let g = crate::linalg::dot(design.col(j), &grad_src) / n as f64;
        let t = weights[j] * lambda / n as f64;
        let v = if beta[j] == 0.0 {
            (libm::fabs(g) - t).max(0.0)
        } else {
            libm::fabs(g + t * sign(beta[j]))
        };
        worst = worst.max(v);
    }
    worst
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for the Gaussian lasso.
pub fn solve_lasso_ols(prob: &LassoProblem, cfg: &LassoConfig) -> Result<LassoSolution, LassoError> {
    if prob.family != Family::Gaussian {
        return Err(LassoError::InvalidInput("solve_lasso_ols needs Family::Gaussian"));
    }
    let weights = validate(prob, cfg)?;
    let design = &prob.design;
    let n = design.n_rows();
    let q = design.n_cols();
    let nf = n as f64;
    // per-coordinate curvature mean(x_j^2); zero-variance columns stay at zero
    let xsq: Vec<f64> = (0..q).map(|j| crate::linalg::dot(design.col(j), design.col(j)) / nf).collect();
    let thresh: Vec<f64> = (0..q).map(|j| weights[j] * prob.lambda / (2.0 * nf)).collect();

    let mut beta = vec![0.0_f64; q];
    let mut resid = prob.response.clone();
    let mut trace = Vec::new();
    let mut sweeps = 0usize;
    let mut converged = false;
    let mut kkt = f64::INFINITY;

    let sweep = |beta: &mut Vec<f64>, resid: &mut Vec<f64>, active_only: bool| -> f64 {
        let mut maxd = 0.0_f64;
        for j in 0..q {
            if xsq[j] == 0.0 || (active_only && beta[j] == 0.0) {
                continue;
            }
            let old = beta[j];
            let col = design.col(j);
            let zj = crate::linalg::dot(col, resid) / nf + xsq[j] * old;
            let new = soft_threshold(zj, thresh[j]) / xsq[j];
            if new != old {
                crate::linalg::axpy(old - new, col, resid);
                beta[j] = new;
                maxd = maxd.max(libm::fabs(new - old));
            }
        }
        maxd
    };

    while sweeps < cfg.max_outer {
        let maxd = sweep(&mut beta, &mut resid, false);
        sweeps += 1;
        if cfg.trace {
            trace.push(gaussian_objective(&resid, &beta, &weights, prob.lambda));
        }
        if maxd < cfg.coef_tol {
            kkt = gaussian_kkt(design, &resid, &beta, &weights, prob.lambda);
            if kkt < cfg.kkt_tol {
                converged = true;
                break;
            }
            continue;
        }
        // polish the active set before the next full sweep
        while sweeps < cfg.max_outer {
            let d = sweep(&mut beta, &mut resid, true);
            sweeps += 1;
            if cfg.trace {
                trace.push(gaussian_objective(&resid, &beta, &weights, prob.lambda));
            }
            if d < cfg.coef_tol {
                break;
            }
        }
    }
    if kkt.is_infinite() {
        kkt = gaussian_kkt(design, &resid, &beta, &weights, prob.lambda);
    }
    let objective_value = gaussian_objective(&resid, &beta, &weights, prob.lambda);
    if !objective_value.is_finite() {
        return Err(LassoError::NonFinite(sweeps));
    }
    Ok(LassoSolution { coefficients: beta, objective_value, iterations: sweeps, converged, kkt_violation: kkt, trace })
}

/// Damped proximal Newton for the l1-penalized logistic regression.
pub fn solve_lasso_logit(prob: &LassoProblem, cfg: &LassoConfig) -> Result<LassoSolution, LassoError> {
    if prob.family != Family::Binomial {
        return Err(LassoError::InvalidInput("solve_lasso_logit needs Family::Binomial"));
    }
    let weights = validate(prob, cfg)?;
    let design = &prob.design;
    let y = &prob.response;
    let n = design.n_rows();
    let q = design.n_cols();
    let nf = n as f64;
    let thresh: Vec<f64> = (0..q).map(|j| weights[j] * prob.lambda / nf).collect();
    // separation is only reachable when some direction is unpenalized
    let sep_possible = thresh.iter().any(|&t| t == 0.0);
    const PCLAMP: f64 = 1e-10;
    const INNER_MAX: usize = 1_000;

    let mut beta = vec![0.0_f64; q];
    let mut eta = vec![0.0_f64; n];
    let mut obj = binomial_objective(&eta, y, &beta, &weights, prob.lambda);
    let mut trace = Vec::new();
    let mut outer = 0usize;
    let mut converged = false;
    let mut kkt = f64::INFINITY;

    let mut w = vec![0.0_f64; n];
    let mut s = vec![0.0_f64; n]; // working residual zeta - X beta_inner

    while outer < cfg.max_outer {
        outer += 1;
        // IRLS weights and working residuals at the current iterate
        for i in 0..n {
            let p = logistic(eta[i]).clamp(PCLAMP, 1.0 - PCLAMP);
            w[i] = p * (1.0 - p);
            s[i] = (y[i] - p) / w[i];
        }
        let denom: Vec<f64> = (0..q)
            .map(|j| {
                let col = design.col(j);
                let mut acc = 0.0;
                for i in 0..n {
                    acc += w[i] * col[i] * col[i];
                }
                acc / nf
            })
            .collect();

        // inner weighted lasso on the quadratic model, warm-started at beta
        let beta_old = beta.clone();
        let mut inner = 0usize;
        loop {
            let active_only = inner > 0 && inner % 5 != 0; // periodic full sweeps
            let mut maxd = 0.0_f64;
            for j in 0..q {
                if denom[j] <= 0.0 || (active_only && beta[j] == 0.0) {
                    continue;
                }
                let old = beta[j];
                let col = design.col(j);
                let mut acc = 0.0;
                for i in 0..n {
                    acc += w[i] * col[i] * s[i];
                }
                let zj = acc / nf + denom[j] * old;
                let new = soft_threshold(zj, thresh[j]) / denom[j];
                if new != old {
                    for i in 0..n {
                        s[i] -= (new - old) * col[i];
                    }
                    beta[j] = new;
                    maxd = maxd.max(libm::fabs(new - old));
                }
            }
            inner += 1;
            if (maxd < cfg.coef_tol && !active_only) || inner >= INNER_MAX {
                break;
            }
        }

        // damped step: backtrack toward beta_old until the true objective
        // does not increase
        let mut step = 1.0_f64;
        let mut accepted = false;
        let proposal = beta.clone();
        for _ in 0..40 {
            for j in 0..q {
                beta[j] = beta_old[j] + step * (proposal[j] - beta_old[j]);
            }
            let new_eta = design.matvec(&beta);
            let new_obj = binomial_objective(&new_eta, y, &beta, &weights, prob.lambda);
            if !new_obj.is_finite() {
                return Err(LassoError::NonFinite(outer));
            }
            if new_obj <= obj + 1e-14 * (1.0 + libm::fabs(obj)) {
                eta = new_eta;
                obj = new_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        let maxd_outer = if accepted {
            beta.iter().zip(&beta_old).map(|(a, b)| libm::fabs(a - b)).fold(0.0_f64, f64::max)
        } else {
            // no descent available: restore and let the KKT check decide
            beta = beta_old;
            0.0
        };
        if cfg.trace {
            trace.push(obj);
        }

        if sep_possible {
            let max_eta = eta.iter().fold(0.0_f64, |m, &e| m.max(libm::fabs(e)));
            let classified = (0..n).all(|i| (2.0 * y[i] - 1.0) * eta[i] > 0.0);
            if max_eta > 30.0 && classified {
                return Err(LassoError::Separation);
            }
        }

        if maxd_outer < cfg.coef_tol || !accepted {
            kkt = binomial_kkt(design, &eta, y, &beta, &weights, prob.lambda);
            if kkt < cfg.kkt_tol {
                converged = true;
                break;
            }
            if !accepted {
                break; // stalled short of the KKT tolerance
            }
        }
    }
    if kkt.is_infinite() {
        kkt = binomial_kkt(design, &eta, y, &beta, &weights, prob.lambda);
    }
    let objective_value = binomial_objective(&eta, y, &beta, &weights, prob.lambda);
    if !objective_value.is_finite() {
        return Err(LassoError::NonFinite(outer));
    }
    Ok(LassoSolution { coefficients: beta, objective_value, iterations: outer, converged, kkt_violation: kkt, trace })
}

/// Dispatch on `prob.family`.
pub fn solve(prob: &LassoProblem, cfg: &LassoConfig) -> Result<LassoSolution, LassoError> {
    match prob.family {
        Family::Gaussian => solve_lasso_ols(prob, cfg),
        Family::Binomial => solve_lasso_logit(prob, cfg),
    }
}
