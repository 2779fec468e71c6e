//! The conditional quasi-likelihood-ratio test and its inversion.
//!
//! Everything here is driven by the five [`KernelMoments`] scalars. The
//! statistic for a hypothesized `theta0` is
//!
//! `R(xi) = xi^2 / omega(t0, t0) - inf_theta (omega(theta, t0) / omega(t0, t0) * xi + h(theta))^2 / omega(theta, theta)`
//!
//! with the recentered process
//! `h(theta) = q_hat(theta) - omega(theta, t0) / omega(t0, t0) * q_hat(t0)`,
//! which is independent of `q_hat(t0)` under the null. Critical values are
//! simulated by redrawing `xi* ~ N(0, omega(t0, t0))` while holding `h` and
//! the kernel fixed; the observed statistic plugs in the data realization
//! `xi = q_hat(t0)` (a simulated-draw variant is available behind
//! [`StatisticMode`]).
//!
//! Because the numerator of the inner objective is linear in `theta` and the
//! denominator quadratic, the infimum over a compact interval is attained at
//! one of five candidates (numerator root, stationary point, both endpoints,
//! `theta0`) and is computed exactly; a dense-grid fallback exists for
//! verification.
//!
//! Confidence regions invert the test over a grid. All randomness is keyed by
//! (master seed, repetition, hypothesis bits), so a grid point's acceptance
//! status in [`confidence_interval`] is bit-identical to a standalone [`test`]
//! at that point under the same master seed.

use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::baselines::dml_from_moments;
use crate::crossfit::{
    omega, q_hat, repeat_crossfit, CrossfitConfig, CrossfitError, KernelMoments,
};
use crate::data::Dataset;
use crate::rng::{mix2, mix3, stream, tag};
use crate::stats::quantile_ceil;

/// Smallest covariance-kernel diagonal treated as nondegenerate.
pub const VAR_FLOOR: f64 = 1e-12;
/// Points in the automatically chosen hypothesis grid.
pub const DEFAULT_GRID_POINTS: usize = 401;
/// Half-width of the automatic grid in baseline standard errors.
pub const DEFAULT_GRID_HALF_WIDTH: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("degenerate variance: omega({theta}, {theta}) = {value:e} <= floor")]
    DegenerateVariance { theta: f64, value: f64 },
    #[error("cross-fitting failed: {0}")]
    Crossfit(#[from] CrossfitError),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("no usable default grid: {0}; supply an explicit theta grid")]
    GridRequired(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Compact hypothesis set: `points` uniform values on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    lo: f64,
    hi: f64,
    points: usize,
    values: Vec<f64>,
}

impl ThetaGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self, InferenceError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(InferenceError::Config("grid bounds must be finite"));
        }
        if !(lo < hi) {
            return Err(InferenceError::Config("grid needs lo < hi"));
        }
        if points < 2 {
            return Err(InferenceError::Config("grid needs at least 2 points"));
        }
        let step = (hi - lo) / (points - 1) as f64;
        // min() keeps float drift inside [lo, hi]; the last point is exact
        let mut values: Vec<f64> =
            (0..points).map(|i| (lo + i as f64 * step).min(hi)).collect();
        values[points - 1] = hi;
        Ok(ThetaGrid { lo, hi, points, values })
    }

    /// Degenerate one-point set `{theta}`, for boundary checks and tests.
    pub fn singleton(theta: f64) -> Result<Self, InferenceError> {
        if !theta.is_finite() {
            return Err(InferenceError::Config("grid bounds must be finite"));
        }
        Ok(ThetaGrid { lo: theta, hi: theta, points: 1, values: vec![theta] })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.lo && theta <= self.hi
    }
}

/// What the observed statistic plugs in for `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatisticMode {
    /// The data realization `xi = q_hat(theta0)`.
    #[default]
    DataRealization,
    /// An independent draw `xi ~ N(0, omega(theta0, theta0))`, read off the
    /// simulation step of the algorithm literally. Kept for comparison.
    SimulatedDraw,
}

/// How the inner infimum is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfimumMethod {
    /// Exact candidate enumeration (numerator root, stationary point,
    /// endpoints, `theta0`).
    #[default]
    ExactCandidates,
    /// Brute force over this many uniform points. Verification only.
    DenseGrid(usize),
}

#[derive(Debug, Clone)]
pub struct InferenceConfig {
    pub alpha: f64,
    /// Simulated draws per critical value.
    pub critical_draws: usize,
    /// Independent cross-fitting repetitions to average over.
    pub reps: usize,
    /// Folds.
    pub k: usize,
    pub seed: u64,
    /// Hypothesis set; `None` derives one from the baseline point estimate.
    pub grid: Option<ThetaGrid>,
    pub mode: StatisticMode,
    pub var_floor: f64,
    pub infimum: InfimumMethod,
    pub crossfit: CrossfitConfig,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            alpha: 0.05,
            critical_draws: 500,
            reps: 1,
            k: 3,
            seed: 0,
            grid: None,
            mode: StatisticMode::DataRealization,
            var_floor: VAR_FLOOR,
            infimum: InfimumMethod::ExactCandidates,
            crossfit: CrossfitConfig::default(),
        }
    }
}

/// One repetition's observed statistic and critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepRecord {
    pub statistic: f64,
    pub critical_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub theta0: f64,
    /// Observed statistic, averaged over repetitions.
    pub statistic: f64,
    /// Simulated critical value, averaged over repetitions.
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Draws per repetition behind `critical_value`.
    pub draws_used: usize,
    pub seed: u64,
    pub per_rep: Vec<RepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    pub alpha: f64,
    pub grid: ThetaGrid,
    /// Acceptance flag per grid point (averaged test).
    pub accepted: Vec<bool>,
    /// Maximal accepted runs as `[lo, hi]` pairs, disjoint and sorted.
    pub intervals: Vec<[f64; 2]>,
    /// Total measure of `intervals`.
    pub length: f64,
    /// Each repetition's own accepted runs, for dispersion diagnostics.
    pub per_rep: Vec<Vec<[f64; 2]>>,
    pub seed: u64,
}

impl ConfidenceRegion {
    /// True when every grid point was rejected. A valid outcome, worth
    /// surfacing: it usually means the grid missed the identified set.
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

fn check_diag(theta: f64, value: f64, floor: f64) -> Result<f64, InferenceError> {
    if value.is_nan() {
        return Err(InferenceError::NonFinite("covariance kernel"));
    }
    if value <= floor {
        return Err(InferenceError::DegenerateVariance { theta, value });
    }
    Ok(value)
}

/// Recentered moment process `h(theta)`, zero at `theta0` by construction.
pub fn h_process(m: &KernelMoments, theta0: f64, theta: f64) -> Result<f64, InferenceError> {
    let w00 = check_diag(theta0, omega(m, theta0, theta0), VAR_FLOOR)?;
    Ok(q_hat(m, theta) - omega(m, theta, theta0) / w00 * q_hat(m, theta0))
}

/// Minimum of `omega(t, t) = c_aa t^2 + 2 c_ab t + c_bb` over `[lo, hi]`.
fn kernel_diag_min(m: &KernelMoments, lo: f64, hi: f64) -> (f64, f64) {
    let at = if m.c_aa > 0.0 {
        (-m.c_ab / m.c_aa).clamp(lo, hi)
    } else {
        // c_aa = 0 forces c_ab = 0 (psi_a is constant): the diagonal is flat
        lo
    };
    (at, omega(m, at, at))
}

/// Conditional statistic for one `xi`, with explicit floor and infimum method.
///
/// The inner objective is `f(t) = (a t + b)^2 / q(t)` where
/// `a t + b = q_hat(t) + omega(t, t0) / omega(t0, t0) * (xi - q_hat(t0))` and
/// `q(t) = omega(t, t)`; at `t = theta0` it equals `xi^2 / omega(t0, t0)`
/// identically, so the statistic is computed as `f(theta0) - min f`, which
/// keeps `R >= 0` exact in floating point.
pub fn r_statistic_with(
    xi: f64,
    m: &KernelMoments,
    theta0: f64,
    grid: &ThetaGrid,
    var_floor: f64,
    method: InfimumMethod,
) -> Result<f64, InferenceError> {
    if !xi.is_finite() {
        return Err(InferenceError::NonFinite("xi"));
    }
    if !grid.contains(theta0) {
        return Err(InferenceError::Config("theta0 must lie inside the hypothesis grid"));
    }
    let w00 = check_diag(theta0, omega(m, theta0, theta0), var_floor)?;
    let (lo, hi) = (grid.lo, grid.hi);
    let (qmin_at, qmin) = kernel_diag_min(m, lo, hi);
    check_diag(qmin_at, qmin, var_floor)?;

    let root_n = libm::sqrt(m.n as f64);
    let s = (xi - q_hat(m, theta0)) / w00;
    let a = root_n * m.mean_a + s * (theta0 * m.c_aa + m.c_ab);
    let b = root_n * m.mean_b + s * (theta0 * m.c_ab + m.c_bb);
    let f = |t: f64| {
        let g = a * t + b;
        g * g / omega(m, t, t)
    };

    let inf = match method {
        InfimumMethod::ExactCandidates => {
            let mut best = f(theta0);
            let mut consider = |t: f64| {
                if t.is_finite() {
                    let v = f(t.clamp(lo, hi));
                    if v < best {
                        best = v;
                    }
                }
            };
            consider(lo);
            consider(hi);
            if a != 0.0 {
                consider(-b / a);
            }
            // stationary point of the ratio: (ad - 2bc) t + (2ae - bd) = 0
            // for q(t) = c t^2 + d t + e
            let (c, d, e) = (m.c_aa, 2.0 * m.c_ab, m.c_bb);
            let denom = a * d - 2.0 * b * c;
            if denom != 0.0 {
                consider((b * d - 2.0 * a * e) / denom);
            }
            best
        }
        InfimumMethod::DenseGrid(points) => {
            let mut best = f(theta0);
            if points >= 2 && hi > lo {
                let step = (hi - lo) / (points - 1) as f64;
                for i in 0..points {
                    let t = (lo + i as f64 * step).min(hi);
                    let v = f(t);
                    if v < best {
                        best = v;
                    }
                }
            }
            best
        }
    };
    let r = f(theta0) - inf;
    if !r.is_finite() {
        return Err(InferenceError::NonFinite("statistic"));
    }
    Ok(r)
}

/// Conditional statistic with the default floor and exact infimum.
pub fn r_statistic(
    xi: f64,
    m: &KernelMoments,
    theta0: f64,
    grid: &ThetaGrid,
) -> Result<f64, InferenceError> {
    r_statistic_with(xi, m, theta0, grid, VAR_FLOOR, InfimumMethod::ExactCandidates)
}

/// Simulated conditional critical value from an explicit stream seed.
///
/// Draws `xi* ~ N(0, omega(theta0, theta0))`, evaluates the statistic at each
/// draw, and returns the ceiling-order-statistic `(1 - alpha)` quantile
/// (index `ceil((1 - alpha) m_draws)`, 1-based).
pub fn critical_value_with(
    m: &KernelMoments,
    theta0: f64,
    grid: &ThetaGrid,
    alpha: f64,
    m_draws: usize,
    stream_seed: u64,
    var_floor: f64,
    method: InfimumMethod,
) -> Result<f64, InferenceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::Config("alpha must lie in (0, 1)"));
    }
    if m_draws < 100 {
        return Err(InferenceError::Config("critical value needs at least 100 draws"));
    }
    let w00 = check_diag(theta0, omega(m, theta0, theta0), var_floor)?;
    let sd = libm::sqrt(w00);
    let mut rng = stream(stream_seed);
    let mut stats = Vec::with_capacity(m_draws);
    for _ in 0..m_draws {
        let z: f64 = StandardNormal.sample(&mut rng);
        stats.push(r_statistic_with(sd * z, m, theta0, grid, var_floor, method)?);
    }
    Ok(quantile_ceil(&mut stats, 1.0 - alpha))
}

/// Critical value with the default floor and exact infimum.
pub fn critical_value(
    m: &KernelMoments,
    theta0: f64,
    grid: &ThetaGrid,
    alpha: f64,
    m_draws: usize,
    stream_seed: u64,
) -> Result<f64, InferenceError> {
    critical_value_with(
        m,
        theta0,
        grid,
        alpha,
        m_draws,
        stream_seed,
        VAR_FLOOR,
        InfimumMethod::ExactCandidates,
    )
}

/// Stream seed for a repetition's critical-value draws at one hypothesis.
/// Keying on the hypothesis bits makes grid scans and standalone tests agree.
fn critical_stream_seed(master: u64, rep: usize, theta0: f64) -> u64 {
    mix3(mix2(master, tag::CRITICAL), rep as u64, theta0.to_bits())
}

/// Stream seed for the simulated-draw observed statistic (off by default).
fn observed_stream_seed(master: u64, rep: usize, theta0: f64) -> u64 {
    mix3(mix2(master, tag::OBSERVED), rep as u64, theta0.to_bits())
}

/// Automatic hypothesis grid: baseline point estimate plus/minus
/// [`DEFAULT_GRID_HALF_WIDTH`] standard errors, widened to cover `include`.
pub fn default_grid(m: &KernelMoments, include: Option<f64>) -> Result<ThetaGrid, InferenceError> {
    let core = dml_from_moments(m)
        .map_err(|_| InferenceError::GridRequired("the baseline point estimate is degenerate"))?;
    if !(core.std_error > 0.0) || !core.std_error.is_finite() || !core.theta_hat.is_finite() {
        return Err(InferenceError::GridRequired("the baseline standard error is degenerate"));
    }
    let mut lo = core.theta_hat - DEFAULT_GRID_HALF_WIDTH * core.std_error;
    let mut hi = core.theta_hat + DEFAULT_GRID_HALF_WIDTH * core.std_error;
    if let Some(t) = include {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    ThetaGrid::new(lo, hi, DEFAULT_GRID_POINTS)
}

fn check_config(cfg: &InferenceConfig) -> Result<(), InferenceError> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(InferenceError::Config("alpha must lie in (0, 1)"));
    }
    if cfg.critical_draws < 100 {
        return Err(InferenceError::Config("critical value needs at least 100 draws"));
    }
    if cfg.reps == 0 {
        return Err(InferenceError::Config("reps must be >= 1"));
    }
    if !(cfg.var_floor > 0.0) {
        return Err(InferenceError::Config("var_floor must be > 0"));
    }
    Ok(())
}

fn resolve_grid(
    cfg: &InferenceConfig,
    m: &KernelMoments,
    include: Option<f64>,
) -> Result<ThetaGrid, InferenceError> {
    match (&cfg.grid, include) {
        (Some(g), Some(t)) if !g.contains(t) => {
            Err(InferenceError::Config("theta0 must lie inside the hypothesis grid"))
        }
        (Some(g), _) => Ok(g.clone()),
        (None, inc) => default_grid(m, inc),
    }
}

/// One repetition's observed statistic and critical value at `theta0`.
fn rep_record(
    m: &KernelMoments,
    theta0: f64,
    grid: &ThetaGrid,
    cfg: &InferenceConfig,
    rep: usize,
) -> Result<RepRecord, InferenceError> {
    let xi = match cfg.mode {
        StatisticMode::DataRealization => q_hat(m, theta0),
        StatisticMode::SimulatedDraw => {
            let w00 =
                check_diag(theta0, omega(m, theta0, theta0), cfg.var_floor)?;
            let mut rng = stream(observed_stream_seed(cfg.seed, rep, theta0));
            let z: f64 = StandardNormal.sample(&mut rng);
            libm::sqrt(w00) * z
        }
    };
    let statistic = r_statistic_with(xi, m, theta0, grid, cfg.var_floor, cfg.infimum)?;
    let critical_value = critical_value_with(
        m,
        theta0,
        grid,
        cfg.alpha,
        cfg.critical_draws,
        critical_stream_seed(cfg.seed, rep, theta0),
        cfg.var_floor,
        cfg.infimum,
    )?;
    Ok(RepRecord { statistic, critical_value })
}

fn aggregate(per_rep: &[RepRecord]) -> (f64, f64) {
    let n = per_rep.len() as f64;
    let stat = per_rep.iter().map(|r| r.statistic).sum::<f64>() / n;
    let crit = per_rep.iter().map(|r| r.critical_value).sum::<f64>() / n;
    (stat, crit)
}

/// Test `H0: theta = theta0` from precomputed per-repetition moments.
///
/// This is the shared back end of [`test`] and of the baseline tests that
/// estimate nuisances differently but use identical conditional machinery.
pub fn test_from_moments(
    moments: &[KernelMoments],
    theta0: f64,
    cfg: &InferenceConfig,
) -> Result<TestOutcome, InferenceError> {
    check_config(cfg)?;
    if moments.is_empty() {
        return Err(InferenceError::Config("at least one repetition is required"));
    }
    let grid = resolve_grid(cfg, &moments[0], Some(theta0))?;
    let mut per_rep = Vec::with_capacity(moments.len());
    for (i, m) in moments.iter().enumerate() {
        per_rep.push(rep_record(m, theta0, &grid, cfg, i + 1)?);
    }
    let (statistic, critical_value) = aggregate(&per_rep);
    Ok(TestOutcome {
        theta0,
        statistic,
        critical_value,
        alpha: cfg.alpha,
        reject: statistic > critical_value,
        draws_used: cfg.critical_draws,
        seed: cfg.seed,
        per_rep,
    })
}

/// Cross-fit, then test `H0: theta = theta0`.
pub fn test(
    ds: &Dataset,
    theta0: f64,
    cfg: &InferenceConfig,
) -> Result<TestOutcome, InferenceError> {
    check_config(cfg)?;
    let runs = repeat_crossfit(ds, cfg.k, &cfg.crossfit, cfg.reps, cfg.seed)?;
    let moments: Vec<KernelMoments> = runs.iter().map(|r| r.moments).collect();
    test_from_moments(&moments, theta0, cfg)
}

fn runs_to_intervals(grid: &ThetaGrid, accepted: &[bool]) -> Vec<[f64; 2]> {
    let vals = grid.values();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=accepted.len() {
        let on = i < accepted.len() && accepted[i];
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push([vals[s], vals[i - 1]]);
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Invert the test over a grid from precomputed per-repetition moments.
pub fn confidence_interval_from_moments(
    moments: &[KernelMoments],
    cfg: &InferenceConfig,
) -> Result<ConfidenceRegion, InferenceError> {
    check_config(cfg)?;
    if moments.is_empty() {
        return Err(InferenceError::Config("at least one repetition is required"));
    }
    let grid = resolve_grid(cfg, &moments[0], None)?;
    let g = grid.points();
    let reps = moments.len();
    let mut accepted = vec![false; g];
    let mut rep_accepted = vec![vec![false; g]; reps];
    for (gi, &theta0) in grid.values().iter().enumerate() {
        let mut per_rep = Vec::with_capacity(reps);
        for (i, m) in moments.iter().enumerate() {
            let rec = rep_record(m, theta0, &grid, cfg, i + 1)?;
            rep_accepted[i][gi] = rec.statistic <= rec.critical_value;
            per_rep.push(rec);
        }
        let (stat, crit) = aggregate(&per_rep);
        accepted[gi] = stat <= crit;
    }
    let intervals = runs_to_intervals(&grid, &accepted);
    let length = intervals.iter().map(|iv| iv[1] - iv[0]).sum();
    let per_rep = rep_accepted.iter().map(|acc| runs_to_intervals(&grid, acc)).collect();
    Ok(ConfidenceRegion {
        alpha: cfg.alpha,
        grid,
        accepted,
        intervals,
        length,
        per_rep,
        seed: cfg.seed,
    })
}

/// Cross-fit, then collect the hypothesis values the test does not reject.
pub fn confidence_interval(
    ds: &Dataset,
    cfg: &InferenceConfig,
) -> Result<ConfidenceRegion, InferenceError> {
    check_config(cfg)?;
    let runs = repeat_crossfit(ds, cfg.k, &cfg.crossfit, cfg.reps, cfg.seed)?;
    let moments: Vec<KernelMoments> = runs.iter().map(|r| r.moments).collect();
    confidence_interval_from_moments(&moments, cfg)
}
