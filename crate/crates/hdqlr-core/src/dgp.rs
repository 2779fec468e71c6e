//! Threshold-crossing simulation designs and the size/power harness.
//!
//! A unit draws a compliance latent `delta ~ N(0, 1)` and covariates
//! `X ~ N(0, Sigma)` with Toeplitz `Sigma_jk = u^|j-k|`. Potential treatments
//! are `D(0) = 1{Phi(delta) < p_at}` and `D(1) = 1{Phi(delta) < 1 - p_nt}`,
//! so `p_at`, `p_nt`, and `1 - p_at - p_nt` are the always-taker,
//! never-taker, and complier shares, and `D(1) >= D(0)` holds unit by unit.
//! The outcome is `Y = D + x_1 + eps` (or the row sum of X instead of `x_1`,
//! behind [`OutcomeCovariate`]), so the complier treatment effect is the
//! additive constant [`TREATMENT_EFFECT`] = 1.
//!
//! The instrument defaults to a fair coin independent of `delta`, which makes
//! the observed first stage equal the complier share. Reading the threshold
//! model literally, one can instead set `Z = 1{delta >= 0}`
//! ([`InstrumentDraw::SharedLatent`]); then `Z` is a deterministic function
//! of the compliance latent and the *observed* compliance collapses to
//! `1 - 2 (p_at + p_nt)` — zero in the (0.25, 0.25) design and negative in
//! the weaker ones. That variant is kept for study, not as the default; see
//! `shared_latent_instrument_kills_the_first_stage` below for the effect.
//!
//! Draw order per dataset (one seeded stream): covariate noise column by
//! column, then `delta`, then the instrument coins (independent-coin mode
//! only), then `eps`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::baselines::{dml_aggregate, dml_from_moments, unpenalized_scores, DmlCore, MleConfig};
use crate::crossfit::{full_sample_lasso_scores, repeat_crossfit, KernelMoments};
use crate::data::{DataError, Dataset};
use crate::inference::{test_from_moments, InferenceConfig};
use crate::linalg::{cholesky_in_place, LinalgError, Mat};
use crate::rng::{mix2, stream, tag};
use crate::score::NuisanceValues;
use crate::stats::normal_cdf;
use crate::Method;

/// Additive complier treatment effect in the outcome equation.
pub const TREATMENT_EFFECT: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum DgpError {
    #[error("invalid design: {0}")]
    Config(&'static str),
    #[error("generated data rejected: {0}")]
    Data(#[from] DataError),
    #[error("covariance factorization failed: {0}")]
    Linalg(#[from] LinalgError),
    #[error(
        "{failures} of {reps} replications failed for {method} (>= 1%): aborting the experiment"
    )]
    TooManyFailures { method: &'static str, failures: usize, reps: usize },
}

/// Which covariate function enters the outcome equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomeCovariate {
    /// `Y = D + x_1 + eps`.
    #[default]
    FirstColumn,
    /// `Y = D + sum_j x_j + eps`.
    RowSum,
}

/// How the instrument is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InstrumentDraw {
    /// Fair coin independent of the compliance latent.
    #[default]
    IndependentCoin,
    /// `Z = 1{delta >= 0}`: the literal threshold reading, which degrades
    /// the observed first stage (see module docs).
    SharedLatent,
}

/// The three studied identification regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignPreset {
    /// `(p_at, p_nt) = (0.25, 0.25)`: complier share 0.5.
    Strong,
    /// `(0.45, 0.45)`: complier share 0.1.
    Weak,
    /// `(0.49, 0.49)`: complier share 0.02.
    Unidentified,
}

impl DesignPreset {
    pub fn shares(self) -> (f64, f64) {
        match self {
            DesignPreset::Strong => (0.25, 0.25),
            DesignPreset::Weak => (0.45, 0.45),
            DesignPreset::Unidentified => (0.49, 0.49),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            DesignPreset::Strong => "strong",
            DesignPreset::Weak => "weak",
            DesignPreset::Unidentified => "unidentified",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "strong" => Some(DesignPreset::Strong),
            "weak" => Some(DesignPreset::Weak),
            "unidentified" => Some(DesignPreset::Unidentified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub dim_x: usize,
    /// Always-taker share, in `[0, 0.5)`.
    pub p_at: f64,
    /// Never-taker share, in `[0, 0.5)`.
    pub p_nt: f64,
    /// Toeplitz correlation base, in `(-1, 1)`.
    pub u: f64,
    pub seed: u64,
    pub outcome: OutcomeCovariate,
    pub instrument: InstrumentDraw,
}

impl DgpConfig {
    /// A preset regime with the studied default `u = 0.5`.
    pub fn preset(preset: DesignPreset, n: usize, dim_x: usize, seed: u64) -> Self {
        let (p_at, p_nt) = preset.shares();
        DgpConfig {
            n,
            dim_x,
            p_at,
            p_nt,
            u: 0.5,
            seed,
            outcome: OutcomeCovariate::default(),
            instrument: InstrumentDraw::default(),
        }
    }

    /// Population complier share `1 - p_at - p_nt`.
    pub fn complier_share(&self) -> f64 {
        1.0 - self.p_at - self.p_nt
    }

    pub fn validate(&self) -> Result<(), DgpError> {
        if self.n < 10 {
            return Err(DgpError::Config("n must be >= 10"));
        }
        if self.dim_x == 0 {
            return Err(DgpError::Config("dim_x must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.p_at) || !(0.0..0.5).contains(&self.p_nt) {
            return Err(DgpError::Config("p_at and p_nt must lie in [0, 0.5)"));
        }
        if self.p_at + self.p_nt >= 1.0 {
            return Err(DgpError::Config("p_at + p_nt must be < 1"));
        }
        if !(-1.0 < self.u && self.u < 1.0) || !self.u.is_finite() {
            return Err(DgpError::Config("u must lie in (-1, 1)"));
        }
        Ok(())
    }

    /// Short identifier used in tidy outputs.
    pub fn design_id(&self) -> String {
        let regime = [DesignPreset::Strong, DesignPreset::Weak, DesignPreset::Unidentified]
            .into_iter()
            .find(|p| p.shares() == (self.p_at, self.p_nt))
            .map(|p| p.tag().to_string())
            .unwrap_or_else(|| format!("pat{}-pnt{}", self.p_at, self.p_nt));
        format!("{}-dim{}-n{}", regime, self.dim_x, self.n)
    }
}

/// Everything the generator knows about a draw, including what is latent to
/// an analyst: potential treatments and the outcome noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentData {
    pub config: DgpConfig,
    pub x: Mat,
    pub z: Vec<f64>,
    pub delta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub d0: Vec<bool>,
    pub d1: Vec<bool>,
    /// Untreated outcome `Y(0)`; `Y(1) = Y(0) + TREATMENT_EFFECT`.
    pub y_base: Vec<f64>,
}

impl LatentData {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Realized treatment of unit `i`.
    pub fn d(&self, i: usize) -> f64 {
        let taken = if self.z[i] == 1.0 { self.d1[i] } else { self.d0[i] };
        f64::from(taken)
    }

    /// Potential outcome of unit `i` under treatment `d`.
    pub fn potential_y(&self, i: usize, d: bool) -> f64 {
        if d {
            self.y_base[i] + TREATMENT_EFFECT
        } else {
            self.y_base[i]
        }
    }

    /// Realized outcome of unit `i`.
    pub fn y(&self, i: usize) -> f64 {
        self.potential_y(i, self.d(i) == 1.0)
    }

    pub fn is_complier(&self, i: usize) -> bool {
        self.d1[i] && !self.d0[i]
    }

    pub fn complier_share(&self) -> f64 {
        let count = (0..self.n()).filter(|&i| self.is_complier(i)).count();
        count as f64 / self.n() as f64
    }

    /// Assemble the analyst-visible dataset.
    pub fn into_dataset(self) -> Result<Dataset, DgpError> {
        let n = self.n();
        let d: Vec<f64> = (0..n).map(|i| self.d(i)).collect();
        let y: Vec<f64> = (0..n).map(|i| self.y(i)).collect();
        let names: Vec<String> = (1..=self.config.dim_x).map(|j| format!("x{j}")).collect();
        Ok(Dataset::new(y, d, self.z, self.x, names, None)?)
    }
}

/// Lower Cholesky factor of the Toeplitz correlation `u^|j-k|`.
fn toeplitz_cholesky(dim: usize, u: f64) -> Result<Mat, DgpError> {
    let mut powers = vec![1.0; dim];
    for t in 1..dim {
        powers[t] = powers[t - 1] * u;
    }
    let mut sigma = vec![0.0; dim * dim];
    for j in 0..dim {
        for k in 0..dim {
            sigma[k * dim + j] = powers[j.abs_diff(k)];
        }
    }
    cholesky_in_place(&mut sigma, dim)?;
    let mut l = Mat::zeros(dim, dim);
    for k in 0..dim {
        for j in k..dim {
            l.set(j, k, sigma[k * dim + j]);
        }
    }
    Ok(l)
}

/// Draw one dataset together with its latent structure.
pub fn generate_with_latents(cfg: &DgpConfig) -> Result<LatentData, DgpError> {
    cfg.validate()?;
    let (n, p) = (cfg.n, cfg.dim_x);
    let mut rng = stream(mix2(cfg.seed, tag::DATASET));
    let chol = toeplitz_cholesky(p, cfg.u)?;

    // covariate noise, drawn column-major, then correlated through L
    let mut noise = Mat::zeros(n, p);
    for j in 0..p {
        let col = noise.col_mut(j);
        for v in col.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    let mut x = Mat::zeros(n, p);
    for j in 0..p {
        for k in 0..=j {
            let ljk = chol.get(j, k);
            if ljk != 0.0 {
                crate::linalg::axpy(ljk, noise.col(k), x.col_mut(j));
            }
        }
    }

    let delta: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z: Vec<f64> = match cfg.instrument {
        InstrumentDraw::IndependentCoin => {
            (0..n).map(|_| f64::from(rng.random::<f64>() < 0.5)).collect()
        }
        InstrumentDraw::SharedLatent => delta.iter().map(|&d| f64::from(d >= 0.0)).collect(),
    };
    let epsilon: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    let d0: Vec<bool> = delta.iter().map(|&d| normal_cdf(d) < cfg.p_at).collect();
    let d1: Vec<bool> = delta.iter().map(|&d| normal_cdf(d) < 1.0 - cfg.p_nt).collect();
    let y_base: Vec<f64> = (0..n)
        .map(|i| {
            let covariate = match cfg.outcome {
                OutcomeCovariate::FirstColumn => x.get(i, 0),
                OutcomeCovariate::RowSum => (0..p).map(|j| x.get(i, j)).sum(),
            };
            covariate + epsilon[i]
        })
        .collect();
    for i in 0..n {
        debug_assert!(d1[i] >= d0[i], "monotonicity must hold by construction");
    }
    Ok(LatentData { config: cfg.clone(), x, z, delta, epsilon, d0, d1, y_base })
}

/// Draw one analyst-visible dataset.
pub fn generate(cfg: &DgpConfig) -> Result<Dataset, DgpError> {
    generate_with_latents(cfg)?.into_dataset()
}

/// The design's true nuisance functions evaluated on a covariate matrix.
/// With the coin instrument, the propensity is 1/2 and the treatment rates
/// are the constants `m_1 = 1 - p_nt`, `m_0 = p_at`; the outcome regressions
/// add the design's covariate term.
pub fn true_nuisance_values(x: &Mat, cfg: &DgpConfig) -> NuisanceValues {
    let n = x.n_rows();
    let m1 = 1.0 - cfg.p_nt;
    let m0 = cfg.p_at;
    let covariate: Vec<f64> = (0..n)
        .map(|i| match cfg.outcome {
            OutcomeCovariate::FirstColumn => x.get(i, 0),
            OutcomeCovariate::RowSum => (0..x.n_cols()).map(|j| x.get(i, j)).sum(),
        })
        .collect();
    NuisanceValues {
        phat: vec![0.5; n],
        mhat1: vec![m1; n],
        mhat0: vec![m0; n],
        ghat1: covariate.iter().map(|&c| m1 * TREATMENT_EFFECT + c).collect(),
        ghat0: covariate.iter().map(|&c| m0 * TREATMENT_EFFECT + c).collect(),
    }
}

/// One method's decisions across the hypothesis values, or why it failed.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodResult {
    /// `true` = reject, aligned with the hypothesis grid.
    Decisions(Vec<bool>),
    Failed(String),
}

/// One replication's decisions for every requested method.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub rep: usize,
    /// Aligned with `PowerConfig::methods`.
    pub results: Vec<MethodResult>,
}

#[derive(Debug, Clone)]
pub struct PowerConfig {
    pub methods: Vec<Method>,
    /// Hypothesized values tested in every replication.
    pub theta_grid: Vec<f64>,
    pub reps: usize,
    pub alpha: f64,
    pub inference: InferenceConfig,
    pub mle: MleConfig,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            methods: vec![Method::Hdqlr],
            theta_grid: vec![1.0],
            reps: 500,
            alpha: 0.05,
            inference: InferenceConfig::default(),
            mle: MleConfig::default(),
        }
    }
}

fn check_power_config(pcfg: &PowerConfig) -> Result<(), DgpError> {
    if pcfg.methods.is_empty() {
        return Err(DgpError::Config("at least one method is required"));
    }
    if pcfg.theta_grid.is_empty() || pcfg.theta_grid.iter().any(|t| !t.is_finite()) {
        return Err(DgpError::Config("the hypothesis grid must be finite and nonempty"));
    }
    if pcfg.reps == 0 {
        return Err(DgpError::Config("reps must be >= 1"));
    }
    if !(pcfg.alpha > 0.0 && pcfg.alpha < 1.0) {
        return Err(DgpError::Config("alpha must lie in (0, 1)"));
    }
    Ok(())
}

/// Empirical rejection rates per method and hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCurve {
    pub theta_values: Vec<f64>,
    pub methods: Vec<Method>,
    /// `rates[m][t]` for method `m` at hypothesis `t`.
    pub rates: Vec<Vec<f64>>,
    /// Excluded replications per method.
    pub failures: Vec<usize>,
    pub reps: usize,
    pub alpha: f64,
    pub design: DgpConfig,
}

fn normal_ci_decisions(core: DmlCore, alpha: f64, thetas: &[f64]) -> Result<Vec<bool>, String> {
    let est = dml_aggregate(&[core], alpha).map_err(|e| e.to_string())?;
    Ok(thetas.iter().map(|&t| t < est.ci[0] || t > est.ci[1]).collect())
}

/// Run one replication: draw a dataset with a replication-keyed seed and
/// collect every method's decisions. Failures are captured per method, never
/// panicking the sweep, so parallel drivers can treat this as a pure map.
pub fn power_replication(design: &DgpConfig, pcfg: &PowerConfig, rep: usize) -> RepOutcome {
    let rep_seed = mix2(design.seed, rep as u64);
    let mut icfg = pcfg.inference.clone();
    icfg.alpha = pcfg.alpha;
    icfg.seed = rep_seed;
    let ds = match generate(&DgpConfig { seed: rep_seed, ..design.clone() }) {
        Ok(ds) => ds,
        Err(e) => {
            let msg = e.to_string();
            return RepOutcome {
                rep,
                results: pcfg.methods.iter().map(|_| MethodResult::Failed(msg.clone())).collect(),
            };
        }
    };

    // the cross-fitted methods share one set of nuisance fits per replication
    let needs_shared =
        pcfg.methods.iter().any(|m| matches!(m, Method::Hdqlr | Method::Dml));
    let shared: Option<Result<Vec<KernelMoments>, String>> = if needs_shared {
        Some(
            repeat_crossfit(&ds, icfg.k, &icfg.crossfit, icfg.reps, icfg.seed)
                .map(|runs| runs.iter().map(|r| r.moments).collect())
                .map_err(|e| e.to_string()),
        )
    } else {
        None
    };

    let results = pcfg
        .methods
        .iter()
        .map(|&method| {
            let attempt: Result<Vec<bool>, String> = match method {
                Method::Hdqlr => shared.as_ref().unwrap().clone().and_then(|moments| {
                    pcfg.theta_grid
                        .iter()
                        .map(|&t| {
                            test_from_moments(&moments, t, &icfg)
                                .map(|o| o.reject)
                                .map_err(|e| e.to_string())
                        })
                        .collect()
                }),
                Method::Dml => shared.as_ref().unwrap().clone().and_then(|moments| {
                    let cores: Vec<DmlCore> = moments
                        .iter()
                        .map(dml_from_moments)
                        .collect::<Result<_, _>>()
                        .map_err(|e| e.to_string())?;
                    let est = dml_aggregate(&cores, pcfg.alpha).map_err(|e| e.to_string())?;
                    Ok(pcfg
                        .theta_grid
                        .iter()
                        .map(|&t| t < est.ci[0] || t > est.ci[1])
                        .collect())
                }),
                Method::DmlNoCrossfit => full_sample_lasso_scores(&ds, &icfg.crossfit)
                    .map_err(|e| e.to_string())
                    .and_then(|run| {
                        dml_from_moments(&run.moments).map_err(|e| e.to_string())
                    })
                    .and_then(|core| normal_ci_decisions(core, pcfg.alpha, &pcfg.theta_grid)),
                Method::Am16 => unpenalized_scores(&ds, icfg.crossfit.clip_epsilon, &pcfg.mle)
                    .map_err(|e| e.to_string())
                    .and_then(|(_, moments, _)| {
                        pcfg.theta_grid
                            .iter()
                            .map(|&t| {
                                test_from_moments(&[moments], t, &icfg)
                                    .map(|o| o.reject)
                                    .map_err(|e| e.to_string())
                            })
                            .collect()
                    }),
            };
            match attempt {
                Ok(decisions) => MethodResult::Decisions(decisions),
                Err(msg) => MethodResult::Failed(msg),
            }
        })
        .collect();
    RepOutcome { rep, results }
}

/// Fold replication outcomes into rejection rates. Aborts when any method
/// lost 1% or more of its replications.
pub fn reduce_power(
    design: &DgpConfig,
    pcfg: &PowerConfig,
    outcomes: &[RepOutcome],
) -> Result<PowerCurve, DgpError> {
    check_power_config(pcfg)?;
    let m = pcfg.methods.len();
    let t = pcfg.theta_grid.len();
    let mut counts = vec![vec![0usize; t]; m];
    let mut failures = vec![0usize; m];
    for out in outcomes {
        for (mi, res) in out.results.iter().enumerate() {
            match res {
                MethodResult::Decisions(d) => {
                    for (ti, &rej) in d.iter().enumerate() {
                        if rej {
                            counts[mi][ti] += 1;
                        }
                    }
                }
                MethodResult::Failed(_) => failures[mi] += 1,
            }
        }
    }
    let reps = outcomes.len();
    for (mi, &f) in failures.iter().enumerate() {
        if f * 100 >= reps.max(1) {
            return Err(DgpError::TooManyFailures {
                method: pcfg.methods[mi].tag(),
                failures: f,
                reps,
            });
        }
    }
    let rates = (0..m)
        .map(|mi| {
            let effective = (reps - failures[mi]) as f64;
            counts[mi].iter().map(|&c| c as f64 / effective).collect()
        })
        .collect();
    Ok(PowerCurve {
        theta_values: pcfg.theta_grid.clone(),
        methods: pcfg.methods.clone(),
        rates,
        failures,
        reps,
        alpha: pcfg.alpha,
        design: design.clone(),
    })
}

/// Serial reference implementation of the experiment; parallel drivers map
/// [`power_replication`] over `1..=reps` and call [`reduce_power`] to get a
/// bit-identical curve.
pub fn power_experiment(design: &DgpConfig, pcfg: &PowerConfig) -> Result<PowerCurve, DgpError> {
    design.validate()?;
    check_power_config(pcfg)?;
    let outcomes: Vec<RepOutcome> =
        (1..=pcfg.reps).map(|rep| power_replication(design, pcfg, rep)).collect();
    reduce_power(design, pcfg, &outcomes)
}
