//! Run configuration: the JSON config file format and its resolution into
//! the core inference/baseline settings.
//!
//! Every field has a CLI flag; a `--config` file supplies base values and
//! explicit flags override it. The struct round-trips losslessly through
//! JSON (`schemas/run_config.schema.json`).

use std::fs;
use std::path::Path;

use hdqlr_core::baselines::MleConfig;
use hdqlr_core::crossfit::CrossfitConfig;
use hdqlr_core::inference::{InferenceConfig, ThetaGrid};
use hdqlr_core::Method;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

/// Paper-scale Monte Carlo replication count (figure captions).
pub const PAPER_SCALE_REPS: usize = 2_500;
/// Paper-scale critical-value draw count.
pub const PAPER_SCALE_DRAWS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MethodChoice {
    Hdqlr,
    Am16,
    Dml,
    DmlNocf,
}

impl MethodChoice {
    pub fn core(self) -> Method {
        match self {
            MethodChoice::Hdqlr => Method::Hdqlr,
            MethodChoice::Am16 => Method::Am16,
            MethodChoice::Dml => Method::Dml,
            MethodChoice::DmlNocf => Method::DmlNoCrossfit,
        }
    }

    pub fn tag(self) -> &'static str {
        self.core().tag()
    }

    /// Grid-inversion methods (the other two build normal CIs directly).
    pub fn inverts_a_test(self) -> bool {
        matches!(self, MethodChoice::Hdqlr | MethodChoice::Am16)
    }
}

/// Uniform hypothesis grid `[lo, hi]` with `points` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<ThetaGrid, AppError> {
        Ok(ThetaGrid::new(self.lo, self.hi, self.points)?)
    }
}

/// Which command the config is resolved for; `reps` defaults differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Test,
    Ci,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: MethodChoice,
    pub k_folds: usize,
    pub alpha: f64,
    pub lambda_scale: f64,
    /// Hypothesis grid; absent derives one from the cross-fitted point
    /// estimate (plus/minus twenty standard errors).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Critical-value draws per repetition.
    pub draws: usize,
    /// Cross-fitting repetitions; absent means 1 for `test`, 10 for `ci`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    pub seed: u64,
    pub clip_epsilon: f64,
    /// Figure-caption scale: 1,000 draws (and 2,500 replications in `power`).
    pub paper_scale: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: MethodChoice::Hdqlr,
            k_folds: 3,
            alpha: 0.05,
            lambda_scale: 0.5,
            grid: None,
            draws: 500,
            reps: None,
            seed: 0,
            clip_epsilon: 0.01,
            paper_scale: false,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("run config {}: {e}", path.display())))
    }

    pub fn resolved_reps(&self, cmd: CommandKind) -> usize {
        self.reps.unwrap_or(match cmd {
            CommandKind::Test => 1,
            CommandKind::Ci => 10,
        })
    }

    pub fn resolved_draws(&self) -> usize {
        if self.paper_scale {
            PAPER_SCALE_DRAWS
        } else {
            self.draws
        }
    }

    pub fn crossfit(&self) -> CrossfitConfig {
        CrossfitConfig {
            lambda_scale: self.lambda_scale,
            clip_epsilon: self.clip_epsilon,
            ..CrossfitConfig::default()
        }
    }

    pub fn inference(&self, cmd: CommandKind) -> Result<InferenceConfig, AppError> {
        let grid = match &self.grid {
            Some(spec) => Some(spec.build()?),
            None => None,
        };
        Ok(InferenceConfig {
            alpha: self.alpha,
            critical_draws: self.resolved_draws(),
            reps: self.resolved_reps(cmd),
            k: self.k_folds,
            seed: self.seed,
            grid,
            crossfit: self.crossfit(),
            ..InferenceConfig::default()
        })
    }

    pub fn mle(&self) -> MleConfig {
        MleConfig::default()
    }
}

pub fn parse_methods(spec: &str) -> Result<Vec<Method>, AppError> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let tag = part.trim();
        let m = Method::from_tag(tag).ok_or_else(|| {
            AppError::Config(format!(
                "unknown method '{tag}' (expected hdqlr, am16, dml, dml_nocf)"
            ))
        })?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(AppError::Config("at least one method is required".into()));
    }
    Ok(out)
}
