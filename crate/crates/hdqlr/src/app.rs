//! The `hdqlr` command line: `simulate`, `test`, `ci`, `power`.
//!
//! Decisions (reject/accept, interval endpoints) are data in the JSON/CSV
//! outputs, never exit codes; exit status only distinguishes success (0),
//! bad configuration (2), IO failure (3), and numerical breakdown (4).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdqlr_core::baselines::{am16_confidence_interval, am16_test, dml_estimate, BaselineConfig};
use hdqlr_core::dgp::{
    generate_with_latents, DesignPreset, DgpConfig, InstrumentDraw, OutcomeCovariate, PowerConfig,
};
use hdqlr_core::inference;

use crate::config::{
    parse_methods, CommandKind, GridSpec, MethodChoice, RunConfig, PAPER_SCALE_REPS,
};
use crate::error::AppError;
use crate::io::{load_dataset, read_replication_config, write_dataset, ReplicationConfig};
use crate::parallel::parallel_power;
use crate::report::{power_csv, to_json_line, CiReport, SimulateSummary, TestReport};

#[derive(Debug, Parser)]
#[command(
    name = "hdqlr",
    version,
    about = "Identification-robust LATE inference with many covariates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset from the threshold-crossing design and write CSV.
    Simulate(SimulateArgs),
    /// Test H0: LATE = theta0 on a dataset; JSON report.
    Test(TestArgs),
    /// Confidence region by test inversion (or normal CI for DML); JSON report.
    Ci(CiArgs),
    /// Monte Carlo rejection-rate curves across methods; tidy CSV.
    Power(PowerArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutcomeArg {
    /// Y = D + x1 + eps.
    FirstColumn,
    /// Y = D + sum(x) + eps.
    RowSum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InstrumentArg {
    /// Fair coin independent of the compliance latent (default).
    Coin,
    /// Z = 1{delta >= 0}: the literal threshold reading, which collapses the
    /// observed first stage.
    SharedLatent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DesignArg {
    /// (p_at, p_nt) = (0.25, 0.25): complier share 0.5.
    Strong,
    /// (0.45, 0.45): complier share 0.1.
    Weak,
    /// (0.49, 0.49): complier share 0.02.
    Unidentified,
}

impl DesignArg {
    fn preset(self) -> DesignPreset {
        match self {
            DesignArg::Strong => DesignPreset::Strong,
            DesignArg::Weak => DesignPreset::Weak,
            DesignArg::Unidentified => DesignPreset::Unidentified,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    /// Covariate dimension.
    #[arg(long)]
    pub dim_x: usize,
    /// Identification preset filling --p-at/--p-nt.
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    /// Always-taker share.
    #[arg(long)]
    pub p_at: Option<f64>,
    /// Never-taker share.
    #[arg(long)]
    pub p_nt: Option<f64>,
    /// Toeplitz correlation base.
    #[arg(long, default_value_t = 0.5)]
    pub u: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OutcomeArg::FirstColumn)]
    pub outcome: OutcomeArg,
    #[arg(long, value_enum, default_value_t = InstrumentArg::Coin)]
    pub instrument: InstrumentArg,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Dataset input shared by `test` and `ci`.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV path.
    #[arg(long)]
    pub data: PathBuf,
    /// Replication config JSON naming column roles (default roles: y, d, z,
    /// rest covariates).
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

/// Run-configuration flags; a `--config` file supplies base values and any
/// explicit flag overrides it.
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON run config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    /// Cross-fitting folds [default: 3].
    #[arg(long)]
    pub k_folds: Option<usize>,
    /// Test level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Penalty scale multiplying the plug-in lasso level [default: 0.5].
    #[arg(long)]
    pub lambda_scale: Option<f64>,
    /// Critical-value draws per repetition [default: 500].
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Propensity clipping bound [default: 0.01].
    #[arg(long)]
    pub clip_epsilon: Option<f64>,
    /// Hypothesis-grid lower end (needs --grid-hi and --grid-points).
    #[arg(long)]
    pub grid_lo: Option<f64>,
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Figure-caption scale: 1,000 draws and 2,500 power replications.
    #[arg(long)]
    pub paper_scale: bool,
}

impl RunArgs {
    /// `reps` comes separately because `power` reuses the flag name for its
    /// Monte Carlo replications.
    pub fn resolve(&self, reps: Option<usize>) -> Result<RunConfig, AppError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = reps {
            cfg.reps = Some(v);
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.k_folds {
            cfg.k_folds = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.lambda_scale {
            cfg.lambda_scale = v;
        }
        if let Some(v) = self.draws {
            cfg.draws = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.clip_epsilon {
            cfg.clip_epsilon = v;
        }
        match (self.grid_lo, self.grid_hi, self.grid_points) {
            (None, None, None) => {}
            (Some(lo), Some(hi), Some(points)) => cfg.grid = Some(GridSpec { lo, hi, points }),
            _ => {
                return Err(AppError::Config(
                    "a grid needs all of --grid-lo, --grid-hi, --grid-points".into(),
                ))
            }
        }
        if self.paper_scale {
            cfg.paper_scale = true;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Hypothesized LATE under test.
    #[arg(long)]
    pub theta0: f64,
    /// Cross-fitting repetitions [default: 1].
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Cross-fitting repetitions [default: 10].
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Identification preset filling --p-at/--p-nt.
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    #[arg(long)]
    pub p_at: Option<f64>,
    #[arg(long)]
    pub p_nt: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long)]
    pub dim_x: usize,
    #[arg(long, default_value_t = 0.5)]
    pub u: f64,
    /// Comma-separated method tags (hdqlr, am16, dml, dml_nocf).
    #[arg(long, default_value = "hdqlr")]
    pub methods: String,
    /// Monte Carlo replications [default: 500; 2,500 with --paper-scale].
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub theta_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    pub theta_hi: f64,
    #[arg(long, default_value_t = 9)]
    pub theta_points: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn resolve_shares(
    design: Option<DesignArg>,
    p_at: Option<f64>,
    p_nt: Option<f64>,
) -> Result<(f64, f64), AppError> {
    let (mut at, mut nt) = match design {
        Some(d) => d.preset().shares(),
        None => (0.25, 0.25),
    };
    if design.is_none() && (p_at.is_none() != p_nt.is_none()) {
        return Err(AppError::Config(
            "give both --p-at and --p-nt (or a --design preset)".into(),
        ));
    }
    if let Some(v) = p_at {
        at = v;
    }
    if let Some(v) = p_nt {
        nt = v;
    }
    Ok((at, nt))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), AppError> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_schema(path: Option<&Path>) -> Result<Option<ReplicationConfig>, AppError> {
    match path {
        Some(p) => Ok(Some(read_replication_config(p)?)),
        None => Ok(None),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), AppError> {
    let (p_at, p_nt) = resolve_shares(args.design, args.p_at, args.p_nt)?;
    let cfg = DgpConfig {
        n: args.n,
        dim_x: args.dim_x,
        p_at,
        p_nt,
        u: args.u,
        seed: args.seed,
        outcome: match args.outcome {
            OutcomeArg::FirstColumn => OutcomeCovariate::FirstColumn,
            OutcomeArg::RowSum => OutcomeCovariate::RowSum,
        },
        instrument: match args.instrument {
            InstrumentArg::Coin => InstrumentDraw::IndependentCoin,
            InstrumentArg::SharedLatent => InstrumentDraw::SharedLatent,
        },
    };
    let latents = generate_with_latents(&cfg)?;
    let summary = SimulateSummary {
        command: "simulate",
        n: cfg.n,
        p: cfg.dim_x,
        complier_share: latents.complier_share(),
        design_id: cfg.design_id(),
        seed: cfg.seed,
        path: args.out.display().to_string(),
    };
    let ds = latents.into_dataset()?;
    write_dataset(&args.out, &ds)?;
    print!("{}", to_json_line(&summary)?);
    Ok(())
}

pub fn cmd_test(args: &TestArgs) -> Result<(), AppError> {
    let cfg = args.run.resolve(args.reps)?;
    let schema = load_schema(args.data.schema.as_deref())?;
    let ds = load_dataset(&args.data.data, schema.as_ref())?;
    let icfg = cfg.inference(CommandKind::Test)?;
    let report = match cfg.method {
        MethodChoice::Hdqlr => {
            let outcome = inference::test(&ds, args.theta0, &icfg)?;
            TestReport::from_outcome("hdqlr", &outcome, ds.n(), ds.p())
        }
        MethodChoice::Am16 => {
            let outcome = am16_test(&ds, args.theta0, &icfg, &cfg.mle())?;
            TestReport::from_outcome("am16", &outcome, ds.n(), ds.p())
        }
        MethodChoice::Dml | MethodChoice::DmlNocf => {
            let crossfit = cfg.method == MethodChoice::Dml;
            let reps = if crossfit { icfg.reps } else { 1 };
            let bcfg = BaselineConfig {
                alpha: cfg.alpha,
                k: cfg.k_folds,
                reps,
                seed: cfg.seed,
                crossfit: cfg.crossfit(),
            };
            let est = dml_estimate(&ds, crossfit, &bcfg)?;
            TestReport::from_dml(cfg.method.tag(), &est, args.theta0, reps, cfg.seed, ds.n(), ds.p())
        }
    };
    emit(args.out.as_deref(), &to_json_line(&report)?)
}

pub fn cmd_ci(args: &CiArgs) -> Result<(), AppError> {
    let cfg = args.run.resolve(args.reps)?;
    let schema = load_schema(args.data.schema.as_deref())?;
    let ds = load_dataset(&args.data.data, schema.as_ref())?;
    let icfg = cfg.inference(CommandKind::Ci)?;
    let report = match cfg.method {
        MethodChoice::Hdqlr => {
            let region = inference::confidence_interval(&ds, &icfg)?;
            CiReport::from_region("hdqlr", &region, ds.n(), ds.p())
        }
        MethodChoice::Am16 => {
            let region = am16_confidence_interval(&ds, &icfg, &cfg.mle())?;
            CiReport::from_region("am16", &region, ds.n(), ds.p())
        }
        MethodChoice::Dml | MethodChoice::DmlNocf => {
            let crossfit = cfg.method == MethodChoice::Dml;
            let reps = if crossfit { icfg.reps } else { 1 };
            let bcfg = BaselineConfig {
                alpha: cfg.alpha,
                k: cfg.k_folds,
                reps,
                seed: cfg.seed,
                crossfit: cfg.crossfit(),
            };
            let est = dml_estimate(&ds, crossfit, &bcfg)?;
            CiReport::from_dml(cfg.method.tag(), &est, reps, cfg.seed, ds.n(), ds.p())
        }
    };
    emit(args.out.as_deref(), &to_json_line(&report)?)
}

pub fn cmd_power(args: &PowerArgs) -> Result<(), AppError> {
    let cfg = args.run.resolve(None)?;
    let (p_at, p_nt) = resolve_shares(args.design, args.p_at, args.p_nt)?;
    let design = DgpConfig {
        n: args.n,
        dim_x: args.dim_x,
        p_at,
        p_nt,
        u: args.u,
        seed: cfg.seed,
        outcome: OutcomeCovariate::FirstColumn,
        instrument: InstrumentDraw::IndependentCoin,
    };
    let reps = args
        .reps
        .unwrap_or(if cfg.paper_scale { PAPER_SCALE_REPS } else { 500 });
    if reps < 50 {
        eprintln!("note: {reps} replications is below the 50 advised for reporting");
    }
    let theta_grid = GridSpec {
        lo: args.theta_lo,
        hi: args.theta_hi,
        points: args.theta_points,
    }
    .build()?;
    if !theta_grid.values().contains(&1.0) {
        eprintln!("note: the hypothesis grid does not contain the design LATE of 1");
    }
    let pcfg = PowerConfig {
        methods: parse_methods(&args.methods)?,
        theta_grid: theta_grid.values().to_vec(),
        reps,
        alpha: cfg.alpha,
        inference: cfg.inference(CommandKind::Test)?,
        mle: cfg.mle(),
    };
    let curve = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| AppError::Config(format!("worker pool: {e}")))?
            .install(|| parallel_power(&design, &pcfg)),
        None => parallel_power(&design, &pcfg),
    }?;
    for (mi, &failed) in curve.failures.iter().enumerate() {
        if failed > 0 {
            eprintln!(
                "note: {} of {} replications failed for {} and were excluded",
                failed,
                curve.reps,
                curve.methods[mi].tag()
            );
        }
    }
    emit(args.out.as_deref(), &power_csv(&curve)?)
}

pub fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Test(a) => cmd_test(a),
        Command::Ci(a) => cmd_ci(a),
        Command::Power(a) => cmd_power(a),
    }
}
