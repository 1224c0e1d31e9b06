//! Command-line arguments, the JSON run configuration, and their merge.
//! Flags win over the config file; `RK_DRE_SEED` overrides the config seed
//! but not `--seed`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dre_krylov::problems::ProblemSpec;
use serde::Deserialize;

use crate::Failure;

pub const SEED_ENV: &str = "RK_DRE_SEED";

#[derive(Debug, Parser)]
#[command(name = "dre-krylov", version, about = "Block Krylov solver for large differential Riccati and Lyapunov equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One projection solve at time t.
    Solve(SolveArgs),
    /// Error, estimate and a priori bounds for k = 1..k_max.
    SweepK(SweepArgs),
    /// Multiple time steps with a rank cut after each.
    Timestep(TimestepArgs),
    /// Polynomial vs rational basis vs best low-rank approximation.
    CompareRational(CompareArgs),
    /// A priori bounds for k = 1..k_max.
    Bounds(BoundsArgs),
    /// Cross-checks the two dense oracles.
    OracleCheck(OracleArgs),
}

fn parse_bool_flag(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Problem spec: inline JSON or a path to a JSON file.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Davison–Maki substeps.
    #[arg(long)]
    pub m: Option<usize>,
    /// Output CSV path; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Drop timing columns so the CSV is reproducible byte for byte.
    #[arg(long)]
    pub no_timings: bool,
}

#[derive(Debug, Args)]
pub struct OracleFlag {
    /// Compare against the dense oracle (n ≤ 500).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_parser = parse_bool_flag)]
    pub oracle_check: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub oracle: OracleFlag,
    #[arg(long)]
    pub t: Option<f64>,
    /// Fixed number of block Arnoldi steps.
    #[arg(long, conflicts_with = "tol")]
    pub k: Option<usize>,
    /// Adaptive mode: grow k until the estimate is below tol.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub oracle: OracleFlag,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Worker threads for the per-k solves.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_parser = parse_bool_flag)]
    pub emit_bounds: Option<bool>,
    #[arg(long, value_parser = parse_bool_flag)]
    pub emit_estimate: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TimestepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub oracle: OracleFlag,
    /// Step size; defaults to t / steps when t is given.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Number of steps N.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, conflicts_with = "tol")]
    pub k: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Krylov steps for the first time step only.
    #[arg(long)]
    pub k_first: Option<usize>,
    /// Drop eigenvalues at or below this threshold after each step.
    #[arg(long, conflicts_with = "rank")]
    pub eps_cut: Option<f64>,
    /// Keep this many eigenpairs after each step.
    #[arg(long)]
    pub rank: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Comma-separated poles, used cyclically.
    #[arg(long, value_delimiter = ',')]
    pub poles: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub t: Option<f64>,
    /// Runge–Kutta steps; chosen from t·‖A‖ when absent.
    #[arg(long)]
    pub rk_steps: Option<usize>,
    /// Largest accepted difference between the two oracles.
    #[arg(long)]
    pub oracle_tol: Option<f64>,
}

/// Everything a run can be configured with. Every field is optional in the
/// JSON file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<ProblemSpec>,
    pub seed: Option<u64>,
    pub t: Option<f64>,
    pub h: Option<f64>,
    pub steps: Option<usize>,
    pub k: Option<usize>,
    pub tol: Option<f64>,
    pub k_max: Option<usize>,
    pub k_first: Option<usize>,
    pub m: Option<usize>,
    pub eps_cut: Option<f64>,
    pub rank: Option<usize>,
    pub poles: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
    pub emit_bounds: Option<bool>,
    pub emit_estimate: Option<bool>,
    pub oracle_check: Option<bool>,
    pub no_timings: Option<bool>,
    pub rk_steps: Option<usize>,
    pub oracle_tol: Option<f64>,
}

macro_rules! overlay {
    ($top:ident, $base:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    /// Field-wise `self` over `base`. Mutually exclusive pairs are resolved
    /// in favour of whichever member `self` sets.
    pub fn overlay(self, mut base: RunConfig) -> RunConfig {
        if self.k.is_some() || self.tol.is_some() {
            base.k = None;
            base.tol = None;
        }
        if self.eps_cut.is_some() || self.rank.is_some() {
            base.eps_cut = None;
            base.rank = None;
        }
        let top = self;
        overlay!(top, base; problem, seed, t, h, steps, k, tol, k_max, k_first, m, eps_cut, rank, poles, jobs,
            output, emit_bounds, emit_estimate, oracle_check, no_timings, rk_steps, oracle_tol)
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.k.is_some() && self.tol.is_some() {
            return Err(Failure::Usage("k and tol are mutually exclusive".into()));
        }
        if self.eps_cut.is_some() && self.rank.is_some() {
            return Err(Failure::Usage("eps_cut and rank are mutually exclusive".into()));
        }
        Ok(())
    }

    /// The problem with the seed overrides applied.
    pub fn problem(&self, env_seed: Option<u64>, flag_seed: Option<u64>) -> Result<ProblemSpec, Failure> {
        let spec = self.problem.clone().ok_or_else(|| Failure::Usage("no problem given (use --problem or a config file)".into()))?;
        Ok(match flag_seed.or(env_seed).or(self.seed) {
            Some(seed) => spec.with_seed(seed),
            None => spec,
        })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Usage(format!("{origin}: {e}")))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

pub fn problem_arg(arg: &str) -> Result<ProblemSpec, Failure> {
    if arg.trim_start().starts_with('{') {
        read_json(arg, "--problem")
    } else {
        read_json(&read_file(Path::new(arg))?, arg)
    }
}

pub fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not a u64"))),
        Err(_) => Ok(None),
    }
}

/// Settings after merging flags, config file and environment.
#[derive(Debug)]
pub struct Resolved {
    pub cfg: RunConfig,
    pub problem: ProblemSpec,
}

pub fn resolve(common: &Common, flags: RunConfig) -> Result<Resolved, Failure> {
    let file = match &common.config {
        Some(path) => read_json(&read_file(path)?, &path.display().to_string())?,
        None => RunConfig::default(),
    };
    file.validate()?;
    let mut top = flags;
    if let Some(p) = &common.problem {
        top.problem = Some(problem_arg(p)?);
    }
    top.m = common.m;
    top.output = common.output.clone();
    if common.no_timings {
        top.no_timings = Some(true);
    }
    let flag_seed = common.seed;
    let cfg = top.overlay(file);
    cfg.validate()?;
    let problem = cfg.problem(env_seed()?, flag_seed)?;
    Ok(Resolved { cfg, problem })
}
