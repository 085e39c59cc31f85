use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use carequeue_core::experiments::SweptParam;
use carequeue_core::{Assignment, Priority, RawParams, ThetaMode, DEFAULT_THETA};

#[derive(Debug, Parser)]
#[command(name = "carequeue", version, about = "Reentrant care queue simulator and clearing-system oracle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the total holding cost of one policy.
    Simulate(SimulateArgs),
    /// Compare policies across a grid of one parameter.
    Sweep(SweepArgs),
    /// Shortest-first and longest-first cost curves in `a`, with their crossing.
    Threshold(ThresholdArgs),
    /// Exact two-patient clearing costs.
    Clearing(ClearingArgs),
    /// Queue-length tradeoff across 75 load settings and an `a` grid.
    Tradeoff(TradeoffArgs),
}

/// Model and run-length flags shared by the simulation commands.
#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// Arrival probability per period.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// Service completion probability per period.
    #[arg(long, default_value_t = 0.8)]
    pub beta: f64,
    /// Probability a content patient turns needy per period.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Holding cost exponent.
    #[arg(long = "a", default_value_t = 0.0)]
    pub a: f64,
    /// Number of patient types (maximum nurse visits).
    #[arg(long = "stages", visible_alias = "R", default_value_t = 5)]
    pub stages: usize,
    /// Number of nurses (default 1; 2 for assignment sweeps).
    #[arg(long = "nurses", visible_alias = "I")]
    pub nurses: Option<usize>,
    /// Horizon in periods, warm-up included.
    #[arg(long, default_value_t = 10_000)]
    pub periods: usize,
    /// Periods discarded before costs are counted.
    #[arg(long, default_value_t = 2_000)]
    pub warmup: usize,
    /// Comma-separated type weights theta_1..theta_R. Defaults to the
    /// built-in vector for R = 5 and to uniform weights otherwise.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub theta: Option<Vec<f64>>,
    /// `normalize` rescales theta to sum to 1; `as-is` keeps it and thins arrivals.
    #[arg(long, default_value = "normalize")]
    pub theta_mode: ThetaMode,
    /// Replications per policy.
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Base seed; replication k uses seed + k.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn raw(&self, default_nurses: usize) -> RawParams {
        let theta = match &self.theta {
            Some(t) => t.clone(),
            None if self.stages == DEFAULT_THETA.len() => DEFAULT_THETA.to_vec(),
            None => vec![1.0; self.stages],
        };
        RawParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            theta,
            theta_mode: self.theta_mode,
            stages: self.stages,
            nurses: self.nurses.unwrap_or(default_nurses),
            horizon: self.periods,
            warmup: self.warmup,
            exponent: self.a,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "shortest_first")]
    pub priority: Priority,
    #[arg(long, default_value = "random")]
    pub assignment: Assignment,
    /// Write a one-row sweep CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    /// Shortest-first against longest-first.
    Priority,
    /// H1, H2 and random assignment.
    Assignment,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Parameter to vary: a, alpha, beta or gamma.
    #[arg(long)]
    pub param: SweptParam,
    /// Grid as lo:hi:step. Defaults depend on the parameter.
    #[arg(long)]
    pub grid: Option<Grid>,
    #[arg(long, value_enum, default_value_t = SweepKind::Priority)]
    pub kind: SweepKind,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "0:1:0.05")]
    pub a_grid: Grid,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClearingArgs {
    /// Visits of the first (shorter) patient.
    #[arg(long, default_value_t = 1)]
    pub i: usize,
    /// Visits of the second patient.
    #[arg(long, default_value_t = 2)]
    pub j: usize,
    /// `unit`, or `n1,..,nj/c1,..,c(j-1)` for needy and content durations.
    #[arg(long, default_value = "unit")]
    pub durations: String,
    #[arg(long, default_value = "0:1:0.05")]
    pub a_grid: Grid,
    /// Check every instance with j up to this bound and durations in {1, 2}
    /// instead of a single instance.
    #[arg(long, value_name = "MAX_J")]
    pub exhaustive: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TradeoffArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "0:1:0.1")]
    pub a_grid: Grid,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Inclusive arithmetic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub spec: String,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
            .collect::<Result<_, _>>()?;
        let values = match nums[..] {
            [v] => vec![v],
            [lo, hi, step] => {
                if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() {
                    return Err("grid step must be positive and bounds finite".into());
                }
                if hi < lo {
                    return Err(format!("grid upper bound {hi} is below lower bound {lo}"));
                }
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| round12(lo + k as f64 * step)).collect()
            }
            _ => return Err(format!("expected lo:hi:step or a single value, got `{s}`")),
        };
        Ok(Grid { spec: s.to_string(), values })
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Default sweep grid for a parameter.
pub fn default_grid(param: SweptParam, kind: SweepKind) -> Grid {
    let spec = match (param, kind) {
        (SweptParam::A, _) => "0:1:0.1",
        (SweptParam::Alpha, SweepKind::Priority) => "0.05:0.25:0.05",
        (SweptParam::Alpha, SweepKind::Assignment) => "0.05:0.45:0.05",
        (SweptParam::Beta, _) => "0.5:1:0.1",
        (SweptParam::Gamma, _) => "0.1:0.5:0.1",
    };
    spec.parse().expect("built-in grid")
}
