//! `jmix` — jump-penalized clustering of mixed-type time series.
//!
//! One binary, five subcommands sharing a config grammar:
//! - `fit`: fit K states at a fixed penalty to a CSV + schema.
//! - `select`: grid-search K and the penalty by information criterion.
//! - `bench`: run a Monte Carlo scenario against the unpenalized baseline.
//! - `aqi`: daily air-quality regime pipeline from a raw CSV + TOML config.
//! - `simulate`: write one synthetic regime-switching dataset.
//!
//! Every run writes a `manifest.toml` recording the resolved configuration
//! (seed included, drawn at random when omitted) so it can be reproduced bit
//! for bit; `--threads` bounds worker concurrency and never changes results.

mod commands;
mod grid;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jmix_core::{default_lambda_grid, CentroidMethod};

use commands::{AqiArgs, BenchArgs, Common, FitArgs, SelectArgs, SimulateArgs};

#[derive(Parser)]
#[command(
    name = "jmix",
    version,
    about = "Jump-penalized clustering of mixed-type time series",
    propagate_version = true
)]
struct Cli {
    /// Worker-thread cap for restarts/grid cells/replicates (0 or omitted:
    /// one per core). Affects wall time only, never results.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodFlag {
    /// Per-state mean for continuous features (mode for categorical).
    Mean,
    /// Per-state median for continuous features (mode for categorical).
    Median,
}

impl From<MethodFlag> for CentroidMethod {
    fn from(m: MethodFlag) -> Self {
        match m {
            MethodFlag::Mean => CentroidMethod::Mean,
            MethodFlag::Median => CentroidMethod::Median,
        }
    }
}

/// Seeds are stored in TOML manifests, whose integers are signed 64-bit.
fn parse_seed(text: &str) -> Result<u64, String> {
    let seed: u64 = text
        .parse()
        .map_err(|_| format!("{text:?} is not an unsigned integer"))?;
    if seed > i64::MAX as u64 {
        return Err(format!(
            "seed must be at most {} to round-trip through manifests",
            i64::MAX
        ));
    }
    Ok(seed)
}

#[derive(Args)]
struct FitFlags {
    /// Input CSV: one header row, one row per time point.
    #[arg(long, value_name = "FILE")]
    csv: PathBuf,
    /// Schema file: one `name: kind` line per column.
    #[arg(long, value_name = "FILE")]
    schema: PathBuf,
    /// Number of states.
    #[arg(long)]
    k: usize,
    /// Per-switch jump penalty.
    #[arg(long)]
    lambda: f64,
    /// Random restarts; the lowest-objective one wins.
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    /// Iteration cap per restart.
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    /// Centroid estimator for continuous features.
    #[arg(long, value_enum, default_value_t = MethodFlag::Mean)]
    method: MethodFlag,
    /// RNG seed; drawn at random and recorded in the manifest when omitted.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    /// Comma-separated cell spellings treated as missing; a leading or
    /// trailing comma adds the empty string. Default: ",NA,NaN".
    #[arg(long, value_name = "LIST")]
    missing_tokens: Option<String>,
    /// Output directory (created if absent).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SelectFlags {
    #[arg(long, value_name = "FILE")]
    csv: PathBuf,
    #[arg(long, value_name = "FILE")]
    schema: PathBuf,
    /// Candidate state counts: comma list or start:end[:step]. Default 2:6.
    #[arg(long, value_name = "GRID")]
    k_grid: Option<String>,
    /// Candidate penalties: comma list or start:end[:step]. Default 0:1:0.05.
    #[arg(long, value_name = "GRID")]
    lambda_grid: Option<String>,
    /// States in the saturated reference fit.
    #[arg(long, default_value_t = 6)]
    k_saturated: usize,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long, default_value_t = 10)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = MethodFlag::Mean)]
    method: MethodFlag,
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    #[arg(long, value_name = "LIST")]
    missing_tokens: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchFlags {
    /// Scenario description (TOML).
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Override the scenario's replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Master seed; per-replicate seeds derive from it.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct AqiFlags {
    /// Raw daily CSV with a date column.
    #[arg(long, value_name = "FILE")]
    csv: PathBuf,
    /// Pipeline configuration (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Breakpoint table overriding the config / built-in one.
    #[arg(long, value_name = "FILE")]
    breakpoints: Option<PathBuf>,
    /// Holiday calendar overriding the config / built-in one.
    #[arg(long, value_name = "FILE")]
    holidays: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateFlags {
    /// Time points.
    #[arg(long)]
    t: usize,
    /// Features; half of them (rounded down) become categorical.
    #[arg(long)]
    p: usize,
    /// Mean shift between neighbouring states.
    #[arg(long)]
    mu: f64,
    /// Equicorrelation of the Gaussian features.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Self-transition probability of the latent chain.
    #[arg(long, default_value_t = 0.95)]
    self_prob: f64,
    /// Probability a categorical cell shows its state's own level.
    #[arg(long, default_value_t = 0.8)]
    fidelity: f64,
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit K states at a fixed penalty; writes fit.txt, states.csv,
    /// imputed.csv.
    Fit(FitFlags),
    /// Grid-search K and the penalty by information criterion; writes
    /// gic.csv.
    Select(SelectFlags),
    /// Run a Monte Carlo scenario; writes results.csv (deterministic) and
    /// timings.csv.
    Bench(BenchFlags),
    /// Daily regime pipeline; writes report.txt, daily.csv, gic.csv.
    Aqi(AqiFlags),
    /// Generate one synthetic dataset; writes data.csv, schema.txt,
    /// states.csv.
    Simulate(SimulateFlags),
}

fn run(cli: Cli) -> jmix_core::Result<()> {
    let common = Common {
        threads: cli.threads,
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| jmix_core::Error::Param(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Fit(f) => commands::cmd_fit(
            FitArgs {
                csv: f.csv,
                schema: f.schema,
                k: f.k,
                lambda: f.lambda,
                n_init: f.n_init,
                max_iter: f.max_iter,
                method: f.method.into(),
                seed: f.seed,
                missing_tokens: f.missing_tokens,
                out: f.out,
            },
            &common,
        ),
        Command::Select(f) => {
            let k_grid = match &f.k_grid {
                Some(text) => grid::parse_usize_grid(text, "--k-grid")?,
                None => (2..=6).collect(),
            };
            let lambda_grid = match &f.lambda_grid {
                Some(text) => grid::parse_f64_grid(text, "--lambda-grid")?,
                None => default_lambda_grid(),
            };
            commands::cmd_select(
                SelectArgs {
                    csv: f.csv,
                    schema: f.schema,
                    k_grid,
                    lambda_grid,
                    k_saturated: f.k_saturated,
                    n_init: f.n_init,
                    max_iter: f.max_iter,
                    method: f.method.into(),
                    seed: f.seed,
                    missing_tokens: f.missing_tokens,
                    out: f.out,
                },
                &common,
            )
        }
        Command::Bench(f) => commands::cmd_bench(
            BenchArgs {
                scenario: f.scenario,
                replicates: f.replicates,
                seed: f.seed,
                out: f.out,
            },
            &common,
        ),
        Command::Aqi(f) => commands::cmd_aqi(
            AqiArgs {
                csv: f.csv,
                config: f.config,
                breakpoints: f.breakpoints,
                holidays: f.holidays,
                seed: f.seed,
                out: f.out,
            },
            &common,
        ),
        Command::Simulate(f) => commands::cmd_simulate(
            SimulateArgs {
                t: f.t,
                p: f.p,
                mu: f.mu,
                rho: f.rho,
                self_prob: f.self_prob,
                fidelity: f.fidelity,
                seed: f.seed,
                out: f.out,
            },
            &common,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
