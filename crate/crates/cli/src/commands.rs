//! Implementations of the five subcommands. Each one resolves its
//! configuration, runs the corresponding library entry point, writes its
//! artifacts plus a `manifest.toml` into the output directory, and prints a
//! short summary to stdout. Given the same inputs, flags, and seed, every
//! artifact except the manifest's `wall_secs` field is byte-identical
//! across reruns and thread counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use jmix_core::jump::write_fit_report;
use jmix_core::{
    default_missing_tokens, fit, load_csv, run_benchmark, run_pipeline, select, simulate_mixed,
    write_daily_table, write_gic_report, write_report, BenchResult, CentroidMethod, Error,
    FitOptions, MixedSeries, PipelineConfig, Result, Scenario, Schema, SelectOptions, SimConfig,
    StateSequence,
};
use serde::Serialize;

use crate::manifest::{write_manifest, NoResult};

pub struct Common {
    pub threads: Option<usize>,
}

impl Common {
    fn threads_label(&self) -> String {
        match self.threads {
            Some(n) => n.to_string(),
            None => "auto".to_string(),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    // Drawn seeds stay within i64 so manifests can store them as native
    // TOML integers.
    seed.unwrap_or_else(|| rand::random::<u64>() & (i64::MAX as u64))
}

fn resolve_tokens(flag: &Option<String>) -> Vec<String> {
    match flag {
        Some(list) => list.split(',').map(str::to_string).collect(),
        None => default_missing_tokens(),
    }
}

fn method_name(method: CentroidMethod) -> &'static str {
    match method {
        CentroidMethod::Mean => "mean",
        CentroidMethod::Median => "median",
    }
}

/// 1-based decoded states, one row per time point; the first column is the
/// series' date column when it has one, else the 1-based row number.
fn states_csv(series: Option<&MixedSeries>, states: &StateSequence) -> String {
    let mut out = String::new();
    let time = series.and_then(|s| s.time());
    match time {
        Some(axis) => {
            out.push_str(&format!("{},state\n", axis.name));
            for (t, date) in axis.dates.iter().enumerate() {
                out.push_str(&format!("{},{}\n", date, states.get(t) + 1));
            }
        }
        None => {
            out.push_str("t,state\n");
            for t in 0..states.len() {
                out.push_str(&format!("{},{}\n", t + 1, states.get(t) + 1));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- fit ----

pub struct FitArgs {
    pub csv: PathBuf,
    pub schema: PathBuf,
    pub k: usize,
    pub lambda: f64,
    pub n_init: usize,
    pub max_iter: usize,
    pub method: CentroidMethod,
    pub seed: Option<u64>,
    pub missing_tokens: Option<String>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct FitManifest {
    csv: String,
    schema: String,
    k: usize,
    lambda: f64,
    n_init: usize,
    max_iter: usize,
    centroid_method: &'static str,
    seed: u64,
    missing_tokens: Vec<String>,
    threads: String,
}

pub fn cmd_fit(args: FitArgs, common: &Common) -> Result<()> {
    let started = Instant::now();
    let tokens = resolve_tokens(&args.missing_tokens);
    let seed = resolve_seed(args.seed);
    let schema = Schema::from_file(&args.schema)?;
    let series = load_csv(&args.csv, &schema, &tokens)?;
    let opts = FitOptions {
        n_init: args.n_init,
        max_iter: args.max_iter,
        seed,
        centroid_method: args.method,
    };
    let result = fit(&series, args.k, args.lambda, &opts)?;

    ensure_dir(&args.out)?;
    write_text(&args.out.join("fit.txt"), &write_fit_report(&result)?)?;
    write_text(
        &args.out.join("states.csv"),
        &states_csv(Some(&series), &result.states),
    )?;
    result.imputed.save_csv(&args.out.join("imputed.csv"))?;

    let config = FitManifest {
        csv: args.csv.display().to_string(),
        schema: args.schema.display().to_string(),
        k: args.k,
        lambda: args.lambda,
        n_init: args.n_init,
        max_iter: args.max_iter,
        centroid_method: method_name(args.method),
        seed,
        missing_tokens: tokens,
        threads: common.threads_label(),
    };
    let label = (args.lambda == 0.0).then_some("k-prototypes-equivalent");
    write_manifest::<_, NoResult>(&args.out, "fit", label, started, &config, None)?;

    println!(
        "objective {} jumps {} (k={} lambda={} seed={}; {} iterations, converged={})",
        result.objective,
        result.jumps,
        result.k,
        result.lambda,
        seed,
        result.iterations,
        result.converged
    );
    Ok(())
}

// ------------------------------------------------------------- select ----

pub struct SelectArgs {
    pub csv: PathBuf,
    pub schema: PathBuf,
    pub k_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub k_saturated: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub method: CentroidMethod,
    pub seed: Option<u64>,
    pub missing_tokens: Option<String>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SelectManifest {
    csv: String,
    schema: String,
    k_grid: Vec<usize>,
    lambda_grid: Vec<f64>,
    k_saturated: usize,
    n_init: usize,
    max_iter: usize,
    centroid_method: &'static str,
    seed: u64,
    missing_tokens: Vec<String>,
    threads: String,
}

#[derive(Serialize)]
struct SelectOutcome {
    chosen_k: usize,
    chosen_lambda: f64,
}

pub fn cmd_select(args: SelectArgs, common: &Common) -> Result<()> {
    let started = Instant::now();
    let tokens = resolve_tokens(&args.missing_tokens);
    let seed = resolve_seed(args.seed);
    let schema = Schema::from_file(&args.schema)?;
    let series = load_csv(&args.csv, &schema, &tokens)?;
    let opts = SelectOptions {
        k_saturated: args.k_saturated,
        fit: FitOptions {
            n_init: args.n_init,
            max_iter: args.max_iter,
            seed,
            centroid_method: args.method,
        },
    };
    let report = select(&series, &args.k_grid, &args.lambda_grid, &opts)?;

    ensure_dir(&args.out)?;
    write_text(&args.out.join("gic.csv"), &write_gic_report(&report))?;

    let config = SelectManifest {
        csv: args.csv.display().to_string(),
        schema: args.schema.display().to_string(),
        k_grid: args.k_grid.clone(),
        lambda_grid: args.lambda_grid.clone(),
        k_saturated: args.k_saturated,
        n_init: args.n_init,
        max_iter: args.max_iter,
        centroid_method: method_name(args.method),
        seed,
        missing_tokens: tokens,
        threads: common.threads_label(),
    };
    let outcome = SelectOutcome {
        chosen_k: report.chosen_k,
        chosen_lambda: report.chosen_lambda,
    };
    write_manifest(&args.out, "select", None, started, &config, Some(&outcome))?;

    println!(
        "chosen k={} lambda={} over {} candidates (seed={})",
        report.chosen_k,
        report.chosen_lambda,
        report.rows.len(),
        seed
    );
    Ok(())
}

// -------------------------------------------------------------- bench ----

pub struct BenchArgs {
    pub scenario: PathBuf,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct MissingEntry {
    scheme: String,
    fraction: f64,
}

#[derive(Serialize)]
struct BenchManifest {
    scenario: String,
    name: String,
    t: usize,
    p: usize,
    mu: f64,
    rho: f64,
    self_prob: f64,
    fidelity: f64,
    replicates: usize,
    lambda_grid: Vec<f64>,
    missing: Vec<MissingEntry>,
    k: usize,
    n_init: usize,
    max_iter: usize,
    master_seed: u64,
    threads: String,
}

/// The deterministic columns of the result table; per-row wall time lives in
/// `timings.csv` so `results.csv` diffs clean across reruns and thread
/// counts.
fn deterministic_table(res: &BenchResult) -> String {
    let mut out = String::from(
        "setup,t,p,method,missing_scheme,missing_fraction,mean_ari,sd_ari,mean_imputation_error,replicates\n",
    );
    for r in &res.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.setup,
            r.t,
            r.p,
            r.method,
            r.scheme.map(|s| s.to_string()).unwrap_or_default(),
            r.fraction.map(|f| f.to_string()).unwrap_or_default(),
            r.mean_ari,
            r.sd_ari,
            r.mean_imputation_error
                .map(|e| e.to_string())
                .unwrap_or_default(),
            r.replicates,
        ));
    }
    out
}

pub fn cmd_bench(args: BenchArgs, common: &Common) -> Result<()> {
    let started = Instant::now();
    let mut scenario = Scenario::from_file(&args.scenario)?;
    if let Some(r) = args.replicates {
        scenario.replicates = r;
        scenario.validate()?;
    }
    let seed = resolve_seed(args.seed);
    let result = run_benchmark(&scenario, seed)?;

    ensure_dir(&args.out)?;
    write_text(&args.out.join("results.csv"), &deterministic_table(&result))?;
    write_text(&args.out.join("timings.csv"), &result.to_csv())?;

    let config = BenchManifest {
        scenario: args.scenario.display().to_string(),
        name: scenario.name.clone(),
        t: scenario.t,
        p: scenario.p,
        mu: scenario.mu,
        rho: scenario.rho,
        self_prob: scenario.self_prob,
        fidelity: scenario.fidelity,
        replicates: scenario.replicates,
        lambda_grid: scenario.lambda_grid.clone(),
        missing: scenario
            .missing
            .iter()
            .map(|m| MissingEntry {
                scheme: m.scheme.to_string(),
                fraction: m.fraction,
            })
            .collect(),
        k: scenario.k,
        n_init: scenario.n_init,
        max_iter: scenario.max_iter,
        master_seed: seed,
        threads: common.threads_label(),
    };
    write_manifest::<_, NoResult>(&args.out, "bench", None, started, &config, None)?;

    for r in &result.rows {
        let missing = match (r.scheme, r.fraction) {
            (Some(s), Some(f)) => format!(" {s} {:.0}%", f * 100.0),
            _ => String::new(),
        };
        let err = match r.mean_imputation_error {
            Some(e) => format!(" imputation error {e:.4}"),
            None => String::new(),
        };
        println!(
            "{} T={} P={} {}{}: mean ARI {:.3} (sd {:.3}){} [{:.1}s]",
            r.setup, r.t, r.p, r.method, missing, r.mean_ari, r.sd_ari, err, r.wall_secs
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- aqi ----

pub struct AqiArgs {
    pub csv: PathBuf,
    pub config: PathBuf,
    pub breakpoints: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct AqiManifest {
    csv: String,
    config: String,
    date_column: String,
    pollutants: Vec<String>,
    weather: Vec<String>,
    extra_continuous: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wind_column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rain_column: Option<String>,
    windy_threshold: f64,
    rainy_threshold: f64,
    rolling_window: usize,
    k: usize,
    k_saturated: usize,
    lambda_grid: Vec<f64>,
    n_init: usize,
    max_iter: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label_column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aqi_pollutants: Option<Vec<String>>,
    breakpoints: String,
    holidays: String,
    missing_tokens: Vec<String>,
    threads: String,
}

#[derive(Serialize)]
struct AqiOutcome {
    chosen_lambda: f64,
    k: usize,
    labels: Vec<String>,
    design_columns: usize,
}

/// Makes a flag-supplied path absolute so it wins over the config file's
/// directory when the pipeline resolves relative paths.
fn absolute(path: &Path) -> Result<PathBuf> {
    if path.is_absolute() {
        return Ok(path.to_path_buf());
    }
    let cwd = std::env::current_dir().map_err(|e| Error::Io {
        path: "current directory".into(),
        source: e,
    })?;
    Ok(cwd.join(path))
}

pub fn cmd_aqi(args: AqiArgs, common: &Common) -> Result<()> {
    let started = Instant::now();
    let mut cfg = PipelineConfig::from_file(&args.config)?;
    if let Some(bp) = &args.breakpoints {
        cfg.breakpoints = Some(absolute(bp)?.display().to_string());
    }
    if let Some(h) = &args.holidays {
        cfg.holidays = Some(absolute(h)?.display().to_string());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = run_pipeline(&args.csv, &cfg)?;

    ensure_dir(&args.out)?;
    write_text(&args.out.join("report.txt"), &write_report(&report))?;
    write_text(&args.out.join("daily.csv"), &write_daily_table(&report))?;
    write_text(
        &args.out.join("gic.csv"),
        &write_gic_report(&report.selection),
    )?;

    let config = AqiManifest {
        csv: args.csv.display().to_string(),
        config: args.config.display().to_string(),
        date_column: cfg.date_column.clone(),
        pollutants: cfg.pollutants.clone(),
        weather: cfg.weather.clone(),
        extra_continuous: cfg.extra_continuous.clone(),
        wind_column: cfg.wind_column.clone(),
        rain_column: cfg.rain_column.clone(),
        windy_threshold: cfg.windy_threshold,
        rainy_threshold: cfg.rainy_threshold,
        rolling_window: cfg.rolling_window,
        k: cfg.k,
        k_saturated: cfg.k_saturated,
        lambda_grid: cfg.lambda_grid.clone(),
        n_init: cfg.n_init,
        max_iter: cfg.max_iter,
        seed: cfg.seed,
        label_column: cfg.label_column.clone(),
        aqi_pollutants: cfg.aqi_pollutants.clone(),
        breakpoints: cfg
            .breakpoints
            .clone()
            .unwrap_or_else(|| "built-in".to_string()),
        holidays: cfg
            .holidays
            .clone()
            .unwrap_or_else(|| "built-in".to_string()),
        missing_tokens: cfg
            .missing_tokens
            .clone()
            .unwrap_or_else(default_missing_tokens),
        threads: common.threads_label(),
    };
    let outcome = AqiOutcome {
        chosen_lambda: report.chosen_lambda,
        k: report.k,
        labels: report.labels.clone(),
        design_columns: report.design_columns.len(),
    };
    write_manifest(&args.out, "aqi", None, started, &config, Some(&outcome))?;

    println!(
        "chosen lambda={} k={} states: {}",
        report.chosen_lambda,
        report.k,
        report.labels.join(", ")
    );
    Ok(())
}

// ----------------------------------------------------------- simulate ----

pub struct SimulateArgs {
    pub t: usize,
    pub p: usize,
    pub mu: f64,
    pub rho: f64,
    pub self_prob: f64,
    pub fidelity: f64,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SimulateManifest {
    t: usize,
    p: usize,
    mu: f64,
    rho: f64,
    self_prob: f64,
    fidelity: f64,
    seed: u64,
    threads: String,
}

pub fn cmd_simulate(args: SimulateArgs, common: &Common) -> Result<()> {
    let started = Instant::now();
    let seed = resolve_seed(args.seed);
    let cfg = SimConfig {
        t: args.t,
        p: args.p,
        mu: args.mu,
        rho: args.rho,
        self_prob: args.self_prob,
        fidelity: args.fidelity,
        seed,
    };
    let (truth, series) = simulate_mixed(&cfg)?;

    ensure_dir(&args.out)?;
    series.save_csv(&args.out.join("data.csv"))?;
    write_text(&args.out.join("schema.txt"), &schema_for(&series)?.render())?;
    write_text(&args.out.join("states.csv"), &states_csv(None, &truth))?;

    let config = SimulateManifest {
        t: args.t,
        p: args.p,
        mu: args.mu,
        rho: args.rho,
        self_prob: args.self_prob,
        fidelity: args.fidelity,
        seed,
        threads: common.threads_label(),
    };
    write_manifest::<_, NoResult>(&args.out, "simulate", None, started, &config, None)?;

    println!(
        "wrote {} rows x {} features (seed={})",
        series.n_rows(),
        series.columns().len(),
        seed
    );
    Ok(())
}

/// Schema matching a generated series, so `data.csv` + `schema.txt` round-trip
/// through the loader with the categorical levels pinned.
fn schema_for(series: &MixedSeries) -> Result<Schema> {
    use jmix_core::{ColumnSpec, FeatureKind};
    let entries = series
        .columns()
        .iter()
        .map(|c| {
            let spec = match &c.kind {
                FeatureKind::Continuous => ColumnSpec::Continuous,
                FeatureKind::Categorical(levels) => ColumnSpec::Categorical {
                    levels: Some(levels.clone()),
                },
            };
            (c.name.clone(), spec)
        })
        .collect();
    Schema::new(entries)
}
