//! End-to-end tests of the `jmix` binary: artifact layout, reproducibility
//! (byte-identical reruns, thread invariance), manifest contents, and error
//! paths with nonzero exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn jmix() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jmix"))
}

fn run(args: &[&str]) -> Output {
    jmix().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Manifest text with the wall-clock line (the one permitted difference
/// between identical reruns) removed.
fn manifest_without_wall(dir: &Path) -> String {
    read(&dir.join("manifest.toml"))
        .lines()
        .filter(|l| !l.starts_with("wall_secs"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A small mixed-type CSV with two drifting regimes and a few missing cells.
fn write_small_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let mut csv = String::from("a,b,c\n");
    for i in 0..36 {
        let (base, level) = if i < 18 { (0.0, "x") } else { (4.0, "y") };
        let a = base + (i % 5) as f64 / 10.0;
        let b = base + (i % 3) as f64 / 10.0;
        if i % 11 == 4 {
            csv.push_str(&format!("{a},NA,{level}\n"));
        } else if i % 13 == 7 {
            csv.push_str(&format!(",{b},{level}\n"));
        } else {
            csv.push_str(&format!("{a},{b},{level}\n"));
        }
    }
    let csv_path = dir.join("data.csv");
    let schema_path = dir.join("schema.txt");
    fs::write(&csv_path, csv).unwrap();
    fs::write(
        &schema_path,
        "a: continuous\nb: continuous\nc: categorical\n",
    )
    .unwrap();
    (csv_path, schema_path)
}

fn fit_args<'a>(csv: &'a Path, schema: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut args = vec![
        "fit".to_string(),
        "--csv".into(),
        csv.display().to_string(),
        "--schema".into(),
        schema.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    args
}

#[test]
fn fit_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (csv, schema) = write_small_dataset(tmp.path());
    let out1 = tmp.path().join("run1");
    let out2 = tmp.path().join("run2");
    for out in [&out1, &out2] {
        let args = fit_args(
            &csv,
            &schema,
            out,
            &["--k", "2", "--lambda", "0.1", "--seed", "42"],
        );
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let stdout = run_ok(&args);
        assert!(
            stdout.contains("objective"),
            "fit prints the objective: {stdout}"
        );
        assert!(
            stdout.contains("jumps"),
            "fit prints the jump count: {stdout}"
        );
    }
    for file in ["fit.txt", "states.csv", "imputed.csv"] {
        assert_eq!(
            bytes(&out1.join(file)),
            bytes(&out2.join(file)),
            "{file} differs"
        );
    }
    assert_eq!(manifest_without_wall(&out1), manifest_without_wall(&out2));
}

#[test]
fn lambda_zero_fit_is_labeled_as_the_baseline() {
    let tmp = TempDir::new().unwrap();
    let (csv, schema) = write_small_dataset(tmp.path());
    let out0 = tmp.path().join("kp");
    let args = fit_args(
        &csv,
        &schema,
        &out0,
        &["--k", "2", "--lambda", "0", "--seed", "1"],
    );
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let manifest = read(&out0.join("manifest.toml"));
    assert!(
        manifest.contains("label = \"k-prototypes-equivalent\""),
        "{manifest}"
    );

    let out1 = tmp.path().join("jm");
    let args = fit_args(
        &csv,
        &schema,
        &out1,
        &["--k", "2", "--lambda", "0.2", "--seed", "1"],
    );
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!read(&out1.join("manifest.toml")).contains("label ="));
}

#[test]
fn single_state_fit_decodes_a_constant_sequence() {
    let tmp = TempDir::new().unwrap();
    let (csv, schema) = write_small_dataset(tmp.path());
    let out = tmp.path().join("one");
    let args = fit_args(
        &csv,
        &schema,
        &out,
        &["--k", "1", "--lambda", "0.5", "--seed", "2"],
    );
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let table = read(&out.join("states.csv"));
    let states: Vec<&str> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(states.len(), 36);
    assert!(
        states.iter().all(|&s| s == "1"),
        "all rows in the single state"
    );
}

#[test]
fn custom_missing_tokens_are_honored_and_recorded() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("data.csv");
    let schema = tmp.path().join("schema.txt");
    fs::write(&csv, "a,c\n1.0,x\nmiss,y\n2.0,x\n1.5,y\n0.5,x\n2.5,y\n").unwrap();
    fs::write(&schema, "a: continuous\nc: categorical\n").unwrap();

    // Without the flag, "miss" is not a number.
    let out = tmp.path().join("bad");
    let args = fit_args(
        &csv,
        &schema,
        &out,
        &["--k", "2", "--lambda", "0", "--seed", "3"],
    );
    let output = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("miss"));

    let out = tmp.path().join("good");
    let mut args = fit_args(
        &csv,
        &schema,
        &out,
        &["--k", "2", "--lambda", "0", "--seed", "3"],
    );
    args.push("--missing-tokens".into());
    args.push("miss,".into());
    run_ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    let manifest = read(&out.join("manifest.toml"));
    assert!(manifest.contains("\"miss\""), "{manifest}");
    assert!(
        manifest.contains("\"\""),
        "empty token recorded: {manifest}"
    );
}

#[test]
fn select_singleton_grids_give_one_recomputable_row() {
    let tmp = TempDir::new().unwrap();
    let (csv, schema) = write_small_dataset(tmp.path());
    let out = tmp.path().join("sel");
    let stdout = run_ok(&[
        "select",
        "--csv",
        &csv.display().to_string(),
        "--schema",
        &schema.display().to_string(),
        "--k-grid",
        "2",
        "--lambda-grid",
        "0.3",
        "--k-saturated",
        "4",
        "--n-init",
        "4",
        "--seed",
        "7",
        "--out",
        &out.display().to_string(),
    ]);
    assert!(stdout.contains("chosen k=2 lambda=0.3"), "{stdout}");

    let report = jmix_core::parse_gic_report(&read(&out.join("gic.csv"))).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.chosen_k, 2);
    assert_eq!(report.chosen_lambda, 0.3);
    for row in &report.rows {
        let again = jmix_core::gic_from_parts(
            report.t,
            report.p,
            row.bcd,
            row.k,
            row.jumps,
            report.bcd_saturated,
            report.k_saturated,
        )
        .unwrap();
        let tol = 1e-12 * row.gic.abs().max(1.0);
        assert!(
            (again - row.gic).abs() <= tol,
            "gic recomputes: {} vs {again}",
            row.gic
        );
    }

    let manifest = read(&out.join("manifest.toml"));
    assert!(manifest.contains("[result]"), "{manifest}");
    assert!(manifest.contains("chosen_k = 2"), "{manifest}");
}

fn write_scenario(dir: &Path, replicates: usize) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(
        &path,
        format!(
            "name = \"tiny\"\nt = 30\np = 4\nmu = 1.0\nreplicates = {replicates}\n\
             k = 3\nn_init = 2\nmax_iter = 5\nlambda_grid = [0.0, 0.1]\n\
             [[missing]]\nscheme = \"random\"\nfraction = 0.1\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn bench_results_are_thread_invariant() {
    let tmp = TempDir::new().unwrap();
    let scenario = write_scenario(tmp.path(), 2);
    let out1 = tmp.path().join("t1");
    let out2 = tmp.path().join("t3");
    for (out, threads) in [(&out1, "1"), (&out2, "3")] {
        run_ok(&[
            "bench",
            "--scenario",
            &scenario.display().to_string(),
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            &out.display().to_string(),
        ]);
    }
    assert_eq!(
        bytes(&out1.join("results.csv")),
        bytes(&out2.join("results.csv"))
    );
    // Only wall_secs and the threads record may differ.
    let strip = |dir: &Path| {
        manifest_without_wall(dir)
            .lines()
            .filter(|l| !l.starts_with("threads"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&out1), strip(&out2));
}

#[test]
fn bench_single_replicate_reports_zero_sd() {
    let tmp = TempDir::new().unwrap();
    let scenario = write_scenario(tmp.path(), 2);
    let out = tmp.path().join("one");
    run_ok(&[
        "bench",
        "--scenario",
        &scenario.display().to_string(),
        "--replicates",
        "1",
        "--seed",
        "5",
        "--out",
        &out.display().to_string(),
    ]);
    let results = read(&out.join("results.csv"));
    let mut rows = 0;
    for line in results.lines().skip(1) {
        let sd: f64 = line.split(',').nth(7).unwrap().parse().unwrap();
        assert_eq!(sd, 0.0, "single replicate has no spread: {line}");
        let replicates: usize = line.split(',').nth(9).unwrap().parse().unwrap();
        assert_eq!(replicates, 1);
        rows += 1;
    }
    assert_eq!(rows, 2, "one row per method");
    assert!(read(&out.join("manifest.toml")).contains("replicates = 1"));
}

/// Four 30-day blocks with distinct pollutant levels, plus a weather column.
fn write_regime_csv(path: &Path) {
    let mut csv = String::from("date,PM2.5,NO2,wind\n");
    let base = chrono::NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    for i in 0..120 {
        let date = base + chrono::Days::new(i);
        let regime = (i / 30) as usize;
        let pm = [8.0, 30.0, 60.0, 110.0][regime] + (i % 5) as f64;
        let no = [12.0, 40.0, 85.0, 140.0][regime] + (i % 7) as f64;
        let wind = (i % 4) as f64;
        csv.push_str(&format!("{date},{pm},{no},{wind}\n"));
    }
    fs::write(path, csv).unwrap();
}

#[test]
fn aqi_pipeline_writes_report_daily_table_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("aq.csv");
    write_regime_csv(&csv);
    let config = tmp.path().join("pipeline.toml");
    fs::write(
        &config,
        "date_column = \"date\"\npollutants = [\"PM2.5\", \"NO2\"]\nweather = [\"wind\"]\n\
         rolling_window = 7\nk = 4\nk_saturated = 5\nlambda_grid = [0.0, 0.4]\n\
         n_init = 4\nmax_iter = 8\nseed = 3\n",
    )
    .unwrap();
    let out = tmp.path().join("aq");
    let stdout = run_ok(&[
        "aqi",
        "--csv",
        &csv.display().to_string(),
        "--config",
        &config.display().to_string(),
        "--out",
        &out.display().to_string(),
    ]);
    assert!(stdout.contains("chosen lambda="), "{stdout}");

    let report = read(&out.join("report.txt"));
    for state in 1..=4 {
        assert!(
            report.contains(&format!("state {state} ")),
            "state {state} in:\n{report}"
        );
    }
    let daily = read(&out.join("daily.csv"));
    assert_eq!(daily.lines().count(), 121, "header plus one row per day");
    assert!(daily.lines().nth(1).unwrap().starts_with("2023-03-01"));

    let manifest = read(&out.join("manifest.toml"));
    assert!(manifest.contains("chosen_lambda ="), "{manifest}");
    assert!(
        manifest.contains("breakpoints = \"built-in\""),
        "{manifest}"
    );
    let gic = jmix_core::parse_gic_report(&read(&out.join("gic.csv"))).unwrap();
    assert_eq!(gic.rows.len(), 2, "one row per penalty candidate");
}

#[test]
fn aqi_missing_breakpoints_file_is_named_in_the_error() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("aq.csv");
    write_regime_csv(&csv);
    let config = tmp.path().join("pipeline.toml");
    fs::write(
        &config,
        "date_column = \"date\"\npollutants = [\"PM2.5\", \"NO2\"]\nweather = [\"wind\"]\n\
         k = 2\nlambda_grid = [0.0]\nn_init = 2\nmax_iter = 4\n\
         breakpoints = \"no/such/table.txt\"\n",
    )
    .unwrap();
    let out = run(&[
        "aqi",
        "--csv",
        &csv.display().to_string(),
        "--config",
        &config.display().to_string(),
        "--out",
        &tmp.path().join("out").display().to_string(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("table.txt"),
        "error names the path: {stderr}"
    );
}

#[test]
fn simulate_roundtrips_through_the_loader_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let out1 = tmp.path().join("s1");
    let out2 = tmp.path().join("s2");
    for out in [&out1, &out2] {
        run_ok(&[
            "simulate",
            "--t",
            "25",
            "--p",
            "5",
            "--mu",
            "1.0",
            "--seed",
            "9",
            "--out",
            &out.display().to_string(),
        ]);
    }
    assert_eq!(bytes(&out1.join("data.csv")), bytes(&out2.join("data.csv")));
    assert_eq!(
        bytes(&out1.join("states.csv")),
        bytes(&out2.join("states.csv"))
    );

    let schema = jmix_core::Schema::from_file(&out1.join("schema.txt")).unwrap();
    let series = jmix_core::load_csv(
        &out1.join("data.csv"),
        &schema,
        &jmix_core::default_missing_tokens(),
    )
    .unwrap();
    assert_eq!(series.n_rows(), 25);
    assert_eq!(series.columns().len(), 5);
    assert_eq!(read(&out1.join("states.csv")).lines().count(), 26);
}

#[test]
fn missing_inputs_and_bad_flags_exit_nonzero() {
    let tmp = TempDir::new().unwrap();
    let out = run(&[
        "fit",
        "--csv",
        "no-such-file.csv",
        "--schema",
        "no-such-schema.txt",
        "--k",
        "2",
        "--lambda",
        "0.1",
        "--out",
        &tmp.path().join("x").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-schema.txt"));

    // Usage errors are clap's domain and exit 2.
    let out = run(&["fit", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));

    // A seed beyond the manifest's integer range is rejected up front.
    let out = run(&[
        "simulate",
        "--t",
        "10",
        "--p",
        "2",
        "--mu",
        "1.0",
        "--seed",
        "18446744073709551615",
        "--out",
        &tmp.path().join("y").display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
