//! Release gate: each test checks one numbered acceptance criterion end to
//! end and prints a `criterion NN: PASS/FAIL — detail` line. Run with
//!
//! ```text
//! cargo test --test acceptance -- --nocapture
//! ```
//!
//! to see every line; the suite fails red if any criterion does.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jmix_core::simulate::{JM_METHOD, KPROT_METHOD};
use jmix_core::{
    ari, decode_states, evaluate_objective, fit, gic_from_parts, run_benchmark, run_pipeline,
    simulate_mixed, BenchCell, CentroidMethod, Centroids, Column, FeatureKind, FitOptions,
    MissingScheme, MissingSpec, MixedSeries, PipelineConfig, PollutantBreakpoints, Scenario,
    SimConfig, StateSequence, Value,
};

fn report(n: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2}: {verdict} — {detail}");
    assert!(pass, "criterion {n} failed — {detail}");
}

fn scenario(name: &str, t: usize, p: usize, mu: f64, rho: f64) -> Scenario {
    Scenario {
        name: name.into(),
        t,
        p,
        mu,
        rho,
        self_prob: 0.95,
        fidelity: 0.8,
        replicates: 25,
        lambda_grid: jmix_core::default_lambda_grid(),
        missing: Vec::new(),
        k: 3,
        n_init: 10,
        max_iter: 10,
    }
}

fn cell<'a>(rows: &'a [BenchCell], method: &str, scheme: Option<MissingScheme>) -> &'a BenchCell {
    rows.iter()
        .find(|c| c.method == method && c.scheme == scheme)
        .unwrap_or_else(|| panic!("no benchmark cell for {method} / {scheme:?}"))
}

/// Wide complete-data recovery: with strong separation and many features the
/// jump-penalized fit recovers the regimes almost perfectly and the
/// unpenalized baseline stays close behind.
#[test]
fn criterion_01_wide_complete_data_recovery() {
    let sc = scenario("wide", 500, 75, 1.0, 0.0);
    let res = run_benchmark(&sc, 101).unwrap();
    let jm = cell(&res.rows, JM_METHOD, None);
    let kp = cell(&res.rows, KPROT_METHOD, None);
    let pass = jm.mean_ari >= 0.95 && (0.90..=1.00).contains(&kp.mean_ari);
    report(
        1,
        pass,
        &format!(
            "T=500 P=75 x25: jump-model mean ARI {:.3} (need >= 0.95), baseline {:.3} (need 0.90..1.00)",
            jm.mean_ari, kp.mean_ari
        ),
    );
}

/// Correlated features: recovery degrades into a known band but the
/// penalized fit stays strictly ahead of the unpenalized baseline.
#[test]
fn criterion_02_correlated_features_beat_baseline() {
    let sc = scenario("correlated", 500, 25, 1.0, 0.2);
    let res = run_benchmark(&sc, 202).unwrap();
    let jm = cell(&res.rows, JM_METHOD, None);
    let kp = cell(&res.rows, KPROT_METHOD, None);
    let pass = (0.70..=0.92).contains(&jm.mean_ari) && jm.mean_ari > kp.mean_ari;
    report(
        2,
        pass,
        &format!(
            "T=500 P=25 rho=0.2 x25: jump-model mean ARI {:.3} (need 0.70..0.92), baseline {:.3} (need strictly below)",
            jm.mean_ari, kp.mean_ari
        ),
    );
}

/// Recovery under 20% random missingness stays in a known band and ahead of
/// the baseline.
#[test]
fn criterion_03_random_missing_recovery() {
    let mut sc = scenario("missing", 500, 50, 1.0, 0.0);
    sc.missing = vec![MissingSpec {
        scheme: MissingScheme::Random,
        fraction: 0.2,
    }];
    let res = run_benchmark(&sc, 303).unwrap();
    let jm = cell(&res.rows, JM_METHOD, Some(MissingScheme::Random));
    let kp = cell(&res.rows, KPROT_METHOD, Some(MissingScheme::Random));
    let pass = (0.75..=0.97).contains(&jm.mean_ari) && jm.mean_ari > kp.mean_ari;
    report(
        3,
        pass,
        &format!(
            "T=500 P=50, 20% random gaps, x25: jump-model mean ARI {:.3} (need 0.75..0.97), baseline {:.3}",
            jm.mean_ari, kp.mean_ari
        ),
    );
}

/// Imputation error shrinks with the sample size under both missingness
/// schemes, and contiguous gaps are always at least as hard as scattered
/// cells.
#[test]
fn criterion_04_imputation_error_ordering() {
    let schemes = [MissingScheme::Random, MissingScheme::Continuous].map(|scheme| MissingSpec {
        scheme,
        fraction: 0.2,
    });
    let err = |t: usize, scheme: MissingScheme| -> f64 {
        let mut sc = scenario("imputation", t, 50, 1.0, 0.0);
        sc.missing = schemes.to_vec();
        let res = run_benchmark(&sc, 404).unwrap();
        cell(&res.rows, JM_METHOD, Some(scheme))
            .mean_imputation_error
            .expect("masked cells imply an imputation error")
    };
    let (rand_small, rand_large) = (
        err(50, MissingScheme::Random),
        err(500, MissingScheme::Random),
    );
    let (cont_small, cont_large) = (
        err(50, MissingScheme::Continuous),
        err(500, MissingScheme::Continuous),
    );
    let pass = rand_large < rand_small
        && cont_large < cont_small
        && cont_small >= rand_small
        && cont_large >= rand_large;
    report(
        4,
        pass,
        &format!(
            "mean imputation error x25: random {:.4}->{:.4}, contiguous {:.4}->{:.4} from T=50 to T=500 (must fall; contiguous >= random at each T)",
            rand_small, rand_large, cont_small, cont_large
        ),
    );
}

/// A random fully observed mixed series plus centroids drawn inside each
/// feature's observed range.
fn random_instance(rng: &mut ChaCha8Rng) -> (MixedSeries, Centroids, usize) {
    let t_len = rng.gen_range(2..=8);
    let p = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=3);
    let columns: Vec<Column> = (0..p)
        .map(|j| {
            if rng.gen_bool(0.5) {
                Column {
                    name: format!("x{j}"),
                    kind: FeatureKind::Continuous,
                }
            } else {
                let n_levels = rng.gen_range(2..=3);
                let levels = (0..n_levels).map(|l| format!("l{l}")).collect();
                Column {
                    name: format!("c{j}"),
                    kind: FeatureKind::Categorical(levels),
                }
            }
        })
        .collect();
    let mut cells = Vec::with_capacity(t_len * p);
    for _ in 0..t_len {
        for c in &columns {
            cells.push(Some(match &c.kind {
                FeatureKind::Continuous => Value::Num(rng.gen_range(-2.0..2.0f64)),
                FeatureKind::Categorical(levels) => {
                    Value::Cat(rng.gen_range(0..levels.len()) as u32)
                }
            }));
        }
    }
    let series = MixedSeries::new(columns.clone(), t_len, cells, None).unwrap();
    let mut centroid_values = Vec::with_capacity(k * p);
    for _ in 0..k {
        for (j, c) in columns.iter().enumerate() {
            centroid_values.push(match &c.kind {
                FeatureKind::Continuous => {
                    let (lo, hi) = series.observed_min_max(j).unwrap();
                    Value::Num(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
                }
                FeatureKind::Categorical(levels) => {
                    Value::Cat(rng.gen_range(0..levels.len()) as u32)
                }
            });
        }
    }
    (series, Centroids::new(k, p, centroid_values).unwrap(), k)
}

/// The dynamic-programming decoder attains the exhaustive-enumeration
/// minimum exactly on every random small instance.
#[test]
fn criterion_05_decoder_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checked = 0usize;
    let mut exact = 0usize;
    for _ in 0..200 {
        let (series, centroids, k) = random_instance(&mut rng);
        let ctx = series.compute_context().unwrap();
        let t_len = series.n_rows();
        for lambda in [0.0, 0.1, 0.5] {
            let decoded = decode_states(&series, &centroids, lambda, &ctx).unwrap();
            let achieved = evaluate_objective(&series, &decoded, &centroids, lambda, &ctx).unwrap();
            let mut best = f64::INFINITY;
            let mut assignment = vec![0usize; t_len];
            loop {
                let states = StateSequence::new(assignment.clone(), k).unwrap();
                let obj = evaluate_objective(&series, &states, &centroids, lambda, &ctx).unwrap();
                if obj < best {
                    best = obj;
                }
                // odometer over the k^T assignments
                let mut pos = 0;
                loop {
                    if pos == t_len {
                        break;
                    }
                    assignment[pos] += 1;
                    if assignment[pos] < k {
                        break;
                    }
                    assignment[pos] = 0;
                    pos += 1;
                }
                if pos == t_len {
                    break;
                }
            }
            checked += 1;
            if achieved == best {
                exact += 1;
            }
        }
    }
    report(
        5,
        exact == checked,
        &format!("{exact}/{checked} decodes equal the brute-force minimum bit for bit"),
    );
}

/// Pair-counting closed form of the adjusted Rand index: every unordered
/// element pair is classified as together/apart in each partition.
fn ari_by_pair_counting(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut s11, mut s10, mut s01, mut s00) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => s11 += 1.0,
                (true, false) => s10 += 1.0,
                (false, true) => s01 += 1.0,
                (false, false) => s00 += 1.0,
            }
        }
    }
    let den = (s11 + s10) * (s10 + s00) + (s11 + s01) * (s01 + s00);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (s11 * s00 - s10 * s01) / den
    }
}

/// The contingency-table index agrees with brute-force pair counting.
#[test]
fn criterion_06_ari_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = 0f64;
    for _ in 0..500 {
        let n = rng.gen_range(2..=8);
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let fast = ari(
            &StateSequence::new(a.clone(), 3).unwrap(),
            &StateSequence::new(b.clone(), 3).unwrap(),
        )
        .unwrap();
        let slow = ari_by_pair_counting(&a, &b);
        worst = worst.max((fast - slow).abs());
    }
    report(
        6,
        worst <= 1e-12,
        &format!("500 random partition pairs, max |contingency - pair counting| = {worst:.2e}"),
    );
}

/// Coordinate descent never lets the objective rise, and a large enough
/// penalty (lambda = T always suffices) freezes the decoded sequence.
#[test]
fn criterion_07_descent_and_saturation() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut monotone = 0usize;
    let mut saturated = 0usize;
    let total = 100usize;
    for i in 0..total {
        let cfg = SimConfig {
            t: rng.gen_range(40..=100),
            p: rng.gen_range(2..=8),
            mu: rng.gen_range(0.3..1.5),
            rho: 0.0,
            self_prob: 0.9,
            fidelity: 0.8,
            seed: rng.gen(),
        };
        let (_, complete) = simulate_mixed(&cfg).unwrap();
        let series = match i % 4 {
            0 => complete,
            1 => {
                jmix_core::inject_missing(&complete, 0.1, MissingScheme::Random, rng.gen()).unwrap()
            }
            2 => jmix_core::inject_missing(&complete, 0.1, MissingScheme::Continuous, rng.gen())
                .unwrap(),
            _ => complete,
        };
        let method = if i % 2 == 0 {
            CentroidMethod::Mean
        } else {
            CentroidMethod::Median
        };
        let opts = FitOptions::default()
            .with_n_init(3)
            .with_seed(rng.gen())
            .with_method(method);
        let k = rng.gen_range(2..=4);
        let lambda = [0.0, 0.05, 0.1, 0.25, 0.5][rng.gen_range(0..5)];
        let res = fit(&series, k, lambda, &opts).unwrap();
        if res.trace.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
        let frozen = fit(&series, k, cfg.t as f64, &opts).unwrap();
        if frozen.jumps == 0 {
            saturated += 1;
        }
    }
    report(
        7,
        monotone == total && saturated == total,
        &format!(
            "{monotone}/{total} traces non-increasing; {saturated}/{total} instances frozen by lambda = T"
        ),
    );
}

fn write_regime_csv(dir: &std::path::Path, t: usize, seed: u64) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = [(8.0, 20.0), (20.0, 60.0), (48.0, 120.0)]; // (PM2.5, NO2)
    let mut state = 0usize;
    let mut lines = vec!["Date,PM2.5,NO2,WS,RF".to_string()];
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    for i in 0..t {
        if rng.gen::<f64>() < 0.03 {
            state = (state + 1 + rng.gen_range(0..2)) % 3;
        }
        let (pm, no2) = bases[state];
        let pm_v = (pm + rng.gen_range(-6.0..6.0f64)).max(0.2);
        let no2_v = (no2 + rng.gen_range(-15.0..15.0f64)).max(0.5);
        let ws = rng.gen_range(0.0..2.0f64);
        let rf = if rng.gen::<f64>() < 0.3 {
            rng.gen_range(0.1..8.0f64)
        } else {
            0.0
        };
        let date = start + chrono::Days::new(i as u64);
        let pm_s = if rng.gen::<f64>() < 0.05 {
            String::new()
        } else {
            format!("{pm_v:.2}")
        };
        lines.push(format!("{date},{pm_s},{no2_v:.2},{ws:.2},{rf:.2}"));
    }
    let path = dir.join("regimes.csv");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

/// Every selection-report row can be recomputed from its own logged parts,
/// and the chosen penalty is identical across same-seed reruns of the daily
/// decoding pipeline.
#[test]
fn criterion_08_selection_report_self_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_regime_csv(dir.path(), 150, 808);
    let cfg = PipelineConfig::from_toml(
        r#"
date_column = "Date"
pollutants = ["PM2.5", "NO2"]
weather = ["WS", "RF"]
wind_column = "WS"
rain_column = "RF"
k = 4
k_saturated = 6
n_init = 6
max_iter = 10
seed = 11
"#,
    )
    .unwrap();
    let report_a = run_pipeline(&csv, &cfg).unwrap();
    let sel = &report_a.selection;
    let mut worst = 0f64;
    for row in &sel.rows {
        let again = gic_from_parts(
            sel.t,
            sel.p,
            row.bcd,
            row.k,
            row.jumps,
            sel.bcd_saturated,
            sel.k_saturated,
        )
        .unwrap();
        let rel = (again - row.gic).abs() / row.gic.abs().max(1.0);
        worst = worst.max(rel);
    }
    let report_b = run_pipeline(&csv, &cfg).unwrap();
    let stable = report_a.chosen_lambda == report_b.chosen_lambda
        && report_a.selection == report_b.selection;
    report(
        8,
        worst <= 1e-12 && stable,
        &format!(
            "{} grid rows recomputed (worst relative gap {:.2e}); chosen lambda {} stable across same-seed reruns ({})",
            sel.rows.len(),
            worst,
            report_a.chosen_lambda,
            stable
        ),
    );
}

/// Breakpoint endpoints map exactly to their index endpoints and the overall
/// index is the per-pollutant maximum.
#[test]
fn criterion_09_breakpoint_endpoints_and_max() {
    let bp = PollutantBreakpoints::defaults();
    let mut endpoints = 0usize;
    let mut endpoint_misses = 0usize;
    let pollutants: Vec<String> = bp.pollutants().map(|s| s.to_string()).collect();
    for name in &pollutants {
        for seg in bp.segments(name).unwrap() {
            let (lo, lo_clamped) = bp.index_for(name, seg.c_low).unwrap();
            let (hi, hi_clamped) = bp.index_for(name, seg.c_high).unwrap();
            endpoints += 2;
            if lo != seg.i_low || lo_clamped || hi != seg.i_high || hi_clamped {
                endpoint_misses += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut max_ok = 0usize;
    let vectors = 1000usize;
    for _ in 0..vectors {
        let readings: Vec<(&str, f64)> = pollutants
            .iter()
            .map(|n| (n.as_str(), rng.gen_range(0.0..400.0f64)))
            .collect();
        let reading = jmix_core::aqi(&readings, &bp).unwrap();
        let expected = reading
            .per_pollutant
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if reading.overall == expected {
            max_ok += 1;
        }
    }
    report(
        9,
        endpoint_misses == 0 && max_ok == vectors,
        &format!(
            "{endpoints} segment endpoints exact; overall == per-pollutant max on {max_ok}/{vectors} random vectors"
        ),
    );
}

/// The jump penalty smooths noisy per-day assignments: penalized decoding
/// switches strictly less often than the unpenalized baseline.
#[test]
fn criterion_10_penalty_smooths_noisy_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let total = 100usize;
    let mut smoother = 0usize;
    for _ in 0..total {
        let cfg = SimConfig {
            t: 200,
            p: 6,
            mu: 0.5,
            rho: 0.0,
            self_prob: 0.97,
            fidelity: 0.7,
            seed: rng.gen(),
        };
        let (_, series) = simulate_mixed(&cfg).unwrap();
        let opts = FitOptions::default().with_n_init(5).with_seed(rng.gen());
        let baseline = fit(&series, 3, 0.0, &opts).unwrap();
        let all_fewer = [0.1, 0.25, 0.5]
            .iter()
            .all(|&lambda| fit(&series, 3, lambda, &opts).unwrap().jumps < baseline.jumps);
        if all_fewer {
            smoother += 1;
        }
    }
    report(
        10,
        smoother * 100 >= total * 95,
        &format!(
            "{smoother}/{total} noisy replicates switch strictly less at every lambda >= 0.1 than at lambda = 0 (need >= 95)"
        ),
    );
}
