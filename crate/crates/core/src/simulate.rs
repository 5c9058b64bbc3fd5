//! Regime-switching data generators and the Monte Carlo benchmark harness.
//!
//! The generator follows a three-regime hidden Markov design: a persistent
//! chain over states {0, 1, 2}, Gaussian features whose mean is `+mu`, `0`,
//! or `-mu` in every coordinate depending on the state, an equicorrelation
//! structure with parameter `rho`, and the second half of the features
//! (rounded down when the count is odd) transformed into 3-level
//! categoricals that emit the state's own level with probability `fidelity`
//! and each other level with the remaining mass split evenly. The
//! transformation thresholds each feature's own Gaussian noise, so `rho`
//! couples the categorical errors across features exactly as it couples the
//! continuous ones. Missing data can be injected cell-wise at random or as
//! contiguous per-feature gaps.
//!
//! Every operation takes an explicit seed and is reproducible bit-for-bit;
//! the benchmark derives one independent stream per replicate so results do
//! not depend on thread scheduling.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{Column, FeatureKind, MixedSeries, Value};
use crate::error::{Error, Result};
use crate::jump::{fit, imputation_error, FitOptions, StateSequence};
use crate::selection::select_by_ari;
use crate::util::{derive_seed, mean_sd};

/// The generator always uses three regimes.
pub const SIM_STATES: usize = 3;

/// Parameters of one simulated dataset.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub t: usize,
    /// Total features; `p / 2` of them (rounded down) become categorical.
    pub p: usize,
    /// Mean shift: state 0 centers at `+mu`, state 1 at `0`, state 2 at `-mu`.
    pub mu: f64,
    /// Equicorrelation between the Gaussian features.
    pub rho: f64,
    /// Probability of staying in the current state at each step.
    pub self_prob: f64,
    /// Probability a categorical cell emits its state's own level.
    pub fidelity: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::Param("simulation needs at least 2 rows".into()));
        }
        if self.p < 2 {
            return Err(Error::Param(format!(
                "feature count must be at least 2, got {}",
                self.p
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::Param("mu must be finite".into()));
        }
        check_rho(self.rho, self.p)?;
        if !(self.self_prob > 0.0 && self.self_prob < 1.0) {
            return Err(Error::Param(format!(
                "self-transition probability must be in (0, 1), got {}",
                self.self_prob
            )));
        }
        check_fidelity(self.fidelity)?;
        Ok(())
    }
}

fn check_rho(rho: f64, p: usize) -> Result<()> {
    if !rho.is_finite() || rho >= 1.0 {
        return Err(Error::Param(format!(
            "correlation must be finite and below 1, got {rho}"
        )));
    }
    if p > 1 && rho < -1.0 / (p as f64 - 1.0) {
        return Err(Error::Param(format!(
            "correlation {rho} makes the {p}-feature equicorrelation matrix indefinite"
        )));
    }
    Ok(())
}

fn check_fidelity(fidelity: f64) -> Result<()> {
    if !(fidelity > 1.0 / 3.0 && fidelity <= 1.0) {
        return Err(Error::Param(format!(
            "fidelity must be in (1/3, 1], got {fidelity}"
        )));
    }
    Ok(())
}

/// A persistent Markov chain over `k` states: uniform start, stay with
/// probability `self_prob`, otherwise move to one of the other states
/// uniformly.
pub fn simulate_chain(t: usize, k: usize, self_prob: f64, seed: u64) -> Result<StateSequence> {
    if t == 0 {
        return Err(Error::Param("chain length must be at least 1".into()));
    }
    if k == 0 {
        return Err(Error::Param("chain needs at least 1 state".into()));
    }
    if !(self_prob > 0.0 && self_prob <= 1.0) {
        return Err(Error::Param(format!(
            "self-transition probability must be in (0, 1], got {self_prob}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(t);
    let mut cur = rng.gen_range(0..k);
    states.push(cur);
    for _ in 1..t {
        let u: f64 = rng.gen();
        if k > 1 && u >= self_prob {
            let other = rng.gen_range(0..k - 1);
            cur = if other >= cur { other + 1 } else { other };
        }
        states.push(cur);
    }
    StateSequence::new(states, k)
}

/// Gaussian feature matrix (row-major `t x p`) for a three-regime chain:
/// every coordinate of the state mean is `+mu`, `0`, or `-mu`, and the
/// within-row covariance is the equicorrelation matrix with parameter `rho`.
pub fn simulate_gaussian(
    states: &StateSequence,
    p: usize,
    mu: f64,
    rho: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if states.n_states() != SIM_STATES {
        return Err(Error::Param(format!(
            "the Gaussian generator defines means for exactly {SIM_STATES} states, got {}",
            states.n_states()
        )));
    }
    if p == 0 {
        return Err(Error::Param("need at least 1 feature".into()));
    }
    if !mu.is_finite() {
        return Err(Error::Param("mu must be finite".into()));
    }
    check_rho(rho, p)?;

    // lower Cholesky factor of the equicorrelation matrix
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho });
    let chol = sigma.cholesky().ok_or_else(|| {
        Error::Param(format!(
            "equicorrelation with rho {rho} is not positive definite"
        ))
    })?;
    let l = chol.l();

    let means = [mu, 0.0, -mu];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_len = states.len();
    let mut out = Vec::with_capacity(t_len * p);
    let mut z = vec![0.0f64; p];
    for t in 0..t_len {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let m = means[states.get(t)];
        for i in 0..p {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            out.push(m + acc);
        }
    }
    Ok(out)
}

/// Mixed-type dataset from a Gaussian matrix: the first half of the columns
/// stays continuous, the second half (rounded down for odd widths) is
/// transformed into categorical variables with levels "1", "2", "3" — the
/// state's own level with probability `fidelity`, each other level with half
/// the remainder.
///
/// The transformation thresholds each cell's own Gaussian noise: the cell is
/// centered at its within-state column mean and mapped through the standard
/// normal quantiles of `fidelity` and `fidelity + (1 - fidelity) / 2`. The
/// marginal emission probabilities are exactly the ones above, while any
/// cross-feature correlation in the matrix carries over into co-occurring
/// categorical errors instead of being washed out by fresh independent
/// draws. Because the randomness is the matrix's own, the `seed` argument is
/// unused; it is kept so every generator stage has the same shape.
pub fn discretize(
    matrix: &[f64],
    states: &StateSequence,
    fidelity: f64,
    seed: u64,
) -> Result<MixedSeries> {
    let _ = seed;
    let t_len = states.len();
    if t_len == 0 || !matrix.len().is_multiple_of(t_len) {
        return Err(Error::Dimension(format!(
            "matrix of {} values does not factor into {} rows",
            matrix.len(),
            t_len
        )));
    }
    let p = matrix.len() / t_len;
    if p < 2 {
        return Err(Error::Param(format!(
            "discretization needs a feature count of at least 2, got {p}"
        )));
    }
    if states.n_states() != SIM_STATES {
        return Err(Error::Param(format!(
            "categorical emissions are defined for exactly {SIM_STATES} states, got {}",
            states.n_states()
        )));
    }
    check_fidelity(fidelity)?;

    let n_cat = p / 2;
    let n_cont = p - n_cat;
    let levels: Vec<String> = (1..=SIM_STATES).map(|l| l.to_string()).collect();
    let mut columns = Vec::with_capacity(p);
    for j in 0..n_cont {
        columns.push(Column {
            name: format!("x{}", j + 1),
            kind: FeatureKind::Continuous,
        });
    }
    for j in 0..n_cat {
        columns.push(Column {
            name: format!("c{}", j + 1),
            kind: FeatureKind::Categorical(levels.clone()),
        });
    }

    // Within-state column means of the transformed half; the caller hands us
    // raw values, so the conditional location is estimated from the matrix.
    let mut mean = vec![0.0f64; SIM_STATES * n_cat];
    let mut count = [0usize; SIM_STATES];
    for t in 0..t_len {
        let s = states.get(t);
        count[s] += 1;
        for j in 0..n_cat {
            mean[s * n_cat + j] += matrix[t * p + n_cont + j];
        }
    }
    for s in 0..SIM_STATES {
        if count[s] > 0 {
            for j in 0..n_cat {
                mean[s * n_cat + j] /= count[s] as f64;
            }
        }
    }

    // Standard normal quantiles cutting the noise into own/next/other level.
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let z_own = gauss.inverse_cdf(fidelity);
    let z_next = gauss.inverse_cdf(fidelity + (1.0 - fidelity) / 2.0);

    let mut cells: Vec<Option<Value>> = Vec::with_capacity(t_len * p);
    for t in 0..t_len {
        for j in 0..n_cont {
            cells.push(Some(Value::Num(matrix[t * p + j])));
        }
        let s = states.get(t);
        for j in 0..n_cat {
            let noise = matrix[t * p + n_cont + j] - mean[s * n_cat + j];
            let level = if noise < z_own {
                s as u32
            } else if noise < z_next {
                (s as u32 + 1) % SIM_STATES as u32
            } else {
                (s as u32 + 2) % SIM_STATES as u32
            };
            cells.push(Some(Value::Cat(level)));
        }
    }
    MixedSeries::new(columns, t_len, cells, None)
}

/// Chain + Gaussian + discretization in one call, with sub-seeds derived
/// from `cfg.seed`. Returns the true states and the complete dataset.
pub fn simulate_mixed(cfg: &SimConfig) -> Result<(StateSequence, MixedSeries)> {
    cfg.validate()?;
    let truth = simulate_chain(cfg.t, SIM_STATES, cfg.self_prob, derive_seed(cfg.seed, 0))?;
    let matrix = simulate_gaussian(&truth, cfg.p, cfg.mu, cfg.rho, derive_seed(cfg.seed, 1))?;
    let series = discretize(&matrix, &truth, cfg.fidelity, derive_seed(cfg.seed, 2))?;
    Ok((truth, series))
}

/// How cells go missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingScheme {
    /// Uniformly chosen cells across the whole table.
    Random,
    /// Contiguous per-feature gaps, as when an instrument drops out.
    Continuous,
}

impl std::fmt::Display for MissingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MissingScheme::Random => write!(f, "random"),
            MissingScheme::Continuous => write!(f, "continuous"),
        }
    }
}

impl std::str::FromStr for MissingScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MissingScheme::Random),
            "continuous" => Ok(MissingScheme::Continuous),
            other => Err(Error::Parse(format!(
                "unknown missing scheme {other:?} (expected `random` or `continuous`)"
            ))),
        }
    }
}

/// Marks cells of `series` missing according to `scheme`. No feature is ever
/// left without observed cells.
///
/// - `Random`: marks uniformly chosen observed cells until
///   `floor(fraction * T * P)` cells are missing in total.
/// - `Continuous`: per feature, places non-overlapping blocks of length
///   uniform in `[ceil(0.05 T), ceil(0.15 T)]` until at least
///   `floor(fraction * T)` of that feature's cells are missing (the last
///   block may overshoot).
pub fn inject_missing(
    series: &MixedSeries,
    fraction: f64,
    scheme: MissingScheme,
    seed: u64,
) -> Result<MixedSeries> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Param(format!(
            "missing fraction must be in (0, 1), got {fraction}"
        )));
    }
    let t_len = series.n_rows();
    let p_len = series.n_cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = series.clone();
    match scheme {
        MissingScheme::Random => {
            let target = (fraction * (t_len * p_len) as f64).floor() as usize;
            if target == 0 {
                return Err(Error::Param(format!(
                    "fraction {fraction} marks no cells in a {t_len} x {p_len} table"
                )));
            }
            let mut observed_per_col = vec![0usize; p_len];
            let mut candidates = Vec::with_capacity(t_len * p_len);
            let mut already_missing = 0usize;
            for t in 0..t_len {
                for (p, observed) in observed_per_col.iter_mut().enumerate() {
                    if series.cell(t, p).is_some() {
                        *observed += 1;
                        candidates.push((t, p));
                    } else {
                        already_missing += 1;
                    }
                }
            }
            candidates.shuffle(&mut rng);
            let mut marked = already_missing;
            for (t, p) in candidates {
                if marked >= target {
                    break;
                }
                if observed_per_col[p] <= 1 {
                    continue; // keep at least one observed cell per feature
                }
                out.set_cell(t, p, None);
                observed_per_col[p] -= 1;
                marked += 1;
            }
            if marked < target {
                return Err(Error::Param(format!(
                    "cannot reach {target} missing cells without erasing a feature entirely"
                )));
            }
        }
        MissingScheme::Continuous => {
            let per_feature = (fraction * t_len as f64).floor() as usize;
            if per_feature == 0 {
                return Err(Error::Param(format!(
                    "fraction {fraction} marks no cells in a feature of {t_len} rows"
                )));
            }
            let l_lo = (0.05 * t_len as f64).ceil() as usize;
            let l_hi = (0.15 * t_len as f64).ceil() as usize;
            let l_lo = l_lo.max(1);
            let l_hi = l_hi.max(l_lo);
            for p in 0..p_len {
                let mut gone: Vec<bool> = (0..t_len).map(|t| series.cell(t, p).is_none()).collect();
                let mut n_gone = gone.iter().filter(|&&g| g).count();
                let mut attempts = 0usize;
                while n_gone < per_feature {
                    attempts += 1;
                    if attempts > 1000 {
                        return Err(Error::Param(format!(
                            "cannot place enough gap blocks in column {:?}",
                            series.column(p).name
                        )));
                    }
                    let len = rng.gen_range(l_lo..=l_hi);
                    if len >= t_len {
                        continue;
                    }
                    let start = rng.gen_range(0..=t_len - len);
                    if gone[start..start + len].iter().any(|&g| g) {
                        continue; // blocks must not overlap
                    }
                    if n_gone + len >= t_len {
                        continue; // keep at least one observed cell
                    }
                    for (t, g) in gone.iter_mut().enumerate().skip(start).take(len) {
                        *g = true;
                        out.set_cell(t, p, None);
                    }
                    n_gone += len;
                }
            }
        }
    }
    Ok(out)
}

/// Adjusted Rand index between two state sequences over the same rows.
/// 1 means identical partitions up to relabeling; 0 is chance level. When
/// the index's denominator degenerates to zero (e.g. both partitions put
/// everything in one cluster) the sequences partition identically trivially
/// and the index is defined as 1.
pub fn ari(a: &StateSequence, b: &StateSequence) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "sequences of {} and {} states",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let ka = a.n_states();
    let kb = b.n_states();
    let mut table = vec![0u64; ka * kb];
    for t in 0..n {
        table[a.get(t) * kb + b.get(t)] += 1;
    }
    let c2 = |m: u64| -> f64 {
        if m < 2 {
            0.0
        } else {
            (m * (m - 1)) as f64 / 2.0
        }
    };
    let mut sum_ij = 0.0;
    for &m in &table {
        sum_ij += c2(m);
    }
    let mut sum_a = 0.0;
    for i in 0..ka {
        let row: u64 = (0..kb).map(|j| table[i * kb + j]).sum();
        sum_a += c2(row);
    }
    let mut sum_b = 0.0;
    for j in 0..kb {
        let col: u64 = (0..ka).map(|i| table[i * kb + j]).sum();
        sum_b += c2(col);
    }
    let total = c2(n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_term = 0.5 * (sum_a + sum_b);
    let den = max_term - expected;
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok((sum_ij - expected) / den)
}

fn default_self_prob() -> f64 {
    0.95
}

fn default_fidelity() -> f64 {
    0.8
}

fn default_replicates() -> usize {
    25
}

fn default_k() -> usize {
    SIM_STATES
}

fn default_n_init() -> usize {
    10
}

fn default_max_iter() -> usize {
    10
}

/// The default penalty grid: 0 to 1 in steps of 0.05.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// One missing-data condition inside a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingSpec {
    pub scheme: MissingScheme,
    pub fraction: f64,
}

/// A benchmark scenario, usually loaded from a TOML file. Each replicate
/// simulates a fresh dataset, optionally injects missing cells, then scores
/// the penalized fit (best penalty in the grid by agreement with the truth)
/// against the unpenalized fit, which is the k-prototypes special case.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub t: usize,
    pub p: usize,
    pub mu: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_self_prob")]
    pub self_prob: f64,
    #[serde(default = "default_fidelity")]
    pub fidelity: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub missing: Vec<MissingSpec>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario =
            toml::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Scenario::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = SimConfig {
            t: self.t,
            p: self.p,
            mu: self.mu,
            rho: self.rho,
            self_prob: self.self_prob,
            fidelity: self.fidelity,
            seed: 0,
        };
        cfg.validate()?;
        if self.name.is_empty() {
            return Err(Error::Param("scenario needs a name".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Param("scenario needs at least 1 replicate".into()));
        }
        if self.k == 0 {
            return Err(Error::Param("scenario needs k >= 1".into()));
        }
        if self.n_init == 0 || self.max_iter == 0 {
            return Err(Error::Param(
                "n_init and max_iter must be at least 1".into(),
            ));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Param(
                "scenario needs a non-empty lambda grid".into(),
            ));
        }
        for &l in &self.lambda_grid {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Param(format!("invalid lambda {l} in grid")));
            }
        }
        for m in &self.missing {
            if !(m.fraction > 0.0 && m.fraction < 1.0) {
                return Err(Error::Param(format!(
                    "missing fraction must be in (0, 1), got {}",
                    m.fraction
                )));
            }
        }
        Ok(())
    }
}

/// Aggregated outcome of one (condition, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub setup: String,
    pub t: usize,
    pub p: usize,
    pub method: String,
    pub scheme: Option<MissingScheme>,
    pub fraction: Option<f64>,
    pub mean_ari: f64,
    pub sd_ari: f64,
    pub mean_imputation_error: Option<f64>,
    pub replicates: usize,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub rows: Vec<BenchCell>,
}

pub const JM_METHOD: &str = "jm-mix";
pub const KPROT_METHOD: &str = "k-prototypes";

impl BenchResult {
    /// Delimited table, one row per (condition, method). The wall-clock
    /// column is the one field that varies between otherwise identical runs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "setup,t,p,method,missing_scheme,missing_fraction,mean_ari,sd_ari,mean_imputation_error,replicates,wall_secs\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{:.3}\n",
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
                r.wall_secs
            ));
        }
        out
    }
}

struct RepOutcome {
    jm_ari: f64,
    jm_err: Option<f64>,
    jm_secs: f64,
    kp_ari: f64,
    kp_err: Option<f64>,
    kp_secs: f64,
}

fn run_replicate(
    scenario: &Scenario,
    cond: Option<&MissingSpec>,
    rep_seed: u64,
) -> Result<RepOutcome> {
    let cfg = SimConfig {
        t: scenario.t,
        p: scenario.p,
        mu: scenario.mu,
        rho: scenario.rho,
        self_prob: scenario.self_prob,
        fidelity: scenario.fidelity,
        seed: rep_seed,
    };
    let (truth, complete) = simulate_mixed(&cfg)?;
    let data = match cond {
        None => complete.clone(),
        Some(spec) => inject_missing(
            &complete,
            spec.fraction,
            spec.scheme,
            derive_seed(rep_seed, 3),
        )?,
    };
    let mask = data.missing_mask();
    let opts = FitOptions {
        n_init: scenario.n_init,
        max_iter: scenario.max_iter,
        seed: derive_seed(rep_seed, 4),
        ..FitOptions::default()
    };

    // Error scales come from the complete data: the true value and the
    // imputed value (drawn from the observed sub-range) both lie inside the
    // complete feature ranges, which masked-data ranges need not contain.
    let err_ctx = if mask.is_empty() {
        None
    } else {
        Some(complete.compute_context()?)
    };

    let start = Instant::now();
    let sel = select_by_ari(&data, &truth, scenario.k, &scenario.lambda_grid, &opts)?;
    let jm_secs = start.elapsed().as_secs_f64();
    let jm_err = match &err_ctx {
        None => None,
        Some(ctx) => Some(imputation_error(&complete, &sel.fit.imputed, &mask, ctx)?),
    };

    let start = Instant::now();
    let f0 = fit(&data, scenario.k, 0.0, &opts)?;
    let kp_secs = start.elapsed().as_secs_f64();
    let kp_ari = ari(&f0.states, &truth)?;
    let kp_err = match &err_ctx {
        None => None,
        Some(ctx) => Some(imputation_error(&complete, &f0.imputed, &mask, ctx)?),
    };

    Ok(RepOutcome {
        jm_ari: sel.ari,
        jm_err,
        jm_secs,
        kp_ari,
        kp_err,
        kp_secs,
    })
}

/// Runs every (condition, replicate) of the scenario and aggregates per
/// condition and method. Replicates get independent derived seeds, so the
/// table is identical for any thread count; only the wall-clock column
/// varies between runs.
pub fn run_benchmark(scenario: &Scenario, master_seed: u64) -> Result<BenchResult> {
    scenario.validate()?;
    let conditions: Vec<Option<MissingSpec>> = if scenario.missing.is_empty() {
        vec![None]
    } else {
        scenario.missing.iter().copied().map(Some).collect()
    };

    let mut rows = Vec::new();
    for (ci, cond) in conditions.iter().enumerate() {
        let cond_seed = derive_seed(master_seed, ci as u64);
        let outcomes: Vec<RepOutcome> = (0..scenario.replicates)
            .into_par_iter()
            .map(|r| run_replicate(scenario, cond.as_ref(), derive_seed(cond_seed, r as u64)))
            .collect::<Result<Vec<_>>>()?;

        let jm_aris: Vec<f64> = outcomes.iter().map(|o| o.jm_ari).collect();
        let kp_aris: Vec<f64> = outcomes.iter().map(|o| o.kp_ari).collect();
        let agg_err = |errs: Vec<f64>| -> Option<f64> {
            if errs.is_empty() {
                None
            } else {
                Some(errs.iter().sum::<f64>() / errs.len() as f64)
            }
        };
        let jm_errs: Vec<f64> = outcomes.iter().filter_map(|o| o.jm_err).collect();
        let kp_errs: Vec<f64> = outcomes.iter().filter_map(|o| o.kp_err).collect();
        let (jm_mean, jm_sd) = mean_sd(&jm_aris);
        let (kp_mean, kp_sd) = mean_sd(&kp_aris);

        let scheme = cond.as_ref().map(|c| c.scheme);
        let fraction = cond.as_ref().map(|c| c.fraction);
        rows.push(BenchCell {
            setup: scenario.name.clone(),
            t: scenario.t,
            p: scenario.p,
            method: JM_METHOD.into(),
            scheme,
            fraction,
            mean_ari: jm_mean,
            sd_ari: jm_sd,
            mean_imputation_error: agg_err(jm_errs),
            replicates: scenario.replicates,
            wall_secs: outcomes.iter().map(|o| o.jm_secs).sum(),
        });
        rows.push(BenchCell {
            setup: scenario.name.clone(),
            t: scenario.t,
            p: scenario.p,
            method: KPROT_METHOD.into(),
            scheme,
            fraction,
            mean_ari: kp_mean,
            sd_ari: kp_sd,
            mean_imputation_error: agg_err(kp_errs),
            replicates: scenario.replicates,
            wall_secs: outcomes.iter().map(|o| o.kp_secs).sum(),
        });
    }
    Ok(BenchResult { rows })
}
