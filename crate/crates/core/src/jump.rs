//! Jump-penalized clustering of a mixed-type time series.
//!
//! The model assigns one of `K` hidden states to every row and summarizes
//! each state by a centroid (per-feature mean or median for continuous
//! features, mode for categorical ones). The fit minimizes
//!
//! ```text
//! sum_t g(y_t, mu_{s_t})  +  lambda * (number of switches in s)
//! ```
//!
//! where `g` is the Gower distance. Estimation alternates three steps from a
//! random state sequence: refit centroids from the current assignment,
//! re-impute the originally missing cells from the assigned centroids, and
//! decode the optimal state sequence by dynamic programming. Several random
//! restarts are run and the best objective wins.

mod engine;
mod serialize;

pub use serialize::{parse_fit_report, write_fit_report, FitSummary};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{FeatureKind, MixedSeries, Value};
use crate::error::{Error, Result};
use crate::gower::{gower_distance, GowerContext};
use crate::util::derive_seed;

use engine::Engine;

/// A hard state assignment, one state per row, states in `0..n_states`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSequence {
    states: Vec<usize>,
    n_states: usize,
}

impl StateSequence {
    pub fn new(states: Vec<usize>, n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::Param(
                "a state sequence needs at least one state".into(),
            ));
        }
        if states.is_empty() {
            return Err(Error::Param("empty state sequence".into()));
        }
        if let Some(&bad) = states.iter().find(|&&s| s >= n_states) {
            return Err(Error::Param(format!(
                "state {bad} out of range for {n_states} states"
            )));
        }
        Ok(StateSequence { states, n_states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, t: usize) -> usize {
        self.states[t]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.states
    }

    /// Number of switches: positions `t` with `s_t != s_{t+1}`.
    pub fn jumps(&self) -> usize {
        self.states.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

/// State centroids, row-major `k x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    k: usize,
    p: usize,
    values: Vec<Value>,
}

impl Centroids {
    pub fn new(k: usize, p: usize, values: Vec<Value>) -> Result<Self> {
        if k == 0 || p == 0 {
            return Err(Error::Param("centroids need k >= 1 and p >= 1".into()));
        }
        if values.len() != k * p {
            return Err(Error::Dimension(format!(
                "expected {} centroid values, got {}",
                k * p,
                values.len()
            )));
        }
        Ok(Centroids { k, p, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, s: usize) -> &[Value] {
        &self.values[s * self.p..(s + 1) * self.p]
    }
}

/// How continuous centroid entries are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentroidMethod {
    /// Per-feature arithmetic mean (clamped to the feature's observed bounds).
    Mean,
    /// Per-feature median; the exact minimizer of the within-state Gower sum.
    Median,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub centroid_method: CentroidMethod,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_init: 10,
            max_iter: 10,
            seed: 0,
            centroid_method: CentroidMethod::Mean,
        }
    }
}

impl FitOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_init(mut self, n_init: usize) -> Self {
        self.n_init = n_init;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_method(mut self, method: CentroidMethod) -> Self {
        self.centroid_method = method;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_init == 0 {
            return Err(Error::Param("n_init must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Param("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A converged (or iteration-capped) fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub states: StateSequence,
    pub centroids: Centroids,
    /// The input series with every originally missing cell filled from the
    /// centroid of its row's state.
    pub imputed: MixedSeries,
    /// Final penalized objective; equals
    /// [`evaluate_objective`]`(imputed, states, centroids, lambda, ctx)`.
    pub objective: f64,
    pub jumps: usize,
    /// Full coordinate-descent iterations executed by the winning restart.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration of the winning restart.
    pub trace: Vec<f64>,
    /// Index of the winning restart (ties go to the lowest index).
    pub restart: usize,
    pub k: usize,
    pub lambda: f64,
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Param(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

fn observed_row(series: &MixedSeries, t: usize) -> Result<Vec<Value>> {
    series
        .row(t)
        .iter()
        .enumerate()
        .map(|(p, c)| {
            c.ok_or_else(|| {
                Error::Param(format!(
                    "missing cell at row {}, column {:?}; impute before evaluating",
                    t + 1,
                    series.column(p).name
                ))
            })
        })
        .collect()
}

/// Penalized objective of a given assignment on a fully observed series:
/// the Gower distances of every row to its state centroid plus `lambda`
/// times the number of switches.
pub fn evaluate_objective(
    series: &MixedSeries,
    states: &StateSequence,
    centroids: &Centroids,
    lambda: f64,
    ctx: &GowerContext,
) -> Result<f64> {
    check_lambda(lambda)?;
    if states.len() != series.n_rows() {
        return Err(Error::Dimension(format!(
            "{} states for {} rows",
            states.len(),
            series.n_rows()
        )));
    }
    if centroids.p() != series.n_cols() || ctx.n_features() != series.n_cols() {
        return Err(Error::Dimension(
            "centroid/context width does not match series".into(),
        ));
    }
    if states.n_states() > centroids.k() {
        return Err(Error::Dimension(format!(
            "states range over {} clusters but only {} centroids given",
            states.n_states(),
            centroids.k()
        )));
    }
    let t_len = series.n_rows();
    let mut total = 0.0;
    for t in 0..t_len {
        let row = observed_row(series, t)?;
        total += gower_distance(&row, centroids.row(states.get(t)), ctx)?;
        if t + 1 < t_len && states.get(t) != states.get(t + 1) {
            total += lambda;
        }
    }
    Ok(total)
}

/// Per-state centroids from a fully observed series and an assignment:
/// continuous features take the within-state mean (or median), categorical
/// features the within-state mode with ties resolved to the earliest level.
///
/// A state with no assigned rows keeps its `previous` centroid row; with no
/// previous centroids it copies a uniformly drawn data row.
pub fn fit_centroids<R: Rng>(
    series: &MixedSeries,
    states: &StateSequence,
    k: usize,
    previous: Option<&Centroids>,
    method: CentroidMethod,
    rng: &mut R,
) -> Result<Centroids> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    if states.len() != series.n_rows() {
        return Err(Error::Dimension(format!(
            "{} states for {} rows",
            states.len(),
            series.n_rows()
        )));
    }
    if states.n_states() > k {
        return Err(Error::Param(format!(
            "assignment uses {} states but k = {k}",
            states.n_states()
        )));
    }
    if let Some(prev) = previous {
        if prev.k() != k || prev.p() != series.n_cols() {
            return Err(Error::Dimension(
                "previous centroids have the wrong shape".into(),
            ));
        }
    }
    if !series.is_fully_observed() {
        return Err(Error::Param(
            "centroid fitting needs a fully observed series".into(),
        ));
    }

    let p = series.n_cols();
    let t_len = series.n_rows();
    let mut values = Vec::with_capacity(k * p);
    for s in 0..k {
        let members: Vec<usize> = (0..t_len).filter(|&t| states.get(t) == s).collect();
        if members.is_empty() {
            if let Some(prev) = previous {
                values.extend_from_slice(prev.row(s));
            } else {
                let t = rng.gen_range(0..t_len);
                values.extend(series.row(t).iter().map(|c| c.expect("fully observed")));
            }
            continue;
        }
        for j in 0..p {
            match &series.column(j).kind {
                FeatureKind::Continuous => {
                    let xs: Vec<f64> = members
                        .iter()
                        .map(|&t| {
                            series
                                .cell(t, j)
                                .and_then(Value::as_num)
                                .expect("continuous")
                        })
                        .collect();
                    let raw = match method {
                        CentroidMethod::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
                        CentroidMethod::Median => median(xs.clone()),
                    };
                    let (lo, hi) = series.observed_min_max(j)?;
                    values.push(Value::Num(raw.clamp(lo, hi)));
                }
                FeatureKind::Categorical(levels) => {
                    let mut counts = vec![0usize; levels.len()];
                    for &t in &members {
                        let c = series
                            .cell(t, j)
                            .and_then(Value::as_cat)
                            .expect("categorical");
                        counts[c as usize] += 1;
                    }
                    let mut best = 0usize;
                    for (i, &c) in counts.iter().enumerate() {
                        if c > counts[best] {
                            best = i;
                        }
                    }
                    values.push(Value::Cat(best as u32));
                }
            }
        }
    }
    Centroids::new(k, p, values)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in validated data"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Fills the originally missing cells of `series` with the corresponding
/// centroid entry of each row's assigned state. Observed cells are untouched.
pub fn impute_step(
    series: &MixedSeries,
    states: &StateSequence,
    centroids: &Centroids,
) -> Result<MixedSeries> {
    if states.len() != series.n_rows() {
        return Err(Error::Dimension(format!(
            "{} states for {} rows",
            states.len(),
            series.n_rows()
        )));
    }
    if centroids.p() != series.n_cols() {
        return Err(Error::Dimension(
            "centroid width does not match series".into(),
        ));
    }
    if states.n_states() > centroids.k() {
        return Err(Error::Dimension(format!(
            "assignment uses {} states but only {} centroids given",
            states.n_states(),
            centroids.k()
        )));
    }
    let mut out = series.clone();
    for (t, p) in series.missing_mask() {
        out.set_cell(t, p, Some(centroids.row(states.get(t))[p]));
    }
    Ok(out)
}

/// Exact minimizer of the penalized objective over state sequences, for
/// fixed centroids, by dynamic programming over time. Ties prefer staying in
/// the current state, then the lower state index.
pub fn decode_states(
    series: &MixedSeries,
    centroids: &Centroids,
    lambda: f64,
    ctx: &GowerContext,
) -> Result<StateSequence> {
    check_lambda(lambda)?;
    if centroids.p() != series.n_cols() || ctx.n_features() != series.n_cols() {
        return Err(Error::Dimension(
            "centroid/context width does not match series".into(),
        ));
    }
    let t_len = series.n_rows();
    let k = centroids.k();
    let mut dist = vec![0.0f64; t_len * k];
    for t in 0..t_len {
        let row = observed_row(series, t)?;
        for s in 0..k {
            dist[t * k + s] = gower_distance(&row, centroids.row(s), ctx)?;
        }
    }
    let (states, _) = dp_decode(&dist, t_len, k, lambda);
    StateSequence::new(states.into_iter().map(|s| s as usize).collect(), k)
}

/// Shared DP core: `dist` is row-major `t_len x k`. Returns the optimal
/// sequence and its objective value. The value accumulates in the same order
/// as [`evaluate_objective`], so the two agree exactly, not just to rounding.
pub(crate) fn dp_decode(dist: &[f64], t_len: usize, k: usize, lambda: f64) -> (Vec<u32>, f64) {
    debug_assert_eq!(dist.len(), t_len * k);
    let mut value: Vec<f64> = dist[..k].to_vec();
    let mut pred = vec![0u32; t_len.saturating_sub(1) * k];
    let mut next = vec![0.0f64; k];
    for t in 1..t_len {
        let mut best_j = 0usize;
        for j in 1..k {
            if value[j] < value[best_j] {
                best_j = j;
            }
        }
        let jump_base = value[best_j] + lambda;
        for s in 0..k {
            let stay = value[s];
            let (prev_val, prev_state) = if stay <= jump_base {
                (stay, s)
            } else {
                (jump_base, best_j)
            };
            next[s] = prev_val + dist[t * k + s];
            pred[(t - 1) * k + s] = prev_state as u32;
        }
        std::mem::swap(&mut value, &mut next);
    }
    let mut last = 0usize;
    for s in 1..k {
        if value[s] < value[last] {
            last = s;
        }
    }
    let objective = value[last];
    let mut states = vec![0u32; t_len];
    states[t_len - 1] = last as u32;
    for t in (1..t_len).rev() {
        last = pred[(t - 1) * k + last] as usize;
        states[t - 1] = last as u32;
    }
    (states, objective)
}

struct Restart {
    data: Vec<f64>,
    states: Vec<u32>,
    centroids: Vec<f64>,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn run_restart(
    engine: &Engine,
    k: usize,
    lambda: f64,
    max_iter: usize,
    method: CentroidMethod,
    seed: u64,
) -> Restart {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_len = engine.t_len();
    let mut data = engine.template().to_vec();
    let mut states: Vec<u32> = (0..t_len).map(|_| rng.gen_range(0..k) as u32).collect();
    let mut centroids: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..max_iter {
        let prev = if iter == 0 {
            None
        } else {
            Some(centroids.as_slice())
        };
        let candidate = engine.fit_centroids(&data, &states, k, prev, method, &mut rng);
        let saved_fill = engine.mask_values(&data);
        engine.impute(&mut data, &states, &candidate);
        let (new_states, objective) = engine.decode(&data, &candidate, k, lambda);
        // With median centroids every step provably lowers the objective;
        // with mean centroids it may not, so a step that would raise it is
        // rejected and the restart stops at the previous iterate. Traces are
        // therefore non-increasing either way.
        if trace.last().is_some_and(|&last| objective > last) {
            engine.restore_mask_values(&mut data, &saved_fill);
            break;
        }
        iterations = iter + 1;
        centroids = candidate;
        trace.push(objective);
        let stable = new_states == states;
        states = new_states;
        if stable {
            converged = true;
            break;
        }
    }
    let objective = *trace.last().expect("max_iter >= 1");
    Restart {
        data,
        states,
        centroids,
        objective,
        trace,
        iterations,
        converged,
    }
}

/// Fits the jump model: `n_init` seeded random restarts of the
/// refit/re-impute/decode loop, keeping the restart with the lowest
/// objective (ties to the lowest restart index). Each restart stops when the
/// decoded sequence stabilizes, when `max_iter` is reached, or when a step
/// fails to lower the objective, so per-restart traces are non-increasing.
/// Deterministic for a given `(series, k, lambda, options)` regardless of
/// thread count.
pub fn fit(series: &MixedSeries, k: usize, lambda: f64, opts: &FitOptions) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    check_lambda(lambda)?;
    opts.validate()?;
    let ctx = series.compute_context()?;
    let base = series.initial_impute()?;
    let mask = series.missing_mask();
    let engine = Engine::from_series(&base, &ctx, &mask)?;

    let restarts: Vec<Restart> = (0..opts.n_init)
        .into_par_iter()
        .map(|r| {
            run_restart(
                &engine,
                k,
                lambda,
                opts.max_iter,
                opts.centroid_method,
                derive_seed(opts.seed, r as u64),
            )
        })
        .collect();

    let mut winner = 0usize;
    for r in 1..restarts.len() {
        if restarts[r].objective < restarts[winner].objective {
            winner = r;
        }
    }
    let best = &restarts[winner];

    let imputed = engine.to_series(&best.data, series);
    let centroids = engine.centroids_from_dense(&best.centroids, k, series);
    let states = StateSequence::new(best.states.iter().map(|&s| s as usize).collect(), k)?;
    let jumps = states.jumps();
    Ok(FitResult {
        states,
        centroids,
        imputed,
        objective: best.objective,
        jumps,
        iterations: best.iterations,
        converged: best.converged,
        trace: best.trace.clone(),
        restart: winner,
        k,
        lambda,
        n_init: opts.n_init,
        max_iter: opts.max_iter,
        seed: opts.seed,
    })
}

/// Mean per-cell Gower contribution between the true and imputed values over
/// the masked cells. Lives in [0, 1] like the distance itself.
pub fn imputation_error(
    truth: &MixedSeries,
    imputed: &MixedSeries,
    mask: &[(usize, usize)],
    ctx: &GowerContext,
) -> Result<f64> {
    if truth.n_rows() != imputed.n_rows() || truth.n_cols() != imputed.n_cols() {
        return Err(Error::Dimension(
            "true and imputed series differ in shape".into(),
        ));
    }
    if ctx.n_features() != truth.n_cols() {
        return Err(Error::Dimension(
            "context width does not match series".into(),
        ));
    }
    if mask.is_empty() {
        return Err(Error::UndefinedMetric(
            "imputation error over an empty mask".into(),
        ));
    }
    let mut total = 0.0;
    for &(t, p) in mask {
        if t >= truth.n_rows() || p >= truth.n_cols() {
            return Err(Error::Dimension(format!(
                "mask cell ({t}, {p}) out of bounds"
            )));
        }
        let a = truth
            .cell(t, p)
            .ok_or_else(|| Error::Param(format!("true value missing at masked cell ({t}, {p})")))?;
        let b = imputed.cell(t, p).ok_or_else(|| {
            Error::Param(format!("imputed value missing at masked cell ({t}, {p})"))
        })?;
        total += crate::gower::feature_contribution(a, b, &ctx.scales()[p])?;
    }
    Ok(total / mask.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Column;

    fn cont(name: &str) -> Column {
        Column {
            name: name.into(),
            kind: FeatureKind::Continuous,
        }
    }

    fn cat(name: &str, levels: &[&str]) -> Column {
        Column {
            name: name.into(),
            kind: FeatureKind::Categorical(levels.iter().map(|s| s.to_string()).collect()),
        }
    }

    fn series_1d(xs: &[f64]) -> MixedSeries {
        MixedSeries::new(
            vec![cont("x")],
            xs.len(),
            xs.iter().map(|&x| Some(Value::Num(x))).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn objective_counts_each_switch_once() {
        // rows sit exactly on their centroids, so only the switch is priced
        let s = series_1d(&[0.0, 0.0, 10.0]);
        let ctx = s.compute_context().unwrap();
        let centroids = Centroids::new(2, 1, vec![Value::Num(0.0), Value::Num(10.0)]).unwrap();
        let states = StateSequence::new(vec![0, 0, 1], 2).unwrap();
        let obj = evaluate_objective(&s, &states, &centroids, 0.3, &ctx).unwrap();
        assert_eq!(obj, 0.3);
        let constant = StateSequence::new(vec![0, 0, 0], 2).unwrap();
        let obj0 = evaluate_objective(&s, &constant, &centroids, 0.3, &ctx).unwrap();
        assert_eq!(obj0, 1.0); // last row is a full range away from centroid 0
    }

    #[test]
    fn decode_prefers_staying_on_ties() {
        // both centroids identical: every distance ties, so the sequence
        // should collapse to state 0 and never switch
        let s = series_1d(&[1.0, 2.0, 3.0, 4.0]);
        let ctx = s.compute_context().unwrap();
        let c = Centroids::new(2, 1, vec![Value::Num(2.0), Value::Num(2.0)]).unwrap();
        let dec = decode_states(&s, &c, 0.0, &ctx).unwrap();
        assert_eq!(dec.as_slice(), &[0, 0, 0, 0]);
        assert_eq!(dec.jumps(), 0);
    }

    #[test]
    fn decode_switches_when_the_penalty_is_cheap_enough() {
        let s = series_1d(&[0.0, 0.0, 10.0, 10.0]);
        let ctx = s.compute_context().unwrap();
        let c = Centroids::new(2, 1, vec![Value::Num(0.0), Value::Num(10.0)]).unwrap();
        let cheap = decode_states(&s, &c, 0.5, &ctx).unwrap();
        assert_eq!(cheap.as_slice(), &[0, 0, 1, 1]);
        // a switch costs more than the 2.0 of staying put
        let dear = decode_states(&s, &c, 2.5, &ctx).unwrap();
        assert_eq!(dear.jumps(), 0);
    }

    #[test]
    fn centroids_average_and_take_modes() {
        let s = MixedSeries::new(
            vec![cont("x"), cat("c", &["A", "B"])],
            4,
            vec![
                Some(Value::Num(1.0)),
                Some(Value::Cat(0)),
                Some(Value::Num(3.0)),
                Some(Value::Cat(0)),
                Some(Value::Num(10.0)),
                Some(Value::Cat(1)),
                Some(Value::Num(10.0)),
                Some(Value::Cat(1)),
            ],
            None,
        )
        .unwrap();
        let states = StateSequence::new(vec![0, 0, 1, 1], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = fit_centroids(&s, &states, 2, None, CentroidMethod::Mean, &mut rng).unwrap();
        assert_eq!(c.row(0), &[Value::Num(2.0), Value::Cat(0)]);
        assert_eq!(c.row(1), &[Value::Num(10.0), Value::Cat(1)]);
    }

    #[test]
    fn empty_state_keeps_previous_centroid() {
        let s = series_1d(&[1.0, 2.0]);
        let states = StateSequence::new(vec![0, 0], 2).unwrap();
        let prev = Centroids::new(2, 1, vec![Value::Num(7.0), Value::Num(9.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = fit_centroids(&s, &states, 2, Some(&prev), CentroidMethod::Mean, &mut rng).unwrap();
        assert_eq!(c.row(0), &[Value::Num(1.5)]);
        assert_eq!(c.row(1), &[Value::Num(9.0)]);
    }

    #[test]
    fn empty_state_without_previous_copies_a_data_row() {
        let s = series_1d(&[1.0, 2.0, 3.0]);
        let states = StateSequence::new(vec![0, 0, 0], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = fit_centroids(&s, &states, 2, None, CentroidMethod::Mean, &mut rng).unwrap();
        let v = c.row(1)[0].as_num().unwrap();
        assert!([1.0, 2.0, 3.0].contains(&v));
    }

    #[test]
    fn median_centroids_split_the_middle() {
        let s = series_1d(&[0.0, 0.0, 10.0, 4.0]);
        let states = StateSequence::new(vec![0, 0, 0, 0], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = fit_centroids(&s, &states, 1, None, CentroidMethod::Median, &mut rng).unwrap();
        assert_eq!(c.row(0), &[Value::Num(2.0)]);
    }

    #[test]
    fn impute_step_fills_only_missing_cells() {
        let s = MixedSeries::new(
            vec![cont("x")],
            3,
            vec![Some(Value::Num(5.0)), None, Some(Value::Num(1.0))],
            None,
        )
        .unwrap();
        let states = StateSequence::new(vec![0, 1, 1], 2).unwrap();
        let c = Centroids::new(2, 1, vec![Value::Num(5.0), Value::Num(1.0)]).unwrap();
        let filled = impute_step(&s, &states, &c).unwrap();
        assert_eq!(filled.cell(1, 0), Some(Value::Num(1.0)));
        assert_eq!(filled.cell(0, 0), Some(Value::Num(5.0)));
        assert!(filled.is_fully_observed());
    }

    #[test]
    fn fit_recovers_two_plain_segments() {
        let mut xs = vec![0.0; 20];
        xs.extend(vec![10.0; 20]);
        let s = series_1d(&xs);
        let r = fit(&s, 2, 0.1, &FitOptions::default().with_seed(7)).unwrap();
        assert_eq!(r.jumps, 1);
        assert!(r.converged);
        // the two segments get distinct states
        assert_ne!(r.states.get(0), r.states.get(39));
        assert_eq!(r.objective, 0.1);
    }

    #[test]
    fn fit_objective_matches_reference_evaluation() {
        let mut xs: Vec<f64> = Vec::new();
        let mut state = 0.0;
        for i in 0..60 {
            if i % 17 == 0 {
                state = if state == 0.0 { 6.0 } else { 0.0 };
            }
            xs.push(state + (i % 5) as f64 * 0.3);
        }
        let s = series_1d(&xs);
        let r = fit(&s, 3, 0.2, &FitOptions::default().with_seed(3)).unwrap();
        let ctx = s.compute_context().unwrap();
        let reference = evaluate_objective(&r.imputed, &r.states, &r.centroids, 0.2, &ctx).unwrap();
        let rel = (r.objective - reference).abs() / reference.abs().max(1.0);
        assert!(
            rel <= 1e-12,
            "objective {} vs reference {}",
            r.objective,
            reference
        );
    }

    #[test]
    fn fit_is_deterministic_per_seed_and_varies_across_seeds() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64).collect();
        let s = series_1d(&xs);
        let a = fit(&s, 3, 0.05, &FitOptions::default().with_seed(5)).unwrap();
        let b = fit(&s, 3, 0.05, &FitOptions::default().with_seed(5)).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.restart, b.restart);
    }

    #[test]
    fn fit_with_one_state_is_the_unconditional_center() {
        let s = series_1d(&[1.0, 2.0, 6.0]);
        let r = fit(&s, 1, 0.4, &FitOptions::default().with_seed(1)).unwrap();
        assert_eq!(r.jumps, 0);
        assert_eq!(r.centroids.row(0), &[Value::Num(3.0)]);
        assert!(r.converged);
    }

    #[test]
    fn fit_imputes_missing_cells_from_state_centroids() {
        let mut cells: Vec<Option<Value>> = Vec::new();
        for i in 0..30 {
            let x = if i < 15 { 0.0 } else { 8.0 };
            cells.push(if i == 4 || i == 20 {
                None
            } else {
                Some(Value::Num(x))
            });
        }
        let s = MixedSeries::new(vec![cont("x")], 30, cells, None).unwrap();
        let r = fit(&s, 2, 0.2, &FitOptions::default().with_seed(2)).unwrap();
        assert!(r.imputed.is_fully_observed());
        // the masked cells should land near their segment level
        let a = r.imputed.cell(4, 0).unwrap().as_num().unwrap();
        let b = r.imputed.cell(20, 0).unwrap().as_num().unwrap();
        assert!(a < 1.0, "imputed {a} in the low segment");
        assert!(b > 7.0, "imputed {b} in the high segment");
    }

    #[test]
    fn imputation_error_averages_contributions() {
        let truth = series_1d(&[0.0, 4.0, 8.0]);
        let ctx = truth.compute_context().unwrap();
        let imputed = series_1d(&[0.0, 6.0, 8.0]);
        // only cell (1, 0) was masked; |4 - 6| / 8 = 0.25
        let err = imputation_error(&truth, &imputed, &[(1, 0)], &ctx).unwrap();
        assert_eq!(err, 0.25);
        assert!(matches!(
            imputation_error(&truth, &imputed, &[], &ctx),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn dp_matches_brute_force_on_a_small_instance() {
        let xs = [0.0, 2.0, 9.0, 1.0, 8.0, 8.5];
        let s = series_1d(&xs);
        let ctx = s.compute_context().unwrap();
        let c = Centroids::new(2, 1, vec![Value::Num(1.0), Value::Num(8.0)]).unwrap();
        for lambda in [0.0, 0.1, 0.5] {
            let dec = decode_states(&s, &c, lambda, &ctx).unwrap();
            let got = evaluate_objective(&s, &dec, &c, lambda, &ctx).unwrap();
            // enumerate all 2^6 sequences
            let mut best = f64::INFINITY;
            for m in 0..(1u32 << xs.len()) {
                let states: Vec<usize> = (0..xs.len()).map(|t| ((m >> t) & 1) as usize).collect();
                let seq = StateSequence::new(states, 2).unwrap();
                let obj = evaluate_objective(&s, &seq, &c, lambda, &ctx).unwrap();
                if obj < best {
                    best = obj;
                }
            }
            assert_eq!(got, best, "lambda {lambda}");
        }
    }
}
