//! Feature engineering and reporting for daily air-quality records: trailing
//! rolling statistics, calendar and threshold indicators, the piecewise-linear
//! air-quality index, and state-conditional summary tables. The
//! [`pipeline`] submodule chains these into a regime-decoding run; see
//! [`run_pipeline`].

mod pipeline;

pub use pipeline::{run_pipeline, write_daily_table, write_report, PipelineConfig, RegimeReport};

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;

use crate::dataset::{Column, FeatureKind, MixedSeries, Value};
use crate::error::{Error, Result};
use crate::jump::StateSequence;

/// Mean of the observed values in the trailing window `[t-window+1, t]`;
/// `None` where the window holds no observed value. The first `window - 1`
/// entries use the shorter available prefix.
pub fn rolling_mean(values: &[Option<f64>], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::Param("rolling window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(values.len());
    for t in 0..values.len() {
        let lo = (t + 1).saturating_sub(window);
        let mut sum = 0.0;
        let mut n = 0usize;
        for v in values[lo..=t].iter().flatten() {
            sum += v;
            n += 1;
        }
        out.push(if n == 0 { None } else { Some(sum / n as f64) });
    }
    Ok(out)
}

/// Pearson correlation of the pairwise-complete observations in the trailing
/// window; `None` with fewer than 3 complete pairs or when either slice is
/// constant over them. Defined values are clamped to `[-1, 1]`.
pub fn rolling_correlation(
    x: &[Option<f64>],
    y: &[Option<f64>],
    window: usize,
) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::Param("rolling window must be at least 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "series of {} and {} rows",
            x.len(),
            y.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for t in 0..x.len() {
        let lo = (t + 1).saturating_sub(window);
        let pairs: Vec<(f64, f64)> = (lo..=t)
            .filter_map(|i| match (x[i], y[i]) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            })
            .collect();
        out.push(pearson(&pairs));
    }
    Ok(out)
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for &(a, b) in pairs {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// The observed values of a continuous column, missing cells as `None`.
pub fn continuous_column(series: &MixedSeries, name: &str) -> Result<Vec<Option<f64>>> {
    let p = series
        .column_index(name)
        .ok_or_else(|| Error::Param(format!("no column named {name:?}")))?;
    if !series.column(p).kind.is_continuous() {
        return Err(Error::Param(format!("column {name:?} is not continuous")));
    }
    Ok((0..series.n_rows())
        .map(|t| series.cell(t, p).and_then(|v| v.as_num()))
        .collect())
}

fn yes_no_kind() -> FeatureKind {
    FeatureKind::Categorical(vec!["No".into(), "Yes".into()])
}

const NO: Option<Value> = Some(Value::Cat(0));
const YES: Option<Value> = Some(Value::Cat(1));

/// Appends indicator columns to the series:
///
/// - `Windy` — Yes iff the wind column is strictly above its threshold;
/// - `Rainy` — Yes iff the rain column is strictly above its threshold;
/// - `Month` — "1".."12" from the date axis;
/// - `Weekend` — Yes iff Saturday or Sunday;
/// - `Holiday` — Yes iff the date is in `holidays`.
///
/// Threshold indicators are `None` where the source cell is missing and are
/// only added when the corresponding `(column, threshold)` is given. The
/// calendar columns require a date axis.
pub fn add_indicators(
    series: &MixedSeries,
    wind: Option<(&str, f64)>,
    rain: Option<(&str, f64)>,
    holidays: &BTreeSet<NaiveDate>,
) -> Result<MixedSeries> {
    let time = series.time().ok_or_else(|| {
        Error::Param("calendar indicators need a date column in the input".into())
    })?;
    let dates = time.dates.clone();
    let mut extra: Vec<(Column, Vec<Option<Value>>)> = Vec::new();

    let mut threshold_column = |label: &str, source: &str, threshold: f64| -> Result<()> {
        if !threshold.is_finite() {
            return Err(Error::Param(format!("{label} threshold must be finite")));
        }
        let vals = continuous_column(series, source)?;
        let cells = vals
            .iter()
            .map(|v| {
                v.map(|x| {
                    if x > threshold {
                        Value::Cat(1)
                    } else {
                        Value::Cat(0)
                    }
                })
            })
            .collect();
        extra.push((
            Column {
                name: label.into(),
                kind: yes_no_kind(),
            },
            cells,
        ));
        Ok(())
    };
    if let Some((col, thr)) = wind {
        threshold_column("Windy", col, thr)?;
    }
    if let Some((col, thr)) = rain {
        threshold_column("Rainy", col, thr)?;
    }

    let month_levels: Vec<String> = (1..=12u32).map(|m| m.to_string()).collect();
    extra.push((
        Column {
            name: "Month".into(),
            kind: FeatureKind::Categorical(month_levels),
        },
        dates
            .iter()
            .map(|d| Some(Value::Cat(d.month() - 1)))
            .collect(),
    ));
    extra.push((
        Column {
            name: "Weekend".into(),
            kind: yes_no_kind(),
        },
        dates
            .iter()
            .map(|d| {
                if matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                    YES
                } else {
                    NO
                }
            })
            .collect(),
    ));
    extra.push((
        Column {
            name: "Holiday".into(),
            kind: yes_no_kind(),
        },
        dates
            .iter()
            .map(|d| if holidays.contains(d) { YES } else { NO })
            .collect(),
    ));

    append_columns(series, extra)
}

/// Rebuilds the series with extra columns appended on the right.
pub(crate) fn append_columns(
    series: &MixedSeries,
    extra: Vec<(Column, Vec<Option<Value>>)>,
) -> Result<MixedSeries> {
    let t_len = series.n_rows();
    for (c, cells) in &extra {
        if cells.len() != t_len {
            return Err(Error::Dimension(format!(
                "column {:?} has {} cells for {} rows",
                c.name,
                cells.len(),
                t_len
            )));
        }
    }
    let mut columns: Vec<Column> = series.columns().to_vec();
    columns.extend(extra.iter().map(|(c, _)| c.clone()));
    let mut cells = Vec::with_capacity(t_len * columns.len());
    for t in 0..t_len {
        cells.extend(series.row(t));
        cells.extend(extra.iter().map(|(_, col)| col[t]));
    }
    MixedSeries::new(columns, t_len, cells, series.time().cloned())
}

/// Dates listed one per line in ISO form; `#` starts a comment.
pub fn parse_holidays(text: &str) -> Result<BTreeSet<NaiveDate>> {
    let mut out = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let date = NaiveDate::parse_from_str(line, "%Y-%m-%d")
            .map_err(|_| Error::Parse(format!("line {}: {line:?} is not an ISO date", i + 1)))?;
        out.insert(date);
    }
    Ok(out)
}

pub fn holidays_from_file(path: &Path) -> Result<BTreeSet<NaiveDate>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_holidays(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Built-in holiday calendar (Italian national holidays, 2020-2025).
pub fn default_holidays() -> BTreeSet<NaiveDate> {
    parse_holidays(include_str!("airquality/default_holidays.txt"))
        .expect("built-in holiday calendar parses")
}

/// One linear piece of a pollutant's index scale: concentrations in
/// `[c_low, c_high]` map onto index values `[i_low, i_high]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakpointSegment {
    pub c_low: f64,
    pub c_high: f64,
    pub i_low: f64,
    pub i_high: f64,
}

/// Ordered per-pollutant breakpoint tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PollutantBreakpoints {
    tables: Vec<(String, Vec<BreakpointSegment>)>,
}

impl PollutantBreakpoints {
    /// Parses `pollutant: C_low C_high I_low I_high` lines (`#` comments).
    /// Segments of a pollutant must ascend without overlap.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tables: Vec<(String, Vec<BreakpointSegment>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |msg: &str| Error::Parse(format!("line {}: {msg}", i + 1));
            let (name, rest) = line
                .split_once(':')
                .ok_or_else(|| fail("expected `pollutant: C_low C_high I_low I_high`"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(fail("empty pollutant name"));
            }
            let nums: Vec<f64> = rest
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .map_err(|_| fail(&format!("bad number {tok:?}")))
                })
                .collect::<Result<_>>()?;
            if nums.len() != 4 {
                return Err(fail(&format!("expected 4 numbers, got {}", nums.len())));
            }
            let seg = BreakpointSegment {
                c_low: nums[0],
                c_high: nums[1],
                i_low: nums[2],
                i_high: nums[3],
            };
            if !(seg.c_low.is_finite() && seg.c_high.is_finite() && seg.c_low >= 0.0) {
                return Err(fail("concentrations must be finite and nonnegative"));
            }
            if seg.c_low >= seg.c_high {
                return Err(fail("need C_low < C_high"));
            }
            if !(seg.i_low.is_finite() && seg.i_high.is_finite() && seg.i_low < seg.i_high) {
                return Err(fail("need finite I_low < I_high"));
            }
            match tables.iter_mut().find(|(n, _)| n == name) {
                Some((_, segs)) => {
                    let prev = segs.last().expect("non-empty table");
                    if seg.c_low < prev.c_high {
                        return Err(fail(&format!(
                            "segment overlaps the previous one for {name}"
                        )));
                    }
                    segs.push(seg);
                }
                None => tables.push((name.to_string(), vec![seg])),
            }
        }
        if tables.is_empty() {
            return Err(Error::Parse("no breakpoint segments defined".into()));
        }
        Ok(PollutantBreakpoints { tables })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        PollutantBreakpoints::parse(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Built-in table (US EPA-style segments for PM2.5, PM10, NO2, O3).
    pub fn defaults() -> Self {
        PollutantBreakpoints::parse(include_str!("airquality/default_breakpoints.txt"))
            .expect("built-in breakpoint table parses")
    }

    pub fn pollutants(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(|(n, _)| n.as_str())
    }

    pub fn segments(&self, pollutant: &str) -> Option<&[BreakpointSegment]> {
        self.tables
            .iter()
            .find(|(n, _)| n == pollutant)
            .map(|(_, s)| s.as_slice())
    }

    /// Index value for one concentration: exact endpoints map to their
    /// endpoint index, interior values interpolate linearly, and values
    /// above the last segment clamp to its upper index with the flag set.
    /// A value in the gap between two segments takes the lower segment's
    /// top index — the behavior of tables stated at a coarser precision
    /// than the data, where readings are truncated before lookup.
    pub fn index_for(&self, pollutant: &str, value: f64) -> Result<(f64, bool)> {
        let segs = self
            .segments(pollutant)
            .ok_or_else(|| Error::Param(format!("no breakpoints configured for {pollutant:?}")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Param(format!(
                "concentration for {pollutant} must be finite and nonnegative, got {value}"
            )));
        }
        let top = segs.last().expect("validated non-empty");
        if value > top.c_high {
            return Ok((top.i_high, true));
        }
        let mut below: Option<&BreakpointSegment> = None;
        for seg in segs {
            if value == seg.c_low {
                return Ok((seg.i_low, false));
            }
            if value == seg.c_high {
                return Ok((seg.i_high, false));
            }
            if value > seg.c_low && value < seg.c_high {
                let slope = (seg.i_high - seg.i_low) / (seg.c_high - seg.c_low);
                return Ok((seg.i_low + slope * (value - seg.c_low), false));
            }
            if value > seg.c_high {
                below = Some(seg);
            }
        }
        match below {
            Some(seg) => Ok((seg.i_high, false)), // in the gap above this segment
            None => Err(Error::Param(format!(
                "concentration {value} for {pollutant} is below the first configured segment"
            ))),
        }
    }
}

/// The four reporting categories, by increasing severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AqiCategory {
    Good,
    Moderate,
    UnhealthySensitive,
    Unhealthy,
}

impl AqiCategory {
    /// Category of an index value: breaks at 50, 100, and 150.
    pub fn from_index(value: f64) -> AqiCategory {
        if value <= 50.0 {
            AqiCategory::Good
        } else if value <= 100.0 {
            AqiCategory::Moderate
        } else if value <= 150.0 {
            AqiCategory::UnhealthySensitive
        } else {
            AqiCategory::Unhealthy
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AqiCategory::Good => "Good",
            AqiCategory::Moderate => "Moderate",
            AqiCategory::UnhealthySensitive => "Unhealthy for Sensitive Groups",
            AqiCategory::Unhealthy => "Unhealthy",
        }
    }
}

impl std::fmt::Display for AqiCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One day's index: the per-pollutant values, their maximum, its category,
/// and whether any pollutant exceeded the top configured segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AqiReading {
    pub overall: f64,
    pub category: AqiCategory,
    pub per_pollutant: Vec<(String, f64)>,
    pub clamped: bool,
}

/// Index for one day of concentrations. The overall value is the maximum of
/// the per-pollutant values.
pub fn aqi(
    concentrations: &[(&str, f64)],
    breakpoints: &PollutantBreakpoints,
) -> Result<AqiReading> {
    if concentrations.is_empty() {
        return Err(Error::Param("no concentrations given".into()));
    }
    let mut per = Vec::with_capacity(concentrations.len());
    let mut clamped = false;
    for &(name, value) in concentrations {
        let (idx, c) = breakpoints.index_for(name, value)?;
        clamped |= c;
        per.push((name.to_string(), idx));
    }
    let overall = per
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(AqiReading {
        overall,
        category: AqiCategory::from_index(overall),
        per_pollutant: per,
        clamped,
    })
}

/// Per-state summary: occupancy, conditional centers over every column, and
/// correlation/partial-correlation tables over the requested continuous
/// columns (complete state rows only).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSummary {
    pub state: usize,
    pub count: usize,
    pub visit_pct: f64,
    /// Conditional mean (continuous) or mode (categorical) per series
    /// column; `None` when the state has no observed cells in that column.
    pub centers: Vec<Option<Value>>,
    /// Row-major correlation matrix over the requested columns, or `None`
    /// when fewer than 2 complete rows or a constant column make it
    /// undefined.
    pub correlation: Option<Vec<f64>>,
    /// Partial correlations from the inverse correlation matrix; `None`
    /// when the state has fewer complete rows than columns + 1 or the
    /// matrix is singular.
    pub partial: Option<Vec<f64>>,
}

fn subset_center(series: &MixedSeries, p: usize, rows: &[usize]) -> Option<Value> {
    match &series.column(p).kind {
        FeatureKind::Continuous => {
            let mut sum = 0.0;
            let mut n = 0usize;
            for &t in rows {
                if let Some(Value::Num(x)) = series.cell(t, p) {
                    sum += x;
                    n += 1;
                }
            }
            (n > 0).then(|| Value::Num(sum / n as f64))
        }
        FeatureKind::Categorical(levels) => {
            let mut counts = vec![0usize; levels.len()];
            for &t in rows {
                if let Some(Value::Cat(l)) = series.cell(t, p) {
                    counts[l as usize] += 1;
                }
            }
            let mut best: Option<(usize, usize)> = None;
            for (l, &c) in counts.iter().enumerate() {
                if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
                    best = Some((l, c));
                }
            }
            best.map(|(l, _)| Value::Cat(l as u32))
        }
    }
}

/// Correlation matrix over `cols` restricted to `rows` with every column
/// observed; `None` when undefined.
fn subset_correlation(series: &MixedSeries, cols: &[usize], rows: &[usize]) -> Option<Vec<f64>> {
    let complete: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|&t| cols.iter().all(|&p| series.cell(t, p).is_some()))
        .collect();
    let n = complete.len();
    if n < 2 {
        return None;
    }
    let d = cols.len();
    let mut data = vec![0.0f64; n * d];
    for (i, &t) in complete.iter().enumerate() {
        for (j, &p) in cols.iter().enumerate() {
            data[i * d + j] = series.cell(t, p)?.as_num()?;
        }
    }
    let nf = n as f64;
    let means: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| data[i * d + j]).sum::<f64>() / nf)
        .collect();
    let mut cov = vec![0.0f64; d * d];
    for i in 0..n {
        for a in 0..d {
            let da = data[i * d + a] - means[a];
            for b in a..d {
                cov[a * d + b] += da * (data[i * d + b] - means[b]);
            }
        }
    }
    let mut out = vec![0.0f64; d * d];
    for a in 0..d {
        if cov[a * d + a] == 0.0 {
            return None; // constant column: correlation undefined
        }
    }
    for a in 0..d {
        out[a * d + a] = 1.0;
        for b in a + 1..d {
            let r = (cov[a * d + b] / (cov[a * d + a] * cov[b * d + b]).sqrt()).clamp(-1.0, 1.0);
            out[a * d + b] = r;
            out[b * d + a] = r;
        }
    }
    Some(out)
}

/// Partial correlations from the inverse of a row-major `d x d` correlation
/// matrix: `-inv[i][j] / sqrt(inv[i][i] * inv[j][j])`, unit diagonal. `None`
/// when the matrix cannot be inverted.
pub fn partial_correlations(correlation: &[f64], d: usize) -> Option<Vec<f64>> {
    if correlation.len() != d * d || d == 0 {
        return None;
    }
    let m = DMatrix::from_row_slice(d, d, correlation);
    let inv = m.try_inverse()?;
    for i in 0..d {
        if inv[(i, i)] <= 0.0 {
            return None; // not positive definite; entries would be meaningless
        }
    }
    let mut out = vec![0.0f64; d * d];
    for i in 0..d {
        out[i * d + i] = 1.0;
        for j in i + 1..d {
            let r = (-inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]).sqrt()).clamp(-1.0, 1.0);
            out[i * d + j] = r;
            out[j * d + i] = r;
        }
    }
    Some(out)
}

/// Per-state occupancy, conditional centers, and correlation tables.
/// `corr_columns` name the continuous columns the correlation and partial
/// correlation matrices cover; partial correlations need more complete rows
/// than columns in a state and are `None` otherwise.
pub fn conditional_stats(
    series: &MixedSeries,
    states: &StateSequence,
    corr_columns: &[String],
) -> Result<Vec<StateSummary>> {
    let t_len = series.n_rows();
    if states.len() != t_len {
        return Err(Error::Dimension(format!(
            "{} states for {} rows",
            states.len(),
            t_len
        )));
    }
    let mut cols = Vec::with_capacity(corr_columns.len());
    for name in corr_columns {
        let p = series
            .column_index(name)
            .ok_or_else(|| Error::Param(format!("no column named {name:?}")))?;
        if !series.column(p).kind.is_continuous() {
            return Err(Error::Param(format!(
                "correlation column {name:?} is not continuous"
            )));
        }
        cols.push(p);
    }
    let k = states.n_states();
    let mut out = Vec::with_capacity(k);
    for s in 0..k {
        let rows: Vec<usize> = (0..t_len).filter(|&t| states.get(t) == s).collect();
        let centers = (0..series.n_cols())
            .map(|p| subset_center(series, p, &rows))
            .collect();
        let correlation = if cols.is_empty() {
            None
        } else {
            subset_correlation(series, &cols, &rows)
        };
        let complete = rows
            .iter()
            .filter(|&&t| cols.iter().all(|&p| series.cell(t, p).is_some()))
            .count();
        let partial = correlation
            .as_ref()
            .filter(|_| complete > cols.len())
            .and_then(|c| partial_correlations(c, cols.len()));
        out.push(StateSummary {
            state: s,
            count: rows.len(),
            visit_pct: rows.len() as f64 / t_len as f64 * 100.0,
            centers,
            correlation,
            partial,
        });
    }
    Ok(out)
}

/// Display labels per state id, ranked by the conditional mean of the column
/// at `label_index` (ascending); states without an observed conditional mean
/// rank last, in state order. With exactly four states the ranks carry the
/// four index-category names, otherwise `Regime 1..k`.
pub fn label_states(summaries: &[StateSummary], label_index: usize) -> Vec<String> {
    let k = summaries.len();
    let mut order: Vec<usize> = (0..k).collect();
    let key = |s: usize| -> Option<f64> {
        summaries[s]
            .centers
            .get(label_index)
            .copied()
            .flatten()
            .and_then(|v| v.as_num())
    };
    order.sort_by(|&a, &b| match (key(a), key(b)) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    let names: Vec<String> = if k == 4 {
        [
            AqiCategory::Good,
            AqiCategory::Moderate,
            AqiCategory::UnhealthySensitive,
            AqiCategory::Unhealthy,
        ]
        .iter()
        .map(|c| c.label().to_string())
        .collect()
    } else {
        (1..=k).map(|i| format!("Regime {i}")).collect()
    };
    let mut labels = vec![String::new(); k];
    for (rank, &s) in order.iter().enumerate() {
        labels[s] = names[rank].clone();
    }
    labels
}
