//! The end-to-end regime-decoding pipeline for daily air-quality tables:
//! load a dated CSV, engineer rolling and indicator features, pick the jump
//! penalty by information criterion at a fixed state count, fit, and emit a
//! report plus a per-day table for plotting.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use super::{
    add_indicators, append_columns, aqi, conditional_stats, continuous_column, holidays_from_file,
    label_states, rolling_correlation, rolling_mean, AqiReading, PollutantBreakpoints,
    StateSummary,
};
use crate::dataset::{
    default_missing_tokens, load_csv, Column, ColumnSpec, FeatureKind, MixedSeries, Schema, Value,
};
use crate::error::{Error, Result};
use crate::jump::{fit, FitOptions, FitResult};
use crate::selection::{select, GicReport, SelectOptions};
use crate::simulate::default_lambda_grid;

fn default_windy_threshold() -> f64 {
    0.7
}

fn default_rolling_window() -> usize {
    7
}

fn default_pipeline_k() -> usize {
    4
}

fn default_k_saturated() -> usize {
    6
}

fn default_n_init() -> usize {
    10
}

fn default_max_iter() -> usize {
    10
}

/// Configuration of the decoding pipeline, usually loaded from a TOML file.
/// Relative `breakpoints`/`holidays` paths resolve against the config file's
/// directory; omitted paths fall back to the built-in tables.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Header of the ISO-date column in the input CSV.
    pub date_column: String,
    /// Pollutant concentration columns.
    pub pollutants: Vec<String>,
    /// Weather columns; each gets rolling correlations against every
    /// pollutant.
    #[serde(default)]
    pub weather: Vec<String>,
    /// Further continuous columns carried into the design matrix untouched.
    #[serde(default)]
    pub extra_continuous: Vec<String>,
    /// Column for the `Windy` indicator (omit to skip it).
    #[serde(default)]
    pub wind_column: Option<String>,
    /// Column for the `Rainy` indicator (omit to skip it).
    #[serde(default)]
    pub rain_column: Option<String>,
    #[serde(default = "default_windy_threshold")]
    pub windy_threshold: f64,
    #[serde(default)]
    pub rainy_threshold: f64,
    #[serde(default = "default_rolling_window")]
    pub rolling_window: usize,
    /// Number of regimes; fixed, not selected.
    #[serde(default = "default_pipeline_k")]
    pub k: usize,
    #[serde(default = "default_k_saturated")]
    pub k_saturated: usize,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    /// Column whose conditional mean orders the state labels; defaults to
    /// `PM2.5` when present, else the first pollutant.
    #[serde(default)]
    pub label_column: Option<String>,
    /// Pollutants entering the daily index; defaults to all of `pollutants`.
    #[serde(default)]
    pub aqi_pollutants: Option<Vec<String>>,
    /// Breakpoint table path; omit for the built-in table.
    #[serde(default)]
    pub breakpoints: Option<String>,
    /// Holiday calendar path; omit for the built-in calendar.
    #[serde(default)]
    pub holidays: Option<String>,
    /// Cell spellings treated as missing; defaults to "", "NA", "NaN".
    #[serde(default)]
    pub missing_tokens: Option<Vec<String>>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = PipelineConfig::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// All raw value columns, in design-matrix order.
    fn raw_columns(&self) -> Vec<&str> {
        self.pollutants
            .iter()
            .chain(&self.weather)
            .chain(&self.extra_continuous)
            .map(String::as_str)
            .collect()
    }

    fn label_column(&self) -> &str {
        match &self.label_column {
            Some(c) => c,
            None if self.pollutants.iter().any(|p| p == "PM2.5") => "PM2.5",
            None => &self.pollutants[0],
        }
    }

    fn aqi_pollutants(&self) -> &[String] {
        self.aqi_pollutants.as_deref().unwrap_or(&self.pollutants)
    }

    pub fn validate(&self) -> Result<()> {
        if self.date_column.is_empty() {
            return Err(Error::Param("date_column must be named".into()));
        }
        if self.pollutants.is_empty() {
            return Err(Error::Param(
                "at least one pollutant column is required".into(),
            ));
        }
        let raw = self.raw_columns();
        for (i, a) in raw.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::Param("column names cannot be empty".into()));
            }
            if raw[..i].contains(a) {
                return Err(Error::Param(format!("column {a:?} is listed twice")));
            }
        }
        for c in [&self.wind_column, &self.rain_column, &self.label_column]
            .into_iter()
            .flatten()
        {
            if !raw.contains(&c.as_str()) {
                return Err(Error::Param(format!(
                    "column {c:?} is not among the configured value columns"
                )));
            }
        }
        if let Some(ap) = &self.aqi_pollutants {
            for p in ap {
                if !self.pollutants.contains(p) {
                    return Err(Error::Param(format!(
                        "aqi pollutant {p:?} is not among the pollutant columns"
                    )));
                }
            }
            if ap.is_empty() {
                return Err(Error::Param("aqi_pollutants cannot be empty".into()));
            }
        }
        if !self.windy_threshold.is_finite() || !self.rainy_threshold.is_finite() {
            return Err(Error::Param("indicator thresholds must be finite".into()));
        }
        if self.rolling_window == 0 {
            return Err(Error::Param("rolling_window must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        if self.k_saturated < self.k {
            return Err(Error::Param(format!(
                "k_saturated ({}) must cover k ({})",
                self.k_saturated, self.k
            )));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Param("lambda_grid cannot be empty".into()));
        }
        for &l in &self.lambda_grid {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Param(format!("invalid lambda {l} in grid")));
            }
        }
        if self.n_init == 0 || self.max_iter == 0 {
            return Err(Error::Param(
                "n_init and max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Schema of the raw CSV: the date column plus every value column.
    pub fn schema(&self) -> Result<Schema> {
        let mut entries = vec![(self.date_column.clone(), ColumnSpec::Date)];
        entries.extend(
            self.raw_columns()
                .iter()
                .map(|c| (c.to_string(), ColumnSpec::Continuous)),
        );
        Schema::new(entries)
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_breakpoints(&self) -> Result<PollutantBreakpoints> {
        match &self.breakpoints {
            Some(rel) => PollutantBreakpoints::from_file(&self.resolve(rel)),
            None => Ok(PollutantBreakpoints::defaults()),
        }
    }

    pub fn load_holidays(&self) -> Result<BTreeSet<NaiveDate>> {
        match &self.holidays {
            Some(rel) => holidays_from_file(&self.resolve(rel)),
            None => Ok(super::default_holidays()),
        }
    }
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct RegimeReport {
    pub k: usize,
    pub chosen_lambda: f64,
    /// The full information-criterion table behind the penalty choice.
    pub selection: GicReport,
    pub fit: FitResult,
    /// Display label per state id.
    pub labels: Vec<String>,
    pub summaries: Vec<StateSummary>,
    /// Columns the conditional correlation tables cover.
    pub corr_columns: Vec<String>,
    pub design_columns: Vec<String>,
    /// Engineered columns dropped for having no observed values.
    pub dropped_columns: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// Daily index readings; `None` on days with no observed concentrations.
    pub aqi: Vec<Option<AqiReading>>,
    /// Category changes between consecutive days with readings; the decoded
    /// regime sequence is expected to switch less.
    pub aqi_switches: usize,
}

fn num_cells(values: &[Option<f64>]) -> Vec<Option<Value>> {
    values.iter().map(|v| v.map(Value::Num)).collect()
}

/// Builds the design matrix: raw columns, trailing means, weather-pollutant
/// rolling correlations, then indicators. Engineered columns with no
/// observed values are dropped and reported.
fn engineer(raw: &MixedSeries, cfg: &PipelineConfig) -> Result<(MixedSeries, Vec<String>)> {
    let w = cfg.rolling_window;
    let mut extra: Vec<(Column, Vec<Option<Value>>)> = Vec::new();
    let mut dropped = Vec::new();
    let mut push = |name: String, values: Vec<Option<f64>>, dropped: &mut Vec<String>| {
        if values.iter().all(Option::is_none) {
            dropped.push(name);
        } else {
            extra.push((
                Column {
                    name,
                    kind: FeatureKind::Continuous,
                },
                num_cells(&values),
            ));
        }
    };

    for col in cfg.raw_columns() {
        let values = continuous_column(raw, col)?;
        push(
            format!("{col}_ma{w}"),
            rolling_mean(&values, w)?,
            &mut dropped,
        );
    }
    for weather in &cfg.weather {
        let wv = continuous_column(raw, weather)?;
        for pol in &cfg.pollutants {
            let pv = continuous_column(raw, pol)?;
            push(
                format!("corr_{weather}_{pol}"),
                rolling_correlation(&wv, &pv, w)?,
                &mut dropped,
            );
        }
    }

    let design = append_columns(raw, extra)?;
    let holidays = cfg.load_holidays()?;
    let design = add_indicators(
        &design,
        cfg.wind_column.as_deref().map(|c| (c, cfg.windy_threshold)),
        cfg.rain_column.as_deref().map(|c| (c, cfg.rainy_threshold)),
        &holidays,
    )?;
    Ok((design, dropped))
}

/// Runs the pipeline on a raw CSV. Deterministic for fixed inputs and
/// config: the selection, the refit, and every table depend only on them.
pub fn run_pipeline(csv: &Path, cfg: &PipelineConfig) -> Result<RegimeReport> {
    cfg.validate()?;
    let schema = cfg.schema()?;
    let tokens: Vec<String> = cfg
        .missing_tokens
        .clone()
        .unwrap_or_else(default_missing_tokens);
    let raw = load_csv(csv, &schema, &tokens)?;
    let dates = raw
        .time()
        .expect("schema carries a date column")
        .dates
        .clone();

    let breakpoints = cfg.load_breakpoints()?;
    for p in cfg.aqi_pollutants() {
        if breakpoints.segments(p).is_none() {
            return Err(Error::Param(format!(
                "no breakpoint segments configured for pollutant {p:?}"
            )));
        }
    }

    let (design, dropped_columns) = engineer(&raw, cfg)?;
    let design_columns: Vec<String> = design.columns().iter().map(|c| c.name.clone()).collect();

    let fit_opts = FitOptions {
        n_init: cfg.n_init,
        max_iter: cfg.max_iter,
        seed: cfg.seed,
        ..FitOptions::default()
    };
    let sel_opts = SelectOptions {
        k_saturated: cfg.k_saturated,
        fit: fit_opts.clone(),
    };
    let selection = select(&design, &[cfg.k], &cfg.lambda_grid, &sel_opts)?;
    let chosen_lambda = selection.chosen_lambda;
    // same options and seed as inside the grid search, so this reproduces
    // the winning fit exactly
    let fit_result = fit(&design, cfg.k, chosen_lambda, &fit_opts)?;

    let mut aqi_series: Vec<Option<AqiReading>> = Vec::with_capacity(raw.n_rows());
    for (t, date) in dates.iter().enumerate() {
        let mut concs: Vec<(&str, f64)> = Vec::new();
        for p in cfg.aqi_pollutants() {
            let idx = raw.column_index(p).expect("validated pollutant column");
            if let Some(Value::Num(v)) = raw.cell(t, idx) {
                concs.push((p.as_str(), v));
            }
        }
        if concs.is_empty() {
            aqi_series.push(None);
        } else {
            let reading = aqi(&concs, &breakpoints)
                .map_err(|e| Error::Param(format!("index on {date}: {e}")))?;
            aqi_series.push(Some(reading));
        }
    }
    let aqi_switches = aqi_series
        .windows(2)
        .filter(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => a.category != b.category,
            _ => false,
        })
        .count();

    let corr_columns: Vec<String> = cfg.pollutants.iter().chain(&cfg.weather).cloned().collect();
    let summaries = conditional_stats(&design, &fit_result.states, &corr_columns)?;
    let label_index = design
        .column_index(cfg.label_column())
        .expect("validated label column");
    let labels = label_states(&summaries, label_index);

    Ok(RegimeReport {
        k: cfg.k,
        chosen_lambda,
        selection,
        fit: fit_result,
        labels,
        summaries,
        corr_columns,
        design_columns,
        dropped_columns,
        dates,
        aqi: aqi_series,
        aqi_switches,
    })
}

fn fmt_center(v: Option<Value>, kind: &FeatureKind) -> String {
    match (v, kind) {
        (None, _) => "-".into(),
        (Some(Value::Num(x)), _) => format!("{x:.3}"),
        (Some(Value::Cat(l)), FeatureKind::Categorical(levels)) => levels
            .get(l as usize)
            .cloned()
            .unwrap_or_else(|| l.to_string()),
        (Some(Value::Cat(l)), FeatureKind::Continuous) => l.to_string(),
    }
}

fn fmt_matrix(m: &[f64], names: &[String], indent: &str) -> String {
    let d = names.len();
    let mut out = String::new();
    for i in 0..d {
        out.push_str(indent);
        out.push_str(&format!("{:<12}", names[i]));
        for j in 0..d {
            out.push_str(&format!(" {:>7.3}", m[i * d + j]));
        }
        out.push('\n');
    }
    out
}

/// Human-readable run summary: selection outcome, per-state occupancy,
/// centers, and correlation tables.
pub fn write_report(report: &RegimeReport) -> String {
    let mut out = String::new();
    let t = report.dates.len();
    out.push_str("air-quality regime report\n");
    out.push_str("=========================\n");
    if let (Some(first), Some(last)) = (report.dates.first(), report.dates.last()) {
        out.push_str(&format!("days: {t} ({first} to {last})\n"));
    }
    out.push_str(&format!(
        "states: {}, penalty: {} (information criterion over {} candidates)\n",
        report.k,
        report.chosen_lambda,
        report.selection.rows.len()
    ));
    out.push_str(&format!(
        "objective: {:.6}, state switches: {}, index category switches: {}\n",
        report.fit.objective, report.fit.jumps, report.aqi_switches
    ));
    out.push_str(&format!(
        "design matrix: {} columns",
        report.design_columns.len()
    ));
    if report.dropped_columns.is_empty() {
        out.push('\n');
    } else {
        out.push_str(&format!(
            " (dropped as empty: {})\n",
            report.dropped_columns.join(", ")
        ));
    }
    out.push('\n');

    let columns = report.fit.imputed.columns();
    for s in 0..report.summaries.len() {
        let sum = &report.summaries[s];
        out.push_str(&format!(
            "state {} \"{}\" - {} days ({:.1}%)\n",
            s + 1,
            report.labels.get(s).map(String::as_str).unwrap_or("?"),
            sum.count,
            sum.visit_pct
        ));
        if sum.count > 0 {
            out.push_str("  centers:\n");
            for (p, col) in columns.iter().enumerate() {
                out.push_str(&format!(
                    "    {}: {}\n",
                    col.name,
                    fmt_center(sum.centers.get(p).copied().flatten(), &col.kind)
                ));
            }
        }
        match &sum.correlation {
            Some(m) => {
                out.push_str("  conditional correlation:\n");
                out.push_str(&fmt_matrix(m, &report.corr_columns, "    "));
            }
            None => out.push_str("  conditional correlation: unavailable\n"),
        }
        match &sum.partial {
            Some(m) => {
                out.push_str("  partial correlation:\n");
                out.push_str(&fmt_matrix(m, &report.corr_columns, "    "));
            }
            None => out.push_str(
                "  partial correlation: unavailable (needs more complete days than columns)\n",
            ),
        }
        out.push('\n');
    }
    out
}

/// Per-day table for plotting: date, decoded state (1-based), its label,
/// the day's index value, category, and clamp flag; index fields are empty
/// on days without readings.
pub fn write_daily_table(report: &RegimeReport) -> String {
    let mut out = String::from("date,state,label,aqi,aqi_category,clamped\n");
    for t in 0..report.dates.len() {
        let s = report.fit.states.get(t);
        let (value, category, clamped) = match &report.aqi[t] {
            Some(r) => (
                format!("{}", r.overall),
                r.category.label().to_string(),
                if r.clamped { "yes" } else { "no" }.to_string(),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            report.dates[t],
            s + 1,
            report.labels.get(s).map(String::as_str).unwrap_or("?"),
            value,
            category,
            clamped
        ));
    }
    out
}
