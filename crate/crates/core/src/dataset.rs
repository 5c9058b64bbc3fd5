//! Mixed-type time series: container, schema grammar, CSV loading.
//!
//! A [`MixedSeries`] is a rectangular table of `T` time-ordered rows and `P`
//! feature columns. Every column is either continuous (`f64`) or categorical
//! (an index into a per-column level list). Any cell may be missing. An
//! optional date axis carries one strictly increasing date per row.
//!
//! Categorical levels are ordered: the order is the declaration order from
//! the schema (or first appearance when levels are inferred), and statistics
//! that must break ties between levels (the mode) resolve to the earliest one.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::gower::{GowerContext, Scale};

/// What a column holds.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Continuous,
    /// Levels in declaration order.
    Categorical(Vec<String>),
}

impl FeatureKind {
    pub fn is_continuous(&self) -> bool {
        matches!(self, FeatureKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: FeatureKind,
}

/// One observed cell. Continuous cells are finite; categorical cells index
/// into their column's level list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(u32),
}

impl Value {
    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(self) -> Option<u32> {
        match self {
            Value::Cat(c) => Some(c),
            Value::Num(_) => None,
        }
    }
}

/// Optional date axis: one strictly increasing date per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAxis {
    pub name: String,
    pub dates: Vec<NaiveDate>,
}

/// A rectangular mixed-type time series with possibly missing cells.
#[derive(Debug, Clone)]
pub struct MixedSeries {
    columns: Vec<Column>,
    n_rows: usize,
    /// Row-major, `n_rows * columns.len()` entries.
    cells: Vec<Option<Value>>,
    time: Option<TimeAxis>,
}

impl MixedSeries {
    pub fn new(
        columns: Vec<Column>,
        n_rows: usize,
        cells: Vec<Option<Value>>,
        time: Option<TimeAxis>,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Param("a series needs at least one column".into()));
        }
        if n_rows == 0 {
            return Err(Error::Param("a series needs at least one row".into()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Param(format!("duplicate column name {:?}", c.name)));
            }
            if let FeatureKind::Categorical(levels) = &c.kind {
                if levels.is_empty() {
                    return Err(Error::Param(format!(
                        "categorical column {:?} declares no levels",
                        c.name
                    )));
                }
                let mut lv = HashSet::new();
                for l in levels {
                    if !lv.insert(l.as_str()) {
                        return Err(Error::Param(format!(
                            "categorical column {:?} repeats level {:?}",
                            c.name, l
                        )));
                    }
                }
            }
        }
        if cells.len() != n_rows * columns.len() {
            return Err(Error::Dimension(format!(
                "expected {} cells ({} rows x {} columns), got {}",
                n_rows * columns.len(),
                n_rows,
                columns.len(),
                cells.len()
            )));
        }
        for (i, cell) in cells.iter().enumerate() {
            let (t, p) = (i / columns.len(), i % columns.len());
            match (cell, &columns[p].kind) {
                (None, _) => {}
                (Some(Value::Num(x)), FeatureKind::Continuous) => {
                    if !x.is_finite() {
                        return Err(Error::Param(format!(
                            "non-finite value in column {:?} at row {}",
                            columns[p].name,
                            t + 1
                        )));
                    }
                }
                (Some(Value::Cat(c)), FeatureKind::Categorical(levels)) => {
                    if *c as usize >= levels.len() {
                        return Err(Error::Param(format!(
                            "level index {} out of range for column {:?} at row {}",
                            c,
                            columns[p].name,
                            t + 1
                        )));
                    }
                }
                (Some(_), _) => {
                    return Err(Error::Param(format!(
                        "cell type does not match column {:?} at row {}",
                        columns[p].name,
                        t + 1
                    )));
                }
            }
        }
        if let Some(axis) = &time {
            if axis.dates.len() != n_rows {
                return Err(Error::Dimension(format!(
                    "{} dates for {} rows",
                    axis.dates.len(),
                    n_rows
                )));
            }
            for w in axis.dates.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Param(format!(
                        "dates must be strictly increasing ({} then {})",
                        w[0], w[1]
                    )));
                }
            }
        }
        Ok(MixedSeries {
            columns,
            n_rows,
            cells,
            time,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, p: usize) -> &Column {
        &self.columns[p]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn time(&self) -> Option<&TimeAxis> {
        self.time.as_ref()
    }

    pub fn cell(&self, t: usize, p: usize) -> Option<Value> {
        self.cells[t * self.columns.len() + p]
    }

    pub fn row(&self, t: usize) -> &[Option<Value>] {
        let p = self.columns.len();
        &self.cells[t * p..(t + 1) * p]
    }

    pub(crate) fn set_cell(&mut self, t: usize, p: usize, v: Option<Value>) {
        let idx = t * self.columns.len() + p;
        self.cells[idx] = v;
    }

    /// `(row, column)` coordinates of every missing cell, in row-major order.
    pub fn missing_mask(&self) -> Vec<(usize, usize)> {
        let p = self.columns.len();
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| (i / p, i % p))
            .collect()
    }

    pub fn n_missing(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.cells.iter().all(|c| c.is_some())
    }

    /// Renders a cell for delimited output; missing cells come out empty.
    pub fn format_cell(&self, t: usize, p: usize) -> String {
        match self.cell(t, p) {
            None => String::new(),
            Some(Value::Num(x)) => format!("{x}"),
            Some(Value::Cat(c)) => match &self.columns[p].kind {
                FeatureKind::Categorical(levels) => levels[c as usize].clone(),
                FeatureKind::Continuous => unreachable!("validated in new()"),
            },
        }
    }

    /// Mean of the observed cells of a continuous column.
    pub fn observed_mean(&self, p: usize) -> Result<f64> {
        if !self.columns[p].kind.is_continuous() {
            return Err(Error::Param(format!(
                "column {:?} is not continuous",
                self.columns[p].name
            )));
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for t in 0..self.n_rows {
            if let Some(Value::Num(x)) = self.cell(t, p) {
                sum += x;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::NoObservedValues(self.columns[p].name.clone()));
        }
        Ok(sum / n as f64)
    }

    /// Most frequent observed level of a categorical column. Ties resolve to
    /// the earliest declared level.
    pub fn observed_mode(&self, p: usize) -> Result<u32> {
        let levels = match &self.columns[p].kind {
            FeatureKind::Categorical(levels) => levels,
            FeatureKind::Continuous => {
                return Err(Error::Param(format!(
                    "column {:?} is not categorical",
                    self.columns[p].name
                )))
            }
        };
        let mut counts = vec![0usize; levels.len()];
        let mut seen = false;
        for t in 0..self.n_rows {
            if let Some(Value::Cat(c)) = self.cell(t, p) {
                counts[c as usize] += 1;
                seen = true;
            }
        }
        if !seen {
            return Err(Error::NoObservedValues(self.columns[p].name.clone()));
        }
        let mut best = 0usize;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        Ok(best as u32)
    }

    /// Observed min and max of a continuous column.
    pub fn observed_min_max(&self, p: usize) -> Result<(f64, f64)> {
        if !self.columns[p].kind.is_continuous() {
            return Err(Error::Param(format!(
                "column {:?} is not continuous",
                self.columns[p].name
            )));
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut seen = false;
        for t in 0..self.n_rows {
            if let Some(Value::Num(x)) = self.cell(t, p) {
                lo = lo.min(x);
                hi = hi.max(x);
                seen = true;
            }
        }
        if !seen {
            return Err(Error::NoObservedValues(self.columns[p].name.clone()));
        }
        Ok((lo, hi))
    }

    /// Distance context for this series: per-feature scales from the observed
    /// values (continuous range = observed max minus min; 0 for a constant
    /// column) and unit weights. Fails if any column is entirely missing.
    pub fn compute_context(&self) -> Result<GowerContext> {
        let mut scales = Vec::with_capacity(self.columns.len());
        for (p, col) in self.columns.iter().enumerate() {
            match &col.kind {
                FeatureKind::Continuous => {
                    let (lo, hi) = self.observed_min_max(p)?;
                    scales.push(Scale::Continuous { range: hi - lo });
                }
                FeatureKind::Categorical(_) => {
                    // still reject fully-missing categorical columns
                    self.observed_mode(p)?;
                    scales.push(Scale::Categorical);
                }
            }
        }
        let weights = vec![1.0; self.columns.len()];
        GowerContext::new(scales, weights)
    }

    /// Fills every missing cell with its column's unconditional statistic:
    /// observed mean for continuous columns, observed mode for categorical
    /// ones. This is the warm start before model-based imputation takes over.
    pub fn initial_impute(&self) -> Result<MixedSeries> {
        let mut out = self.clone();
        for p in 0..self.columns.len() {
            let has_missing = (0..self.n_rows).any(|t| self.cell(t, p).is_none());
            if !has_missing {
                continue;
            }
            let fill = match &self.columns[p].kind {
                FeatureKind::Continuous => Value::Num(self.observed_mean(p)?),
                FeatureKind::Categorical(_) => Value::Cat(self.observed_mode(p)?),
            };
            for t in 0..self.n_rows {
                if out.cell(t, p).is_none() {
                    out.set_cell(t, p, Some(fill));
                }
            }
        }
        Ok(out)
    }

    /// Per-feature unconditional center: observed mean for continuous
    /// columns, observed mode for categorical ones.
    pub fn unconditional_center(&self) -> Result<Vec<Value>> {
        (0..self.columns.len())
            .map(|p| match &self.columns[p].kind {
                FeatureKind::Continuous => self.observed_mean(p).map(Value::Num),
                FeatureKind::Categorical(_) => self.observed_mode(p).map(Value::Cat),
            })
            .collect()
    }

    /// Writes the series as CSV (date axis first when present, missing cells
    /// empty). Inverse of [`load_csv`] up to float formatting.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut header = Vec::new();
        if let Some(axis) = &self.time {
            header.push(axis.name.clone());
        }
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        writeln!(f, "{}", header.join(","))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        for t in 0..self.n_rows {
            let mut fields = Vec::with_capacity(header.len());
            if let Some(axis) = &self.time {
                fields.push(axis.dates[t].to_string());
            }
            for p in 0..self.columns.len() {
                fields.push(self.format_cell(t, p));
            }
            writeln!(f, "{}", fields.join(","))
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }
}

/// How the schema declares one CSV column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnSpec {
    Continuous,
    /// `levels: None` means levels are inferred from the data in first
    /// appearance order; `Some` pins the level list (and its order).
    Categorical {
        levels: Option<Vec<String>>,
    },
    Date,
}

/// Column declarations, one per line: `name: continuous`, `name: categorical`,
/// `name: categorical(A|B|C)`, or `name: date` (at most one date column).
/// Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    entries: Vec<(String, ColumnSpec)>,
}

impl Schema {
    pub fn new(entries: Vec<(String, ColumnSpec)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Parse("schema declares no columns".into()));
        }
        let mut seen = HashSet::new();
        let mut dates = 0usize;
        for (name, spec) in &entries {
            if name.is_empty() {
                return Err(Error::Parse("schema has an empty column name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Parse(format!("schema repeats column {name:?}")));
            }
            if matches!(spec, ColumnSpec::Date) {
                dates += 1;
            }
            if let ColumnSpec::Categorical {
                levels: Some(levels),
            } = spec
            {
                if levels.is_empty() {
                    return Err(Error::Parse(format!(
                        "column {name:?} pins an empty level list"
                    )));
                }
                let mut lv = HashSet::new();
                for l in levels {
                    if l.is_empty() || !lv.insert(l.as_str()) {
                        return Err(Error::Parse(format!(
                            "column {name:?} has an empty or repeated level"
                        )));
                    }
                }
            }
        }
        if dates > 1 {
            return Err(Error::Parse(
                "schema declares more than one date column".into(),
            ));
        }
        if entries.len() == dates {
            return Err(Error::Parse("schema declares no feature columns".into()));
        }
        Ok(Schema { entries })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, decl) = line.split_once(':').ok_or_else(|| {
                Error::Parse(format!("schema line {}: expected `name: kind`", lineno + 1))
            })?;
            let name = name.trim().to_string();
            let decl = decl.trim();
            let spec = if decl == "continuous" {
                ColumnSpec::Continuous
            } else if decl == "date" {
                ColumnSpec::Date
            } else if decl == "categorical" {
                ColumnSpec::Categorical { levels: None }
            } else if let Some(rest) = decl.strip_prefix("categorical(") {
                let inner = rest.strip_suffix(')').ok_or_else(|| {
                    Error::Parse(format!(
                        "schema line {}: unterminated level list",
                        lineno + 1
                    ))
                })?;
                let levels: Vec<String> = inner.split('|').map(|l| l.trim().to_string()).collect();
                ColumnSpec::Categorical {
                    levels: Some(levels),
                }
            } else {
                return Err(Error::Parse(format!(
                    "schema line {}: unknown kind {:?}",
                    lineno + 1,
                    decl
                )));
            };
            entries.push((name, spec));
        }
        Schema::new(entries)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Schema::parse(&text)
    }

    pub fn entries(&self) -> &[(String, ColumnSpec)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, spec) in &self.entries {
            let decl = match spec {
                ColumnSpec::Continuous => "continuous".to_string(),
                ColumnSpec::Date => "date".to_string(),
                ColumnSpec::Categorical { levels: None } => "categorical".to_string(),
                ColumnSpec::Categorical {
                    levels: Some(levels),
                } => {
                    format!("categorical({})", levels.join("|"))
                }
            };
            out.push_str(&format!("{name}: {decl}\n"));
        }
        out
    }
}

/// The missing-cell tokens recognized by default: the empty string, `NA`,
/// and `NaN` (exact, case-sensitive matches after trimming).
pub fn default_missing_tokens() -> Vec<String> {
    vec![String::new(), "NA".into(), "NaN".into()]
}

/// Loads the schema's columns from a headered CSV file. CSV columns not named
/// by the schema are ignored; schema columns absent from the header are an
/// error. Cells matching a missing token load as missing.
pub fn load_csv(path: &Path, schema: &Schema, missing_tokens: &[String]) -> Result<MixedSeries> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::csv(display.clone(), e))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::csv(display.clone(), e))?
        .clone();
    let header_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "{display}: column {name:?} not found in CSV header"
                ))
            })
    };

    struct Slot {
        csv_idx: usize,
        name: String,
        kind: SlotKind,
    }
    enum SlotKind {
        Date,
        Num,
        Cat { pinned: bool, levels: Vec<String> },
    }

    let mut slots = Vec::new();
    for (name, spec) in schema.entries() {
        let csv_idx = header_index(name)?;
        let kind = match spec {
            ColumnSpec::Date => SlotKind::Date,
            ColumnSpec::Continuous => SlotKind::Num,
            ColumnSpec::Categorical { levels } => SlotKind::Cat {
                pinned: levels.is_some(),
                levels: levels.clone().unwrap_or_default(),
            },
        };
        slots.push(Slot {
            csv_idx,
            name: name.clone(),
            kind,
        });
    }

    let is_missing = |tok: &str| missing_tokens.iter().any(|m| m == tok);

    let n_features = slots
        .iter()
        .filter(|s| !matches!(s.kind, SlotKind::Date))
        .count();
    let mut cells: Vec<Option<Value>> = Vec::new();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut n_rows = 0usize;

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(display.clone(), e))?;
        n_rows += 1;
        for slot in &mut slots {
            let raw = record.get(slot.csv_idx).unwrap_or("").trim();
            match &mut slot.kind {
                SlotKind::Date => {
                    let d = NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| {
                        Error::Parse(format!(
                            "{display}: row {}, column {:?}: cannot parse date {raw:?}",
                            row_idx + 1,
                            slot.name
                        ))
                    })?;
                    dates.push(d);
                }
                SlotKind::Num => {
                    if is_missing(raw) {
                        cells.push(None);
                    } else {
                        let x: f64 = raw.parse().map_err(|_| {
                            Error::Parse(format!(
                                "{display}: row {}, column {:?}: cannot parse number {raw:?}",
                                row_idx + 1,
                                slot.name
                            ))
                        })?;
                        if !x.is_finite() {
                            return Err(Error::Parse(format!(
                                "{display}: row {}, column {:?}: non-finite number {raw:?}",
                                row_idx + 1,
                                slot.name
                            )));
                        }
                        cells.push(Some(Value::Num(x)));
                    }
                }
                SlotKind::Cat { pinned, levels } => {
                    if is_missing(raw) {
                        cells.push(None);
                    } else if let Some(i) = levels.iter().position(|l| l == raw) {
                        cells.push(Some(Value::Cat(i as u32)));
                    } else if *pinned {
                        return Err(Error::Parse(format!(
                            "{display}: row {}, column {:?}: unknown level {raw:?}",
                            row_idx + 1,
                            slot.name
                        )));
                    } else {
                        levels.push(raw.to_string());
                        cells.push(Some(Value::Cat((levels.len() - 1) as u32)));
                    }
                }
            }
        }
    }

    if n_rows == 0 {
        return Err(Error::Parse(format!("{display}: no data rows")));
    }

    // cells were appended row-major in schema slot order; that is the column
    // order of the resulting series (date column excluded)
    let mut columns = Vec::with_capacity(n_features);
    let mut time = None;
    for slot in &slots {
        match &slot.kind {
            SlotKind::Date => {
                time = Some(TimeAxis {
                    name: slot.name.clone(),
                    dates: dates.clone(),
                });
            }
            SlotKind::Num => columns.push(Column {
                name: slot.name.clone(),
                kind: FeatureKind::Continuous,
            }),
            SlotKind::Cat { levels, .. } => {
                if levels.is_empty() {
                    return Err(Error::NoObservedValues(slot.name.clone()));
                }
                columns.push(Column {
                    name: slot.name.clone(),
                    kind: FeatureKind::Categorical(levels.clone()),
                });
            }
        }
    }

    // drop date cells from the row-major buffer: they were never pushed into
    // `cells`, so the buffer is already features-only
    MixedSeries::new(columns, n_rows, cells, time)
}
