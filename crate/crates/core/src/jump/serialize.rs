//! Self-describing text form of a [`FitResult`](super::FitResult).
//!
//! One `key: value` line per scalar, tab-separated centroid rows (labels may
//! contain spaces), and the state sequence on one line, 1-based so the file
//! reads naturally. Floats print in shortest round-trip form, so parsing the
//! report back recovers the exact values.

use std::fmt::Write as _;

use crate::dataset::{FeatureKind, Value};
use crate::error::{Error, Result};
use crate::jump::FitResult;

const HEADER: &str = "fit-report v1";

/// Parsed form of a written report: scalar fields, the 0-based state
/// sequence, and the centroid grid as rendered strings.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub k: usize,
    pub lambda: f64,
    pub objective: f64,
    pub jumps: usize,
    pub iterations: usize,
    pub converged: bool,
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub restart: usize,
    pub trace: Vec<f64>,
    pub columns: Vec<String>,
    pub centroid_rows: Vec<Vec<String>>,
    pub states: Vec<usize>,
}

fn field_safe(s: &str) -> Result<()> {
    if s.contains('\t') || s.contains('\n') {
        return Err(Error::Param(format!(
            "name or label {s:?} contains a tab or newline and cannot be serialized"
        )));
    }
    Ok(())
}

pub fn write_fit_report(fit: &FitResult) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "k: {}", fit.k);
    let _ = writeln!(out, "lambda: {}", fit.lambda);
    let _ = writeln!(out, "objective: {}", fit.objective);
    let _ = writeln!(out, "jumps: {}", fit.jumps);
    let _ = writeln!(out, "iterations: {}", fit.iterations);
    let _ = writeln!(out, "converged: {}", fit.converged);
    let _ = writeln!(out, "n_init: {}", fit.n_init);
    let _ = writeln!(out, "max_iter: {}", fit.max_iter);
    let _ = writeln!(out, "seed: {}", fit.seed);
    let _ = writeln!(out, "restart: {}", fit.restart);
    let trace: Vec<String> = fit.trace.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "trace: {}", trace.join(" "));

    let columns = fit.imputed.columns();
    for c in columns {
        field_safe(&c.name)?;
    }
    let names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
    let _ = writeln!(out, "columns: {}", names.join("\t"));
    for s in 0..fit.k {
        let mut fields = Vec::with_capacity(columns.len());
        for (p, v) in fit.centroids.row(s).iter().enumerate() {
            let rendered = match (v, &columns[p].kind) {
                (Value::Num(x), _) => x.to_string(),
                (Value::Cat(c), FeatureKind::Categorical(levels)) => {
                    let label = &levels[*c as usize];
                    field_safe(label)?;
                    label.clone()
                }
                (Value::Cat(_), FeatureKind::Continuous) => {
                    return Err(Error::Dimension(
                        "categorical centroid entry for a continuous column".into(),
                    ))
                }
            };
            fields.push(rendered);
        }
        let _ = writeln!(out, "centroid {}: {}", s + 1, fields.join("\t"));
    }
    let states: Vec<String> = fit
        .states
        .as_slice()
        .iter()
        .map(|s| (s + 1).to_string())
        .collect();
    let _ = writeln!(out, "states: {}", states.join(" "));
    Ok(out)
}

fn take<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let line = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("fit report ended before {key:?}")))?;
    let (k, v) = line
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("fit report line {line:?} is not `key: value`")))?;
    if k.trim() != key {
        return Err(Error::Parse(format!(
            "expected field {key:?}, found {:?}",
            k.trim()
        )));
    }
    Ok(v.trim())
}

fn parse_num<T: std::str::FromStr>(raw: &str, key: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Parse(format!("fit report field {key:?}: bad value {raw:?}")))
}

pub fn parse_fit_report(text: &str) -> Result<FitSummary> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty fit report".into()))?;
    if header.trim() != HEADER {
        return Err(Error::Parse(format!(
            "unrecognized fit report header {header:?}"
        )));
    }
    let k: usize = parse_num(take(&mut lines, "k")?, "k")?;
    let lambda: f64 = parse_num(take(&mut lines, "lambda")?, "lambda")?;
    let objective: f64 = parse_num(take(&mut lines, "objective")?, "objective")?;
    let jumps: usize = parse_num(take(&mut lines, "jumps")?, "jumps")?;
    let iterations: usize = parse_num(take(&mut lines, "iterations")?, "iterations")?;
    let converged: bool = parse_num(take(&mut lines, "converged")?, "converged")?;
    let n_init: usize = parse_num(take(&mut lines, "n_init")?, "n_init")?;
    let max_iter: usize = parse_num(take(&mut lines, "max_iter")?, "max_iter")?;
    let seed: u64 = parse_num(take(&mut lines, "seed")?, "seed")?;
    let restart: usize = parse_num(take(&mut lines, "restart")?, "restart")?;
    let trace_raw = take(&mut lines, "trace")?;
    let trace: Vec<f64> = trace_raw
        .split_whitespace()
        .map(|v| parse_num(v, "trace"))
        .collect::<Result<_>>()?;
    let columns: Vec<String> = take(&mut lines, "columns")?
        .split('\t')
        .map(|s| s.to_string())
        .collect();
    let mut centroid_rows = Vec::with_capacity(k);
    for s in 0..k {
        let raw = take(&mut lines, &format!("centroid {}", s + 1))?;
        let fields: Vec<String> = raw.split('\t').map(|f| f.to_string()).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse(format!(
                "centroid {} has {} fields for {} columns",
                s + 1,
                fields.len(),
                columns.len()
            )));
        }
        centroid_rows.push(fields);
    }
    let states_raw = take(&mut lines, "states")?;
    let mut states = Vec::new();
    for tok in states_raw.split_whitespace() {
        let s: usize = parse_num(tok, "states")?;
        if s == 0 || s > k {
            return Err(Error::Parse(format!("state {s} outside 1..={k}")));
        }
        states.push(s - 1);
    }
    if states.is_empty() {
        return Err(Error::Parse("fit report has no states".into()));
    }
    Ok(FitSummary {
        k,
        lambda,
        objective,
        jumps,
        iterations,
        converged,
        n_init,
        max_iter,
        seed,
        restart,
        trace,
        columns,
        centroid_rows,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, MixedSeries};
    use crate::jump::{fit, FitOptions};

    #[test]
    fn report_round_trips_exactly() {
        let columns = vec![
            Column {
                name: "x".into(),
                kind: FeatureKind::Continuous,
            },
            Column {
                name: "sky cover".into(),
                kind: FeatureKind::Categorical(vec!["clear".into(), "overcast".into()]),
            },
        ];
        let mut cells = Vec::new();
        for i in 0..24 {
            let hi = i >= 12;
            cells.push(if i == 5 {
                None
            } else {
                Some(Value::Num(
                    if hi { 3.2 } else { 0.1 } + (i % 3) as f64 * 0.01,
                ))
            });
            cells.push(Some(Value::Cat(hi as u32)));
        }
        let series = MixedSeries::new(columns, 24, cells, None).unwrap();
        let r = fit(&series, 2, 0.07, &FitOptions::default().with_seed(9)).unwrap();
        let text = write_fit_report(&r).unwrap();
        let parsed = parse_fit_report(&text).unwrap();
        assert_eq!(parsed.k, 2);
        assert_eq!(parsed.lambda, 0.07);
        assert_eq!(parsed.objective, r.objective);
        assert_eq!(parsed.jumps, r.jumps);
        assert_eq!(parsed.states, r.states.as_slice());
        assert_eq!(parsed.trace, r.trace);
        assert_eq!(
            parsed.columns,
            vec!["x".to_string(), "sky cover".to_string()]
        );
        assert_eq!(parsed.centroid_rows.len(), 2);
        // writing again is byte-identical
        assert_eq!(text, write_fit_report(&r).unwrap());
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_fit_report("").is_err());
        assert!(parse_fit_report("fit-report v1\nk: x\n").is_err());
        let ok_header_wrong_field = "fit-report v1\nlambda: 0.1\n";
        assert!(parse_fit_report(ok_header_wrong_field).is_err());
    }
}
