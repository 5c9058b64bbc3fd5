//! Grid flag grammar: either a comma list (`0,0.1,0.5`) or an inclusive
//! range `start:end[:step]` (step defaults to 1). Range values are computed
//! as `start + i * step` so decimal steps don't accumulate rounding error,
//! and the endpoint is kept when it lands within a relative epsilon.

use jmix_core::{Error, Result};

fn parse_number(part: &str, flag: &str) -> Result<f64> {
    part.trim()
        .parse::<f64>()
        .map_err(|_| Error::Param(format!("{flag}: {part:?} is not a number")))
}

pub fn parse_f64_grid(text: &str, flag: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Param(format!("{flag}: empty grid")));
    }
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() > 3 {
            return Err(Error::Param(format!(
                "{flag}: expected start:end[:step], got {text:?}"
            )));
        }
        let start = parse_number(parts[0], flag)?;
        let end = parse_number(parts[1], flag)?;
        let step = if parts.len() == 3 {
            parse_number(parts[2], flag)?
        } else {
            1.0
        };
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::Param(format!(
                "{flag}: step must be positive, got {step}"
            )));
        }
        if end < start {
            return Err(Error::Param(format!(
                "{flag}: end {end} is below start {start}"
            )));
        }
        let n = ((end - start) / step + 1.0 + 1e-9).floor() as usize;
        (0..n).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',')
            .map(|p| parse_number(p, flag))
            .collect::<Result<Vec<f64>>>()?
    };
    for &v in &values {
        if !v.is_finite() {
            return Err(Error::Param(format!("{flag}: non-finite value {v}")));
        }
    }
    Ok(values)
}

pub fn parse_usize_grid(text: &str, flag: &str) -> Result<Vec<usize>> {
    let values = parse_f64_grid(text, flag)?;
    values
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && v >= 0.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Param(format!(
                    "{flag}: {v} is not a non-negative integer"
                )))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comma_lists_and_ranges_parse() {
        assert_eq!(parse_f64_grid("0,0.5,1", "x").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_f64_grid("2:4", "x").unwrap(), vec![2.0, 3.0, 4.0]);
        let g = parse_f64_grid("0:1:0.05", "x").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert!((g[20] - 1.0).abs() < 1e-12);
        assert_eq!(parse_usize_grid("2:6", "k").unwrap(), vec![2, 3, 4, 5, 6]);
        assert_eq!(parse_usize_grid("3", "k").unwrap(), vec![3]);
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(parse_f64_grid("", "x").is_err());
        assert!(parse_f64_grid("a,b", "x").is_err());
        assert!(parse_f64_grid("1:0", "x").is_err());
        assert!(parse_f64_grid("0:1:0", "x").is_err());
        assert!(parse_f64_grid("0:1:0.1:9", "x").is_err());
        assert!(parse_usize_grid("1.5", "k").is_err());
    }

    #[test]
    fn singleton_range_keeps_one_value() {
        assert_eq!(parse_f64_grid("0.3:0.3:0.05", "x").unwrap(), vec![0.3]);
    }
}
