//! Gower distance between mixed-type observations.
//!
//! Each feature contributes a dissimilarity in [0, 1]: continuous features
//! contribute `|x - y| / range` where the range is fixed once from the
//! observed data, and categorical features contribute 0 on a match and 1 on a
//! mismatch. The distance is the weighted mean of the contributions, so it
//! also lives in [0, 1] and is comparable across feature mixes.

use crate::dataset::Value;
use crate::error::{Error, Result};

/// Relative slack allowed before a continuous value is declared outside the
/// range its context was built from. Covers float rounding of clamped means.
pub(crate) const RANGE_SLACK: f64 = 1e-9;

/// Per-feature normalization: the observed range for continuous features
/// (zero for a constant feature), nothing for categorical ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Scale {
    Continuous { range: f64 },
    Categorical,
}

/// Fixed distance context: one scale and one non-negative weight per feature.
/// Built once from the observed data and reused across fitting iterations, so
/// the metric does not drift as cells are re-imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct GowerContext {
    scales: Vec<Scale>,
    weights: Vec<f64>,
    weight_total: f64,
}

impl GowerContext {
    pub fn new(scales: Vec<Scale>, weights: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::Param(
                "distance context needs at least one feature".into(),
            ));
        }
        if weights.len() != scales.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} features",
                weights.len(),
                scales.len()
            )));
        }
        for s in &scales {
            if let Scale::Continuous { range } = s {
                if !range.is_finite() || *range < 0.0 {
                    return Err(Error::Param(format!("invalid feature range {range}")));
                }
            }
        }
        let mut total = 0.0;
        for w in &weights {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::Param(format!("invalid feature weight {w}")));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(Error::Param("feature weights sum to zero".into()));
        }
        Ok(GowerContext {
            scales,
            weights,
            weight_total: total,
        })
    }

    pub fn with_unit_weights(scales: Vec<Scale>) -> Result<Self> {
        let n = scales.len();
        GowerContext::new(scales, vec![1.0; n])
    }

    /// Same scales, different weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        GowerContext::new(self.scales.clone(), weights)
    }

    pub fn scales(&self) -> &[Scale] {
        &self.scales
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_total(&self) -> f64 {
        self.weight_total
    }

    pub fn n_features(&self) -> usize {
        self.scales.len()
    }
}

/// Dissimilarity contribution of a single feature, in [0, 1].
///
/// A constant continuous feature (zero range) contributes 0 to every pair. A
/// continuous difference beyond the context's range (plus float slack) means
/// the context was built from other data and is an error, not a silent clamp.
pub fn feature_contribution(x: Value, y: Value, scale: &Scale) -> Result<f64> {
    match (scale, x, y) {
        (Scale::Continuous { range }, Value::Num(a), Value::Num(b)) => {
            let diff = (a - b).abs();
            if *range == 0.0 {
                if diff > 0.0 {
                    return Err(Error::StaleContext(format!(
                        "difference {diff} on a zero-range feature"
                    )));
                }
                return Ok(0.0);
            }
            if diff > range * (1.0 + RANGE_SLACK) {
                return Err(Error::StaleContext(format!(
                    "difference {diff} exceeds feature range {range}"
                )));
            }
            Ok((diff / range).min(1.0))
        }
        (Scale::Categorical, Value::Cat(a), Value::Cat(b)) => Ok(if a == b { 0.0 } else { 1.0 }),
        _ => Err(Error::Dimension(
            "value kind does not match feature scale".into(),
        )),
    }
}

/// Weighted Gower distance between two fully observed rows.
pub fn gower_distance(x: &[Value], y: &[Value], ctx: &GowerContext) -> Result<f64> {
    if x.len() != ctx.n_features() || y.len() != ctx.n_features() {
        return Err(Error::Dimension(format!(
            "rows of {} and {} values against {} features",
            x.len(),
            y.len(),
            ctx.n_features()
        )));
    }
    let mut num = 0.0;
    for p in 0..x.len() {
        let d = feature_contribution(x[p], y[p], &ctx.scales[p])?;
        num += ctx.weights[p] * d;
    }
    Ok(num / ctx.weight_total)
}
