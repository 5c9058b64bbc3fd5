//! Dense numeric engine behind [`fit`](super::fit).
//!
//! The fitting loop touches every cell thousands of times, so rows live in a
//! flat `f64` buffer (categorical cells hold their level index, which is
//! exact in an f64). Every computation here mirrors the reference
//! implementations in the parent module operation for operation and in the
//! same order, so results agree bit-for-bit; the tests below pin that down.
//!
//! By construction the engine never sees an out-of-range value: cells are
//! observed data, initial means/modes, or clamped centroid entries, all
//! within the ranges the context was built from. The range checks of the
//! public distance therefore reduce to debug assertions here.

use rand::Rng;

use crate::dataset::{FeatureKind, MixedSeries, Value};
use crate::error::{Error, Result};
use crate::gower::{GowerContext, Scale, RANGE_SLACK};
use crate::jump::{dp_decode, CentroidMethod, Centroids};

#[derive(Clone, Copy)]
enum Feat {
    Cont { range: f64, lo: f64, hi: f64 },
    Cat,
}

pub(crate) struct Engine {
    t_len: usize,
    p_len: usize,
    feats: Vec<Feat>,
    weights: Vec<f64>,
    weight_total: f64,
    /// Fully observed starting data, row-major `t_len x p_len`.
    template: Vec<f64>,
    /// Cells that were missing in the original series and get re-imputed.
    mask: Vec<(u32, u32)>,
}

impl Engine {
    pub(crate) fn from_series(
        base: &MixedSeries,
        ctx: &GowerContext,
        mask: &[(usize, usize)],
    ) -> Result<Engine> {
        if !base.is_fully_observed() {
            return Err(Error::Param(
                "engine needs a fully observed starting series".into(),
            ));
        }
        if ctx.n_features() != base.n_cols() {
            return Err(Error::Dimension(
                "context width does not match series".into(),
            ));
        }
        let t_len = base.n_rows();
        let p_len = base.n_cols();
        let mut feats = Vec::with_capacity(p_len);
        for (p, col) in base.columns().iter().enumerate() {
            match (&col.kind, &ctx.scales()[p]) {
                (FeatureKind::Continuous, Scale::Continuous { range }) => {
                    let (lo, hi) = base.observed_min_max(p)?;
                    feats.push(Feat::Cont {
                        range: *range,
                        lo,
                        hi,
                    });
                }
                (FeatureKind::Categorical(_), Scale::Categorical) => feats.push(Feat::Cat),
                _ => {
                    return Err(Error::Dimension(format!(
                        "column {:?} and its scale disagree in kind",
                        col.name
                    )))
                }
            }
        }
        let mut template = Vec::with_capacity(t_len * p_len);
        for t in 0..t_len {
            for cell in base.row(t) {
                template.push(match cell.expect("fully observed") {
                    Value::Num(x) => x,
                    Value::Cat(c) => c as f64,
                });
            }
        }
        for &(t, p) in mask {
            if t >= t_len || p >= p_len {
                return Err(Error::Dimension(format!(
                    "mask cell ({t}, {p}) out of bounds"
                )));
            }
        }
        Ok(Engine {
            t_len,
            p_len,
            feats,
            weights: ctx.weights().to_vec(),
            weight_total: ctx.weight_total(),
            template,
            mask: mask.iter().map(|&(t, p)| (t as u32, p as u32)).collect(),
        })
    }

    pub(crate) fn t_len(&self) -> usize {
        self.t_len
    }

    pub(crate) fn template(&self) -> &[f64] {
        &self.template
    }

    /// Same accumulation as `gower_distance`: per-feature contribution in
    /// declaration order, weighted sum, one final division.
    fn distance(&self, row: &[f64], centroid: &[f64]) -> f64 {
        let mut num = 0.0;
        for j in 0..self.p_len {
            let d = match self.feats[j] {
                Feat::Cont { range, .. } => {
                    if range == 0.0 {
                        0.0
                    } else {
                        let diff = (row[j] - centroid[j]).abs();
                        debug_assert!(diff <= range * (1.0 + RANGE_SLACK));
                        (diff / range).min(1.0)
                    }
                }
                Feat::Cat => {
                    if row[j] == centroid[j] {
                        0.0
                    } else {
                        1.0
                    }
                }
            };
            num += self.weights[j] * d;
        }
        num / self.weight_total
    }

    pub(crate) fn decode(
        &self,
        data: &[f64],
        centroids: &[f64],
        k: usize,
        lambda: f64,
    ) -> (Vec<u32>, f64) {
        let mut dist = vec![0.0f64; self.t_len * k];
        for t in 0..self.t_len {
            let row = &data[t * self.p_len..(t + 1) * self.p_len];
            for s in 0..k {
                dist[t * k + s] =
                    self.distance(row, &centroids[s * self.p_len..(s + 1) * self.p_len]);
            }
        }
        dp_decode(&dist, self.t_len, k, lambda)
    }

    pub(crate) fn fit_centroids<R: Rng>(
        &self,
        data: &[f64],
        states: &[u32],
        k: usize,
        previous: Option<&[f64]>,
        method: CentroidMethod,
        rng: &mut R,
    ) -> Vec<f64> {
        let p = self.p_len;
        let mut out = Vec::with_capacity(k * p);
        for s in 0..k {
            let members: Vec<usize> = (0..self.t_len).filter(|&t| states[t] == s as u32).collect();
            if members.is_empty() {
                match previous {
                    Some(prev) => out.extend_from_slice(&prev[s * p..(s + 1) * p]),
                    None => {
                        let t = rng.gen_range(0..self.t_len);
                        out.extend_from_slice(&data[t * p..(t + 1) * p]);
                    }
                }
                continue;
            }
            for j in 0..p {
                match self.feats[j] {
                    Feat::Cont { lo, hi, .. } => {
                        let raw = match method {
                            CentroidMethod::Mean => {
                                let xs: Vec<f64> =
                                    members.iter().map(|&t| data[t * p + j]).collect();
                                xs.iter().sum::<f64>() / xs.len() as f64
                            }
                            CentroidMethod::Median => {
                                let mut xs: Vec<f64> =
                                    members.iter().map(|&t| data[t * p + j]).collect();
                                xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
                                let n = xs.len();
                                if n % 2 == 1 {
                                    xs[n / 2]
                                } else {
                                    0.5 * (xs[n / 2 - 1] + xs[n / 2])
                                }
                            }
                        };
                        out.push(raw.clamp(lo, hi));
                    }
                    Feat::Cat => {
                        // level counts; ties resolve to the lowest level index
                        let mut counts: Vec<usize> = Vec::new();
                        for &t in &members {
                            let c = data[t * p + j] as usize;
                            if c >= counts.len() {
                                counts.resize(c + 1, 0);
                            }
                            counts[c] += 1;
                        }
                        let mut best = 0usize;
                        for (i, &c) in counts.iter().enumerate() {
                            if c > counts[best] {
                                best = i;
                            }
                        }
                        out.push(best as f64);
                    }
                }
            }
        }
        out
    }

    pub(crate) fn impute(&self, data: &mut [f64], states: &[u32], centroids: &[f64]) {
        for &(t, j) in &self.mask {
            let (t, j) = (t as usize, j as usize);
            data[t * self.p_len + j] = centroids[states[t] as usize * self.p_len + j];
        }
    }

    /// Snapshot of the values currently filling the masked cells, in mask
    /// order; lets a caller undo one `impute` call.
    pub(crate) fn mask_values(&self, data: &[f64]) -> Vec<f64> {
        self.mask
            .iter()
            .map(|&(t, j)| data[t as usize * self.p_len + j as usize])
            .collect()
    }

    pub(crate) fn restore_mask_values(&self, data: &mut [f64], saved: &[f64]) {
        debug_assert_eq!(saved.len(), self.mask.len());
        for (&(t, j), &v) in self.mask.iter().zip(saved) {
            data[t as usize * self.p_len + j as usize] = v;
        }
    }

    #[allow(dead_code)] // kept for debug assertions against the DP value
    pub(crate) fn objective(
        &self,
        data: &[f64],
        states: &[u32],
        centroids: &[f64],
        lambda: f64,
    ) -> f64 {
        let mut total = 0.0;
        for t in 0..self.t_len {
            let s = states[t] as usize;
            let row = &data[t * self.p_len..(t + 1) * self.p_len];
            total += self.distance(row, &centroids[s * self.p_len..(s + 1) * self.p_len]);
            if t + 1 < self.t_len && states[t] != states[t + 1] {
                total += lambda;
            }
        }
        total
    }

    /// Original series with its missing cells filled from `data`.
    pub(crate) fn to_series(&self, data: &[f64], original: &MixedSeries) -> MixedSeries {
        let mut out = original.clone();
        for &(t, j) in &self.mask {
            let (t, j) = (t as usize, j as usize);
            let v = match self.feats[j] {
                Feat::Cont { .. } => Value::Num(data[t * self.p_len + j]),
                Feat::Cat => Value::Cat(data[t * self.p_len + j] as u32),
            };
            out.set_cell(t, j, Some(v));
        }
        out
    }

    pub(crate) fn centroids_from_dense(
        &self,
        dense: &[f64],
        k: usize,
        original: &MixedSeries,
    ) -> Centroids {
        let mut values = Vec::with_capacity(k * self.p_len);
        for s in 0..k {
            for j in 0..self.p_len {
                let x = dense[s * self.p_len + j];
                values.push(match original.column(j).kind {
                    FeatureKind::Continuous => Value::Num(x),
                    FeatureKind::Categorical(_) => Value::Cat(x as u32),
                });
            }
        }
        Centroids::new(k, self.p_len, values).expect("shape fixed by construction")
    }
}
