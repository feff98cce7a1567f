//! Per-cluster threshold selection over a ladder of top-`k` order statistics.
//!
//! For each candidate `k` the threshold is the `(k+1)`-th largest response,
//! the cluster's tail is fitted by the Hill estimator, exceedances are mapped
//! to `S = (y/ω)^{-1/γ̂}` and scored by the Cramér-von Mises statistic
//!
//! ```text
//! D(k) = (1/k) Σ_r (S_(r) - (r - 0.5)/k)² + 1/(12 k²).
//! ```
//!
//! The minimizing `k` is selected, ties going to the larger `k`.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{effective_counts, ClusteredDataset, ThresholdPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLadder {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
}

impl CandidateLadder {
    pub fn new(k_min: usize, k_max: usize, step: usize) -> Result<Self> {
        if k_min < 2 || k_max < k_min || step == 0 {
            return Err(Error::InvalidInput(format!(
                "ladder needs 2 <= k_min <= k_max and step >= 1, got ({k_min}, {k_max}, {step})"
            )));
        }
        Ok(Self { k_min, k_max, step })
    }

    /// Ladder from `k_min = 10` up to `t`.
    pub fn top(t: usize) -> Result<Self> {
        Self::new(10, t, 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    /// Number of strict exceedances of `omega`.
    pub k: usize,
    pub omega: f64,
    pub discrepancy: f64,
}

/// Cramér-von Mises discrepancy of `S = (y/ω)^{-1/hill}` for the
/// exceedances `desc` (sorted descending, all `> omega`).
pub fn cvm_discrepancy(desc: &[f64], omega: f64) -> Option<f64> {
    let k = desc.len();
    if k == 0 {
        return None;
    }
    let z: Vec<f64> = desc.iter().map(|y| (y / omega).ln()).collect();
    let hill = z.iter().sum::<f64>() / k as f64;
    if !(hill > 0.0 && hill.is_finite()) {
        return None;
    }
    let kf = k as f64;
    let sum: f64 = z
        .iter()
        .enumerate()
        .map(|(r, zr)| {
            let s = (-zr / hill).exp();
            let d = s - (r as f64 + 0.5) / kf;
            d * d
        })
        .sum();
    Some(sum / kf + 1.0 / (12.0 * kf * kf))
}

/// Select the threshold of one cluster. The ladder is truncated to `n - 1`
/// so that the threshold is always an observed response.
pub fn select_cluster(responses: &[f64], ladder: &CandidateLadder) -> Result<ThresholdChoice> {
    let n = responses.len();
    if n < 2 {
        return Err(Error::Precondition("threshold selection needs at least two responses".into()));
    }
    let mut desc = responses.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    let upper = ladder.k_max.min(n - 1);
    let lower = ladder.k_min.min(upper);
    let mut best: Option<ThresholdChoice> = None;
    let mut k = lower;
    while k <= upper {
        let omega = desc[k];
        let strict = desc[..k].partition_point(|&y| y > omega);
        if let Some(d) = cvm_discrepancy(&desc[..strict], omega) {
            if best.is_none_or(|b| d <= b.discrepancy) {
                best = Some(ThresholdChoice {
                    k: strict,
                    omega,
                    discrepancy: d,
                });
            }
        }
        k += ladder.step;
    }
    best.ok_or_else(|| Error::Precondition("every threshold candidate is degenerate (tied responses)".into()))
}

pub fn select_thresholds(data: &ClusteredDataset, ladder: &CandidateLadder) -> Result<ThresholdPlan> {
    let choices = select_thresholds_detailed(data, ladder)?;
    let omega: IndexMap<String, f64> = choices.iter().map(|(id, c)| (id.clone(), c.omega)).collect();
    effective_counts(data, &omega)
}

pub fn select_thresholds_detailed(
    data: &ClusteredDataset,
    ladder: &CandidateLadder,
) -> Result<IndexMap<String, ThresholdChoice>> {
    let picks: Vec<Result<(String, ThresholdChoice)>> = data
        .clusters()
        .par_iter()
        .map(|c| {
            let ys: Vec<f64> = c.observations.iter().map(|o| o.y).collect();
            select_cluster(&ys, ladder)
                .map(|t| (c.id.clone(), t))
                .map_err(|e| match e {
                    Error::Precondition(m) => Error::Precondition(format!("cluster '{}': {m}", c.id)),
                    other => other,
                })
        })
        .collect();
    picks.into_iter().collect()
}
