//! Per-cluster EVI under four models and their split-half stability.
//!
//! - `M1`: mixed-effects model with both covariate blocks.
//! - `M2`: mixed-effects model without the B block.
//! - `M3`: fixed effects, a separate `beta_a` per cluster and a common `beta_b`.
//! - `M4`: cluster-wise Hill estimator.
//!
//! Every model reports `exp` of the linear predictor at the exceedance
//! covariate means, which for `M4` reduces to the Hill estimate.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{fit_fixed_cache, fit_mem_cache, hill_fit, FitResult, OptimizerSpec};
use crate::inference::{cluster_evi_with, predict_u_with};
use crate::likelihood::{ExceedanceCache, QuadratureSpec};
use crate::model::{ClusteredDataset, ThresholdPlan};
use crate::stats::spearman;
use crate::threshold::{select_thresholds, CandidateLadder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    M1,
    M2,
    M3,
    M4,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::M1, Model::M2, Model::M3, Model::M4];

    pub fn label(self) -> &'static str {
        match self {
            Model::M1 => "M1",
            Model::M2 => "M2",
            Model::M3 => "M3",
            Model::M4 => "M4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelColumn {
    pub model: Model,
    /// Clusters the model could not estimate are absent.
    pub gamma: IndexMap<String, f64>,
    /// Set when the whole model failed (e.g. a single cluster for M1/M2).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub cluster_ids: Vec<String>,
    pub columns: Vec<ModelColumn>,
}

impl Comparison {
    pub fn column(&self, m: Model) -> &ModelColumn {
        self.columns.iter().find(|c| c.model == m).expect("all models present")
    }
}

fn mem_evi(data: &ClusteredDataset, plan: &ThresholdPlan, quad: &QuadratureSpec, opt: &OptimizerSpec) -> Result<IndexMap<String, f64>> {
    let cache = ExceedanceCache::build(data, plan)?;
    let fit: FitResult = fit_mem_cache(&cache, plan, quad, opt)?;
    let preds = predict_u_with(&fit.params, &cache)?;
    Ok(cluster_evi_with(&fit.params, &preds, data, plan)?.gamma)
}

fn fixed_evi(data: &ClusteredDataset, plan: &ThresholdPlan) -> Result<IndexMap<String, f64>> {
    let cache = ExceedanceCache::build(data, plan)?;
    let fit = fit_fixed_cache(&cache)?;
    let mut out = IndexMap::new();
    for c in cache.clusters() {
        let Some(ba) = fit.beta_a.get(&c.id) else { continue };
        let n = c.len() as f64;
        let mut eta = 0.0;
        for (k, b) in ba.iter().enumerate() {
            eta += b * c.exceedances().iter().map(|e| e.x_a[k]).sum::<f64>() / n;
        }
        for (k, b) in fit.beta_b.iter().enumerate() {
            eta += b * c.exceedances().iter().map(|e| e.x_b[k]).sum::<f64>() / n;
        }
        out.insert(c.id.clone(), eta.exp());
    }
    Ok(out)
}

fn hill_evi(data: &ClusteredDataset, plan: &ThresholdPlan) -> IndexMap<String, f64> {
    data.clusters()
        .iter()
        .filter_map(|c| {
            let w = plan.omega_of(&c.id)?;
            hill_fit(&c.observations, w).ok().map(|g| (c.id.clone(), g))
        })
        .collect()
}

fn column(model: Model, r: Result<IndexMap<String, f64>>) -> ModelColumn {
    match r {
        Ok(gamma) => ModelColumn {
            model,
            gamma,
            error: None,
        },
        Err(e) => ModelColumn {
            model,
            gamma: IndexMap::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Fit all four models on the same thresholds. Model failures are recorded
/// per column rather than aborting the comparison.
pub fn compare_models(
    data: &ClusteredDataset,
    plan: &ThresholdPlan,
    quad: &QuadratureSpec,
    opt: &OptimizerSpec,
) -> Result<Comparison> {
    plan.check_matches(data)?;
    let no_b = data.without_b_covariates();
    let columns = vec![
        column(Model::M1, mem_evi(data, plan, quad, opt)),
        column(Model::M2, mem_evi(&no_b, plan, quad, opt)),
        column(Model::M3, fixed_evi(data, plan)),
        column(Model::M4, Ok(hill_evi(data, plan))),
    ];
    Ok(Comparison {
        cluster_ids: data.cluster_ids().map(str::to_string).collect(),
        columns,
    })
}

/// Spearman correlation of per-cluster EVI between two fits, over clusters
/// present in both. `None` with fewer than three shared clusters.
pub fn rank_agreement(a: &IndexMap<String, f64>, b: &IndexMap<String, f64>) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .iter()
        .filter_map(|(id, va)| b.get(id).map(|vb| (*va, *vb)))
        .filter(|(p, q)| p.is_finite() && q.is_finite())
        .unzip();
    (x.len() >= 3).then(|| spearman(&x, &y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHalf {
    pub first: Comparison,
    pub second: Comparison,
    /// Rank agreement per model, in [`Model::ALL`] order.
    pub stability: Vec<Option<f64>>,
}

/// Split every cluster into its first and second half (row order), select
/// thresholds on each half and compare the per-cluster EVI rankings.
pub fn split_half_stability(
    data: &ClusteredDataset,
    ladder: &CandidateLadder,
    quad: &QuadratureSpec,
    opt: &OptimizerSpec,
) -> Result<SplitHalf> {
    let halves: Vec<Comparison> = [false, true]
        .iter()
        .map(|&second| {
            let clusters = data
                .clusters()
                .iter()
                .map(|c| {
                    let mid = c.len() / 2;
                    let obs = if second { &c.observations[mid..] } else { &c.observations[..mid] };
                    crate::model::Cluster::new(c.id.clone(), obs.to_vec())
                })
                .collect();
            let d = ClusteredDataset::new(clusters, data.p_a(), data.p_b())?;
            let plan = select_thresholds(&d, ladder)?;
            compare_models(&d, &plan, quad, opt)
        })
        .collect::<Result<_>>()?;
    let stability = Model::ALL
        .iter()
        .map(|&m| rank_agreement(&halves[0].column(m).gamma, &halves[1].column(m).gamma))
        .collect();
    let mut it = halves.into_iter();
    Ok(SplitHalf {
        first: it.next().expect("two halves"),
        second: it.next().expect("two halves"),
        stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_threshold, Cluster, MemParams};
    use crate::rng::stream;
    use crate::tail::{sample_observations, CovariateGen, TailFamily};
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(j: usize, n: usize, seed: u64) -> ClusteredDataset {
        let truth = MemParams::location_shift(-0.5, vec![0.2], 0.2).unwrap();
        let clusters = (0..j)
            .map(|c| {
                let mut r = stream(&[seed, c as u64]);
                let u: f64 = StandardNormal.sample(&mut r);
                let obs = sample_observations(
                    &TailFamily::pareto(),
                    &truth,
                    &[u * 0.2f64.sqrt()],
                    CovariateGen::Normal01,
                    n,
                    &mut r,
                )
                .unwrap();
                Cluster::new(format!("s{c}"), obs)
            })
            .collect();
        ClusteredDataset::new(clusters, 1, 1).unwrap()
    }

    #[test]
    fn hill_column_matches_hill_fit() {
        let d = dataset(8, 30, 1);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let cmp = compare_models(&d, &plan, &QuadratureSpec::default(), &OptimizerSpec::default()).unwrap();
        for c in d.clusters() {
            assert_eq!(cmp.column(Model::M4).gamma[&c.id], hill_fit(&c.observations, 1.0).unwrap());
        }
        assert!(cmp.columns.iter().all(|c| c.error.is_none() && c.gamma.len() == 8));
    }

    #[test]
    fn single_cluster_keeps_fixed_and_hill() {
        let d = dataset(1, 40, 2);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let cmp = compare_models(&d, &plan, &QuadratureSpec::default(), &OptimizerSpec::default()).unwrap();
        assert!(cmp.column(Model::M1).error.is_some());
        assert!(cmp.column(Model::M2).error.is_some());
        assert_eq!(cmp.column(Model::M3).gamma.len(), 1);
        assert_eq!(cmp.column(Model::M4).gamma.len(), 1);
    }

    #[test]
    fn rank_agreement_needs_shared_clusters() {
        let a: IndexMap<String, f64> = [("a", 1.0), ("b", 2.0), ("c", 3.0)].map(|(k, v)| (k.to_string(), v)).into();
        let mut b = a.clone();
        assert_eq!(rank_agreement(&a, &b), Some(1.0));
        b.shift_remove("c");
        assert_eq!(rank_agreement(&a, &b), None);
    }
}
