//! Random-effect prediction and inference on a fitted model.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::likelihood::{find_mode, ClusterState, ExceedanceCache, Prior};
use crate::model::{duplication_maps, ClusteredDataset, MemParams, ThresholdPlan};
use crate::stats::{ks_distance_sorted, ks_normal, ks_p_value, two_sided_p};

/// Conditional modes `ũ_j` per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffectPredictions {
    pub u_tilde: IndexMap<String, Vec<f64>>,
    pub inner_converged: IndexMap<String, bool>,
    pub grad_norm: IndexMap<String, f64>,
}

pub fn predict_u(fit: &FitResult, cache: &ExceedanceCache) -> Result<RandomEffectPredictions> {
    predict_u_with(&fit.params, cache)
}

/// Mode of `φ(u; 0, Σ) Π f(z | u, x)` for each cluster. With `Σ = 0` or no
/// exceedances the prediction is exactly zero.
pub fn predict_u_with(params: &MemParams, cache: &ExceedanceCache) -> Result<RandomEffectPredictions> {
    cache.check_params(params)?;
    let prior = Prior::from_params(params)?;
    let d = cache.p_a();
    let per: Vec<(String, Vec<f64>, bool, f64)> = cache
        .clusters()
        .par_iter()
        .map(|c| match (&prior, c.is_empty()) {
            (Some(pr), false) => {
                let m = find_mode(pr, &ClusterState::new(params, c));
                (c.id.clone(), m.u, m.converged, m.grad_norm)
            }
            _ => (c.id.clone(), vec![0.0; d], true, 0.0),
        })
        .collect();
    let mut out = RandomEffectPredictions {
        u_tilde: IndexMap::with_capacity(per.len()),
        inner_converged: IndexMap::with_capacity(per.len()),
        grad_norm: IndexMap::with_capacity(per.len()),
    };
    for (id, u, ok, g) in per {
        if !ok {
            log::warn!("random-effect mode for cluster '{id}' did not converge (gradient {g:e})");
        }
        out.u_tilde.insert(id.clone(), u);
        out.inner_converged.insert(id.clone(), ok);
        out.grad_norm.insert(id, g);
    }
    Ok(out)
}

/// Estimate of `Λ_B^{-1}`, the inverse asymptotic covariance of
/// `sqrt(J n_0) (β̂_B - β_B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaBEstimate {
    pub lambda_b_inv: DMatrix<f64>,
    /// Inverse of `lambda_b_inv` when its condition number is below `1e12`.
    pub lambda_b: Option<DMatrix<f64>>,
    pub condition_number: f64,
    pub contributing_clusters: usize,
    pub skipped_clusters: usize,
}

/// `J^{-1} Σ_j (Ψ_BBj - Ψ_ABj' Ψ_AAj^{-1} Ψ_ABj)` with `Ψ_K1K2j` the mean of
/// `x_K1 x_K2'` over the exceedances of cluster `j`. Clusters without
/// exceedances are skipped and `J` counts contributing clusters only.
pub fn lambda_b_hat(data: &ClusteredDataset, plan: &ThresholdPlan) -> Result<LambdaBEstimate> {
    plan.check_matches(data)?;
    let (p_a, p_b) = (data.p_a(), data.p_b());
    if p_b == 0 {
        return Err(Error::Precondition("no common-slope covariates".into()));
    }
    let mut sum = DMatrix::<f64>::zeros(p_b, p_b);
    let mut bb_trace = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for c in data.clusters() {
        let w = plan.omega[c.id.as_str()];
        let ex: Vec<_> = c.observations.iter().filter(|o| o.y > w).collect();
        if ex.is_empty() {
            skipped += 1;
            continue;
        }
        let n = ex.len() as f64;
        let mut aa = DMatrix::<f64>::zeros(p_a, p_a);
        let mut ab = DMatrix::<f64>::zeros(p_a, p_b);
        let mut bb = DMatrix::<f64>::zeros(p_b, p_b);
        for o in &ex {
            for i in 0..p_a {
                for k in 0..p_a {
                    aa[(i, k)] += o.x_a[i] * o.x_a[k];
                }
                for k in 0..p_b {
                    ab[(i, k)] += o.x_a[i] * o.x_b[k];
                }
            }
            for i in 0..p_b {
                for k in 0..p_b {
                    bb[(i, k)] += o.x_b[i] * o.x_b[k];
                }
            }
        }
        aa /= n;
        ab /= n;
        bb /= n;
        let aa_inv = aa.clone().try_inverse().filter(|m| m.iter().all(|v| v.is_finite())).ok_or_else(|| {
            Error::Precondition(format!("cluster '{}': singular x_A moment matrix", c.id))
        })?;
        bb_trace += bb.trace();
        sum += bb - ab.transpose() * aa_inv * ab;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Precondition("no cluster has exceedances".into()));
    }
    if skipped > 0 {
        log::warn!("{skipped} clusters without exceedances skipped in the slope information estimate");
    }
    let inv = sum / used as f64;
    let inv = (&inv + inv.transpose()) * 0.5;
    let ev = inv.clone().symmetric_eigen().eigenvalues;
    let max = ev.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = ev.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    // Eigenvalues negligible against the raw second moments of x_B count as
    // exact collinearity.
    let scale = bb_trace / (used * p_b) as f64;
    let condition_number = if min > 1e-12 * scale { max / min } else { f64::INFINITY };
    let lambda_b = if condition_number < 1e12 {
        inv.clone().try_inverse()
    } else {
        None
    };
    Ok(LambdaBEstimate {
        lambda_b_inv: inv,
        lambda_b,
        condition_number,
        contributing_clusters: used,
        skipped_clusters: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub k: usize,
    pub t_stat: f64,
    pub p_value: f64,
}

/// `T_k = (Λ_B)_kk^{-1/2} (J n_0)^{1/2} β̂_Bk` with the bias term set to
/// zero, and its two-sided normal p-value.
pub fn wald_test(fit: &FitResult, lambda: &LambdaBEstimate, plan: &ThresholdPlan, k: usize) -> Result<WaldResult> {
    wald_statistic(fit.params.beta_b(), lambda, plan, k)
}

pub fn wald_statistic(beta_b: &[f64], lambda: &LambdaBEstimate, plan: &ThresholdPlan, k: usize) -> Result<WaldResult> {
    if k >= beta_b.len() {
        return Err(Error::Dimension(format!("no common-slope coefficient {k}")));
    }
    let lb = lambda
        .lambda_b
        .as_ref()
        .ok_or_else(|| Error::Precondition("slope information matrix is singular".into()))?;
    if lb.nrows() != beta_b.len() {
        return Err(Error::Dimension("information matrix does not match the coefficients".into()));
    }
    if !(plan.n_0 > 0.0) {
        return Err(Error::Precondition("mean exceedance count must be positive".into()));
    }
    let v = lb[(k, k)];
    if !(v > 0.0) {
        return Err(Error::Numerical("non-positive variance in the Wald statistic".into()));
    }
    let j = plan.n_clusters() as f64;
    let t_stat = (j * plan.n_0).sqrt() * beta_b[k] / v.sqrt();
    Ok(WaldResult {
        k,
        t_stat,
        p_value: two_sided_p(t_stat),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvi {
    pub gamma: IndexMap<String, f64>,
    /// Clusters without exceedances.
    pub omitted: Vec<String>,
}

/// `γ*_j = exp[(β̂_A + ũ_j)' x̄_Aj + β̂_B' x̄_Bj]` with covariates averaged
/// over the exceedances of cluster `j`.
pub fn cluster_evi(
    fit: &FitResult,
    preds: &RandomEffectPredictions,
    data: &ClusteredDataset,
    plan: &ThresholdPlan,
) -> Result<ClusterEvi> {
    cluster_evi_with(&fit.params, preds, data, plan)
}

pub fn cluster_evi_with(
    params: &MemParams,
    preds: &RandomEffectPredictions,
    data: &ClusteredDataset,
    plan: &ThresholdPlan,
) -> Result<ClusterEvi> {
    plan.check_matches(data)?;
    let mut gamma = IndexMap::new();
    let mut omitted = Vec::new();
    for c in data.clusters() {
        let w = plan.omega[c.id.as_str()];
        let ex: Vec<_> = c.observations.iter().filter(|o| o.y > w).collect();
        if ex.is_empty() {
            omitted.push(c.id.clone());
            continue;
        }
        let n = ex.len() as f64;
        let u = preds
            .u_tilde
            .get(&c.id)
            .ok_or_else(|| Error::InvalidInput(format!("no prediction for cluster '{}'", c.id)))?;
        let mut eta = 0.0;
        for k in 0..data.p_a() {
            let xbar = ex.iter().map(|o| o.x_a[k]).sum::<f64>() / n;
            eta += (params.beta_a()[k] + u[k]) * xbar;
        }
        for k in 0..data.p_b() {
            let xbar = ex.iter().map(|o| o.x_b[k]).sum::<f64>() / n;
            eta += params.beta_b()[k] * xbar;
        }
        gamma.insert(c.id.clone(), eta.exp());
    }
    if !omitted.is_empty() {
        log::warn!("{} clusters without exceedances omitted from the cluster EVI table", omitted.len());
    }
    Ok(ClusterEvi { gamma, omitted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    /// Transformed exceedances, ascending.
    pub s_sorted: Vec<f64>,
    pub ks_distance: f64,
    pub ks_p_value: f64,
}

/// `S_ij = (y_ij / ω_j)^{-1/γ̂(ũ_j, x_ij)}`, approximately uniform on (0, 1)
/// under a well-specified model.
pub fn gof_transform(
    fit: &FitResult,
    preds: &RandomEffectPredictions,
    data: &ClusteredDataset,
    plan: &ThresholdPlan,
) -> Result<GofResult> {
    gof_transform_with(&fit.params, preds, data, plan)
}

pub fn gof_transform_with(
    params: &MemParams,
    preds: &RandomEffectPredictions,
    data: &ClusteredDataset,
    plan: &ThresholdPlan,
) -> Result<GofResult> {
    plan.check_matches(data)?;
    let mut s = Vec::new();
    for c in data.clusters() {
        let w = plan.omega[c.id.as_str()];
        let u = preds
            .u_tilde
            .get(&c.id)
            .ok_or_else(|| Error::InvalidInput(format!("no prediction for cluster '{}'", c.id)))?;
        for o in c.observations.iter().filter(|o| o.y > w) {
            let g = crate::model::evi(params, u, &o.x_a, &o.x_b)?;
            s.push((-(o.y / w).ln() / g).exp());
        }
    }
    if s.is_empty() {
        return Err(Error::Precondition("no exceedances to transform".into()));
    }
    s.sort_by(f64::total_cmp);
    let d = ks_distance_sorted(&s, |x| x.clamp(0.0, 1.0));
    Ok(GofResult {
        ks_p_value: ks_p_value(d, s.len()),
        ks_distance: d,
        s_sorted: s,
    })
}

/// Asymptotic covariance of `β̂_B` used for standardization.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaB {
    /// Zero-mean, unit-variance common-slope covariates under the
    /// location-shift model.
    IdentityLocationShift,
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedSamples {
    /// `sqrt(J) (β̂_A - β_A) / σ_0`.
    pub beta_a: Vec<f64>,
    /// One sample per component: `sqrt(J n_0) (β̂_Bk - β_Bk) / sqrt(Θ_kk)`.
    pub beta_b: Vec<Vec<f64>>,
    /// `sqrt(J) (σ̂² - σ_0²) / (sqrt(2) σ_0²)`.
    pub sigma2: Vec<f64>,
    pub ks_beta_a: f64,
    pub ks_beta_b: Vec<f64>,
    pub ks_sigma2: f64,
}

/// Standardize a set of location-shift fits against the truth, each with the
/// `J` and `n_0` of its own threshold plan.
pub fn standardize_estimates(fits: &[FitResult], truth: &MemParams, theta_b: &ThetaB) -> Result<StandardizedSamples> {
    if truth.p_a() != 1 {
        return Err(Error::Precondition(
            "standardization is defined for the location-shift model (one random effect)".into(),
        ));
    }
    let s0 = truth.sigma()[(0, 0)];
    if !(s0 > 0.0) {
        return Err(Error::Precondition("true random-effect variance must be positive".into()));
    }
    let p_b = truth.p_b();
    let theta_diag: Vec<f64> = match theta_b {
        ThetaB::IdentityLocationShift => vec![1.0; p_b],
        ThetaB::Matrix(m) => {
            if m.nrows() != p_b || m.ncols() != p_b {
                return Err(Error::Dimension("Θ_B does not match the number of slopes".into()));
            }
            (0..p_b).map(|k| m[(k, k)]).collect()
        }
    };
    let mut beta_a = Vec::with_capacity(fits.len());
    let mut beta_b = vec![Vec::with_capacity(fits.len()); p_b];
    let mut sigma2 = Vec::with_capacity(fits.len());
    for f in fits {
        if f.params.p_a() != 1 || f.params.p_b() != p_b {
            return Err(Error::Dimension("fit does not match the true parameters".into()));
        }
        let j = f.threshold_plan.n_clusters() as f64;
        let n0 = f.threshold_plan.n_0;
        beta_a.push(j.sqrt() * (f.params.beta_a()[0] - truth.beta_a()[0]) / s0.sqrt());
        for k in 0..p_b {
            beta_b[k].push((j * n0).sqrt() * (f.params.beta_b()[k] - truth.beta_b()[k]) / theta_diag[k].sqrt());
        }
        sigma2.push(j.sqrt() * (f.params.sigma()[(0, 0)] - s0) / (std::f64::consts::SQRT_2 * s0));
    }
    Ok(StandardizedSamples {
        ks_beta_a: ks_normal(&beta_a),
        ks_beta_b: beta_b.iter().map(|s| ks_normal(s)).collect(),
        ks_sigma2: ks_normal(&sigma2),
        beta_a,
        beta_b,
        sigma2,
    })
}

/// Asymptotic covariance of `sqrt(J)(β̂_A - β_A)`: `Λ_A = Σ`.
pub fn lambda_a(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    sigma.clone()
}

/// Asymptotic covariance of `sqrt(J) vech(Σ̂ - Σ)` as
/// `Λ_C = 2 {M_* (Σ ⊗ Σ)^{-1} M_*'}^{-1}`.
///
/// For one random effect this is `2 σ⁴`. With more than one, off-diagonal
/// entries differ from the Gaussian covariance of `vech(u u')`, which is
/// `2 M_* (Σ ⊗ Σ) M_*'` (for `Σ = I_2`: `diag(2, 4, 2)` here versus
/// `diag(2, 1, 2)`).
pub fn lambda_c(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = sigma.nrows();
    let inv = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularCovariance("Λ_C needs a non-singular covariance".into()))?;
    let dm = duplication_maps(d)?;
    let middle = &dm.m_star * inv.kronecker(&inv) * dm.m_star.transpose();
    let out = middle
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Λ_C inner matrix is singular".into()))?;
    Ok(out * 2.0)
}
