//! Core domain types: clustered observations, the mixed-effects parameter
//! triple, threshold plans, and the half-vectorization algebra.
//!
//! The extreme value index of observation `i` in cluster `j` is
//! `exp[(beta_a + u_j)' x_a + beta_b' x_b]`, where `u_j ~ N(0, sigma)` is the
//! cluster's random effect.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking symmetry of covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    /// Covariates whose slopes vary by cluster.
    pub x_a: Vec<f64>,
    /// Covariates with a slope common to all clusters.
    pub x_b: Vec<f64>,
}

impl Observation {
    pub fn new(y: f64, x_a: Vec<f64>, x_b: Vec<f64>) -> Result<Self> {
        if !(y.is_finite() && y > 0.0) {
            return Err(Error::InvalidInput(format!(
                "response must be positive and finite, got {y}"
            )));
        }
        if x_a.iter().chain(x_b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
        Ok(Self { y, x_a, x_b })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub observations: Vec<Observation>,
}

impl Cluster {
    pub fn new(id: impl Into<String>, observations: Vec<Observation>) -> Self {
        Self {
            id: id.into(),
            observations,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Observations grouped into `J >= 1` non-empty clusters, in ingestion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredDataset {
    clusters: Vec<Cluster>,
    p_a: usize,
    p_b: usize,
}

impl ClusteredDataset {
    /// `p_b = 0` is allowed (models without common-slope covariates).
    pub fn new(clusters: Vec<Cluster>, p_a: usize, p_b: usize) -> Result<Self> {
        if p_a == 0 {
            return Err(Error::InvalidInput(
                "at least one cluster-specific covariate (e.g. an intercept) is required".into(),
            ));
        }
        if clusters.is_empty() {
            return Err(Error::InvalidInput("dataset has no clusters".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &clusters {
            if c.observations.is_empty() {
                return Err(Error::InvalidInput(format!("cluster '{}' is empty", c.id)));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate cluster id '{}'", c.id)));
            }
            for (i, o) in c.observations.iter().enumerate() {
                if o.x_a.len() != p_a || o.x_b.len() != p_b {
                    return Err(Error::Dimension(format!(
                        "cluster '{}' observation {i}: expected (p_a, p_b) = ({p_a}, {p_b}), got ({}, {})",
                        c.id,
                        o.x_a.len(),
                        o.x_b.len()
                    )));
                }
                if !(o.y.is_finite() && o.y > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "cluster '{}' observation {i}: response must be positive",
                        c.id
                    )));
                }
            }
        }
        Ok(Self { clusters, p_a, p_b })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn p_a(&self) -> usize {
        self.p_a
    }

    pub fn p_b(&self) -> usize {
        self.p_b
    }

    pub fn n_observations(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn cluster_ids(&self) -> impl Iterator<Item = &str> {
        self.clusters.iter().map(|c| c.id.as_str())
    }

    pub fn find(&self, id: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    /// The same dataset with every common-slope column removed.
    pub fn without_b_covariates(&self) -> Self {
        let clusters = self
            .clusters
            .iter()
            .map(|c| Cluster {
                id: c.id.clone(),
                observations: c
                    .observations
                    .iter()
                    .map(|o| Observation {
                        y: o.y,
                        x_a: o.x_a.clone(),
                        x_b: Vec::new(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            clusters,
            p_a: self.p_a,
            p_b: 0,
        }
    }

    /// The first `j` clusters.
    pub fn first_clusters(&self, j: usize) -> Result<Self> {
        if j == 0 || j > self.clusters.len() {
            return Err(Error::InvalidInput(format!(
                "cannot take {j} of {} clusters",
                self.clusters.len()
            )));
        }
        Ok(Self {
            clusters: self.clusters[..j].to_vec(),
            p_a: self.p_a,
            p_b: self.p_b,
        })
    }
}

/// Fixed effects and random-effect covariance.
///
/// `sigma` is kept together with a lower-triangular factor `L` with
/// `L L' = sigma`. The unconstrained parameterization used by the optimizers
/// stores `log L_kk` on the diagonal, so `sigma = 0` is only reachable as a
/// limit; it is representable here directly through a zero factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MemParams {
    beta_a: Vec<f64>,
    beta_b: Vec<f64>,
    sigma: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl MemParams {
    pub fn new(beta_a: Vec<f64>, beta_b: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let p_a = beta_a.len();
        if sigma.nrows() != p_a || sigma.ncols() != p_a {
            return Err(Error::Dimension(format!(
                "sigma must be {p_a}x{p_a}, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        check_symmetric(&sigma)?;
        let factor = psd_cholesky(&sigma)?;
        Ok(Self {
            beta_a,
            beta_b,
            sigma,
            factor,
        })
    }

    /// Location-shift model: scalar intercept variance `sigma2`.
    pub fn location_shift(beta_a: f64, beta_b: Vec<f64>, sigma2: f64) -> Result<Self> {
        Self::new(vec![beta_a], beta_b, DMatrix::from_element(1, 1, sigma2))
    }

    /// Build from a lower-triangular factor (entries above the diagonal ignored).
    pub fn from_factor(beta_a: Vec<f64>, beta_b: Vec<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let p_a = beta_a.len();
        if factor.nrows() != p_a || factor.ncols() != p_a {
            return Err(Error::Dimension("factor must be p_a x p_a".into()));
        }
        let factor = factor.lower_triangle();
        let sigma = &factor * factor.transpose();
        Ok(Self {
            beta_a,
            beta_b,
            sigma,
            factor,
        })
    }

    /// Number of entries in the unconstrained vector: `p_a + p_b + p_a(p_a+1)/2`.
    pub fn unconstrained_len(p_a: usize, p_b: usize) -> usize {
        p_a + p_b + p_a * (p_a + 1) / 2
    }

    /// Inverse of [`MemParams::to_unconstrained`]. Layout:
    /// `[beta_a, beta_b, vech(L)]` with diagonal entries of `L` stored as logs.
    pub fn from_unconstrained(theta: &[f64], p_a: usize, p_b: usize) -> Result<Self> {
        if theta.len() != Self::unconstrained_len(p_a, p_b) {
            return Err(Error::Dimension(format!(
                "unconstrained vector has length {}, expected {}",
                theta.len(),
                Self::unconstrained_len(p_a, p_b)
            )));
        }
        let beta_a = theta[..p_a].to_vec();
        let beta_b = theta[p_a..p_a + p_b].to_vec();
        let mut factor = DMatrix::zeros(p_a, p_a);
        let mut k = p_a + p_b;
        for col in 0..p_a {
            for row in col..p_a {
                factor[(row, col)] = if row == col { theta[k].exp() } else { theta[k] };
                k += 1;
            }
        }
        Self::from_factor(beta_a, beta_b, factor)
    }

    /// Fails when a diagonal factor entry is zero (the `sigma = 0` boundary).
    pub fn to_unconstrained(&self) -> Result<Vec<f64>> {
        let p_a = self.p_a();
        let mut theta = Vec::with_capacity(Self::unconstrained_len(p_a, self.p_b()));
        theta.extend_from_slice(&self.beta_a);
        theta.extend_from_slice(&self.beta_b);
        for col in 0..p_a {
            for row in col..p_a {
                let v = self.factor[(row, col)];
                if row == col {
                    if v <= 0.0 {
                        return Err(Error::SingularCovariance(
                            "boundary covariance has no unconstrained representation".into(),
                        ));
                    }
                    theta.push(v.ln());
                } else {
                    theta.push(v);
                }
            }
        }
        Ok(theta)
    }

    pub fn beta_a(&self) -> &[f64] {
        &self.beta_a
    }

    pub fn beta_b(&self) -> &[f64] {
        &self.beta_b
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn p_a(&self) -> usize {
        self.beta_a.len()
    }

    pub fn p_b(&self) -> usize {
        self.beta_b.len()
    }

    /// True when every entry of sigma is exactly zero.
    pub fn is_zero_sigma(&self) -> bool {
        self.sigma.iter().all(|&v| v == 0.0)
    }

    pub fn with_zero_sigma(&self) -> Self {
        let p_a = self.p_a();
        Self {
            beta_a: self.beta_a.clone(),
            beta_b: self.beta_b.clone(),
            sigma: DMatrix::zeros(p_a, p_a),
            factor: DMatrix::zeros(p_a, p_a),
        }
    }

    pub fn sigma_eigenvalues(&self) -> Vec<f64> {
        if self.p_a() == 1 {
            return vec![self.sigma[(0, 0)]];
        }
        self.sigma
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    fn check_dims(&self, u: &[f64], x_a: &[f64], x_b: &[f64]) -> Result<()> {
        let p_a = self.p_a();
        if u.len() != p_a || x_a.len() != p_a || x_b.len() != self.p_b() {
            return Err(Error::Dimension(format!(
                "expected u and x_a of length {p_a} and x_b of length {}, got ({}, {}, {})",
                self.p_b(),
                u.len(),
                x_a.len(),
                x_b.len()
            )));
        }
        Ok(())
    }
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive semi-definite matrix, allowing
/// zero pivots (the corresponding column of the factor is zero).
fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs()));
    let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -1e-10 * scale.max(1.0) {
            return Err(Error::InvalidInput(
                "covariance matrix is not positive semi-definite".into(),
            ));
        }
        if d <= tol {
            // Zero pivot: the rest of this column must vanish as well.
            for i in (j + 1)..n {
                let mut r = a[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::InvalidInput(
                        "covariance matrix is not positive semi-definite".into(),
                    ));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut r = a[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / djj;
        }
    }
    Ok(l)
}

/// Extreme value index `exp[(beta_a + u)' x_a + beta_b' x_b]`.
pub fn evi(params: &MemParams, u: &[f64], x_a: &[f64], x_b: &[f64]) -> Result<f64> {
    params.check_dims(u, x_a, x_b)?;
    let eta: f64 = params
        .beta_a
        .iter()
        .zip(u)
        .zip(x_a)
        .map(|((b, u), x)| (b + u) * x)
        .sum::<f64>()
        + dot(&params.beta_b, x_b);
    Ok(eta.exp())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stack the lower triangle of a symmetric matrix column by column.
pub fn vech(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("vech requires a square matrix".into()));
    }
    check_symmetric(a)?;
    let d = a.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for col in 0..d {
        for row in col..d {
            v.push(a[(row, col)]);
        }
    }
    Ok(v)
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64], d: usize) -> Result<DMatrix<f64>> {
    if v.len() != d * (d + 1) / 2 {
        return Err(Error::Dimension(format!(
            "vector of length {} cannot fill a symmetric {d}x{d} matrix",
            v.len()
        )));
    }
    let mut a = DMatrix::zeros(d, d);
    let mut k = 0;
    for col in 0..d {
        for row in col..d {
            a[(row, col)] = v[k];
            a[(col, row)] = v[k];
            k += 1;
        }
    }
    Ok(a)
}

/// Duplication matrix `m` (`m vech(A) = vec(A)`) and its Moore-Penrose
/// inverse `m_star = (m'm)^{-1} m'`.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicationMaps {
    pub m: DMatrix<f64>,
    pub m_star: DMatrix<f64>,
}

pub fn duplication_maps(p_a: usize) -> Result<DuplicationMaps> {
    if p_a == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    let p_c = p_a * (p_a + 1) / 2;
    let mut m = DMatrix::zeros(p_a * p_a, p_c);
    let mut k = 0;
    for col in 0..p_a {
        for row in col..p_a {
            // vec is column-major: entry (r, c) sits at r + c * p_a.
            m[(row + col * p_a, k)] = 1.0;
            m[(col + row * p_a, k)] = 1.0;
            k += 1;
        }
    }
    // m'm is diagonal with entries 1 (diagonal elements) or 2 (off-diagonal).
    let mtm_diag: Vec<f64> = (0..p_c).map(|c| m.column(c).sum()).collect();
    let mut m_star = m.transpose();
    for (r, d) in mtm_diag.iter().enumerate() {
        m_star.row_mut(r).scale_mut(1.0 / d);
    }
    Ok(DuplicationMaps { m, m_star })
}

/// Column-major vectorization.
pub fn vec_of(a: &DMatrix<f64>) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Per-cluster thresholds with their exceedance counts, in cluster order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    pub omega: IndexMap<String, f64>,
    pub n_j0: IndexMap<String, usize>,
    pub n_0: f64,
}

impl ThresholdPlan {
    pub fn n_clusters(&self) -> usize {
        self.omega.len()
    }

    pub fn total_exceedances(&self) -> usize {
        self.n_j0.values().sum()
    }

    pub fn omega_of(&self, id: &str) -> Option<f64> {
        self.omega.get(id).copied()
    }

    /// Checks that this plan was built for `data` (same clusters, same order).
    pub fn check_matches(&self, data: &ClusteredDataset) -> Result<()> {
        if self.omega.len() != data.n_clusters()
            || !self.omega.keys().map(String::as_str).eq(data.cluster_ids())
        {
            return Err(Error::Precondition(
                "threshold plan does not match the dataset's clusters".into(),
            ));
        }
        Ok(())
    }
}

/// Count strict exceedances `y > omega_j` in each cluster.
pub fn effective_counts(
    data: &ClusteredDataset,
    omega: &IndexMap<String, f64>,
) -> Result<ThresholdPlan> {
    let mut plan_omega = IndexMap::with_capacity(data.n_clusters());
    let mut n_j0 = IndexMap::with_capacity(data.n_clusters());
    for c in data.clusters() {
        let w = *omega
            .get(&c.id)
            .ok_or_else(|| Error::InvalidInput(format!("no threshold for cluster '{}'", c.id)))?;
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::InvalidInput(format!(
                "threshold for cluster '{}' must be positive, got {w}",
                c.id
            )));
        }
        let count = c.observations.iter().filter(|o| o.y > w).count();
        plan_omega.insert(c.id.clone(), w);
        n_j0.insert(c.id.clone(), count);
    }
    let n_0 = n_j0.values().sum::<usize>() as f64 / data.n_clusters() as f64;
    Ok(ThresholdPlan {
        omega: plan_omega,
        n_j0,
        n_0,
    })
}

/// Same threshold for every cluster.
pub fn uniform_threshold(data: &ClusteredDataset, omega: f64) -> Result<ThresholdPlan> {
    let map = data.cluster_ids().map(|id| (id.to_string(), omega)).collect();
    effective_counts(data, &map)
}
