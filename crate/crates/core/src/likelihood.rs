//! Approximate marginal log-likelihood of the peaks-over-threshold
//! mixed-effects model.
//!
//! Cluster `j` contributes `log ∫ exp g_j(u) du` with
//!
//! ```text
//! g_j(u) = log φ(u; 0, Σ) + Σ_i { -η_i(u) - exp(-η_i(u)) z_i },
//! η_i(u) = (β_A + u)' x_Ai + β_B' x_Bi,   z_i = log(y_i / ω_j) > 0,
//! ```
//!
//! summed over exceedances only. The additive constant is dropped.
//!
//! Exceedances sharing the same `x_A` row are grouped so that the random
//! effect enters through one exponential per group. For the location-shift
//! model every cluster is a single group and evaluating `g_j` costs O(1).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, ClusteredDataset, MemParams, ThresholdPlan};
use crate::quadrature::{log_sum_exp, GaussHermite};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest random-effect dimension handled by tensor-product quadrature.
pub const MAX_AGH_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    AdaptiveGaussHermite,
    Laplace,
    DenseGridOracle,
}

impl std::str::FromStr for QuadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "agh" | "adaptive_gauss_hermite" | "gauss_hermite" => Ok(QuadMode::AdaptiveGaussHermite),
            "laplace" => Ok(QuadMode::Laplace),
            "oracle" | "grid" | "dense_grid_oracle" => Ok(QuadMode::DenseGridOracle),
            other => Err(Error::Parse(format!("unknown quadrature mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub mode: QuadMode,
    pub nodes_per_dim: usize,
    /// Oracle grid half-width in prior standard deviations.
    pub grid_halfwidth_sd: f64,
    pub grid_points: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            mode: QuadMode::AdaptiveGaussHermite,
            nodes_per_dim: 15,
            grid_halfwidth_sd: 10.0,
            grid_points: 100_001,
        }
    }
}

impl QuadratureSpec {
    pub fn agh(nodes_per_dim: usize) -> Self {
        Self {
            nodes_per_dim,
            ..Self::default()
        }
    }

    pub fn laplace() -> Self {
        Self {
            mode: QuadMode::Laplace,
            ..Self::default()
        }
    }

    pub fn oracle() -> Self {
        Self {
            mode: QuadMode::DenseGridOracle,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_dim == 0 {
            return Err(Error::InvalidInput("nodes_per_dim must be at least 1".into()));
        }
        if self.mode == QuadMode::DenseGridOracle
            && (self.grid_points < 3 || !(self.grid_halfwidth_sd > 0.0))
        {
            return Err(Error::InvalidInput(
                "oracle grid needs at least 3 points and a positive half-width".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exceedance {
    pub z: f64,
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Group {
    x_a: Vec<f64>,
    members: Vec<usize>,
}

/// Exceedances of one cluster together with precomputed sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterExceedances {
    pub id: String,
    exceedances: Vec<Exceedance>,
    ln_z: Vec<f64>,
    xa_sum: Vec<f64>,
    xb_sum: Vec<f64>,
    groups: Vec<Group>,
}

impl ClusterExceedances {
    pub fn new(id: impl Into<String>, p_a: usize, p_b: usize, exceedances: Vec<Exceedance>) -> Result<Self> {
        let id = id.into();
        let mut xa_sum = vec![0.0; p_a];
        let mut xb_sum = vec![0.0; p_b];
        let mut groups: Vec<Group> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for (i, e) in exceedances.iter().enumerate() {
            if !(e.z > 0.0 && e.z.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "cluster '{id}': exceedance log-ratio must be positive, got {}",
                    e.z
                )));
            }
            if e.x_a.len() != p_a || e.x_b.len() != p_b {
                return Err(Error::Dimension(format!(
                    "cluster '{id}': covariate lengths do not match ({p_a}, {p_b})"
                )));
            }
            for (s, x) in xa_sum.iter_mut().zip(&e.x_a) {
                *s += x;
            }
            for (s, x) in xb_sum.iter_mut().zip(&e.x_b) {
                *s += x;
            }
            let key: Vec<u64> = e.x_a.iter().map(|v| v.to_bits()).collect();
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(Group {
                    x_a: e.x_a.clone(),
                    members: Vec::new(),
                });
                groups.len() - 1
            });
            groups[g].members.push(i);
        }
        let ln_z = exceedances.iter().map(|e| e.z.ln()).collect();
        Ok(Self {
            id,
            exceedances,
            ln_z,
            xa_sum,
            xb_sum,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.exceedances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exceedances.is_empty()
    }

    pub fn exceedances(&self) -> &[Exceedance] {
        &self.exceedances
    }

    pub fn dim(&self) -> usize {
        self.xa_sum.len()
    }

    /// Mean of `z`, i.e. the Hill estimate for this cluster.
    pub fn mean_z(&self) -> Option<f64> {
        if self.exceedances.is_empty() {
            return None;
        }
        Some(self.exceedances.iter().map(|e| e.z).sum::<f64>() / self.len() as f64)
    }
}

/// Exceedances of every cluster for one threshold plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceCache {
    p_a: usize,
    p_b: usize,
    clusters: Vec<ClusterExceedances>,
}

impl ExceedanceCache {
    pub fn build(data: &ClusteredDataset, plan: &ThresholdPlan) -> Result<Self> {
        plan.check_matches(data)?;
        let clusters = data
            .clusters()
            .iter()
            .map(|c| {
                let w = plan.omega[c.id.as_str()];
                let ex = c
                    .observations
                    .iter()
                    .filter(|o| o.y > w)
                    .map(|o| Exceedance {
                        z: (o.y / w).ln(),
                        x_a: o.x_a.clone(),
                        x_b: o.x_b.clone(),
                    })
                    .collect();
                ClusterExceedances::new(c.id.clone(), data.p_a(), data.p_b(), ex)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            p_a: data.p_a(),
            p_b: data.p_b(),
            clusters,
        })
    }

    pub fn from_clusters(p_a: usize, p_b: usize, clusters: Vec<ClusterExceedances>) -> Result<Self> {
        if clusters.iter().any(|c| c.xa_sum.len() != p_a || c.xb_sum.len() != p_b) {
            return Err(Error::Dimension("cluster dimensions differ from the cache".into()));
        }
        Ok(Self { p_a, p_b, clusters })
    }

    pub fn p_a(&self) -> usize {
        self.p_a
    }

    pub fn p_b(&self) -> usize {
        self.p_b
    }

    pub fn clusters(&self) -> &[ClusterExceedances] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn total_exceedances(&self) -> usize {
        self.clusters.iter().map(ClusterExceedances::len).sum()
    }

    pub(crate) fn check_params(&self, params: &MemParams) -> Result<()> {
        if params.p_a() != self.p_a || params.p_b() != self.p_b {
            return Err(Error::Dimension(format!(
                "parameters have (p_a, p_b) = ({}, {}), data has ({}, {})",
                params.p_a(),
                params.p_b(),
                self.p_a,
                self.p_b
            )));
        }
        Ok(())
    }
}

/// Gaussian prior `N(0, Σ)` with `Σ` positive definite.
#[derive(Debug, Clone)]
pub(crate) struct Prior {
    pub d: usize,
    pub prec: DMatrix<f64>,
    pub log_norm: f64,
    pub sd: Vec<f64>,
}

impl Prior {
    /// `None` for `Σ = 0`; error for a singular non-zero `Σ`.
    pub fn from_params(params: &MemParams) -> Result<Option<Self>> {
        if params.is_zero_sigma() {
            return Ok(None);
        }
        let l = params.factor();
        let d = l.nrows();
        if (0..d).any(|i| !(l[(i, i)] > 0.0)) {
            return Err(Error::SingularCovariance(
                "random-effect covariance is singular; use sigma = 0 for the plug-in path".into(),
            ));
        }
        let linv = l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::SingularCovariance("cannot invert covariance factor".into()))?;
        let prec = linv.transpose() * &linv;
        let log_norm = -0.5 * d as f64 * LN_2PI - (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !prec.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularCovariance("covariance is numerically singular".into()));
        }
        let sd = (0..d).map(|i| params.sigma()[(i, i)].sqrt()).collect();
        Ok(Some(Self {
            d,
            prec,
            log_norm,
            sd,
        }))
    }

    pub fn log_phi(&self, u: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                q += u[i] * self.prec[(i, j)] * u[j];
            }
        }
        self.log_norm - 0.5 * q
    }
}

/// Parameter-dependent quantities of one cluster: `g_j(u) = log φ(u) + lin
/// - u's - Σ_g exp(log_a_g - u'x_g)`.
#[derive(Debug, Clone)]
pub(crate) struct ClusterState<'a> {
    pub c: &'a ClusterExceedances,
    pub lin: f64,
    pub log_a: Vec<f64>,
}

impl<'a> ClusterState<'a> {
    pub fn new(params: &MemParams, c: &'a ClusterExceedances) -> Self {
        let lin = -dot(params.beta_a(), &c.xa_sum) - dot(params.beta_b(), &c.xb_sum);
        let log_a = c
            .groups
            .iter()
            .map(|g| {
                let mut m = f64::NEG_INFINITY;
                let mut s = 0.0;
                for &i in &g.members {
                    let a = c.ln_z[i] - dot(params.beta_b(), &c.exceedances[i].x_b);
                    if a > m {
                        s = s * (m - a).exp() + 1.0;
                        m = a;
                    } else {
                        s += (a - m).exp();
                    }
                }
                -dot(params.beta_a(), &g.x_a) + m + s.ln()
            })
            .collect();
        Self { c, lin, log_a }
    }

    /// Data part of `g_j` (without the prior).
    pub fn data_value(&self, u: &[f64]) -> f64 {
        let mut v = self.lin - dot(u, &self.c.xa_sum);
        for (g, la) in self.c.groups.iter().zip(&self.log_a) {
            v -= (la - dot(u, &g.x_a)).exp();
        }
        v
    }

    fn data_value1(&self, u: f64) -> f64 {
        let mut v = self.lin - u * self.c.xa_sum[0];
        for (g, la) in self.c.groups.iter().zip(&self.log_a) {
            v -= (la - u * g.x_a[0]).exp();
        }
        v
    }

    /// Value, gradient and negative Hessian of the data part.
    fn data_derivs1(&self, u: f64) -> (f64, f64, f64) {
        let mut v = self.lin - u * self.c.xa_sum[0];
        let mut grad = -self.c.xa_sum[0];
        let mut neg_h = 0.0;
        for (g, la) in self.c.groups.iter().zip(&self.log_a) {
            let x = g.x_a[0];
            let e = (la - u * x).exp();
            v -= e;
            grad += e * x;
            neg_h += e * x * x;
        }
        (v, grad, neg_h)
    }

    fn data_derivs(&self, u: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = u.len();
        let mut v = self.lin - dot(u, &self.c.xa_sum);
        let mut grad = DVector::from_iterator(d, self.c.xa_sum.iter().map(|s| -s));
        let mut neg_h = DMatrix::zeros(d, d);
        for (g, la) in self.c.groups.iter().zip(&self.log_a) {
            let e = (la - dot(u, &g.x_a)).exp();
            v -= e;
            for a in 0..d {
                grad[a] += e * g.x_a[a];
                for b in 0..d {
                    neg_h[(a, b)] += e * g.x_a[a] * g.x_a[b];
                }
            }
        }
        (v, grad, neg_h)
    }

    pub fn value(&self, prior: &Prior, u: &[f64]) -> f64 {
        if prior.d == 1 {
            let p = prior.prec[(0, 0)];
            prior.log_norm - 0.5 * p * u[0] * u[0] + self.data_value1(u[0])
        } else {
            prior.log_phi(u) + self.data_value(u)
        }
    }

    /// Value, gradient and negative Hessian of `g_j`.
    pub fn derivs(&self, prior: &Prior, u: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        if prior.d == 1 {
            let p = prior.prec[(0, 0)];
            let (v, g, h) = self.data_derivs1(u[0]);
            return (
                prior.log_norm - 0.5 * p * u[0] * u[0] + v,
                DVector::from_element(1, g - p * u[0]),
                DMatrix::from_element(1, 1, h + p),
            );
        }
        let (v, g, h) = self.data_derivs(u);
        let uv = DVector::from_column_slice(u);
        let pu = &prior.prec * &uv;
        (prior.log_phi(u) + v, g - pu, h + &prior.prec)
    }
}

/// Maximizer of `g_j` with diagnostics.
#[derive(Debug, Clone)]
pub struct ModeResult {
    pub u: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub neg_hessian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient sup-norm accepted as converged.
pub const MODE_GRAD_TOL: f64 = 1e-8;

/// Damped Newton ascent from `u = 0`, with a gradient-direction bisection
/// fallback if Newton has not converged after 100 iterations.
pub(crate) fn find_mode(prior: &Prior, st: &ClusterState) -> ModeResult {
    let d = prior.d;
    let mut u = vec![0.0; d];
    let (mut val, mut grad, mut neg_h) = st.derivs(prior, &u);
    let mut iterations = 0;
    let inf_norm = |g: &DVector<f64>| g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    while iterations < 100 {
        if inf_norm(&grad) <= 1e-11 * (1.0 + val.abs().min(1e6)) {
            break;
        }
        iterations += 1;
        let step = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let cv = st.value(prior, &cand);
            if cv.is_finite() && cv >= val - 1e-13 * (1.0 + val.abs()) {
                let small = cand
                    .iter()
                    .zip(&u)
                    .all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + b.abs()));
                u = cand;
                moved = !small;
                break;
            }
            t *= 0.5;
        }
        let (v, g, h) = st.derivs(prior, &u);
        val = v;
        grad = g;
        neg_h = h;
        if !moved {
            break;
        }
    }
    if inf_norm(&grad) > MODE_GRAD_TOL {
        for _ in 0..50 {
            if inf_norm(&grad) <= MODE_GRAD_TOL {
                break;
            }
            u = line_bisect(prior, st, &u, &grad);
            let (v, g, h) = st.derivs(prior, &u);
            val = v;
            grad = g;
            neg_h = h;
        }
    }
    let grad_norm = inf_norm(&grad);
    ModeResult {
        u,
        value: val,
        grad_norm,
        neg_hessian: neg_h,
        iterations,
        converged: grad_norm <= MODE_GRAD_TOL,
    }
}

/// Maximize `g_j` along the gradient direction by bisection on the
/// directional derivative.
fn line_bisect(prior: &Prior, st: &ClusterState, u: &[f64], dir: &DVector<f64>) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> { u.iter().zip(dir.iter()).map(|(a, s)| a + t * s).collect() };
    let slope = |t: f64| -> f64 {
        let (_, g, _) = st.derivs(prior, &at(t));
        g.dot(dir)
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / dir.norm().max(1e-300);
    let mut expand = 0;
    while slope(hi) > 0.0 && expand < 200 {
        lo = hi;
        hi *= 2.0;
        expand += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Evaluates the marginal log-likelihood with a cached quadrature rule.
#[derive(Debug, Clone)]
pub struct LikelihoodEvaluator {
    quad: QuadratureSpec,
    rule: Option<GaussHermite>,
}

impl LikelihoodEvaluator {
    pub fn new(quad: QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let rule = match quad.mode {
            QuadMode::AdaptiveGaussHermite => Some(GaussHermite::new(quad.nodes_per_dim)?),
            _ => None,
        };
        Ok(Self { quad, rule })
    }

    pub fn quad(&self) -> &QuadratureSpec {
        &self.quad
    }

    pub fn check_supported(&self, p_a: usize) -> Result<()> {
        match self.quad.mode {
            QuadMode::DenseGridOracle if p_a > 1 => Err(Error::Precondition(
                "the dense-grid oracle only supports one random-effect dimension".into(),
            )),
            QuadMode::AdaptiveGaussHermite if p_a > MAX_AGH_DIM => Err(Error::Precondition(format!(
                "adaptive Gauss-Hermite supports at most {MAX_AGH_DIM} random-effect dimensions; use the Laplace mode"
            ))),
            _ => Ok(()),
        }
    }

    /// Per-cluster contributions, in cache order.
    pub fn cluster_logliks(&self, params: &MemParams, cache: &ExceedanceCache) -> Result<Vec<f64>> {
        cache.check_params(params)?;
        self.check_supported(cache.p_a())?;
        let prior = Prior::from_params(params)?;
        cache
            .clusters()
            .iter()
            .map(|c| {
                let v = self.cluster_log_integral(prior.as_ref(), &ClusterState::new(params, c))?;
                if !v.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite likelihood contribution in cluster '{}'",
                        c.id
                    )));
                }
                Ok(v)
            })
            .collect()
    }

    pub fn loglik(&self, params: &MemParams, cache: &ExceedanceCache) -> Result<f64> {
        Ok(self.cluster_logliks(params, cache)?.iter().sum())
    }

    fn cluster_log_integral(&self, prior: Option<&Prior>, st: &ClusterState) -> Result<f64> {
        if st.c.is_empty() {
            return Ok(0.0);
        }
        let Some(prior) = prior else {
            return Ok(st.data_value(&vec![0.0; st.c.dim()]));
        };
        match self.quad.mode {
            QuadMode::DenseGridOracle => Ok(self.dense_grid(prior, st)),
            QuadMode::Laplace => {
                let m = find_mode(prior, st);
                let ch = m
                    .neg_hessian
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("negative Hessian not positive definite".into()))?;
                let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(m.value + 0.5 * prior.d as f64 * LN_2PI - 0.5 * log_det)
            }
            QuadMode::AdaptiveGaussHermite => {
                let rule = self.rule.as_ref().expect("rule built for AGH");
                let m = find_mode(prior, st);
                agh_integral(prior, st, &m, rule)
            }
        }
    }

    fn dense_grid(&self, prior: &Prior, st: &ClusterState) -> f64 {
        let n = self.quad.grid_points;
        let hw = self.quad.grid_halfwidth_sd * prior.sd[0];
        let h = 2.0 * hw / (n - 1) as f64;
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let u = -hw + i as f64 * h;
            let mut t = st.value(prior, &[u]);
            if i == 0 || i == n - 1 {
                t += 0.5f64.ln();
            }
            terms.push(t);
        }
        h.ln() + log_sum_exp(&terms)
    }
}

fn agh_integral(prior: &Prior, st: &ClusterState, m: &ModeResult, rule: &GaussHermite) -> Result<f64> {
    let d = prior.d;
    let n = rule.len();
    let sqrt2 = std::f64::consts::SQRT_2;
    if d == 1 {
        let r = m.neg_hessian[(0, 0)].sqrt();
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Numerical("degenerate curvature at the mode".into()));
        }
        let terms: Vec<f64> = rule
            .nodes
            .iter()
            .zip(&rule.log_weights)
            .map(|(t, lw)| lw + st.value(prior, &[m.u[0] + sqrt2 * t / r]) + t * t)
            .collect();
        return Ok(0.5 * std::f64::consts::LN_2 - r.ln() + log_sum_exp(&terms));
    }
    let ch = m
        .neg_hessian
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("negative Hessian not positive definite".into()))?;
    let l = ch.l();
    let lt = l.transpose();
    let log_det_l: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
    let total = n.pow(d as u32);
    let mut terms = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let t = DVector::from_iterator(d, idx.iter().map(|&k| rule.nodes[k]));
        let v = lt
            .solve_upper_triangular(&t)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let u: Vec<f64> = m.u.iter().zip(v.iter()).map(|(a, b)| a + sqrt2 * b).collect();
        let lw: f64 = idx.iter().map(|&k| rule.log_weights[k]).sum();
        terms.push(lw + st.value(prior, &u) + t.norm_squared());
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    Ok(0.5 * d as f64 * std::f64::consts::LN_2 - log_det_l + log_sum_exp(&terms))
}

/// Marginal log-likelihood `Σ_j log ∫ exp g_j(u) du` (constant dropped).
///
/// With `Σ = 0` each cluster contributes the plug-in value `g_j` at `u = 0`
/// without the prior term.
pub fn marginal_loglik(params: &MemParams, cache: &ExceedanceCache, quad: &QuadratureSpec) -> Result<f64> {
    LikelihoodEvaluator::new(*quad)?.loglik(params, cache)
}

/// Log-likelihood of the model without random effects (`u = 0`).
pub fn fixed_effects_loglik(params: &MemParams, cache: &ExceedanceCache) -> Result<f64> {
    cache.check_params(params)?;
    let zero = vec![0.0; cache.p_a()];
    Ok(cache
        .clusters()
        .iter()
        .map(|c| ClusterState::new(params, c).data_value(&zero))
        .sum())
}

/// Log of the cluster integrand, evaluated term by term from the raw
/// exceedances. Requires a positive definite `Σ`.
pub fn cluster_integrand_log(params: &MemParams, cache_j: &ClusterExceedances, u: &[f64]) -> Result<f64> {
    let d = params.p_a();
    if u.len() != d || cache_j.dim() != d || cache_j.xb_sum.len() != params.p_b() {
        return Err(Error::Dimension("random effect or cluster does not match parameters".into()));
    }
    let prior = Prior::from_params(params)?.ok_or_else(|| {
        Error::SingularCovariance("sigma = 0 has no density; use the plug-in path".into())
    })?;
    let mut v = prior.log_phi(u);
    for e in cache_j.exceedances() {
        let eta: f64 = params
            .beta_a()
            .iter()
            .zip(u)
            .zip(&e.x_a)
            .map(|((b, w), x)| (b + w) * x)
            .sum::<f64>()
            + dot(params.beta_b(), &e.x_b);
        v += -eta - (-eta).exp() * e.z;
    }
    Ok(v)
}

/// Central finite-difference gradient of the marginal log-likelihood with
/// respect to the unconstrained parameter vector, step `1e-5 (1 + |θ_k|)`.
pub fn loglik_gradient_fd(params: &MemParams, cache: &ExceedanceCache, quad: &QuadratureSpec) -> Result<Vec<f64>> {
    let eval = LikelihoodEvaluator::new(*quad)?;
    let theta = params.to_unconstrained()?;
    let (p_a, p_b) = (params.p_a(), params.p_b());
    let f = |t: &[f64]| -> Result<f64> {
        let v = eval.loglik(&MemParams::from_unconstrained(t, p_a, p_b)?, cache)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical("non-finite likelihood in finite differences".into()))
        }
    };
    f(&theta)?;
    let mut grad = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        let h = 1e-5 * (1.0 + theta[k].abs());
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[k] += h;
        tm[k] -= h;
        grad.push((f(&tp)? - f(&tm)?) / (2.0 * h));
    }
    Ok(grad)
}
