//! Maximum approximate-likelihood fitting of the mixed-effects model and the
//! comparison baselines (model without covariates, per-cluster fixed
//! effects, per-cluster Hill).

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{ExceedanceCache, LikelihoodEvaluator, QuadratureSpec};
use crate::model::{dot, ClusteredDataset, MemParams, Observation, ThresholdPlan};
use crate::optim::{coordinate_search, nelder_mead, Tolerances};

/// Eigenvalues of the fitted covariance at or below this are reported as the
/// zero boundary.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Lower clamp applied to the log-diagonal of the covariance factor inside
/// the objective.
pub const LOG_DIAG_MIN: f64 = -12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    NelderMead,
    CoordinateSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    DataDriven,
    Provided(MemParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub method: OptMethod,
    pub max_iters: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub restarts: usize,
    pub init: InitStrategy,
    /// Initial simplex edge (or compass step) per coordinate.
    pub simplex_scale: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            method: OptMethod::NelderMead,
            max_iters: 2000,
            f_tol: 1e-9,
            x_tol: 1e-8,
            restarts: 2,
            init: InitStrategy::DataDriven,
            simplex_scale: 0.1,
        }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_tol > 0.0 && self.x_tol > 0.0 && self.simplex_scale > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidInput(
                "optimizer tolerances, scale and iteration budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MemParams,
    pub loglik: f64,
    /// Log-likelihood at the starting point.
    pub init_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub threshold_plan: ThresholdPlan,
    pub quad: QuadratureSpec,
    pub boundary_sigma: bool,
}

fn check_fit_preconditions(cache: &ExceedanceCache) -> Result<()> {
    let (p_a, p_b) = (cache.p_a(), cache.p_b());
    let needed = MemParams::unconstrained_len(p_a, p_b) + 1;
    let total = cache.total_exceedances();
    if total < needed {
        return Err(Error::Precondition(format!(
            "{total} exceedances in total; at least {needed} are needed"
        )));
    }
    let informative = cache.clusters().iter().filter(|c| !c.is_empty()).count();
    if informative < 2 {
        return Err(Error::Precondition(
            "the random-effect covariance needs at least two clusters with exceedances".into(),
        ));
    }
    Ok(())
}

/// Starting values: least squares of `log z` on `[x_A, x_B]`, with intercept
/// components of `beta_a` replaced by the log pooled Hill estimate, and
/// `sigma = 0.1 I`.
pub fn data_driven_init(cache: &ExceedanceCache) -> Result<MemParams> {
    let (p_a, p_b) = (cache.p_a(), cache.p_b());
    let p = p_a + p_b;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut sum_z = 0.0;
    let mut n = 0usize;
    let mut intercept = vec![true; p_a];
    for c in cache.clusters() {
        for e in c.exceedances() {
            let x: Vec<f64> = e.x_a.iter().chain(&e.x_b).copied().collect();
            let lz = e.z.ln();
            for a in 0..p {
                xty[a] += x[a] * lz;
                for b in 0..p {
                    xtx[(a, b)] += x[a] * x[b];
                }
            }
            for (k, flag) in intercept.iter_mut().enumerate() {
                *flag &= e.x_a[k] == 1.0;
            }
            sum_z += e.z;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Precondition("no exceedances to initialize from".into()));
    }
    let coef: Vec<f64> = xtx
        .svd(true, true)
        .solve(&xty, 1e-10)
        .map(|v| v.iter().map(|c| if c.is_finite() { *c } else { 0.0 }).collect())
        .unwrap_or_else(|_| vec![0.0; p]);
    let log_hill = (sum_z / n as f64).ln();
    let mut beta_a = coef[..p_a].to_vec();
    for (k, flag) in intercept.iter().enumerate() {
        if *flag {
            beta_a[k] = log_hill;
        }
    }
    let beta_b = coef[p_a..].to_vec();
    MemParams::new(beta_a, beta_b, DMatrix::identity(p_a, p_a) * 0.1)
}

/// Pooled fit without random effects (`sigma = 0`): Newton iterations on
/// the concave log-likelihood `Σ[-η - exp(-η) z]`, `η = β_A'x_A + β_B'x_B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFit {
    pub beta_a: Vec<f64>,
    pub beta_b: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn fit_pooled(cache: &ExceedanceCache, start: Option<(&[f64], &[f64])>) -> Result<PooledFit> {
    let (p_a, p_b) = (cache.p_a(), cache.p_b());
    let rows: Vec<(Vec<f64>, f64)> = cache
        .clusters()
        .iter()
        .flat_map(|c| c.exceedances())
        .map(|e| (e.x_a.iter().chain(&e.x_b).copied().collect(), e.z))
        .collect();
    if rows.is_empty() {
        return Err(Error::Precondition("no exceedances".into()));
    }
    let beta0: Vec<f64> = match start {
        Some((a, b)) => a.iter().chain(b).copied().collect(),
        None => {
            let init = data_driven_init(cache)?;
            init.beta_a().iter().chain(init.beta_b()).copied().collect()
        }
    };
    let (beta, loglik, converged, iterations) = newton_exponential(&rows, beta0, 200)?;
    Ok(PooledFit {
        beta_a: beta[..p_a].to_vec(),
        beta_b: beta[p_a..p_a + p_b].to_vec(),
        loglik,
        converged,
        iterations,
    })
}

fn exp_loglik(rows: &[(Vec<f64>, f64)], beta: &[f64]) -> f64 {
    rows.iter()
        .map(|(x, z)| {
            let eta = dot(beta, x);
            -eta - (-eta).exp() * z
        })
        .sum()
}

/// Newton ascent for `Σ[-η - exp(-η) z]` with `η = β'x`.
fn newton_exponential(rows: &[(Vec<f64>, f64)], mut beta: Vec<f64>, max_iter: usize) -> Result<(Vec<f64>, f64, bool, usize)> {
    let p = beta.len();
    let mut f = exp_loglik(rows, &beta);
    if !f.is_finite() {
        beta.iter_mut().for_each(|b| *b = 0.0);
        f = exp_loglik(rows, &beta);
    }
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let mut g = DVector::<f64>::zeros(p);
        let mut h = DMatrix::<f64>::zeros(p, p);
        for (x, z) in rows {
            let w = (-dot(&beta, x)).exp() * z;
            for a in 0..p {
                g[a] += (w - 1.0) * x[a];
                for b in 0..p {
                    h[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        let Some(ch) = h.clone().cholesky() else {
            return Err(Error::Numerical("singular design in the exponential regression".into()));
        };
        let step = ch.solve(&g);
        let decrement = g.dot(&step);
        if decrement <= 1e-20 * (1.0 + f.abs()) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let fc = exp_loglik(rows, &cand);
            if fc.is_finite() && fc >= f - 1e-13 * (1.0 + f.abs()) {
                beta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || decrement <= 1e-14 * (1.0 + f.abs()) {
            converged = decrement <= 1e-8 * (1.0 + f.abs());
            if accepted {
                continue;
            }
            break;
        }
    }
    Ok((beta, f, converged, it))
}

fn clamp_theta(theta: &[f64], p_a: usize, p_b: usize) -> Vec<f64> {
    let mut t = theta.to_vec();
    let mut k = p_a + p_b;
    for col in 0..p_a {
        for row in col..p_a {
            if row == col && t[k] < LOG_DIAG_MIN {
                t[k] = LOG_DIAG_MIN;
            }
            k += 1;
        }
    }
    t
}

/// Fit `(beta_a, beta_b, sigma)` by maximizing the approximate marginal
/// log-likelihood.
///
/// The interior optimum (over the log-Cholesky parameterization) is
/// compared with the pooled `sigma = 0` fit; the boundary wins when its
/// log-likelihood is at least as high or when every fitted eigenvalue is at
/// or below [`SIGMA_FLOOR`], in which case `sigma` is set exactly to zero.
pub fn fit_mem(
    data: &ClusteredDataset,
    plan: &ThresholdPlan,
    quad: &QuadratureSpec,
    opt: &OptimizerSpec,
) -> Result<FitResult> {
    let cache = ExceedanceCache::build(data, plan)?;
    fit_mem_cache(&cache, plan, quad, opt)
}

/// [`fit_mem`] on a prebuilt cache (which must come from `plan`).
pub fn fit_mem_cache(
    cache: &ExceedanceCache,
    plan: &ThresholdPlan,
    quad: &QuadratureSpec,
    opt: &OptimizerSpec,
) -> Result<FitResult> {
    opt.validate()?;
    check_fit_preconditions(cache)?;
    let eval = LikelihoodEvaluator::new(*quad)?;
    eval.check_supported(cache.p_a())?;
    let (p_a, p_b) = (cache.p_a(), cache.p_b());

    let init = match &opt.init {
        InitStrategy::DataDriven => data_driven_init(cache)?,
        InitStrategy::Provided(p) => {
            cache.check_params(p)?;
            if p.to_unconstrained().is_ok() {
                p.clone()
            } else {
                MemParams::new(p.beta_a().to_vec(), p.beta_b().to_vec(), DMatrix::identity(p_a, p_a) * 0.1)?
            }
        }
    };
    let init_loglik = eval.loglik(&init, cache)?;
    let theta0 = init.to_unconstrained()?;

    let mut objective = |theta: &[f64]| -> f64 {
        let t = clamp_theta(theta, p_a, p_b);
        match MemParams::from_unconstrained(&t, p_a, p_b).and_then(|p| eval.loglik(&p, cache)) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let tol = Tolerances {
        max_iters: opt.max_iters,
        f_tol: opt.f_tol,
        x_tol: opt.x_tol,
    };
    let outcome = match opt.method {
        OptMethod::NelderMead => nelder_mead(&mut objective, &theta0, opt.simplex_scale, opt.restarts, &tol),
        OptMethod::CoordinateSearch => coordinate_search(&mut objective, &theta0, opt.simplex_scale, &tol),
    };
    let interior = MemParams::from_unconstrained(&clamp_theta(&outcome.x, p_a, p_b), p_a, p_b)?;
    let interior_ll = eval.loglik(&interior, cache)?;

    let pooled = fit_pooled(cache, Some((interior.beta_a(), interior.beta_b())));
    let eigen_floor = interior.sigma_eigenvalues().iter().all(|&e| e <= SIGMA_FLOOR);
    let boundary = match pooled {
        Ok(pf) => {
            let bp = MemParams::new(pf.beta_a.clone(), pf.beta_b.clone(), DMatrix::zeros(p_a, p_a))?;
            let bl = eval.loglik(&bp, cache)?;
            (bl >= interior_ll || eigen_floor).then_some((bp, bl))
        }
        Err(_) if eigen_floor => {
            let bp = interior.with_zero_sigma();
            let bl = eval.loglik(&bp, cache)?;
            Some((bp, bl))
        }
        Err(_) => None,
    };
    let (params, loglik, boundary_sigma) = match boundary {
        Some((bp, bl)) => (bp, bl, true),
        None => (interior, interior_ll, false),
    };
    log::debug!(
        "fit: loglik {loglik:.6} (init {init_loglik:.6}), {} iterations, boundary {boundary_sigma}",
        outcome.iterations
    );
    Ok(FitResult {
        params,
        loglik,
        init_loglik,
        converged: outcome.converged,
        iterations: outcome.iterations,
        evaluations: outcome.evaluations,
        threshold_plan: plan.clone(),
        quad: *quad,
        boundary_sigma,
    })
}

/// The mixed model without common-slope covariates.
pub fn fit_m2(
    data: &ClusteredDataset,
    plan: &ThresholdPlan,
    quad: &QuadratureSpec,
    opt: &OptimizerSpec,
) -> Result<FitResult> {
    let reduced = data.without_b_covariates();
    let opt = match &opt.init {
        InitStrategy::Provided(p) if p.p_b() > 0 => OptimizerSpec {
            init: InitStrategy::Provided(MemParams::new(p.beta_a().to_vec(), vec![], p.sigma().clone())?),
            ..opt.clone()
        },
        _ => opt.clone(),
    };
    fit_mem(&reduced, plan, quad, &opt)
}

/// Per-cluster fixed-effects fit: cluster-specific `beta_a` and a common
/// `beta_b`, no random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedFit {
    pub beta_a: IndexMap<String, Vec<f64>>,
    pub beta_b: Vec<f64>,
    /// Clusters without enough exceedances to identify their own `beta_a`.
    pub excluded: Vec<String>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn fit_fixed(data: &ClusteredDataset, plan: &ThresholdPlan) -> Result<FixedFit> {
    let cache = ExceedanceCache::build(data, plan)?;
    fit_fixed_cache(&cache)
}

pub fn fit_fixed_cache(cache: &ExceedanceCache) -> Result<FixedFit> {
    let (p_a, p_b) = (cache.p_a(), cache.p_b());
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    for c in cache.clusters() {
        let mut g = DMatrix::<f64>::zeros(p_a, p_a);
        for e in c.exceedances() {
            for a in 0..p_a {
                for b in 0..p_a {
                    g[(a, b)] += e.x_a[a] * e.x_a[b];
                }
            }
        }
        let ok = c.len() >= p_a && {
            let ev = g.symmetric_eigen().eigenvalues;
            let max = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            ev.iter().all(|&v| v > 1e-10 * max.max(1e-300))
        };
        if ok {
            included.push(c);
        } else {
            excluded.push(c.id.clone());
        }
    }
    if included.is_empty() {
        return Err(Error::Precondition("no cluster has enough exceedances".into()));
    }
    let m = included.len();
    let dim = m * p_a + p_b;
    // Design rows embedded in the stacked parameter vector.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut beta0 = vec![0.0; dim];
    for (j, c) in included.iter().enumerate() {
        for e in c.exceedances() {
            let mut x = vec![0.0; dim];
            x[j * p_a..(j + 1) * p_a].copy_from_slice(&e.x_a);
            x[m * p_a..].copy_from_slice(&e.x_b);
            rows.push((x, e.z));
        }
        let hill = c.mean_z().expect("included clusters are non-empty");
        for k in 0..p_a {
            if c.exceedances().iter().all(|e| e.x_a[k] == 1.0) {
                beta0[j * p_a + k] = hill.ln();
            }
        }
    }
    let (beta, loglik, converged, iterations) = newton_exponential(&rows, beta0, 200)?;
    let beta_a = included
        .iter()
        .enumerate()
        .map(|(j, c)| (c.id.clone(), beta[j * p_a..(j + 1) * p_a].to_vec()))
        .collect();
    Ok(FixedFit {
        beta_a,
        beta_b: beta[m * p_a..].to_vec(),
        excluded,
        loglik,
        converged,
        iterations,
    })
}

/// Hill estimator `mean(log(y / omega))` over `y > omega`.
pub fn hill_fit(observations: &[Observation], omega: f64) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {omega}")));
    }
    let (sum, n) = observations
        .iter()
        .filter(|o| o.y > omega)
        .fold((0.0, 0usize), |(s, n), o| (s + (o.y / omega).ln(), n + 1));
    if n == 0 {
        return Err(Error::Precondition("no exceedances above the threshold".into()));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{uniform_threshold, Cluster};
    use crate::rng::stream;
    use crate::tail::{sample_observations, CovariateGen, TailFamily};
    use rand_distr::{Distribution, StandardNormal};

    fn obs(y: f64) -> Observation {
        Observation::new(y, vec![1.0], vec![]).unwrap()
    }

    #[test]
    fn hill_examples() {
        let e = std::f64::consts::E;
        assert!((hill_fit(&[obs(2.0 * e), obs(1.0)], 2.0).unwrap() - 1.0).abs() < 1e-15);
        let h = hill_fit(&[obs(e), obs(e * e), obs(e.powi(3))], 1.0).unwrap();
        assert!((h - 2.0).abs() < 1e-15);
        assert!(hill_fit(&[obs(0.5)], 1.0).is_err());
    }

    #[test]
    fn hill_consistency_on_pareto() {
        let p = MemParams::location_shift(0.6f64.ln(), vec![], 0.0).unwrap();
        let mut r = stream(&[1, 2]);
        let o = sample_observations(&TailFamily::pareto(), &p, &[0.0], CovariateGen::Normal01, 100_000, &mut r).unwrap();
        let h = hill_fit(&o, 1.0).unwrap();
        assert!((h - 0.6).abs() < 0.01, "{h}");
    }

    fn simulate(seed: u64, j: usize, n: usize, sigma2: f64, beta_b: Vec<f64>) -> ClusteredDataset {
        let p = MemParams::location_shift(-0.5, beta_b, sigma2).unwrap();
        let clusters = (0..j)
            .map(|c| {
                let mut r = stream(&[seed, c as u64]);
                let z: f64 = StandardNormal.sample(&mut r);
                let u = sigma2.sqrt() * z;
                Cluster::new(
                    format!("c{c}"),
                    sample_observations(&TailFamily::pareto(), &p, &[u], CovariateGen::Normal01, n, &mut r).unwrap(),
                )
            })
            .collect();
        ClusteredDataset::new(clusters, 1, p.p_b()).unwrap()
    }

    #[test]
    fn intercept_only_fixed_fit_is_hill() {
        let d = simulate(3, 1, 50, 0.0, vec![]);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let f = fit_fixed(&d, &plan).unwrap();
        let h = hill_fit(&d.clusters()[0].observations, 1.0).unwrap();
        assert!((f.beta_a["c0"][0].exp() - h).abs() < 1e-10);
    }

    #[test]
    fn identical_clusters_get_identical_coefficients() {
        let d = simulate(4, 1, 30, 0.0, vec![0.3]);
        let c = d.clusters()[0].clone();
        let twin = Cluster::new("twin", c.observations.clone());
        let d2 = ClusteredDataset::new(vec![c, twin], 1, 1).unwrap();
        let f = fit_fixed(&d2, &uniform_threshold(&d2, 1.0).unwrap()).unwrap();
        assert!((f.beta_a["c0"][0] - f.beta_a["twin"][0]).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_data_recovers_pooled_hill() {
        let d = simulate(5, 80, 40, 0.0, vec![]);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let fit = fit_mem(&d, &plan, &QuadratureSpec::default(), &OptimizerSpec::default()).unwrap();
        let all: Vec<Observation> = d.clusters().iter().flat_map(|c| c.observations.clone()).collect();
        let pooled = hill_fit(&all, 1.0).unwrap().ln();
        assert!((fit.params.beta_a()[0] - pooled).abs() <= 0.02);
        assert!(fit.loglik >= fit.init_loglik);
    }

    #[test]
    fn fit_recovers_truth_roughly_and_reevaluates() {
        let d = simulate(6, 60, 40, 0.2, vec![0.2]);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let q = QuadratureSpec::default();
        let fit = fit_mem(&d, &plan, &q, &OptimizerSpec::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.params.beta_a()[0] + 0.5).abs() < 0.25);
        assert!((fit.params.beta_b()[0] - 0.2).abs() < 0.1);
        assert!(fit.params.sigma()[(0, 0)] > 0.05 && fit.params.sigma()[(0, 0)] < 0.5);
        let again = crate::likelihood::marginal_loglik(&fit.params, &ExceedanceCache::build(&d, &plan).unwrap(), &q).unwrap();
        assert!((again - fit.loglik).abs() <= 1e-9);
        let cache = ExceedanceCache::build(&d, &plan).unwrap();
        let g = crate::likelihood::loglik_gradient_fd(&fit.params, &cache, &q).unwrap();
        let scale = 1.0 + fit.loglik.abs();
        assert!(g.iter().all(|v| v.abs() / scale <= 1e-3), "{g:?}");
    }

    #[test]
    fn covariate_rescaling_rescales_slope() {
        let d = simulate(7, 30, 30, 0.2, vec![0.2]);
        let c = 2.5;
        let scaled = ClusteredDataset::new(
            d.clusters()
                .iter()
                .map(|cl| {
                    Cluster::new(
                        cl.id.clone(),
                        cl.observations
                            .iter()
                            .map(|o| Observation::new(o.y, o.x_a.clone(), vec![o.x_b[0] * c]).unwrap())
                            .collect(),
                    )
                })
                .collect(),
            1,
            1,
        )
        .unwrap();
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let opt = OptimizerSpec {
            f_tol: 1e-14,
            x_tol: 1e-12,
            ..OptimizerSpec::default()
        };
        let q = QuadratureSpec::default();
        let a = fit_mem(&d, &plan, &q, &opt).unwrap();
        let b = fit_mem(&scaled, &plan, &q, &opt).unwrap();
        assert!((a.params.beta_b()[0] - c * b.params.beta_b()[0]).abs() < 1e-6);
    }

    #[test]
    fn m2_matches_dropped_columns_bit_for_bit() {
        let d = simulate(8, 10, 20, 0.3, vec![0.2]);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let q = QuadratureSpec::default();
        let opt = OptimizerSpec::default();
        let a = fit_m2(&d, &plan, &q, &opt).unwrap();
        let b = fit_mem(&d.without_b_covariates(), &plan, &q, &opt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_cluster_is_rejected() {
        let d = simulate(9, 1, 30, 0.0, vec![]);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let r = fit_m2(&d, &plan, &QuadratureSpec::default(), &OptimizerSpec::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn coordinate_search_agrees_with_nelder_mead() {
        let d = simulate(10, 20, 20, 0.3, vec![0.2]);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let q = QuadratureSpec::default();
        let a = fit_mem(&d, &plan, &q, &OptimizerSpec::default()).unwrap();
        let b = fit_mem(
            &d,
            &plan,
            &q,
            &OptimizerSpec {
                method: OptMethod::CoordinateSearch,
                max_iters: 20_000,
                ..OptimizerSpec::default()
            },
        )
        .unwrap();
        assert!((a.loglik - b.loglik).abs() < 1e-4, "{} {}", a.loglik, b.loglik);
    }
}
