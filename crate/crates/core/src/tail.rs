//! Heavy-tailed conditional response laws used in simulation: Pareto,
//! Student-t with `1/gamma` degrees of freedom, and Burr.
//!
//! All three are Pareto-type with extreme value index `gamma`. Student-t
//! supports non-integer degrees of freedom through the regularized
//! incomplete beta function.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{dot, MemParams, Observation};
use crate::rng::{open01, stream_from_seed};

/// Absolute tolerance on `F(quantile(p)) - p` for numerically inverted laws.
pub const QUANTILE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    Pareto,
    StudentT,
    Burr,
}

impl std::str::FromStr for TailKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pareto" => Ok(TailKind::Pareto),
            "student_t" | "studentt" | "t" | "student-t" => Ok(TailKind::StudentT),
            "burr" => Ok(TailKind::Burr),
            other => Err(Error::Parse(format!("unknown tail family '{other}'"))),
        }
    }
}

/// Tail family; `eta` and `lambda` are the Burr scale and shape and are
/// ignored for the other kinds.
///
/// The Burr survival function is `(eta / (eta + y^(1/gamma)))^lambda`, so its
/// extreme value index is `gamma / lambda`; it equals `gamma` for the default
/// `lambda = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFamily {
    pub kind: TailKind,
    pub eta: f64,
    pub lambda: f64,
}

impl TailFamily {
    pub fn pareto() -> Self {
        Self {
            kind: TailKind::Pareto,
            eta: 1.0,
            lambda: 1.0,
        }
    }

    pub fn student_t() -> Self {
        Self {
            kind: TailKind::StudentT,
            eta: 1.0,
            lambda: 1.0,
        }
    }

    pub fn burr(eta: f64, lambda: f64) -> Result<Self> {
        if !(eta > 0.0 && lambda > 0.0 && eta.is_finite() && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Burr parameters must be positive, got eta={eta}, lambda={lambda}"
            )));
        }
        Ok(Self {
            kind: TailKind::Burr,
            eta,
            lambda,
        })
    }

    /// `lim y^a (1 - F(y))` as `y -> infinity`, with tail index `a = 1/gamma` (`lambda/gamma` for Burr).
    pub fn tail_constant(&self, gamma: f64) -> f64 {
        match self.kind {
            TailKind::Pareto => 1.0,
            TailKind::Burr => self.eta.powf(self.lambda),
            TailKind::StudentT => {
                let nu = 1.0 / gamma;
                (ln_gamma((nu + 1.0) / 2.0) + (0.5 * nu - 1.0) * nu.ln()
                    - 0.5 * std::f64::consts::PI.ln()
                    - ln_gamma(nu / 2.0))
                .exp()
            }
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "extreme value index must be positive, got {gamma}"
        )));
    }
    Ok(())
}

/// Conditional CDF given extreme value index `gamma`.
pub fn tail_cdf(family: &TailFamily, gamma: f64, y: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(match family.kind {
        TailKind::Pareto => {
            if y <= 1.0 {
                0.0
            } else {
                1.0 - y.powf(-1.0 / gamma)
            }
        }
        TailKind::Burr => {
            if y <= 0.0 {
                0.0
            } else {
                1.0 - burr_sf(family, gamma, y)
            }
        }
        TailKind::StudentT => {
            let nu = 1.0 / gamma;
            if y >= 0.0 {
                1.0 - t_sf_pos(nu, y)
            } else {
                t_sf_pos(nu, -y)
            }
        }
    })
}

/// Survival function `1 - F(y)`, accurate far in the tail.
pub fn tail_sf(family: &TailFamily, gamma: f64, y: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(match family.kind {
        TailKind::Pareto => {
            if y <= 1.0 {
                1.0
            } else {
                y.powf(-1.0 / gamma)
            }
        }
        TailKind::Burr => {
            if y <= 0.0 {
                1.0
            } else {
                burr_sf(family, gamma, y)
            }
        }
        TailKind::StudentT => {
            let nu = 1.0 / gamma;
            if y >= 0.0 {
                t_sf_pos(nu, y)
            } else {
                1.0 - t_sf_pos(nu, -y)
            }
        }
    })
}

fn burr_sf(family: &TailFamily, gamma: f64, y: f64) -> f64 {
    let eta = family.eta;
    (eta / (eta + y.powf(1.0 / gamma))).powf(family.lambda)
}

/// `P(T > t)` for `t >= 0`, `T ~ t(nu)`.
fn t_sf_pos(nu: f64, t: f64) -> f64 {
    let x = nu / (nu + t * t);
    0.5 * beta_reg(nu / 2.0, 0.5, x)
}

struct StudentT {
    nu: f64,
    log_norm: f64,
}

impl StudentT {
    fn new(nu: f64) -> Self {
        let log_norm = ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI).ln();
        Self { nu, log_norm }
    }

    fn pdf(&self, t: f64) -> f64 {
        (self.log_norm - 0.5 * (self.nu + 1.0) * (t * t / self.nu).ln_1p()).exp()
    }

    /// Solve `P(T > t) = q` for `0 < q < 1/2` by Newton steps in `log t`,
    /// safeguarded by bisection on a bracket.
    fn upper_quantile(&self, q: f64) -> f64 {
        let nu = self.nu;
        let c = (ln_gamma((nu + 1.0) / 2.0) + (0.5 * nu - 1.0) * nu.ln()
            - 0.5 * std::f64::consts::PI.ln()
            - ln_gamma(nu / 2.0))
        .exp();
        // ln S(e^w) is decreasing in w; bracket [lo, hi] keeps S(lo) > q > S(hi).
        let mut lo = -40.0_f64;
        let mut hi = f64::NAN;
        let mut w = ((c / q).ln() / nu).max(-10.0);
        for _ in 0..200 {
            let t = w.exp();
            let s = t_sf_pos(nu, t);
            if (s - q).abs() <= 1e-14 * q {
                return t;
            }
            if s > q {
                lo = lo.max(w);
            } else if hi.is_nan() || w < hi {
                hi = w;
            }
            let slope = -self.pdf(t) * t / s;
            let mut next = w - (s.ln() - q.ln()) / slope;
            if hi.is_nan() {
                if !next.is_finite() || next <= lo {
                    next = w + 1.0;
                }
            } else if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            if (next - w).abs() <= 1e-15 * w.abs().max(1.0) {
                return next.exp();
            }
            w = next;
        }
        w.exp()
    }
}

/// Inverse of [`tail_cdf`] for `0 < p < 1`.
pub fn tail_quantile(family: &TailFamily, gamma: f64, p: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    Ok(match family.kind {
        TailKind::Pareto => (1.0 - p).powf(-gamma),
        TailKind::Burr => {
            let base = family.eta * ((1.0 - p).powf(-1.0 / family.lambda) - 1.0);
            base.powf(gamma)
        }
        TailKind::StudentT => {
            let dist = StudentT::new(1.0 / gamma);
            if p == 0.5 {
                0.0
            } else if p > 0.5 {
                dist.upper_quantile(1.0 - p)
            } else {
                -dist.upper_quantile(p)
            }
        }
    })
}

/// Zero-mean unit-variance covariate law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateGen {
    Normal01,
    /// Uniform on `(-sqrt 3, sqrt 3)`.
    UniformSqrt3,
}

impl std::str::FromStr for CovariateGen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "normal01" | "gaussian" => Ok(CovariateGen::Normal01),
            "uniform" | "uniform_sqrt3" | "uniformsqrt3" => Ok(CovariateGen::UniformSqrt3),
            other => Err(Error::Parse(format!("unknown covariate generator '{other}'"))),
        }
    }
}

impl CovariateGen {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CovariateGen::Normal01 => StandardNormal.sample(rng),
            CovariateGen::UniformSqrt3 => 3f64.sqrt() * (2.0 * open01(rng) - 1.0),
        }
    }
}

/// Draw `n` observations for one cluster with random effect `u_j`.
///
/// `x_a` is an intercept followed by `p_a - 1` draws from `covariate`, and
/// `x_b` holds `p_b` draws. The response is `tail_quantile(family, gamma, U)`
/// with `U` uniform on `(F(0), 1)`, i.e. the law conditioned on being
/// positive (this only matters for Student-t, where it is the law of `|T|`).
pub fn sample_observations<R: Rng + ?Sized>(
    family: &TailFamily,
    params: &MemParams,
    u_j: &[f64],
    covariate: CovariateGen,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    let p_a = params.p_a();
    let p_b = params.p_b();
    if u_j.len() != p_a {
        return Err(Error::Dimension(format!(
            "random effect has length {}, expected {p_a}",
            u_j.len()
        )));
    }
    let lower = match family.kind {
        TailKind::StudentT => 0.5,
        TailKind::Pareto | TailKind::Burr => 0.0,
    };
    let slope_a: Vec<f64> = params.beta_a().iter().zip(u_j).map(|(b, u)| b + u).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x_a = Vec::with_capacity(p_a);
        x_a.push(1.0);
        for _ in 1..p_a {
            x_a.push(covariate.draw(rng));
        }
        let x_b: Vec<f64> = (0..p_b).map(|_| covariate.draw(rng)).collect();
        let gamma = (dot(&slope_a, &x_a) + dot(params.beta_b(), &x_b)).exp();
        let p = lower + (1.0 - lower) * open01(rng);
        let y = tail_quantile(family, gamma, p)?;
        out.push(Observation { y, x_a, x_b });
    }
    Ok(out)
}

/// Deterministic given `seed`.
pub fn sample_cluster(
    family: &TailFamily,
    params: &MemParams,
    u_j: &[f64],
    covariate: CovariateGen,
    n_j: usize,
    seed: u64,
) -> Result<Vec<Observation>> {
    if n_j == 0 {
        return Err(Error::InvalidInput("cluster size must be at least 1".into()));
    }
    let mut rng = stream_from_seed(seed);
    sample_observations(family, params, u_j, covariate, n_j, &mut rng)
}
