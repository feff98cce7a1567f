//! Gauss-Hermite rules for the weight `exp(-t^2)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule, nodes ascending. Newton iteration on the normalized
    /// Hermite recurrence with the usual asymptotic starting guesses.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("quadrature needs at least one node".into()));
        }
        if n > 200 {
            return Err(Error::InvalidInput(format!("{n} nodes is beyond the supported range")));
        }
        let nf = n as f64;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let jf = j as f64;
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z1.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[m - 1] = 0.0;
        }
        x.reverse();
        w.reverse();
        Ok(Self {
            nodes: x,
            log_weights: w.iter().map(|v| v.ln()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `log(sum(exp(v)))`, returning `-inf` for empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_low_moments() {
        let sp = std::f64::consts::PI.sqrt();
        for n in [1usize, 2, 3, 5, 15, 31, 64] {
            let r = GaussHermite::new(n).unwrap();
            let w: Vec<f64> = r.log_weights.iter().map(|l| l.exp()).collect();
            let m0: f64 = w.iter().sum();
            assert!((m0 - sp).abs() < 1e-13, "n={n}: {m0}");
            if n >= 2 {
                let m2: f64 = w.iter().zip(&r.nodes).map(|(w, x)| w * x * x).sum();
                assert!((m2 - sp / 2.0).abs() < 1e-13);
            }
            if n >= 3 {
                let m4: f64 = w.iter().zip(&r.nodes).map(|(w, x)| w * x.powi(4)).sum();
                assert!((m4 - 0.75 * sp).abs() < 1e-12);
            }
            assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn fifteen_point_rule_integrates_gaussian_cosine() {
        // int exp(-t^2) cos(t) dt = sqrt(pi) exp(-1/4)
        let r = GaussHermite::new(15).unwrap();
        let v: f64 = r
            .nodes
            .iter()
            .zip(&r.log_weights)
            .map(|(x, lw)| lw.exp() * x.cos())
            .sum();
        assert!((v - std::f64::consts::PI.sqrt() * (-0.25f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn lse() {
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
