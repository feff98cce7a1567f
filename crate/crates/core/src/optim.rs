//! Derivative-free minimizers: Nelder-Mead with oriented restarts and a
//! compass (coordinate) search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub max_iters: usize,
    pub f_tol: f64,
    pub x_tol: f64,
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d = 0.0_f64;
    for a in simplex {
        for b in simplex {
            let m = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            d = d.max(m);
        }
    }
    d
}

/// One Nelder-Mead run from an explicit starting simplex.
fn nm_run(
    f: &mut dyn FnMut(&[f64]) -> f64,
    mut simplex: Vec<Vec<f64>>,
    tol: &Tolerances,
    evaluations: &mut usize,
) -> (Vec<Vec<f64>>, Vec<f64>, usize, bool) {
    let n = simplex.len() - 1;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x, evaluations)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < tol.max_iters {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();

        let spread = fv[n] - fv[0];
        if (fv[0].is_finite() && spread <= tol.f_tol * (1.0 + fv[0].abs())) || diameter(&simplex) <= tol.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|x| x[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, evaluations);
        if fr < fv[0] {
            let xe = along(2.0);
            let fe = eval(&xe, evaluations);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
            continue;
        }
        if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < fv[n] {
            let xc = along(0.5);
            let fc = eval(&xc, evaluations);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, evaluations);
            (xc, fc)
        };
        if fc < fv[n].min(fr) {
            simplex[n] = xc;
            fv[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            simplex[i] = best
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            fv[i] = eval(&simplex[i], evaluations);
        }
    }
    (simplex, fv, iterations, converged)
}

fn axis_simplex(x0: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    let mut s = vec![x0.to_vec()];
    for (k, h) in steps.iter().enumerate() {
        let mut x = x0.to_vec();
        x[k] += h;
        s.push(x);
    }
    s
}

/// Simplex gradient from the edges leaving the best vertex.
fn simplex_gradient(simplex: &[Vec<f64>], fv: &[f64]) -> Option<Vec<f64>> {
    let n = simplex.len() - 1;
    let v = nalgebra::DMatrix::from_fn(n, n, |i, k| simplex[i + 1][k] - simplex[0][k]);
    let df = nalgebra::DVector::from_fn(n, |i, _| fv[i + 1] - fv[0]);
    if !df.iter().all(|v| v.is_finite()) {
        return None;
    }
    v.lu().solve(&df).map(|g| g.iter().copied().collect())
}

/// Minimize `f` from `x0` with Nelder-Mead. After each converged run the
/// simplex is rebuilt at the best point with edges of length `scale`
/// pointing against the simplex gradient; up to `restarts` such restarts
/// are made while they still improve the minimum by more than `f_tol`.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    scale: f64,
    restarts: usize,
    tol: &Tolerances,
) -> OptimOutcome {
    let n = x0.len();
    let mut evaluations = 0;
    if n == 0 {
        let v = f(x0);
        return OptimOutcome {
            x: vec![],
            f: v,
            iterations: 0,
            evaluations: 1,
            converged: true,
        };
    }
    let (mut simplex, mut fv, mut iterations, mut converged) =
        nm_run(f, axis_simplex(x0, &vec![scale; n]), tol, &mut evaluations);
    let mut best_f = fv[0];
    for _ in 0..restarts {
        if iterations >= tol.max_iters {
            break;
        }
        let steps: Vec<f64> = match simplex_gradient(&simplex, &fv) {
            Some(g) => g.iter().map(|gk| if *gk > 0.0 { -scale } else { scale }).collect(),
            None => vec![scale; n],
        };
        let remaining = Tolerances {
            max_iters: tol.max_iters - iterations,
            ..*tol
        };
        let (s, v, it, conv) = nm_run(f, axis_simplex(&simplex[0], &steps), &remaining, &mut evaluations);
        iterations += it;
        let improved = best_f - v[0] > tol.f_tol * (1.0 + best_f.abs());
        if v[0] < best_f {
            simplex = s;
            fv = v;
            best_f = fv[0];
        }
        converged = conv;
        if !improved {
            break;
        }
    }
    OptimOutcome {
        x: simplex[0].clone(),
        f: fv[0],
        iterations,
        evaluations,
        converged,
    }
}

/// Compass search: try `±step` along each coordinate, halve the step when
/// no move improves.
pub fn coordinate_search(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    scale: f64,
    tol: &Tolerances,
) -> OptimOutcome {
    let mut x = x0.to_vec();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut fx = eval(&x);
    let mut evaluations = 1;
    let mut step = scale;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < tol.max_iters {
        iterations += 1;
        let mut improved = false;
        let start = fx;
        for k in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut c = x.clone();
                c[k] += sign * step;
                let fc = eval(&c);
                evaluations += 1;
                if fc < fx {
                    x = c;
                    fx = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved || start - fx <= tol.f_tol * (1.0 + fx.abs()) {
            step *= 0.5;
        }
        if step <= tol.x_tol {
            converged = true;
            break;
        }
    }
    OptimOutcome {
        x,
        f: fx,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances {
            max_iters: 5000,
            f_tol: 1e-14,
            x_tol: 1e-10,
        }
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let mut f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = nelder_mead(&mut f, &[-1.2, 1.0], 0.1, 2, &tol());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_quadratic_4d() {
        let mut f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.3).powi(2)).sum::<f64>();
        let r = nelder_mead(&mut f, &[0.0; 4], 0.1, 2, &tol());
        assert!(r.x.iter().all(|v| (v - 0.3).abs() < 1e-5));
    }

    #[test]
    fn infinite_regions_are_avoided() {
        let mut f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.05).powi(2) };
        let r = nelder_mead(&mut f, &[0.5], 0.1, 2, &tol());
        assert!((r.x[0] - 0.05).abs() < 1e-5);
    }

    #[test]
    fn compass_search_quadratic() {
        let mut f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let r = coordinate_search(&mut f, &[0.0, 0.0], 0.5, &tol());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] + 2.0).abs() < 1e-8);
    }
}
