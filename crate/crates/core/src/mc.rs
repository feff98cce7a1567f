//! Monte Carlo experiments: replicate data generation and fitting over a
//! grid of cluster counts and exceedance sizes, then summarize bias,
//! variance and standardized-estimator normality per grid cell.
//!
//! Each replication draws one master dataset with the largest `J` and
//! cluster size of the grid; every cell reuses it by taking the first `J`
//! clusters and either the first `n_j0` observations (exact Pareto design,
//! threshold 1) or a threshold re-selected from the top-10-to-`T` ladder.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_mem, FitResult, OptimizerSpec};
use crate::inference::{lambda_b_hat, standardize_estimates, wald_statistic, StandardizedSamples, ThetaB};
use crate::likelihood::{QuadMode, QuadratureSpec};
use crate::model::{effective_counts, uniform_threshold, vech, Cluster, ClusteredDataset, MemParams};
use crate::rng::stream;
use crate::stats::{mean, normal_quantile, variance_pop};
use crate::tail::{sample_observations, CovariateGen, TailFamily, TailKind};
use crate::threshold::{select_thresholds_detailed, CandidateLadder};

/// Level of the Wald tests recorded per cell.
pub const WALD_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExceedanceDesign {
    /// Pareto responses with threshold 1, so every observation exceeds it.
    Exact { n_j0_grid: Vec<usize> },
    /// Clusters of `n_j` observations with thresholds selected over the
    /// ladder `k_min..=T` for each `T` in `t_grid`.
    Ladder { n_j: usize, k_min: usize, t_grid: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub family: TailFamily,
    pub covariate: CovariateGen,
    pub truth: MemParams,
    pub j_grid: Vec<usize>,
    pub design: ExceedanceDesign,
    pub replications: usize,
    pub seed: u64,
    pub quad: QuadratureSpec,
    pub opt: OptimizerSpec,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidInput("at least one replication is required".into()));
        }
        if self.j_grid.is_empty() || self.j_grid.contains(&0) {
            return Err(Error::InvalidInput("cluster grid must be non-empty and positive".into()));
        }
        match &self.design {
            ExceedanceDesign::Exact { n_j0_grid } => {
                if n_j0_grid.is_empty() || n_j0_grid.contains(&0) {
                    return Err(Error::InvalidInput("exceedance grid must be non-empty and positive".into()));
                }
                if self.family.kind != TailKind::Pareto {
                    return Err(Error::InvalidInput(
                        "the exact design needs Pareto responses (threshold 1)".into(),
                    ));
                }
            }
            ExceedanceDesign::Ladder { n_j, k_min, t_grid } => {
                if t_grid.is_empty() {
                    return Err(Error::InvalidInput("ladder grid must be non-empty".into()));
                }
                for &t in t_grid {
                    CandidateLadder::new(*k_min, t, 1)?;
                    if t >= *n_j {
                        return Err(Error::InvalidInput(format!("ladder top {t} needs more than {n_j} observations")));
                    }
                }
            }
        }
        self.quad.validate()?;
        self.opt.validate()
    }

    fn grid(&self) -> Vec<(usize, usize)> {
        let ts: Vec<usize> = match &self.design {
            ExceedanceDesign::Exact { n_j0_grid } => n_j0_grid.clone(),
            ExceedanceDesign::Ladder { t_grid, .. } => t_grid.clone(),
        };
        self.j_grid
            .iter()
            .flat_map(|&j| ts.iter().map(move |&t| (j, t)))
            .collect()
    }

    pub fn design_label(&self) -> String {
        let fam = match self.family.kind {
            TailKind::Pareto => "pareto",
            TailKind::StudentT => "student_t",
            TailKind::Burr => "burr",
        };
        let cov = match self.covariate {
            CovariateGen::Normal01 => "normal",
            CovariateGen::UniformSqrt3 => "uniform",
        };
        format!("{}:{fam}:{cov}", self.name)
    }
}

/// Draw the master dataset of replication `rep`.
pub fn master_dataset(spec: &ExperimentSpec, rep: usize) -> Result<ClusteredDataset> {
    let j_max = *spec.j_grid.iter().max().expect("validated grid");
    let n = match &spec.design {
        ExceedanceDesign::Exact { n_j0_grid } => *n_j0_grid.iter().max().expect("validated grid"),
        ExceedanceDesign::Ladder { n_j, .. } => *n_j,
    };
    let p_a = spec.truth.p_a();
    let clusters = (0..j_max)
        .map(|c| {
            let mut r = stream(&[spec.seed, rep as u64, c as u64]);
            let z: Vec<f64> = (0..p_a).map(|_| StandardNormal.sample(&mut r)).collect();
            let l = spec.truth.factor();
            let u: Vec<f64> = (0..p_a).map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum()).collect();
            let obs = sample_observations(&spec.family, &spec.truth, &u, spec.covariate, n, &mut r)?;
            Ok(Cluster::new(format!("c{c}"), obs))
        })
        .collect::<Result<Vec<_>>>()?;
    ClusteredDataset::new(clusters, p_a, spec.truth.p_b())
}

fn truncate(data: &ClusteredDataset, j: usize, n: Option<usize>) -> Result<ClusteredDataset> {
    let sub = data.first_clusters(j)?;
    match n {
        None => Ok(sub),
        Some(n) => ClusteredDataset::new(
            sub.clusters()
                .iter()
                .map(|c| Cluster::new(c.id.clone(), c.observations[..n.min(c.len())].to_vec()))
                .collect(),
            data.p_a(),
            data.p_b(),
        ),
    }
}

#[derive(Debug, Clone)]
struct CellFit {
    fit: FitResult,
    /// Two-sided Wald p-values for each common slope (NaN when undefined).
    wald_p: Vec<f64>,
}

fn run_cells(spec: &ExperimentSpec, rep: usize) -> Result<Vec<std::result::Result<CellFit, String>>> {
    let master = master_dataset(spec, rep)?;
    let grid = spec.grid();
    let mut out = Vec::with_capacity(grid.len());
    // Thresholds per ladder top, selected once on the master clusters.
    let mut ladders: BTreeMap<usize, IndexMap<String, f64>> = BTreeMap::new();
    if let ExceedanceDesign::Ladder { k_min, t_grid, .. } = &spec.design {
        for &t in t_grid {
            let choices = select_thresholds_detailed(&master, &CandidateLadder::new(*k_min, t, 1)?)?;
            ladders.insert(t, choices.into_iter().map(|(id, c)| (id, c.omega)).collect());
        }
    }
    for (j, t) in grid {
        let attempt = || -> Result<CellFit> {
            let (data, plan) = match &spec.design {
                ExceedanceDesign::Exact { .. } => {
                    let d = truncate(&master, j, Some(t))?;
                    let p = uniform_threshold(&d, 1.0)?;
                    (d, p)
                }
                ExceedanceDesign::Ladder { .. } => {
                    let d = truncate(&master, j, None)?;
                    let p = effective_counts(&d, &ladders[&t])?;
                    (d, p)
                }
            };
            let fit = fit_mem(&data, &plan, &spec.quad, &spec.opt)?;
            let wald_p = match lambda_b_hat(&data, &plan) {
                Ok(l) => (0..data.p_b())
                    .map(|k| wald_statistic(fit.params.beta_b(), &l, &plan, k).map_or(f64::NAN, |w| w.p_value))
                    .collect(),
                Err(_) => vec![f64::NAN; data.p_b()],
            };
            Ok(CellFit { fit, wald_p })
        };
        out.push(attempt().map_err(|e| e.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub bias_sq: f64,
    /// Divisor `n`, so that `bias_sq + variance = mse`; NaN for one value.
    pub variance: f64,
    pub mse: f64,
    /// Monte Carlo standard error of the mean.
    pub mc_se: f64,
}

impl ParamSummary {
    fn from_values(name: String, truth: f64, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let m = mean(&values);
        let variance = if n < 2 { f64::NAN } else { variance_pop(&values) };
        let mse = if n == 0 {
            f64::NAN
        } else {
            values.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / n as f64
        };
        Self {
            name,
            truth,
            mean: m,
            bias: m - truth,
            bias_sq: (m - truth) * (m - truth),
            variance,
            mse,
            mc_se: (variance / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub j: usize,
    /// `n_j0` for the exact design, ladder top `T` otherwise.
    pub t: usize,
    pub attempted: usize,
    /// Converged fits entering the summaries.
    pub used: usize,
    pub failed: usize,
    pub nonconverged: usize,
    pub boundary_count: usize,
    pub mean_n0: f64,
    pub params: Vec<ParamSummary>,
    pub standardized: Option<StandardizedSamples>,
    /// Share of used fits rejecting `β_Bk = 0` at [`WALD_LEVEL`].
    pub wald_reject_rate: Vec<f64>,
}

impl CellSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub design: String,
    pub replications: usize,
    pub cells: Vec<CellSummary>,
}

impl McSummary {
    pub fn cell(&self, j: usize, t: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.j == j && c.t == t)
    }
}

fn param_names(p_a: usize, p_b: usize) -> Vec<String> {
    let idx = |base: &str, n: usize, k: usize| if n == 1 { base.to_string() } else { format!("{base}_{}", k + 1) };
    let mut names: Vec<String> = (0..p_a).map(|k| idx("beta_a", p_a, k)).collect();
    names.extend((0..p_b).map(|k| idx("beta_b", p_b, k)));
    if p_a == 1 {
        names.push("sigma2".into());
    } else {
        for col in 0..p_a {
            for row in col..p_a {
                names.push(format!("sigma_{}{}", row + 1, col + 1));
            }
        }
    }
    names
}

fn param_vector(p: &MemParams) -> Vec<f64> {
    let mut v: Vec<f64> = p.beta_a().iter().chain(p.beta_b()).copied().collect();
    v.extend(vech(p.sigma()).expect("sigma is symmetric"));
    v
}

/// Run every replication (in parallel) and summarize each grid cell.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<McSummary> {
    spec.validate()?;
    let reps: Vec<Vec<std::result::Result<CellFit, String>>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_cells(spec, r))
        .collect::<Result<Vec<_>>>()?;
    summarize(spec, &reps)
}

fn summarize(spec: &ExperimentSpec, reps: &[Vec<std::result::Result<CellFit, String>>]) -> Result<McSummary> {
    let grid = spec.grid();
    let names = param_names(spec.truth.p_a(), spec.truth.p_b());
    let truth = param_vector(&spec.truth);
    let mut cells = Vec::with_capacity(grid.len());
    for (ci, &(j, t)) in grid.iter().enumerate() {
        let outcomes: Vec<&std::result::Result<CellFit, String>> = reps.iter().map(|r| &r[ci]).collect();
        let failed = outcomes.iter().filter(|o| o.is_err()).count();
        for e in outcomes.iter().filter_map(|o| o.as_ref().err()).take(3) {
            log::warn!("cell (J={j}, T={t}): fit failed: {e}");
        }
        let ok: Vec<&CellFit> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let nonconverged = ok.iter().filter(|c| !c.fit.converged).count();
        let used: Vec<&CellFit> = ok.into_iter().filter(|c| c.fit.converged).collect();
        let vectors: Vec<Vec<f64>> = used.iter().map(|c| param_vector(&c.fit.params)).collect();
        let params = names
            .iter()
            .enumerate()
            .map(|(k, name)| ParamSummary::from_values(name.clone(), truth[k], vectors.iter().map(|v| v[k]).collect()))
            .collect();
        let fits: Vec<FitResult> = used.iter().map(|c| c.fit.clone()).collect();
        let standardized = if spec.truth.p_a() == 1 && spec.truth.sigma()[(0, 0)] > 0.0 && !fits.is_empty() {
            Some(standardize_estimates(&fits, &spec.truth, &ThetaB::IdentityLocationShift)?)
        } else {
            None
        };
        let wald_reject_rate = (0..spec.truth.p_b())
            .map(|k| {
                let ps: Vec<f64> = used.iter().map(|c| c.wald_p[k]).filter(|p| p.is_finite()).collect();
                if ps.is_empty() {
                    f64::NAN
                } else {
                    ps.iter().filter(|&&p| p < WALD_LEVEL).count() as f64 / ps.len() as f64
                }
            })
            .collect();
        let mut n0s: Vec<f64> = used.iter().map(|c| c.fit.threshold_plan.n_0).collect();
        n0s.sort_by(f64::total_cmp);
        cells.push(CellSummary {
            j,
            t,
            attempted: outcomes.len(),
            used: used.len(),
            failed,
            nonconverged,
            boundary_count: used.iter().filter(|c| c.fit.boundary_sigma).count(),
            mean_n0: mean(&n0s),
            params,
            standardized,
            wald_reject_rate,
        });
    }
    if spec.replications == 1 {
        log::warn!("one replication: variances are undefined (NaN)");
    }
    Ok(McSummary {
        design: spec.design_label(),
        replications: spec.replications,
        cells,
    })
}

/// Summary rows `design,J,T,parameter,statistic,value`.
pub fn summary_csv(summary: &McSummary) -> String {
    let mut s = String::from("design,J,T,parameter,statistic,value\n");
    let mut row = |c: &CellSummary, p: &str, stat: &str, v: f64| {
        let _ = writeln!(s, "{},{},{},{p},{stat},{}", summary.design, c.j, c.t, fmt_value(v));
    };
    for c in &summary.cells {
        row(c, "all", "attempted", c.attempted as f64);
        row(c, "all", "used", c.used as f64);
        row(c, "all", "failed", c.failed as f64);
        row(c, "all", "nonconverged", c.nonconverged as f64);
        row(c, "all", "boundary_sigma_count", c.boundary_count as f64);
        row(c, "all", "mean_n0", c.mean_n0);
        for p in &c.params {
            row(c, &p.name, "truth", p.truth);
            row(c, &p.name, "mean", p.mean);
            row(c, &p.name, "bias", p.bias);
            row(c, &p.name, "bias_sq", p.bias_sq);
            row(c, &p.name, "variance", p.variance);
            row(c, &p.name, "mse", p.mse);
            row(c, &p.name, "mc_se", p.mc_se);
        }
        if let Some(st) = &c.standardized {
            row(c, "beta_a", "ks_standardized", st.ks_beta_a);
            let nb = st.ks_beta_b.len();
            for (k, v) in st.ks_beta_b.iter().enumerate() {
                let name = if nb == 1 { "beta_b".to_string() } else { format!("beta_b_{}", k + 1) };
                row(c, &name, "ks_standardized", *v);
            }
            row(c, "sigma2", "ks_standardized", st.ks_sigma2);
        }
        let nb = c.wald_reject_rate.len();
        for (k, v) in c.wald_reject_rate.iter().enumerate() {
            let name = if nb == 1 { "beta_b".to_string() } else { format!("beta_b_{}", k + 1) };
            row(c, &name, "wald_reject_0.05", *v);
        }
    }
    s
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// QQ pairs `(Φ^{-1}((r - 0.5)/n), x_(r))`.
pub fn qq_export(sample: &[f64]) -> Result<Vec<(f64, f64)>> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput("QQ export needs at least two values".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(r, x)| (normal_quantile((r as f64 + 0.5) / n), x))
        .collect())
}

pub fn qq_csv(pairs: &[(f64, f64)]) -> String {
    let mut s = String::from("theoretical,empirical\n");
    for (t, e) in pairs {
        let _ = writeln!(s, "{t},{e}");
    }
    s
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Parse(format!("{key}: cannot parse '{s}'"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse::<T>().map_err(|_| Error::Parse(format!("{key}: cannot parse '{v}'")))
}

/// Parse a flat `key = value` experiment config (lists as `a,b,c`, `#`
/// comments). All problems are reported as parse errors.
pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    let mut kv: IndexMap<String, String> = IndexMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_ascii_lowercase();
        if kv.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    const KNOWN: &[&str] = &[
        "name", "family", "eta", "lambda", "covariate", "beta_a", "beta_b", "sigma2", "sigma_vech", "j_grid",
        "n_j0_grid", "n_j", "k_min", "t_grid", "replications", "seed", "quad_mode", "quad_nodes", "restarts",
        "max_iters",
    ];
    if let Some(k) = kv.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(Error::Parse(format!("unknown key '{k}'")));
    }
    let get = |k: &str| kv.get(k).map(String::as_str);
    let req = |k: &str| get(k).ok_or_else(|| Error::Parse(format!("missing key '{k}'")));

    let kind: TailKind = req("family")?.parse()?;
    let eta = get("eta").map(|v| parse_one::<f64>("eta", v)).transpose()?.unwrap_or(1.0);
    let lambda = get("lambda").map(|v| parse_one::<f64>("lambda", v)).transpose()?.unwrap_or(1.0);
    let family = match kind {
        TailKind::Pareto => TailFamily::pareto(),
        TailKind::StudentT => TailFamily::student_t(),
        TailKind::Burr => TailFamily::burr(eta, lambda).map_err(|e| Error::Parse(e.to_string()))?,
    };
    let covariate: CovariateGen = get("covariate").unwrap_or("normal").parse()?;
    let beta_a: Vec<f64> = parse_list("beta_a", req("beta_a")?)?;
    let beta_b: Vec<f64> = get("beta_b").map(|v| parse_list("beta_b", v)).transpose()?.unwrap_or_default();
    let p_a = beta_a.len();
    let sigma = match (get("sigma2"), get("sigma_vech")) {
        (Some(v), None) if p_a == 1 => nalgebra::DMatrix::from_element(1, 1, parse_one::<f64>("sigma2", v)?),
        (None, Some(v)) => crate::model::unvech(&parse_list::<f64>("sigma_vech", v)?, p_a)
            .map_err(|e| Error::Parse(e.to_string()))?,
        _ => {
            return Err(Error::Parse(
                "give 'sigma2' (one random effect) or 'sigma_vech' (several)".into(),
            ))
        }
    };
    let truth = MemParams::new(beta_a, beta_b, sigma).map_err(|e| Error::Parse(e.to_string()))?;
    let design = match (get("n_j0_grid"), get("t_grid")) {
        (Some(v), None) => ExceedanceDesign::Exact {
            n_j0_grid: parse_list("n_j0_grid", v)?,
        },
        (None, Some(v)) => ExceedanceDesign::Ladder {
            n_j: parse_one("n_j", req("n_j")?)?,
            k_min: get("k_min").map(|v| parse_one("k_min", v)).transpose()?.unwrap_or(10),
            t_grid: parse_list("t_grid", v)?,
        },
        _ => return Err(Error::Parse("give exactly one of 'n_j0_grid' and 't_grid'".into())),
    };
    let mut quad = QuadratureSpec::default();
    if let Some(v) = get("quad_mode") {
        quad.mode = v.parse::<QuadMode>()?;
    }
    if let Some(v) = get("quad_nodes") {
        quad.nodes_per_dim = parse_one("quad_nodes", v)?;
    }
    let mut opt = OptimizerSpec::default();
    if let Some(v) = get("restarts") {
        opt.restarts = parse_one("restarts", v)?;
    }
    if let Some(v) = get("max_iters") {
        opt.max_iters = parse_one("max_iters", v)?;
    }
    let spec = ExperimentSpec {
        name: get("name").unwrap_or("experiment").to_string(),
        family,
        covariate,
        truth,
        j_grid: parse_list("j_grid", req("j_grid")?)?,
        design,
        replications: parse_one("replications", req("replications")?)?,
        seed: get("seed").map(|v| parse_one("seed", v)).transpose()?.unwrap_or(1),
        quad,
        opt,
    };
    spec.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(reps: usize) -> ExperimentSpec {
        ExperimentSpec {
            name: "t".into(),
            family: TailFamily::pareto(),
            covariate: CovariateGen::Normal01,
            truth: MemParams::location_shift(-0.5, vec![0.2], 0.2).unwrap(),
            j_grid: vec![10, 20],
            design: ExceedanceDesign::Exact { n_j0_grid: vec![10, 20] },
            replications: reps,
            seed: 5,
            quad: QuadratureSpec::default(),
            opt: OptimizerSpec::default(),
        }
    }

    #[test]
    fn mse_decomposition_holds() {
        let s = run_experiment(&small_spec(20)).unwrap();
        assert_eq!(s.cells.len(), 4);
        for c in &s.cells {
            assert_eq!(c.attempted, 20);
            for p in &c.params {
                assert!((p.bias_sq + p.variance - p.mse).abs() <= 1e-12 * (1.0 + p.mse), "{p:?}");
            }
        }
    }

    #[test]
    fn replication_order_does_not_matter() {
        let spec = small_spec(6);
        let reps: Vec<_> = (0..6).map(|r| run_cells(&spec, r).unwrap()).collect();
        let a = summarize(&spec, &reps).unwrap();
        let mut rev = reps.clone();
        rev.reverse();
        let b = summarize(&spec, &rev).unwrap();
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.params, cb.params);
            let sa = ca.standardized.as_ref().unwrap();
            let sb = cb.standardized.as_ref().unwrap();
            assert_eq!(sa.ks_beta_a, sb.ks_beta_a);
            assert_eq!(sa.ks_sigma2, sb.ks_sigma2);
        }
    }

    #[test]
    fn cells_are_reproducible() {
        let spec = small_spec(3);
        let a = run_cells(&spec, 2).unwrap();
        let b = run_cells(&spec, 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.as_ref().unwrap().fit, y.as_ref().unwrap().fit);
        }
        assert_eq!(master_dataset(&spec, 1).unwrap(), master_dataset(&spec, 1).unwrap());
    }

    #[test]
    fn single_replication_has_nan_variance() {
        let s = run_experiment(&small_spec(1)).unwrap();
        assert!(s.cells[0].params[0].variance.is_nan());
        assert!(summary_csv(&s).contains("variance,NaN"));
    }

    #[test]
    fn zero_replications_rejected() {
        assert!(run_experiment(&small_spec(0)).is_err());
    }

    #[test]
    fn qq_examples() {
        let n = 7;
        let q: Vec<f64> = (0..n).map(|r| normal_quantile((r as f64 + 0.5) / n as f64)).collect();
        for (t, e) in qq_export(&q).unwrap() {
            assert_eq!(t, e);
        }
        let c = qq_export(&[2.0; 5]).unwrap();
        assert!(c.iter().all(|p| p.1 == 2.0));
        assert!(qq_export(&[1.0]).is_err());
    }

    #[test]
    fn qq_envelope_for_normal_samples() {
        // Extreme order statistics of 500 normals have sd near 0.4, so the
        // 0.25 envelope is checked on the central 80% of plotting positions.
        let mut r = stream(&[100]);
        let mut inside = 0;
        for _ in 0..400 {
            let s: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut r)).collect();
            let qq = qq_export(&s).unwrap();
            let m = qq[50..450].iter().map(|(t, e)| (t - e).abs()).fold(0.0, f64::max);
            if m <= 0.25 {
                inside += 1;
            }
        }
        assert!(inside >= 394, "{inside}");
    }

    #[test]
    fn config_parsing() {
        let text = "name = a\nfamily = pareto\ncovariate = uniform\nbeta_a = -0.5\nbeta_b = 0.2\nsigma2 = 0.2\n\
                    j_grid = 20\nn_j0_grid = 20\nreplications = 3\nseed = 9 # comment\n";
        let s = parse_config(text).unwrap();
        assert_eq!(s.covariate, CovariateGen::UniformSqrt3);
        assert_eq!(s.design, ExceedanceDesign::Exact { n_j0_grid: vec![20] });
        assert!(parse_config(&text.replace("pareto", "gumbel")).is_err());
        assert!(parse_config(&text.replace("replications = 3", "replications = 0")).is_err());
        assert!(parse_config(&format!("{text}colour = red\n")).is_err());
        let ladder = "family = burr\nbeta_a = -0.5\nbeta_b = 0.2\nsigma2 = 0.2\nj_grid = 10\nn_j = 300\nt_grid = 20,100\nreplications = 2\n";
        let s = parse_config(ladder).unwrap();
        assert_eq!(
            s.design,
            ExceedanceDesign::Ladder {
                n_j: 300,
                k_min: 10,
                t_grid: vec![20, 100]
            }
        );
    }
}
