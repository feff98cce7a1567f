//! Thin Python layer over the `evtmem` workflow: fit a CSV to a JSON
//! report, then query cluster EVIs and slope tests against it.

use evtmem::error::Error;
use evtmem::estimation::{fit_mem, hill_fit, OptimizerSpec};
use evtmem::inference::{cluster_evi_with, lambda_b_hat, predict_u_with, wald_statistic};
use evtmem::io::{apply_scaling, fit_scaling, read_table_path, FitReport, InputTable};
use evtmem::likelihood::{ExceedanceCache, QuadratureSpec};
use evtmem::model::{MemParams, Observation, ThresholdPlan};
use evtmem::tail::{TailFamily, TailKind};
use evtmem::threshold::{select_cluster, select_thresholds, CandidateLadder};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Numerical(m) => PyRuntimeError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn quad(mode: &str) -> PyResult<QuadratureSpec> {
    Ok(match mode {
        "agh" => QuadratureSpec::default(),
        "laplace" => QuadratureSpec::laplace(),
        "oracle" => QuadratureSpec::oracle(),
        other => return Err(PyValueError::new_err(format!("unknown quadrature mode '{other}'"))),
    })
}

/// Select thresholds and fit the model to a CSV file. Returns the fit
/// report as JSON text (the same document `evtmem fit` writes).
#[pyfunction]
#[pyo3(signature = (path, k_min = 10, k_max = 20, standardize = false, quad_mode = "agh"))]
fn fit(py: Python<'_>, path: &str, k_min: usize, k_max: usize, standardize: bool, quad_mode: &str) -> PyResult<String> {
    let quad = quad(quad_mode)?;
    let path = std::path::PathBuf::from(path);
    py.detach(move || {
        let ladder = CandidateLadder::new(k_min, k_max, 1)?;
        let raw = read_table_path(&path)?;
        let (table, scaling) = if standardize {
            let s = fit_scaling(&raw)?;
            (apply_scaling(&raw, &s)?, Some(s))
        } else {
            (raw.clone(), None)
        };
        let plan = select_thresholds(&table.dataset, &ladder)?;
        let fit = fit_mem(&table.dataset, &plan, &quad, &OptimizerSpec::default())?;
        FitReport::new(&fit, &raw, scaling).to_json()
    })
    .map_err(to_py)
}

struct Loaded {
    report: FitReport,
    table: InputTable,
    params: MemParams,
    plan: ThresholdPlan,
}

fn load(report: &str, path: &str) -> evtmem::error::Result<Loaded> {
    let report = FitReport::from_json(report)?;
    let table = report.prepare_table(&read_table_path(std::path::Path::new(path))?)?;
    let params = report.to_params()?;
    let plan = report.to_plan();
    plan.check_matches(&table.dataset)?;
    Ok(Loaded {
        report,
        table,
        params,
        plan,
    })
}

/// Cluster-wise extreme value index `[(cluster, gamma)]` under a fitted report.
#[pyfunction]
fn cluster_evi(report: &str, path: &str) -> PyResult<Vec<(String, f64)>> {
    let run = || {
        let l = load(report, path)?;
        let cache = ExceedanceCache::build(&l.table.dataset, &l.plan)?;
        let preds = predict_u_with(&l.params, &cache)?;
        let ev = cluster_evi_with(&l.params, &preds, &l.table.dataset, &l.plan)?;
        Ok(ev.gamma.into_iter().collect())
    };
    run().map_err(to_py)
}

/// Wald test per common slope: `[(name, estimate, t, p_value)]`.
#[pyfunction]
fn wald_tests(report: &str, path: &str) -> PyResult<Vec<(String, f64, f64, f64)>> {
    let run = || {
        let l = load(report, path)?;
        let lambda = lambda_b_hat(&l.table.dataset, &l.plan)?;
        l.report
            .params
            .beta_b
            .iter()
            .enumerate()
            .map(|(k, (name, b))| {
                let w = wald_statistic(l.params.beta_b(), &lambda, &l.plan, k)?;
                Ok((name.clone(), *b, w.t_stat, w.p_value))
            })
            .collect::<evtmem::error::Result<Vec<_>>>()
    };
    run().map_err(to_py)
}

/// Hill estimate from the responses exceeding `omega`.
#[pyfunction]
fn hill(ys: Vec<f64>, omega: f64) -> PyResult<f64> {
    let obs = ys
        .into_iter()
        .map(|y| Observation::new(y, vec![1.0], vec![]))
        .collect::<evtmem::error::Result<Vec<_>>>()
        .map_err(to_py)?;
    hill_fit(&obs, omega).map_err(to_py)
}

/// Threshold for one sample: `(k, omega, discrepancy)`.
#[pyfunction]
#[pyo3(signature = (ys, k_min = 10, k_max = 20))]
fn select_threshold(ys: Vec<f64>, k_min: usize, k_max: usize) -> PyResult<(usize, f64, f64)> {
    let ladder = CandidateLadder::new(k_min, k_max, 1).map_err(to_py)?;
    let c = select_cluster(&ys, &ladder).map_err(to_py)?;
    Ok((c.k, c.omega, c.discrepancy))
}

/// Quantile of a tail family with extreme value index `gamma`.
#[pyfunction]
#[pyo3(signature = (family, gamma, p, eta = 1.0, lam = 1.0))]
fn tail_quantile(family: &str, gamma: f64, p: f64, eta: f64, lam: f64) -> PyResult<f64> {
    let fam = match family.parse::<TailKind>().map_err(to_py)? {
        TailKind::Pareto => TailFamily::pareto(),
        TailKind::StudentT => TailFamily::student_t(),
        TailKind::Burr => TailFamily::burr(eta, lam).map_err(to_py)?,
    };
    evtmem::tail::tail_quantile(&fam, gamma, p).map_err(to_py)
}

#[pymodule]
fn evtmem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_evi, m)?)?;
    m.add_function(wrap_pyfunction!(wald_tests, m)?)?;
    m.add_function(wrap_pyfunction!(hill, m)?)?;
    m.add_function(wrap_pyfunction!(select_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(tail_quantile, m)?)?;
    Ok(())
}
