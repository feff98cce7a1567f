use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use evtmem::compare::{compare_models, split_half_stability, Model};
use evtmem::error::{Error, Result};
use evtmem::estimation::{fit_mem, OptMethod, OptimizerSpec};
use evtmem::inference::{cluster_evi_with, gof_transform_with, lambda_b_hat, predict_u_with, wald_statistic};
use evtmem::io::{apply_scaling, fit_scaling, read_table_path, FitReport, InputTable};
use evtmem::likelihood::{ExceedanceCache, LikelihoodEvaluator, QuadMode, QuadratureSpec};
use evtmem::mc::{parse_config, qq_csv, qq_export, run_experiment, summary_csv};
use evtmem::model::{MemParams, ThresholdPlan};
use evtmem::rng::{open01, stream};
use evtmem::tail::{tail_quantile, TailFamily};
use evtmem::threshold::{select_thresholds, select_thresholds_detailed, CandidateLadder};
use rand_distr::{Distribution, StandardNormal};

use crate::{FitFlags, OptimizerArg, QuadModeArg, ReportInput};

pub const EXIT_PARSE: u8 = 2;
pub const EXIT_PRECONDITION: u8 = 3;
pub const EXIT_NONCONVERGED: u8 = 4;

pub struct Outcome {
    pub paths: Vec<PathBuf>,
    pub code: u8,
}

impl Outcome {
    fn ok(paths: Vec<PathBuf>) -> Self {
        Self { paths, code: 0 }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Io(_) => EXIT_PARSE,
        Error::Numerical(_) => EXIT_NONCONVERGED,
        Error::Dimension(_) | Error::InvalidInput(_) | Error::Precondition(_) | Error::SingularCovariance(_) => {
            EXIT_PRECONDITION
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// `<input stem>.<suffix>` next to the input.
fn default_out(input: &Path, suffix: &str) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("evtmem");
    input.with_file_name(format!("{stem}.{suffix}"))
}

fn quad_spec(flags: &FitFlags) -> Result<QuadratureSpec> {
    let q = QuadratureSpec {
        mode: match flags.quad_mode {
            QuadModeArg::Agh => QuadMode::AdaptiveGaussHermite,
            QuadModeArg::Laplace => QuadMode::Laplace,
            QuadModeArg::Oracle => QuadMode::DenseGridOracle,
        },
        nodes_per_dim: flags.quad_nodes,
        ..QuadratureSpec::default()
    };
    q.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(q)
}

fn optimizer_spec(flags: &FitFlags) -> OptimizerSpec {
    OptimizerSpec {
        method: match flags.optimizer {
            OptimizerArg::NelderMead => OptMethod::NelderMead,
            OptimizerArg::Compass => OptMethod::CoordinateSearch,
        },
        max_iters: flags.max_iters,
        ..OptimizerSpec::default()
    }
}

fn ladder(k_min: usize, k_max: usize) -> Result<CandidateLadder> {
    CandidateLadder::new(k_min, k_max, 1).map_err(|e| Error::Parse(e.to_string()))
}

/// Read the input and apply standardization when requested.
fn load(input: &Path, standardize: bool) -> Result<(InputTable, InputTable, Option<evtmem::io::Scaling>)> {
    let raw = read_table_path(input)?;
    if !standardize {
        return Ok((raw.clone(), raw, None));
    }
    let scaling = fit_scaling(&raw)?;
    let scaled = apply_scaling(&raw, &scaling)?;
    Ok((raw, scaled, Some(scaling)))
}

pub fn fit(input: &Path, flags: &FitFlags, out: Option<PathBuf>) -> Result<Outcome> {
    let quad = quad_spec(flags)?;
    let ladder = ladder(flags.k_min, flags.k_max)?;
    let (raw, table, scaling) = load(input, flags.standardize)?;
    LikelihoodEvaluator::new(quad)?.check_supported(table.dataset.p_a())?;
    let plan = select_thresholds(&table.dataset, &ladder)?;
    let fit = fit_mem(&table.dataset, &plan, &quad, &optimizer_spec(flags))?;
    let report = FitReport::new(&fit, &raw, scaling);
    let path = out.unwrap_or_else(|| default_out(input, "fit.json"));
    write(&path, &report.to_json()?)?;
    if !fit.converged {
        log::error!("optimizer did not converge; the report holds the best point found");
        return Ok(Outcome {
            paths: vec![path],
            code: EXIT_NONCONVERGED,
        });
    }
    if fit.boundary_sigma {
        log::warn!("random-effect covariance estimated on the boundary (zero)");
    }
    Ok(Outcome::ok(vec![path]))
}

pub fn thresholds(input: &Path, k_min: usize, k_max: usize, out: Option<PathBuf>) -> Result<Outcome> {
    let ladder = ladder(k_min, k_max)?;
    let table = read_table_path(input)?;
    let picks = select_thresholds_detailed(&table.dataset, &ladder)?;
    let mut s = String::from("cluster,omega,n_j0,discrepancy\n");
    for (id, c) in &picks {
        let _ = writeln!(s, "{id},{},{},{}", c.omega, c.k, c.discrepancy);
    }
    let path = out.unwrap_or_else(|| default_out(input, "thresholds.csv"));
    write(&path, &s)?;
    Ok(Outcome::ok(vec![path]))
}

struct Loaded {
    report: FitReport,
    table: InputTable,
    params: MemParams,
    plan: ThresholdPlan,
}

fn load_report(a: &ReportInput) -> Result<Loaded> {
    let text = std::fs::read_to_string(&a.report)?;
    let report = FitReport::from_json(&text)?;
    let raw = read_table_path(&a.input)?;
    let table = report.prepare_table(&raw)?;
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

pub fn predict(a: &ReportInput) -> Result<Outcome> {
    let l = load_report(a)?;
    let cache = ExceedanceCache::build(&l.table.dataset, &l.plan)?;
    let preds = predict_u_with(&l.params, &cache)?;
    let mut s = String::from("cluster");
    for name in &l.table.a_names {
        let _ = write!(s, ",u_{name}");
    }
    s.push_str(",converged\n");
    for (id, u) in &preds.u_tilde {
        s.push_str(id);
        for v in u {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{}", preds.inner_converged[id]);
    }
    let path = a.out.clone().unwrap_or_else(|| default_out(&a.input, "predict.csv"));
    write(&path, &s)?;
    Ok(Outcome::ok(vec![path]))
}

pub fn test(a: &ReportInput) -> Result<Outcome> {
    let l = load_report(a)?;
    let lambda = lambda_b_hat(&l.table.dataset, &l.plan)?;
    let mut s = String::from("covariate,estimate,t,p_value\n");
    for (k, (name, beta)) in l.report.params.beta_b.iter().enumerate() {
        let w = wald_statistic(l.params.beta_b(), &lambda, &l.plan, k)?;
        let _ = writeln!(s, "{name},{beta},{},{}", w.t_stat, w.p_value);
    }
    let path = a.out.clone().unwrap_or_else(|| default_out(&a.input, "wald.csv"));
    write(&path, &s)?;
    Ok(Outcome::ok(vec![path]))
}

pub fn evi(a: &ReportInput) -> Result<Outcome> {
    let l = load_report(a)?;
    let cache = ExceedanceCache::build(&l.table.dataset, &l.plan)?;
    let preds = predict_u_with(&l.params, &cache)?;
    let ev = cluster_evi_with(&l.params, &preds, &l.table.dataset, &l.plan)?;
    let mut rows: Vec<(&String, f64)> = ev.gamma.iter().map(|(id, g)| (id, *g)).collect();
    rows.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(y.0)));
    let mut s = String::from("rank,cluster,gamma\n");
    for (r, (id, g)) in rows.iter().enumerate() {
        let _ = writeln!(s, "{},{id},{g}", r + 1);
    }
    let path = a.out.clone().unwrap_or_else(|| default_out(&a.input, "evi.csv"));
    write(&path, &s)?;
    Ok(Outcome::ok(vec![path]))
}

pub fn gof(a: &ReportInput) -> Result<Outcome> {
    let l = load_report(a)?;
    let cache = ExceedanceCache::build(&l.table.dataset, &l.plan)?;
    let preds = predict_u_with(&l.params, &cache)?;
    let g = gof_transform_with(&l.params, &preds, &l.table.dataset, &l.plan)?;
    let n = g.s_sorted.len() as f64;
    let qq: Vec<serde_json::Value> = g
        .s_sorted
        .iter()
        .enumerate()
        .map(|(r, s)| serde_json::json!([(r as f64 + 0.5) / n, s]))
        .collect();
    let doc = serde_json::json!({
        "n": g.s_sorted.len(),
        "ks_distance": g.ks_distance,
        "ks_p_value": g.ks_p_value,
        "qq_uniform": qq,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))? + "\n";
    let path = a.out.clone().unwrap_or_else(|| default_out(&a.input, "gof.json"));
    write(&path, &text)?;
    Ok(Outcome::ok(vec![path]))
}

fn fmt_opt(v: Option<&f64>) -> String {
    v.map_or_else(String::new, |g| g.to_string())
}

pub fn compare(input: &Path, flags: &FitFlags, out: Option<PathBuf>) -> Result<Outcome> {
    let quad = quad_spec(flags)?;
    let ladder = ladder(flags.k_min, flags.k_max)?;
    let opt = optimizer_spec(flags);
    let (_, table, _) = load(input, flags.standardize)?;
    let plan = select_thresholds(&table.dataset, &ladder)?;
    let cmp = compare_models(&table.dataset, &plan, &quad, &opt)?;
    let split = split_half_stability(&table.dataset, &ladder, &quad, &opt)?;

    let mut s = String::from("cluster,M1,M2,M3,M4\n");
    for id in &cmp.cluster_ids {
        s.push_str(id);
        for m in Model::ALL {
            let _ = write!(s, ",{}", fmt_opt(cmp.column(m).gamma.get(id)));
        }
        s.push('\n');
    }
    let path = out.unwrap_or_else(|| default_out(input, "compare.csv"));
    let stab_path = path.with_file_name(format!(
        "{}.stability.csv",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("compare")
    ));
    let mut st = String::from("model,split_half_rank_correlation\n");
    for (m, v) in Model::ALL.iter().zip(&split.stability) {
        let _ = writeln!(st, "{},{}", m.label(), fmt_opt(v.as_ref()));
    }
    write(&path, &s)?;
    write(&stab_path, &st)?;
    let mut code = 0;
    for c in &cmp.columns {
        if let Some(e) = &c.error {
            log::error!("{} not estimated: {e}", c.model.label());
            code = EXIT_PRECONDITION;
        }
    }
    Ok(Outcome {
        paths: vec![path, stab_path],
        code,
    })
}

pub fn simulate(config: &Path, out_dir: &Path) -> Result<Outcome> {
    let text = std::fs::read_to_string(config)?;
    let spec = parse_config(&text)?;
    let summary = run_experiment(&spec)?;
    let path = out_dir.join("summary.csv");
    write(&path, &summary_csv(&summary))?;
    for c in &summary.cells {
        if let Some(st) = &c.standardized {
            let mut samples = vec![("beta_a".to_string(), &st.beta_a), ("sigma2".to_string(), &st.sigma2)];
            let nb = st.beta_b.len();
            for (k, b) in st.beta_b.iter().enumerate() {
                let name = if nb == 1 { "beta_b".to_string() } else { format!("beta_b_{}", k + 1) };
                samples.push((name, b));
            }
            for (name, sample) in samples {
                if sample.len() >= 2 {
                    let qq = qq_export(sample)?;
                    write(&out_dir.join(format!("qq_J{}_T{}_{name}.csv", c.j, c.t)), &qq_csv(&qq))?;
                }
            }
        }
        if c.failed + c.nonconverged > 0 {
            log::warn!(
                "cell (J={}, T={}): {} failed and {} non-converged fits excluded",
                c.j,
                c.t,
                c.failed,
                c.nonconverged
            );
        }
    }
    Ok(Outcome::ok(vec![path]))
}

/// Station-day table: precipitation from a Burr law whose EVI rises with
/// vapor pressure and wind speed (true slopes 0.25 and 0.15 on the
/// standardized scale), station effects with variance 0.3.
pub fn gen_data(out: &Path, clusters: usize, days: usize, seed: u64) -> Result<Outcome> {
    if clusters == 0 || days == 0 {
        return Err(Error::Parse("clusters and days must be positive".into()));
    }
    let family = TailFamily::burr(1.0, 1.0)?;
    let mut s = String::from("cluster,y,roleB:vapor_pressure,roleB:wind_speed\n");
    for j in 0..clusters {
        let mut r = stream(&[seed, j as u64]);
        let z: f64 = StandardNormal.sample(&mut r);
        let u = 0.3_f64.sqrt() * z;
        for _ in 0..days {
            let vp: f64 = StandardNormal.sample(&mut r);
            let ws: f64 = StandardNormal.sample(&mut r);
            let gamma = (-0.7 + u + 0.25 * vp + 0.15 * ws).exp();
            let y = 10.0 * tail_quantile(&family, gamma, open01(&mut r))?;
            let _ = writeln!(
                s,
                "st{:02},{:.4},{:.2},{:.2}",
                j + 1,
                y.max(1e-4),
                15.0 + 5.0 * vp,
                3.0 + 1.2 * ws
            );
        }
    }
    write(out, &s)?;
    Ok(Outcome::ok(vec![out.to_path_buf()]))
}
