use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evtmem::estimation::hill_fit;
use evtmem::io::read_table_path;
use evtmem::rng::{open01, stream};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_evtmem");

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("EVTMEM_THREADS").output().expect("spawn evtmem")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Pareto clusters with gamma = exp(-0.5 + u_j + 0.2 x), all above 1.
fn pareto_csv(dir: &Path, clusters: usize, n: usize, with_a: bool) -> PathBuf {
    let mut out = String::from("cluster,y");
    if with_a {
        out.push_str(",roleA:slope");
    }
    out.push_str(",roleB:x\n");
    for j in 0..clusters {
        let mut r = stream(&[99, j as u64]);
        let u = 0.4 * (open01(&mut r) - 0.5);
        for _ in 0..n {
            let x = 2.0 * open01(&mut r) - 1.0;
            let gamma = (-0.5 + u + 0.2 * x).exp();
            let y = open01(&mut r).powf(-gamma);
            let _ = write!(out, "c{j:02},{y}");
            if with_a {
                let _ = write!(out, ",{}", open01(&mut r));
            }
            let _ = writeln!(out, ",{x}");
        }
    }
    let path = dir.join(if with_a { "pareto_a.csv" } else { "pareto.csv" });
    std::fs::write(&path, out).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fit_then_downstream_commands() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 12, 60, false);
    let o = run(&["fit", s(&input)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("pareto.fit.json");
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), s(&report));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["converged"], true);
    assert_eq!(json["thresholds"].as_object().unwrap().len(), 12);

    for (cmd, suffix) in [("predict", "predict.csv"), ("test", "wald.csv"), ("evi", "evi.csv"), ("gof", "gof.json")] {
        let o = run(&[cmd, s(&report), s(&input)]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(format!("pareto.{suffix}")).exists(), "{cmd}");
    }
    let evi = read_csv(&dir.path().join("pareto.evi.csv"));
    assert_eq!(evi[0], ["rank", "cluster", "gamma"]);
    let g: Vec<f64> = evi[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(g.windows(2).all(|w| w[0] >= w[1]));
    let wald = read_csv(&dir.path().join("pareto.wald.csv"));
    assert_eq!(wald[1][0], "x");
}

#[test]
fn gof_on_exact_pareto_does_not_reject() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 20, 200, false);
    let o = run(&["fit", s(&input), "--k-min", "100", "--k-max", "190"]);
    assert_eq!(code(&o), 0);
    let o = run(&["gof", s(&dir.path().join("pareto.fit.json")), s(&input)]);
    assert_eq!(code(&o), 0);
    let gof: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pareto.gof.json")).unwrap()).unwrap();
    assert!(gof["ks_p_value"].as_f64().unwrap() >= 0.01, "{}", gof["ks_p_value"]);
    assert_eq!(gof["qq_uniform"].as_array().unwrap().len() as u64, gof["n"].as_u64().unwrap());
}

#[test]
fn outputs_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 10, 50, false);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(code(&run(&["fit", s(&input), "-o", s(&a)])), 0);
    assert_eq!(code(&run(&["--threads", "1", "fit", s(&input), "-o", s(&b)])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn zero_coefficient_has_unit_p_value() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 10, 50, false);
    assert_eq!(code(&run(&["fit", s(&input)])), 0);
    let report = dir.path().join("pareto.fit.json");
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    json["params"]["beta_b"]["x"] = serde_json::json!(0.0);
    std::fs::write(&report, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    assert_eq!(code(&run(&["test", s(&report), s(&input)])), 0);
    let wald = read_csv(&dir.path().join("pareto.wald.csv"));
    assert_eq!(wald[1][3].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn bundled_data_shows_positive_slopes() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("stations.fit.json");
    let wald = dir.path().join("wald.csv");
    let input = repo_file("data/stations.csv");
    assert_eq!(code(&run(&["fit", s(&input), "--standardize", "-o", s(&report)])), 0);
    assert_eq!(code(&run(&["test", s(&report), s(&input), "-o", s(&wald)])), 0);
    let rows = read_csv(&wald);
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        assert!(r[1].parse::<f64>().unwrap() > 0.0, "{r:?}");
        assert!(r[3].parse::<f64>().unwrap() < 0.01, "{r:?}");
    }
}

#[test]
fn bundled_ranking_is_split_half_stable() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("cmp.csv");
    let input = repo_file("data/stations.csv");
    let o = run(&["compare", s(&input), "--standardize", "--k-max", "100", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("cmp.stability.csv"));
    assert_eq!(rows[1][0], "M1");
    let rho: f64 = rows[1][1].parse().unwrap();
    assert!(rho >= 0.8, "{rho}");
}

#[test]
fn hill_column_equals_hill_at_selected_threshold() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 6, 80, false);
    let th = dir.path().join("th.csv");
    assert_eq!(code(&run(&["thresholds", s(&input), "-o", s(&th)])), 0);
    assert_eq!(code(&run(&["compare", s(&input)])), 0);
    let table = read_table_path(&input).unwrap();
    let cmp = read_csv(&dir.path().join("pareto.compare.csv"));
    for (t, c) in read_csv(&th)[1..].iter().zip(&cmp[1..]) {
        assert_eq!(t[0], c[0]);
        let omega: f64 = t[1].parse().unwrap();
        let obs = &table.dataset.find(&t[0]).unwrap().observations;
        assert_eq!(c[4].parse::<f64>().unwrap(), hill_fit(obs, omega).unwrap());
    }
}

#[test]
fn single_cluster_compare_keeps_fixed_and_hill() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 1, 60, false);
    let o = run(&["compare", s(&input)]);
    assert_eq!(code(&o), 3);
    let rows = read_csv(&dir.path().join("pareto.compare.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[1][1].is_empty() && rows[1][2].is_empty());
    assert!(rows[1][3].parse::<f64>().is_ok() && rows[1][4].parse::<f64>().is_ok());
}

#[test]
fn empty_input_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "").unwrap();
    assert_eq!(code(&run(&["fit", s(&input)])), 2);
    assert_eq!(code(&run(&["fit", s(&dir.path().join("missing.csv"))])), 2);
    assert_eq!(code(&run(&["fit"])), 2);
}

#[test]
fn oracle_rejects_multivariate_random_effects() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 8, 40, true);
    let o = run(&["fit", s(&input), "--quad-mode", "oracle"]);
    assert_eq!(code(&o), 3);
    assert!(!dir.path().join("pareto_a.fit.json").exists());
}

#[test]
fn report_schema_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let plain = pareto_csv(dir.path(), 8, 40, false);
    let with_a = pareto_csv(dir.path(), 8, 40, true);
    assert_eq!(code(&run(&["fit", s(&plain)])), 0);
    let report = dir.path().join("pareto.fit.json");
    for cmd in ["predict", "test", "evi", "gof"] {
        assert_eq!(code(&run(&[cmd, s(&report), s(&with_a)])), 3, "{cmd}");
    }
}

#[test]
fn exhausted_iteration_budget_exits_nonconverged() {
    let dir = TempDir::new().unwrap();
    let input = pareto_csv(dir.path(), 8, 40, false);
    let o = run(&["fit", s(&input), "--max-iters", "2"]);
    assert_eq!(code(&o), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("pareto.fit.json")).unwrap()).unwrap();
    assert_eq!(json["converged"], false);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.conf");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn single_replication_reports_nan_variance() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(
        dir.path(),
        "family = pareto\ncovariate = normal\nbeta_a = -0.5\nbeta_b = 0.2\nsigma2 = 0.2\n\
         j_grid = 10\nn_j0_grid = 20\nreplications = 1\nseed = 3\n",
    );
    let out = dir.path().join("sim");
    let o = run(&["simulate", s(&conf), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("summary.csv"));
    let var = rows.iter().find(|r| r[3] == "beta_a" && r[4] == "variance").unwrap();
    assert_eq!(var[5], "NaN");
}

#[test]
fn unknown_family_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(dir.path(), "family = cauchy\nj_grid = 10\nn_j0_grid = 20\nreplications = 2\n");
    assert_eq!(code(&run(&["simulate", s(&conf), "--out-dir", s(&dir.path().join("sim"))])), 2);
}

#[test]
fn shipped_design_a_config_reports_normality_distances() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", s(&repo_file("configs/design_a_20x20.conf")), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("summary.csv"));
    let ks: Vec<&Vec<String>> = rows.iter().filter(|r| r[4] == "ks_standardized").collect();
    assert_eq!(ks.len(), 3);
    for r in &ks {
        let d: f64 = r[5].parse().unwrap();
        assert!(d.is_finite() && d > 0.0 && d < 1.0, "{r:?}");
        if r[3].starts_with("beta") {
            assert!(d <= 0.08, "{r:?}");
        }
    }
    for p in ["beta_a", "beta_b", "sigma2"] {
        let qq = read_csv(&out.join(format!("qq_J20_T20_{p}.csv")));
        assert_eq!(qq.len(), 501);
    }
}
