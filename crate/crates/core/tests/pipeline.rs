//! CSV in, fitted model and every downstream quantity out.

use evtmem::compare::{compare_models, Model};
use evtmem::estimation::{fit_mem, OptimizerSpec};
use evtmem::inference::{cluster_evi_with, gof_transform_with, lambda_b_hat, predict_u_with, wald_statistic};
use evtmem::io::{apply_scaling, fit_scaling, read_table, write_table, FitReport};
use evtmem::likelihood::{ExceedanceCache, QuadratureSpec};
use evtmem::model::MemParams;
use evtmem::rng::stream;
use evtmem::tail::{sample_observations, CovariateGen, TailFamily};
use evtmem::threshold::{select_thresholds, CandidateLadder};
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;

fn burr_csv(j: usize, n: usize, seed: u64) -> String {
    let truth = MemParams::location_shift(-0.7, vec![0.3], 0.25).unwrap();
    let fam = TailFamily::burr(1.0, 1.0).unwrap();
    let mut s = String::from("cluster,y,roleB:humidity\n");
    for c in 0..j {
        let mut r = stream(&[seed, c as u64]);
        let z: f64 = StandardNormal.sample(&mut r);
        for o in sample_observations(&fam, &truth, &[0.5 * z], CovariateGen::Normal01, n, &mut r).unwrap() {
            let _ = writeln!(s, "site{c},{},{}", o.y, 40.0 + 8.0 * o.x_b[0]);
        }
    }
    s
}

#[test]
fn end_to_end_on_burr_data() {
    let raw = read_table(burr_csv(30, 400, 8).as_bytes()).unwrap();
    assert_eq!(raw.b_names, ["humidity"]);
    let scaling = fit_scaling(&raw).unwrap();
    let table = apply_scaling(&raw, &scaling).unwrap();
    let plan = select_thresholds(&table.dataset, &CandidateLadder::new(10, 60, 1).unwrap()).unwrap();
    assert_eq!(plan.n_clusters(), 30);

    let quad = QuadratureSpec::default();
    let fit = fit_mem(&table.dataset, &plan, &quad, &OptimizerSpec::default()).unwrap();
    assert!(fit.converged);
    let b = fit.params.beta_b()[0];
    assert!((b - 0.3).abs() < 0.15, "{b}");

    let lambda = lambda_b_hat(&table.dataset, &plan).unwrap();
    let w = wald_statistic(fit.params.beta_b(), &lambda, &plan, 0).unwrap();
    assert!(w.p_value < 0.01, "{w:?}");

    let cache = ExceedanceCache::build(&table.dataset, &plan).unwrap();
    let preds = predict_u_with(&fit.params, &cache).unwrap();
    assert!(preds.inner_converged.values().all(|&c| c));
    let evi = cluster_evi_with(&fit.params, &preds, &table.dataset, &plan).unwrap();
    assert_eq!(evi.gamma.len(), 30);
    assert!(evi.gamma.values().all(|g| g.is_finite() && *g > 0.0));
    let gof = gof_transform_with(&fit.params, &preds, &table.dataset, &plan).unwrap();
    assert!(gof.ks_p_value > 0.001, "{gof:?}");

    let report = FitReport::new(&fit, &raw, Some(scaling));
    let back = FitReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    let again = back.prepare_table(&raw).unwrap();
    assert_eq!(again, table);
    assert_eq!(back.to_params().unwrap(), fit.params);

    let cmp = compare_models(&table.dataset, &plan, &quad, &OptimizerSpec::default()).unwrap();
    assert_eq!(cmp.column(Model::M1).gamma, evi.gamma);
}

#[test]
fn written_tables_read_back_identically() {
    let raw = read_table(burr_csv(4, 30, 2).as_bytes()).unwrap();
    let text = write_table(&raw);
    assert_eq!(read_table(text.as_bytes()).unwrap(), raw);
}
