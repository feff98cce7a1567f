use evtmem::estimation::{fit_mem, OptimizerSpec};
use evtmem::inference::{gof_transform_with, lambda_b_hat, predict_u_with, wald_statistic};
use evtmem::likelihood::{marginal_loglik, ExceedanceCache, QuadratureSpec};
use evtmem::model::{uniform_threshold, Cluster, ClusteredDataset, MemParams, Observation};
use evtmem::rng::stream;
use evtmem::stats::normal_cdf;
use evtmem::tail::{sample_observations, tail_cdf, tail_quantile, tail_sf, CovariateGen, TailFamily};
use evtmem::threshold::{select_cluster, CandidateLadder};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

fn pareto_data(j: usize, n: usize, sigma2: f64, seed: u64) -> ClusteredDataset {
    let truth = MemParams::location_shift(-0.5, vec![0.2, -0.1], sigma2).unwrap();
    let clusters = (0..j)
        .map(|c| {
            let mut r = stream(&[seed, c as u64]);
            let z: f64 = StandardNormal.sample(&mut r);
            let obs =
                sample_observations(&TailFamily::pareto(), &truth, &[z * sigma2.sqrt()], CovariateGen::Normal01, n, &mut r)
                    .unwrap();
            Cluster::new(format!("c{c}"), obs)
        })
        .collect();
    ClusteredDataset::new(clusters, 1, 2).unwrap()
}

fn map_clusters(d: &ClusteredDataset, f: impl Fn(&Cluster) -> Cluster) -> ClusteredDataset {
    ClusteredDataset::new(d.clusters().iter().map(f).collect(), d.p_a(), d.p_b()).unwrap()
}

fn families() -> Vec<TailFamily> {
    vec![TailFamily::pareto(), TailFamily::student_t(), TailFamily::burr(1.0, 1.0).unwrap(), TailFamily::burr(2.0, 0.5).unwrap()]
}

proptest! {
    #[test]
    fn quantile_inverts_cdf(gamma in 0.2f64..1.5, p in 0.01f64..0.99, which in 0usize..4) {
        let fam = &families()[which];
        let y = tail_quantile(fam, gamma, p).unwrap();
        prop_assert!((tail_cdf(fam, gamma, y).unwrap() - p).abs() < 1e-9);
        let y2 = tail_quantile(fam, gamma, (p + 0.005).min(0.999)).unwrap();
        prop_assert!(tail_cdf(fam, gamma, y2).unwrap() >= tail_cdf(fam, gamma, y).unwrap());
    }

    #[test]
    fn pareto_threshold_ratio_is_exact(gamma in 0.1f64..3.0, omega in 1.0f64..50.0, y in 1.0f64..100.0) {
        let fam = TailFamily::pareto();
        let ratio = tail_sf(&fam, gamma, y * omega).unwrap() / tail_sf(&fam, gamma, omega).unwrap();
        let exact = y.powf(-1.0 / gamma);
        prop_assert!((ratio - exact).abs() <= 1e-12 * exact.max(1e-300));
    }

    #[test]
    fn threshold_choice_is_scale_free(seed in 0u64..1000, c in 1e-3f64..1e3) {
        let mut r = stream(&[seed]);
        let ys: Vec<f64> = (0..120).map(|_| tail_quantile(&TailFamily::burr(1.0, 1.0).unwrap(), 0.6, evtmem::rng::open01(&mut r)).unwrap()).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| y * c).collect();
        let ladder = CandidateLadder::new(10, 60, 1).unwrap();
        let a = select_cluster(&ys, &ladder).unwrap();
        let b = select_cluster(&scaled, &ladder).unwrap();
        prop_assert_eq!(a.k, b.k);
        prop_assert!((a.discrepancy - b.discrepancy).abs() <= 1e-9 * a.discrepancy.abs().max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn wald_is_linear_with_normal_p_value(b0 in -0.5f64..0.5, b1 in -0.5f64..0.5, s in -3.0f64..3.0) {
        let d = pareto_data(12, 30, 0.2, 7);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let lambda = lambda_b_hat(&d, &plan).unwrap();
        let w = wald_statistic(&[b0, b1], &lambda, &plan, 0).unwrap();
        let ws = wald_statistic(&[s * b0, b1], &lambda, &plan, 0).unwrap();
        prop_assert!((ws.t_stat - s * w.t_stat).abs() <= 1e-12 * (1.0 + w.t_stat.abs()));
        prop_assert!((w.p_value - 2.0 * (1.0 - normal_cdf(w.t_stat.abs()))).abs() <= 1e-12);
    }

    #[test]
    fn lambda_b_scales_and_ignores_row_order(c in 0.1f64..10.0, seed in 0u64..100) {
        let d = pareto_data(10, 25, 0.2, 3);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let base = lambda_b_hat(&d, &plan).unwrap().lambda_b_inv;
        let scaled = map_clusters(&d, |cl| Cluster::new(cl.id.clone(), cl.observations.iter().map(|o| {
            Observation::new(o.y, o.x_a.clone(), o.x_b.iter().map(|x| c * x).collect()).unwrap()
        }).collect()));
        let ls = lambda_b_hat(&scaled, &plan).unwrap().lambda_b_inv;
        prop_assert!((&ls - &base * (c * c)).abs().max() <= 1e-10 * c * c * base.abs().max());
        let shuffled = map_clusters(&d, |cl| {
            let mut obs = cl.observations.clone();
            obs.shuffle(&mut stream(&[seed]));
            Cluster::new(cl.id.clone(), obs)
        });
        let lp = lambda_b_hat(&shuffled, &plan).unwrap().lambda_b_inv;
        prop_assert!((&lp - &base).abs().max() <= 1e-12 * base.abs().max());
    }

    #[test]
    fn gof_ignores_labels_and_row_order(seed in 0u64..100) {
        let d = pareto_data(8, 25, 0.3, 11);
        let params = MemParams::location_shift(-0.5, vec![0.2, -0.1], 0.3).unwrap();
        let gof = |d: &ClusteredDataset| {
            let plan = uniform_threshold(d, 1.0).unwrap();
            let cache = ExceedanceCache::build(d, &plan).unwrap();
            let preds = predict_u_with(&params, &cache).unwrap();
            gof_transform_with(&params, &preds, d, &plan).unwrap()
        };
        let base = gof(&d);
        let mut order: Vec<usize> = (0..d.n_clusters()).collect();
        order.shuffle(&mut stream(&[seed, 1]));
        let relabeled = ClusteredDataset::new(
            order.iter().map(|&k| {
                let mut obs = d.clusters()[k].observations.clone();
                obs.shuffle(&mut stream(&[seed, 2, k as u64]));
                Cluster::new(format!("r{k}"), obs)
            }).collect(),
            1,
            2,
        ).unwrap();
        let other = gof(&relabeled);
        prop_assert_eq!(base.s_sorted.len(), other.s_sorted.len());
        for (a, b) in base.s_sorted.iter().zip(&other.s_sorted) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fitting_never_lowers_the_likelihood(seed in 0u64..10_000) {
        let d = pareto_data(10, 20, 0.3, seed);
        let plan = uniform_threshold(&d, 1.0).unwrap();
        let fit = fit_mem(&d, &plan, &QuadratureSpec::default(), &OptimizerSpec::default()).unwrap();
        prop_assert!(fit.loglik >= fit.init_loglik);
        let cache = ExceedanceCache::build(&d, &plan).unwrap();
        let preds = predict_u_with(&fit.params, &cache).unwrap();
        for g in preds.grad_norm.values() {
            prop_assert!(*g <= 1e-8, "{g}");
        }
    }
}

#[test]
fn laplace_gap_shrinks_with_exceedance_count() {
    let params = MemParams::location_shift(-0.5, vec![0.2, -0.1], 0.3).unwrap();
    let gaps: Vec<f64> = [10, 40, 160]
        .iter()
        .map(|&n| {
            let d = pareto_data(10, n, 0.3, 5);
            let cache = ExceedanceCache::build(&d, &uniform_threshold(&d, 1.0).unwrap()).unwrap();
            let agh = marginal_loglik(&params, &cache, &QuadratureSpec::default()).unwrap();
            let lap = marginal_loglik(&params, &cache, &QuadratureSpec::laplace()).unwrap();
            ((agh - lap) / agh).abs()
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}
