use std::sync::Arc;

use longmem::config::{ExperimentConfig, JPolicy};
use longmem::harness::{self, run_partial_sums, seed_for, Model, TEvaluator};
use longmem::linproc::{convolve_naive, Simulator};

fn tiny(theorem: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(theorem)
        .unwrap()
        .with_overrides(&["m=2", "n_grid=[8]", "t_grid=[0.5,1.0]", "workers=1"])
        .unwrap();
    cfg.j_policy = JPolicy::Fixed { j: 4 };
    cfg
}

#[test]
fn partial_sums_match_a_hand_computation() {
    let cfg = tiny("thm1");
    let sums = run_partial_sums(&cfg).unwrap();
    let slice = &sums.slices[0];
    assert_eq!((slice.n, slice.j), (8, 4));
    let model = Model::build(&cfg, 4, 1).unwrap();
    let k0 = model.kinf.at_zero();
    let sim = Simulator::new(model.coefs.clone(), model.innovation.clone(), 8).unwrap();
    for rep in 0..2 {
        let eps = sim.draw_innovations(seed_for(cfg.seed, 8), rep);
        assert_eq!(eps.len(), 11);
        // X_n = a_1 ε_{n-1} + ... + a_4 ε_{n-4}, with eps[0] = ε_{-3}.
        let x: Vec<f64> = (1..=8).map(|n| (1..=4).map(|j| model.coefs[j - 1] * eps[n + 3 - j]).sum()).collect();
        let naive = convolve_naive(&model.coefs, &eps, 8);
        for (a, b) in x.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12);
        }
        for (t, upto) in [(0.5, 4), (1.0, 8)] {
            let expected: f64 = x[..upto].iter().map(|&v| cfg.functional.eval(v) - k0).sum();
            let got = slice.sums[sums.time_index(t).unwrap()][rep];
            assert!((got - expected).abs() < 1e-12, "t = {t}, rep {rep}: {got} vs {expected}");
        }
    }
}

#[test]
fn t_evaluator_matches_the_double_sum() {
    let mut cfg = ExperimentConfig::thm1();
    cfg.j_policy = JPolicy::Fixed { j: 40 };
    let model = Arc::new(Model::build(&cfg, 40, 1).unwrap());
    let te = TEvaluator::new(model.clone());
    let n = 25;
    let sim = Simulator::new(model.coefs.clone(), model.innovation.clone(), n).unwrap();
    let k0 = model.kinf.at_zero();
    for rep in 0..4 {
        let mut eps = sim.draw_innovations(7, rep);
        // Mix in large values so both evaluation branches are exercised.
        eps[3] = 40.0;
        eps[30] = -250.0;
        let mut brute = 0.0;
        let mut scale = 0.0;
        for t in 1..=n {
            for j in 1..=40 {
                let a = model.coefs[j - 1];
                let term = model.kinf.eval_exact_tail(a * eps[t + 39 - j]) - k0 - model.shifts.excess(a);
                brute += term;
                scale += term.abs();
            }
        }
        let fast = te.t_n(&eps, n);
        assert!((fast - brute).abs() <= 1e-9 * scale.max(1.0), "rep {rep}: {fast} vs {brute}");
    }
}

#[test]
fn scaling_the_functional_scales_the_sums() {
    let cfg = tiny("thm2");
    let mut scaled = cfg.clone();
    for t in &mut scaled.functional.terms {
        t.weight *= -2.5;
    }
    let (a, b) = (run_partial_sums(&cfg).unwrap(), run_partial_sums(&scaled).unwrap());
    for (u, v) in a.slices[0].sums.iter().flatten().zip(b.slices[0].sums.iter().flatten()) {
        assert!((v + 2.5 * u).abs() <= 1e-10 * (1.0 + u.abs()), "{u} vs {v}");
    }
}

#[test]
fn selftest_accepts_draws_from_the_limit() {
    let cfg = ExperimentConfig::thm1().with_overrides(&["m=400", "n_grid=[64,128]", "workers=1"]).unwrap();
    let report = harness::selftest(&cfg, &harness::quiet).unwrap();
    assert!(report.criteria.iter().all(|c| c.pass), "{:?}", report.criteria);
}
