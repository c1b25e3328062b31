//! Acceptance suite: one PASS/FAIL line per criterion, at full size.
//!
//! Runs as a plain binary (`harness = false`). `LONGMEM_ACCEPTANCE_ONLY=3,10`
//! restricts the run to the listed criteria. A criterion that cannot be
//! evaluated (an error) always fails the target; a criterion that is evaluated
//! and not met is reported as FAIL, and fails the target only when
//! `LONGMEM_ACCEPTANCE_STRICT=1`.

use std::sync::Arc;
use std::time::Instant;

use longmem::config::{ExperimentConfig, JPolicy};
use longmem::functionals::{c_k_pm, EtaK};
use longmem::harness::{self, Model, VerificationReport};
use longmem::limits::{sine_integral, sine_integral_closed_form, z_closed_form_cf, z_levy_cf};
use longmem::linproc::{convolve_naive, replication_rng, Convolver};
use longmem::regvar::{check_ell_ratio, SlowlyVarying};
use longmem::report::to_json;
use longmem::stable::{StableCdf, StableLaw};
use longmem::stats::ks_one_sample;
use longmem::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, detail: detail.into() })
}

fn progress(msg: &str) {
    eprintln!("    {msg}");
}

fn stable_draws() -> Result<Outcome> {
    let mut laws = vec![(1.0, 0.0)];
    for alpha in [0.8, 1.35, 1.62, 1.8] {
        for skew in [-1.0, 0.0, 0.5] {
            laws.push((alpha, skew));
        }
    }
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (k, &(alpha, skew)) in laws.iter().enumerate() {
        let law = StableLaw::new(alpha, 1.0, skew, 0.0)?;
        let mut rng = replication_rng(0x5eed, k as u64);
        let draws = (0..100_000).map(|_| law.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
        let cdf = StableCdf::new(law)?;
        let ks = ks_one_sample(&draws, |x| cdf.cdf(x));
        if ks > worst.2 {
            worst = (alpha, skew, ks);
        }
    }
    outcome(worst.2 <= 0.01, format!("{} laws, worst KS {:.5} at alpha {}, skew {}", laws.len(), worst.2, worst.0, worst.1))
}

fn z_rewrite() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for (p, g1, g2) in [(1.28, 0.0072335, 0.0), (1.35, 0.3, 0.7), (1.62, 1.0, 1.0)] {
        for k in 0..=400 {
            let u = -10.0 + 0.05 * k as f64;
            let gap = (z_levy_cf(p, g1, g2, u)? - z_closed_form_cf(p, g1, g2, u)?).norm();
            worst = worst.max(gap);
        }
    }
    outcome(worst <= 1e-5, format!("sup gap {worst:.3e} over |u| <= 10, three parameter triples"))
}

fn sine_integrals() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for p in [1.28, 1.35, 1.62] {
        worst = worst.max((sine_integral(p)? - sine_integral_closed_form(p)).abs());
    }
    outcome(worst <= 1e-6, format!("max |quadrature - closed form| = {worst:.3e}"))
}

fn eta_asymptotics() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::thm2();
    cfg.ell = SlowlyVarying::one();
    cfg.j_policy = JPolicy::Auto;
    let j = cfg.j_policy.resolve(cfg.beta, &cfg.ell, cfg.n_grid[cfg.n_grid.len() - 1])?;
    let model = Model::build(&cfg, j, cfg.workers())?;
    let (c_plus, _) = c_k_pm(&model.kinf, cfg.beta)?;
    let eta = EtaK::new(Arc::clone(&model.kinf), Arc::clone(&model.shifts), None)?;
    let mut errs = Vec::new();
    for x in [1e2, 1e3, 1e4] {
        let v = eta.eval(x)?.value / x.powf(1.0 / cfg.beta);
        errs.push(((v - c_plus) / c_plus).abs());
    }
    let improving = errs.windows(2).all(|w| w[1] < w[0]);
    outcome(
        errs[2] <= 0.05 && improving,
        format!("relative error {:.4}, {:.4}, {:.4} at x = 1e2, 1e3, 1e4 (C+ = {c_plus:.6})", errs[0], errs[1], errs[2]),
    )
}

fn fft_vs_naive() -> Result<Outcome> {
    let (n, j) = (256, 512);
    let a: Vec<f64> = (1..=j).map(|i| (i as f64).powf(-0.9)).collect();
    let mut rng = replication_rng(11, 0);
    let law = StableLaw::new(1.5, 1.0, 0.3, 0.0)?;
    let e = (0..n + j - 1).map(|_| law.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
    let (fast, _) = Convolver::new(&a, n).convolve_pair(&e, None);
    let slow = convolve_naive(&a, &e, n);
    let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = fast.iter().zip(&slow).fold(0.0f64, |m, (f, s)| m.max((f - s).abs())) / scale;
    outcome(worst <= 1e-10, format!("max error relative to max |X_n|: {worst:.3e}"))
}

fn remark_ratio() -> Result<Outcome> {
    let xs = [1e2, 1e4, 1e6, 1e8];
    let sufficient = check_ell_ratio(&SlowlyVarying::log_power(1.0, 0.1, 0.75), 1.5, &xs);
    let counter = check_ell_ratio(&SlowlyVarying::log_power(1.0, 1.0, 0.5), 1.5, &xs);
    let target = (2.0f64 / 1.5).exp();
    let gaps: Vec<f64> = counter.iter().map(|r| (r - target).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    let s_err = (sufficient[3] - 1.0).abs();
    let c_err = gaps[3] / target;
    outcome(
        s_err <= 0.02 && c_err <= 0.10 && monotone,
        format!(
            "sufficient ratio {:.4} at 1e8; counterexample ratios {:?} vs e^(2/beta) = {target:.4} ({:.1}% off at 1e8)",
            sufficient[3],
            counter.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>(),
            100.0 * c_err
        ),
    )
}

fn determinism() -> Result<Outcome> {
    let base = ExperimentConfig::thm1().with_overrides(&["m=200", "n_grid=[128,256,512]", "diagnostics.decomposition=true"])?;
    let mut bytes = Vec::new();
    for workers in [1, 2, 5] {
        let cfg = base.with_overrides(&[format!("workers={workers}")])?;
        let (report, _) = harness::verify(&cfg, &harness::quiet)?;
        bytes.push(to_json(&report)?);
    }
    let same = bytes.windows(2).all(|w| w[0] == w[1]);
    outcome(same, format!("report.json with 1, 2 and 5 workers: {}", if same { "identical" } else { "differ" }))
}

fn full_report(name: &str) -> Result<VerificationReport> {
    let cfg = ExperimentConfig::preset(name)?.with_overrides(&["diagnostics.decomposition=true"])?;
    let log = |m: &str| progress(&format!("{name}: {m}"));
    Ok(harness::verify(&cfg, &log)?.0)
}

fn criterion(report: &VerificationReport, id: u8) -> Outcome {
    match report.criteria.iter().find(|c| c.id == id) {
        Some(c) => Outcome { pass: c.pass, detail: c.detail.clone() },
        None => Outcome { pass: false, detail: format!("criterion {id} missing from the report") },
    }
}

struct Runner {
    only: Option<Vec<u8>>,
    failed: usize,
    errors: usize,
    ran: usize,
}

impl Runner {
    fn wants(&self, ids: &[u8]) -> bool {
        self.only.as_ref().is_none_or(|o| ids.iter().any(|i| o.contains(i)))
    }

    fn record(&mut self, id: u8, name: &str, secs: f64, result: Result<Outcome>) {
        if self.only.as_ref().is_some_and(|o| !o.contains(&id)) {
            return;
        }
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                self.errors += 1;
                (false, format!("error: {e}"))
            }
        };
        self.ran += 1;
        if !pass {
            self.failed += 1;
        }
        println!("{} criterion {id:>2}: {name} [{secs:.1}s] {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn run(&mut self, id: u8, name: &str, f: impl FnOnce() -> Result<Outcome>) {
        if self.wants(&[id]) {
            let t = Instant::now();
            let r = f();
            self.record(id, name, t.elapsed().as_secs_f64(), r);
        }
    }
}

fn main() {
    let only = std::env::var("LONGMEM_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect::<Vec<u8>>());
    let mut r = Runner { only, failed: 0, errors: 0, ran: 0 };

    r.run(1, "stable sampler vs CDF", stable_draws);
    r.run(2, "Z characteristic-function rewrite", z_rewrite);
    r.run(3, "sine integral quadrature", sine_integrals);
    r.run(4, "eta_K asymptotics", eta_asymptotics);
    r.run(10, "FFT vs naive convolution", fft_vs_naive);
    r.run(11, "ell ratio (sufficient condition and counterexample)", remark_ratio);
    r.run(12, "determinism across worker counts", determinism);

    let mut reports = Vec::new();
    for (name, ids) in [("thm1", [6u8, 9]), ("thm2", [7, 9]), ("thm3", [8, 9])] {
        if !r.wants(&ids) && !(name == "thm2" && r.wants(&[5])) {
            continue;
        }
        let t = Instant::now();
        let rep = full_report(name);
        reports.push((name, t.elapsed().as_secs_f64(), rep));
    }
    let find = |name: &str| reports.iter().find(|(n, _, _)| *n == name);
    if let Some((_, t, rep)) = find("thm2") {
        r.record(5, "domain-of-attraction tails and a_N", *t, rep.as_ref().map(|rep| criterion(rep, 5)).map_err(Clone::clone));
    }
    for (name, id, title) in [("thm1", 6, "Theorem 1 marginals"), ("thm2", 7, "Theorem 2 marginals"), ("thm3", 8, "Theorem 3 marginals")] {
        if let Some((_, t, rep)) = find(name) {
            r.record(id, title, *t, rep.as_ref().map(|rep| criterion(rep, id)).map_err(Clone::clone));
        }
    }
    if r.wants(&[9]) && !reports.is_empty() {
        let t = reports.iter().map(|r| r.1).sum();
        let mut pass = true;
        let mut details = Vec::new();
        let mut error = None;
        for (name, _, rep) in &reports {
            match rep {
                Ok(rep) => {
                    let c = criterion(rep, 9);
                    pass &= c.pass;
                    details.push(format!("{name}: {}", c.detail));
                }
                Err(e) => error = Some(e.clone()),
            }
        }
        let result = match error {
            Some(e) => Err(e),
            None => outcome(pass, details.join("; ")),
        };
        r.record(9, "decomposition rates", t, result);
    }

    println!("{} of {} criteria passed", r.ran - r.failed, r.ran);
    let strict = std::env::var("LONGMEM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if r.errors > 0 || (strict && r.failed > 0) {
        std::process::exit(1);
    }
}
