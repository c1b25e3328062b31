//! Monte Carlo experiments: normalized partial sums, marginal verification
//! against the limit laws, increment checks, the decomposition rates and the
//! tail of `η_K(ε)`.
//!
//! Innovations of one replication are stored as `eps[i] = ε_{1−J+i}` for
//! `i = 0..N+J−1`, so `X_n = Σ_{j=1}^J a_j ε_{n−j}` for `n = 1..N`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::distributions::Open01;
use rand::Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::functionals::{
    c_k_pm, c_tilde, c_tilde_printed, gammas_and_cbar, EtaK, EtaTable, FunctionalSpec, KInfinity, LimitConstants,
    ShiftCurve, TAYLOR_ORDER, TAYLOR_RADIUS,
};
use crate::innovations::Innovation;
use crate::limits::{lfsm_kernel_scale, thm1_marginal, thm23_marginal, DriftConvention};
use crate::linproc::{coefficients, replication_rng, CoefficientSpec, PathBatch, ProcessCf, Replication, Simulator, Spectrum};
use crate::par;
use crate::regvar::{norm_thm1, SlowlyVarying, Thm23Normalizer};
use crate::report::QuantileRow;
use crate::stable::{StableCdf, StableLaw};
use crate::stats;

pub type Log<'a> = &'a (dyn Fn(&str) + Sync);

/// Discards progress messages.
pub fn quiet(_: &str) {}

/// One truncated model: coefficients, `K_∞` and the shift curve `E K_∞(aε)`.
pub struct Model {
    pub j: usize,
    pub coefs: Arc<Vec<f64>>,
    pub innovation: Innovation,
    pub kinf: Arc<KInfinity>,
    pub shifts: Arc<ShiftCurve>,
}

impl Model {
    pub fn build(cfg: &ExperimentConfig, j: usize, workers: usize) -> Result<Self> {
        let innovation = cfg.innovation_spec().build()?;
        let spec = CoefficientSpec { beta: cfg.beta, ell: cfg.ell.clone(), j };
        spec.validate()?;
        spec.check_pair(cfg.alpha)?;
        let spectrum = Arc::new(Spectrum::new(ProcessCf::new(&spec, &innovation)?)?);
        let kinf = Arc::new(KInfinity::new(&cfg.functional, spectrum, workers)?);
        let coefs = Arc::new(coefficients(&spec));
        let a_max = coefs.iter().fold(0.0f64, |m, &a| m.max(a)) * 1.01;
        let shifts = Arc::new(ShiftCurve::new(&kinf, a_max, workers)?);
        Ok(Model { j, coefs, innovation, kinf, shifts })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    #[serde(flatten)]
    pub limit: LimitConstants,
    #[serde(rename = "alphaBeta")]
    pub alpha_beta: f64,
    /// Truncation length of the model the constants were computed on.
    #[serde(rename = "referenceJ")]
    pub reference_j: usize,
    pub drift: DriftConvention,
    /// Location constant used for the Theorem 2–3 limit.
    #[serde(rename = "cBarUsed")]
    pub c_bar_used: Option<f64>,
}

/// Limit-law constants of `cfg` evaluated on `model`.
pub fn compute_constants(cfg: &ExperimentConfig, model: &Model) -> Result<Constants> {
    let kinf = &model.kinf;
    let (a, b) = (cfg.alpha, cfg.beta);
    let (s1, s2) = (cfg.innovation.sigma1, cfg.innovation.sigma2);
    let mut limit = LimitConstants { int_k_df: kinf.int_k_df(), k_inf0: kinf.at_zero(), ..Default::default() };
    if a > 1.0 && a < 2.0 && b > 1.0 / a && b < 1.0 {
        limit.c_tilde = Some(c_tilde(a, b, s1, s2, limit.int_k_df)?);
        limit.c_tilde_printed = Some(c_tilde_printed(a, b, s1, s2, limit.int_k_df)?);
    }
    let mut c_bar_used = None;
    if cfg.theorem >= 2 {
        if cfg.theorem == 3 && limit.int_k_df.abs() > 1e-6 {
            return Err(Error::Region(format!(
                "Theorem 3 needs integral of K df = 0 (got {:.3e}); use Theorem 1 mode",
                limit.int_k_df
            )));
        }
        let (cp, cm) = c_k_pm(kinf, b)?;
        limit.c_plus = Some(cp);
        limit.c_minus = Some(cm);
        let g = gammas_and_cbar(a * b, s1, s2, cp, cm)?;
        limit.gamma1 = Some(g.gamma1);
        limit.gamma2 = Some(g.gamma2);
        limit.c_bar = Some(g.c_bar);
        c_bar_used = Some(match cfg.drift {
            DriftConvention::Centered => 0.0,
            DriftConvention::Printed => g.c_bar,
        });
    }
    Ok(Constants { limit, alpha_beta: a * b, reference_j: model.j, drift: cfg.drift, c_bar_used })
}

/// Marginal law of the limit at time `t`.
pub fn limit_law(cfg: &ExperimentConfig, c: &Constants, t: f64) -> Result<StableLaw> {
    let (s1, s2) = (cfg.innovation.sigma1, cfg.innovation.sigma2);
    if cfg.theorem == 1 {
        let ct = c.limit.c_tilde.ok_or_else(|| Error::Region("c-tilde undefined for these parameters".into()))?;
        if ct == 0.0 {
            return Err(Error::Degenerate(
                "c-tilde = 0 (integral of K df vanishes): the Theorem 1 limit is 0, rerun in Theorem 3 mode".into(),
            ));
        }
        thm1_marginal(cfg.alpha, cfg.beta, s1, s2, ct, t)
    } else {
        let g1 = c.limit.gamma1.unwrap_or(0.0);
        let g2 = c.limit.gamma2.unwrap_or(0.0);
        Ok(thm23_marginal(c.alpha_beta, g1, g2, c.c_bar_used.unwrap_or(0.0), t)?.0)
    }
}

/// Normalizing sequences for the selected theorem.
pub struct Normalizers {
    theorem: u8,
    cfg: ExperimentConfig,
    thm23: Option<Thm23Normalizer>,
}

impl Normalizers {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let thm23 = if cfg.theorem >= 2 {
            Some(Thm23Normalizer::new(cfg.alpha, cfg.beta, &cfg.ell, &cfg.innovation.h)?)
        } else {
            None
        };
        Ok(Normalizers { theorem: cfg.theorem, cfg: cfg.clone(), thm23 })
    }

    pub fn theorem(&self, n: f64) -> Result<f64> {
        match &self.thm23 {
            Some(t) => t.eval(n),
            None => self.thm1(n),
        }
    }

    pub fn thm1(&self, n: f64) -> Result<f64> {
        norm_thm1(self.cfg.alpha, self.cfg.beta, &self.cfg.ell, &self.cfg.innovation.h, n)
    }

    /// Theorem 1 normalizer alongside a Theorem 3 run.
    pub fn thm1_companion(&self, n: f64) -> Result<Option<f64>> {
        if self.theorem == 3 {
            Ok(Some(self.thm1(n)?))
        } else {
            Ok(None)
        }
    }

    pub fn thm23(&self) -> Option<&Thm23Normalizer> {
        self.thm23.as_ref()
    }
}

/// Seed of the simulation at sample size `n`.
pub fn seed_for(seed: u64, n: usize) -> u64 {
    let mut z = seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shared state of an experiment: the reference model and the normalizers.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub workers: usize,
    pub reference: Arc<Model>,
    pub normalizers: Normalizers,
    models: BTreeMap<usize, Arc<Model>>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig, log: Log) -> Result<Self> {
        config.validate()?;
        let workers = config.workers();
        let n_max = *config.n_grid.iter().max().expect("validated non-empty");
        let j_ref = config.j_policy.resolve(config.beta, &config.ell, n_max)?;
        log(&format!("building reference model (J = {j_ref})"));
        let reference = Arc::new(Model::build(config, j_ref, workers)?);
        let normalizers = Normalizers::new(config)?;
        let mut models = BTreeMap::new();
        models.insert(j_ref, reference.clone());
        Ok(Experiment { config: config.clone(), workers, reference, normalizers, models })
    }

    pub fn model(&mut self, j: usize, log: Log) -> Result<Arc<Model>> {
        if let Some(m) = self.models.get(&j) {
            return Ok(m.clone());
        }
        log(&format!("building model (J = {j})"));
        let m = Arc::new(Model::build(&self.config, j, self.workers)?);
        self.models.insert(j, m.clone());
        Ok(m)
    }

    pub fn constants(&self) -> Result<Constants> {
        compute_constants(&self.config, &self.reference)
    }

    /// `η_K` table on the reference model; `None` where the series diverges.
    pub fn eta_table(&self) -> Result<Option<EtaTable>> {
        match EtaK::new(self.reference.kinf.clone(), self.reference.shifts.clone(), None) {
            Ok(eta) => Ok(Some(EtaTable::new(&eta, self.workers)?)),
            Err(Error::Region(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Evaluates `T_N = Σ_n Σ_j [K_∞(a_j ε_{n−j}) − E K_∞(a_j ε)]` by summing
/// over innovations: terms with `a_j|ε| > τ` directly, the rest through a
/// Taylor expansion of `K_∞` at 0 and suffix sums of `a_j^k`.
pub struct TEvaluator {
    model: Arc<Model>,
    taylor: [f64; TAYLOR_ORDER + 1],
    excess: Vec<f64>,
    /// `suffix[j][k−1] = Σ_{i ≥ j+1} a_i^k`, `j = 0..=J`.
    suffix: Vec<[f64; TAYLOR_ORDER]>,
    suffix_excess: Vec<f64>,
}


impl TEvaluator {
    pub fn new(model: Arc<Model>) -> Self {
        let j = model.j;
        let mut taylor = [0.0; TAYLOR_ORDER + 1];
        let mut fact = 1.0;
        for (k, t) in taylor.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *t = model.kinf.derivs0[k] / fact;
        }
        let excess: Vec<f64> = model.coefs.iter().map(|&a| model.shifts.excess(a)).collect();
        let mut suffix = vec![[0.0; TAYLOR_ORDER]; j + 1];
        let mut suffix_excess = vec![0.0; j + 1];
        for i in (0..j).rev() {
            let a = model.coefs[i];
            let mut p = 1.0;
            for k in 0..TAYLOR_ORDER {
                p *= a;
                suffix[i][k] = suffix[i + 1][k] + p;
            }
            suffix_excess[i] = suffix_excess[i + 1] + excess[i];
        }
        TEvaluator { model, taylor, excess, suffix, suffix_excess }
    }

    /// `Σ_{j=lo}^{hi} [K_∞(a_j x) − E K_∞(a_j ε)]`, `1 ≤ lo ≤ hi ≤ J`.
    pub fn range(&self, x: f64, lo: usize, hi: usize) -> f64 {
        let kinf = &self.model.kinf;
        let a = &self.model.coefs;
        let k0 = kinf.at_zero();
        let ax = x.abs();
        let mut total = 0.0;
        let mut j = lo;
        while j <= hi && a[j - 1] * ax > TAYLOR_RADIUS {
            total += kinf.eval_exact_tail(a[j - 1] * x) - k0 - self.excess[j - 1];
            j += 1;
        }
        if j <= hi {
            let (from, to) = (&self.suffix[j - 1], &self.suffix[hi]);
            let mut xp = 1.0;
            let mut acc = 0.0;
            for k in 1..=TAYLOR_ORDER {
                xp *= x;
                acc += self.taylor[k] * xp * (from[k - 1] - to[k - 1]);
            }
            total += acc - (self.suffix_excess[j - 1] - self.suffix_excess[hi]);
        }
        total
    }

    /// `T_N` on one replication.
    pub fn t_n(&self, eps: &[f64], n: usize) -> f64 {
        let j = self.model.j as isize;
        let n = n as isize;
        let mut total = 0.0;
        for (i, &x) in eps.iter().enumerate() {
            let s = i as isize - (j - 1);
            let lo = (1 - s).max(1);
            let hi = (n - s).min(j);
            if lo <= hi {
                total += self.range(x, lo as usize, hi as usize);
            }
        }
        total
    }
}

/// `S_N`, `T_N`, `U_N` and `𝒯_N` on the same replications (unnormalized).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DecompositionSample {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub tcal: Option<Vec<f64>>,
}

/// Partial sums at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct NSlice {
    pub n: usize,
    pub j: usize,
    pub seed: u64,
    /// Centering `E K(X_n)`: the truncated model's `K_∞(0)`.
    pub k0: f64,
    pub norm: f64,
    pub norm_thm1: Option<f64>,
    /// See [`kernel_scale_ratio`]; `None` outside the LFSM region.
    pub kernel_ratio: Option<f64>,
    /// Unnormalized `S_{[Nt]}` for each entry of `times`, one value per replication.
    pub sums: Vec<Vec<f64>>,
    pub decomposition: Option<DecompositionSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    pub times: Vec<f64>,
    pub m: usize,
    pub slices: Vec<NSlice>,
}

impl PartialSums {
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() < 1e-12)
    }

    /// `S_{[Nt]} / norm` across replications.
    pub fn normalized(&self, slice: usize, t: f64) -> Vec<f64> {
        let s = &self.slices[slice];
        let ti = self.time_index(t).expect("time present");
        s.sums[ti].iter().map(|v| v / s.norm).collect()
    }

    /// Normalized sums as `[replication][t][N]` over `t_grid`.
    pub fn normalized_array(&self, t_grid: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let cols: Vec<Vec<Vec<f64>>> =
            t_grid.iter().map(|&t| (0..self.slices.len()).map(|k| self.normalized(k, t)).collect()).collect();
        (0..self.m).map(|r| cols.iter().map(|per_n| per_n.iter().map(|v| v[r]).collect()).collect()).collect()
    }
}

/// Sorted union of the t grid and the times used by increment checks.
fn all_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut ts: Vec<f64> = cfg.t_grid.clone();
    for &(a, b) in &cfg.diagnostics.increments {
        ts.extend([a, b, b - a]);
    }
    ts.retain(|&t| t > 0.0);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    ts
}

struct RepOut {
    sums: Vec<f64>,
    decomposition: Option<[f64; 4]>,
}

/// Simulates all sample sizes of `cfg` and returns the partial sums.
pub fn run_partial_sums_with(exp: &mut Experiment, decomposition: bool, log: Log) -> Result<PartialSums> {
    let cfg = exp.config.clone();
    let times = all_times(&cfg);
    let eta = if decomposition { exp.eta_table()? } else { None };
    let mut slices = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let j = cfg.j_policy.resolve(cfg.beta, &cfg.ell, n)?;
        let model = exp.model(j, log)?;
        let seed = seed_for(cfg.seed, n);
        log(&format!("simulating N = {n}, J = {j}, M = {}", cfg.m));
        let slice = simulate_slice(&cfg, exp, model, n, seed, &times, decomposition, eta.as_ref())?;
        slices.push(slice);
    }
    Ok(PartialSums { times, m: cfg.m, slices })
}

#[allow(clippy::too_many_arguments)]
fn simulate_slice(
    cfg: &ExperimentConfig,
    exp: &Experiment,
    model: Arc<Model>,
    n: usize,
    seed: u64,
    times: &[f64],
    decomposition: bool,
    eta: Option<&EtaTable>,
) -> Result<NSlice> {
    let j = model.j;
    let k0 = model.kinf.at_zero();
    let cuts: Vec<usize> = times.iter().map(|&t| ((n as f64) * t + 1e-9).floor() as usize).collect();
    let sim = Simulator::new(model.coefs.clone(), model.innovation.clone(), n)?;
    let k: &FunctionalSpec = &cfg.functional;
    let slope = model.kinf.derivs0[1];
    let t_eval = if decomposition { Some(TEvaluator::new(model.clone())) } else { None };
    let m_dec = cfg.diagnostics.decomposition_m.min(cfg.m);
    let outs = sim.replicate(seed, cfg.m, exp.workers, |r: &Replication| {
        let mut sums = Vec::with_capacity(cuts.len());
        let mut acc = 0.0;
        let mut next = 0;
        while next < cuts.len() && cuts[next] == 0 {
            sums.push(0.0);
            next += 1;
        }
        for (i, &x) in r.x.iter().enumerate() {
            acc += k.eval(x) - k0;
            while next < cuts.len() && cuts[next] == i + 1 {
                sums.push(acc);
                next += 1;
            }
        }
        let decomposition = match &t_eval {
            Some(te) if r.index < m_dec => {
                let t = te.t_n(&r.eps, n);
                let u = slope * r.x.iter().sum::<f64>();
                let tcal = eta.map_or(f64::NAN, |tab| r.eps[j - 1..j - 1 + n].iter().map(|&e| tab.eval(e)).sum());
                Some([acc, t, u, tcal])
            }
            _ => None,
        };
        RepOut { sums, decomposition }
    });
    let mut sums = vec![Vec::with_capacity(cfg.m); times.len()];
    let mut dec = DecompositionSample::default();
    let mut tcal = Vec::new();
    for o in &outs {
        for (col, v) in sums.iter_mut().zip(&o.sums) {
            col.push(*v);
        }
        if let Some([s, t, u, c]) = o.decomposition {
            dec.s.push(s);
            dec.t.push(t);
            dec.u.push(u);
            tcal.push(c);
        }
    }
    if eta.is_some() {
        dec.tcal = Some(tcal);
    }
    let nf = n as f64;
    Ok(NSlice {
        n,
        j,
        seed,
        k0,
        norm: exp.normalizers.theorem(nf)?,
        norm_thm1: exp.normalizers.thm1_companion(nf)?,
        kernel_ratio: kernel_scale_ratio(&model.coefs, n, cfg.alpha, cfg.beta, &cfg.ell).ok(),
        sums,
        decomposition: decomposition.then_some(dec),
    })
}

/// `(Σ_s |w_s|^α)^{1/α}` for the weights `w_s = Σ_{n=1}^{N} a_{n−s}` of the
/// truncated process, divided by its Theorem 1 limit
/// `ℓ(N) N^{1−β+1/α} ‖g_1‖_α / (1−β)`. A value below 1 means the sums at
/// this `N` are still narrower than the LFSM limit, whatever the innovations.
pub fn kernel_scale_ratio(coefs: &[f64], n: usize, alpha: f64, beta: f64, ell: &SlowlyVarying) -> Result<f64> {
    let limit_scale = lfsm_kernel_scale(alpha, beta, 1.0)?;
    let j = coefs.len();
    let mut prefix = Vec::with_capacity(j + 1);
    prefix.push(0.0);
    for &a in coefs {
        prefix.push(prefix[prefix.len() - 1] + a);
    }
    let mut total = 0.0;
    for s in 1 - j as i64..n as i64 {
        let lo = (1 - s).max(1) as usize;
        let hi = (n as i64 - s).min(j as i64) as usize;
        total += (prefix[hi] - prefix[lo - 1]).abs().powf(alpha);
    }
    let nf = n as f64;
    let limit = ell.eval(nf)? * nf.powf(1.0 - beta + 1.0 / alpha) * limit_scale / (1.0 - beta);
    Ok(total.powf(1.0 / alpha) / limit)
}

/// Normalized partial sums of `cfg`; see [`PartialSums::normalized_array`].
pub fn run_partial_sums(cfg: &ExperimentConfig) -> Result<PartialSums> {
    let mut exp = Experiment::new(cfg, &quiet)?;
    run_partial_sums_with(&mut exp, false, &quiet)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfGap {
    pub u: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub n: usize,
    pub t: f64,
    pub ks: f64,
    #[serde(rename = "cfGaps")]
    pub cf_gaps: Vec<CfGap>,
    #[serde(rename = "cfGapMax")]
    pub cf_gap_max: f64,
    pub median: f64,
    #[serde(rename = "skewSign")]
    pub skew_sign: f64,
    /// Median of `|S_{[Nt]}|/B_N` with the Theorem 1 normalizer (Theorem 3 runs).
    #[serde(rename = "medianAbsThm1")]
    pub median_abs_thm1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub t: f64,
    pub ks: Vec<f64>,
    /// `KS(N_{k+1}) ≤ KS(N_k) + 0.01` throughout.
    pub nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginals {
    pub cells: Vec<Cell>,
    pub trends: Vec<Trend>,
    #[serde(skip)]
    pub quantiles: Vec<QuantileRow>,
}

pub const TREND_TOLERANCE: f64 = 0.01;
pub const QUANTILE_LEVELS: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

/// KS distances, empirical-CF gaps and quantiles of the normalized sums
/// against the limit law, for every `(N, t)`.
pub fn verify_marginals(cfg: &ExperimentConfig, constants: &Constants, sums: &PartialSums) -> Result<Marginals> {
    let mut cells = Vec::new();
    let mut quantiles = Vec::new();
    let mut trends = Vec::new();
    for &t in &cfg.t_grid {
        let law = limit_law(cfg, constants, t)?;
        let cdf = StableCdf::new(law)?;
        let limit_q: Vec<f64> = QUANTILE_LEVELS.iter().map(|&p| cdf.quantile(p)).collect();
        let mut ks_row = Vec::new();
        for (k, slice) in sums.slices.iter().enumerate() {
            let xs = sums.normalized(k, t);
            let ks = stats::ks_one_sample(&xs, |x| cdf.cdf(x));
            let cf_gaps: Vec<CfGap> = cfg
                .cf_points
                .iter()
                .map(|&u| CfGap { u, gap: (stats::empirical_cf(&xs, u) - law.cf(u)).norm() })
                .collect();
            let cf_gap_max = cf_gaps.iter().fold(0.0f64, |m, g| m.max(g.gap));
            let sorted = stats::sorted(&xs);
            for (&p, &lq) in QUANTILE_LEVELS.iter().zip(&limit_q) {
                quantiles.push(QuantileRow { n: slice.n, t, p, empirical: stats::quantile_sorted(&sorted, p), limit: lq });
            }
            let median_abs_thm1 = slice.norm_thm1.map(|b| {
                let ti = sums.time_index(t).expect("time present");
                let abs: Vec<f64> = slice.sums[ti].iter().map(|v| (v / b).abs()).collect();
                stats::median(&abs)
            });
            ks_row.push(ks);
            cells.push(Cell {
                n: slice.n,
                t,
                ks,
                cf_gaps,
                cf_gap_max,
                median: stats::quantile_sorted(&sorted, 0.5),
                skew_sign: stats::quantile_skew_sign(&xs),
                median_abs_thm1,
            });
        }
        let nonincreasing = ks_row.windows(2).all(|w| w[1] <= w[0] + TREND_TOLERANCE);
        trends.push(Trend { t, ks: ks_row, nonincreasing });
    }
    Ok(Marginals { cells, trends, quantiles })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementCheck {
    pub n: usize,
    pub t1: f64,
    pub t2: f64,
    pub ks: f64,
    #[serde(rename = "pValue")]
    pub p_value: f64,
    /// `p > 0.01`.
    pub pass: bool,
}

/// Two-sample KS between `S_{[Nt₂]} − S_{[Nt₁]}` and `S_{[N(t₂−t₁)]}`.
pub fn increment_checks(cfg: &ExperimentConfig, sums: &PartialSums) -> Vec<IncrementCheck> {
    let mut out = Vec::new();
    for slice in &sums.slices {
        for &(t1, t2) in &cfg.diagnostics.increments {
            let col = |t: f64| -> Vec<f64> {
                if t <= 0.0 {
                    vec![0.0; sums.m]
                } else {
                    slice.sums[sums.time_index(t).expect("time present")].clone()
                }
            };
            let (a, b) = (col(t1), col(t2));
            let inc: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - x).collect();
            let base = col(t2 - t1);
            let (ks, p_value) = stats::ks_two_sample(&inc, &base);
            out.push(IncrementCheck { n: slice.n, t1, t2, ks, p_value, pass: p_value > 0.01 });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeCheck {
    pub name: String,
    pub n: Vec<usize>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub exponent: f64,
    pub bound: f64,
    pub pass: bool,
}

impl SlopeCheck {
    fn new(name: &str, n: &[usize], values: Vec<f64>, exponent: f64) -> Self {
        let x: Vec<f64> = n.iter().map(|&v| v as f64).collect();
        let slope = stats::loglog_slope(&x, &values);
        let bound = exponent + 0.3;
        SlopeCheck { name: name.into(), n: n.to_vec(), values, slope, exponent, bound, pass: slope <= bound }
    }
}

/// Moment order used as the proxy for `E|T_N − U_N|^r`.
pub const TU_MOMENT: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub m: usize,
    #[serde(rename = "sMinusTSquared")]
    pub s_minus_t: SlopeCheck,
    /// `(E|T_N − U_N|^r)^{1/r}`; only meaningful when `∫K df ≠ 0`.
    #[serde(rename = "tMinusU")]
    pub t_minus_u: Option<SlopeCheck>,
    #[serde(rename = "tMinusU1")]
    pub t_minus_u_first_moment: Option<Vec<f64>>,
    #[serde(rename = "tMinusTcal")]
    pub t_minus_tcal: Option<SlopeCheck>,
}

/// Fits the log-log slopes of the decomposition remainders across the N grid.
pub fn decomposition_diagnostics(cfg: &ExperimentConfig, constants: &Constants, sums: &PartialSums) -> Result<Decomposition> {
    let samples: Vec<(usize, &DecompositionSample)> =
        sums.slices.iter().filter_map(|s| s.decomposition.as_ref().map(|d| (s.n, d))).collect();
    if samples.len() < 3 {
        return Err(Error::Insufficient(format!("decomposition needs at least 3 sample sizes (got {})", samples.len())));
    }
    let ns: Vec<usize> = samples.iter().map(|(n, _)| *n).collect();
    let mean = |v: Vec<f64>| stats::mean(&v);
    let p = constants.alpha_beta;
    let st: Vec<f64> = samples.iter().map(|(_, d)| mean(d.s.iter().zip(&d.t).map(|(s, t)| (s - t).powi(2)).collect())).collect();
    let s_minus_t = SlopeCheck::new("E|S_N - T_N|^2", &ns, st, (4.0 - 2.0 * p).max(1.0));
    let linear = constants.limit.int_k_df.abs() > 1e-9;
    let (t_minus_u, t_minus_u_first_moment) = if linear {
        let lr: Vec<f64> = samples
            .iter()
            .map(|(_, d)| mean(d.t.iter().zip(&d.u).map(|(t, u)| (t - u).abs().powf(TU_MOMENT)).collect()).powf(1.0 / TU_MOMENT))
            .collect();
        let l1: Vec<f64> = samples.iter().map(|(_, d)| mean(d.t.iter().zip(&d.u).map(|(t, u)| (t - u).abs()).collect())).collect();
        (Some(SlopeCheck::new("(E|T_N - U_N|^r)^(1/r), r = 1.2", &ns, lr, 1.0 / TU_MOMENT)), Some(l1))
    } else {
        (None, None)
    };
    let t_minus_tcal = if samples.iter().all(|(_, d)| d.tcal.is_some()) {
        let v: Vec<f64> = samples
            .iter()
            .map(|(_, d)| mean(d.t.iter().zip(d.tcal.as_ref().unwrap()).map(|(t, c)| (t - c).abs()).collect()))
            .collect();
        Some(SlopeCheck::new("E|T_N - Tcal_N|", &ns, v, 2.0 - p))
    } else {
        None
    };
    let m = samples[0].1.s.len();
    let _ = cfg;
    Ok(Decomposition { m, s_minus_t, t_minus_u, t_minus_u_first_moment, t_minus_tcal })
}

/// Exact tail of `η_K(ε)` from the innovation law, using the outermost
/// crossings of `η_K` on each side; valid once `x` is beyond the bulk.
pub struct EtaTails<'a> {
    pub table: &'a EtaTable,
    pub innovation: &'a Innovation,
    pub c_plus: f64,
    pub c_minus: f64,
    pub beta: f64,
}

impl EtaTails<'_> {
    /// `r > 0` with `sgn(c) η(side · r) = x` at the outermost crossing.
    fn root(&self, side: f64, c: f64, x: f64) -> f64 {
        let f = |r: f64| c.signum() * self.table.eval(side * r) - x;
        let mut hi = 2.0 * (x / c.abs()).powf(self.beta).max(1.0);
        let mut guard = 0;
        while f(hi) <= 0.0 && guard < 400 {
            hi *= 2.0;
            guard += 1;
        }
        let mut lo = hi / 2.0;
        while f(lo) > 0.0 && lo > 1e-12 {
            lo /= 2.0;
        }
        if f(lo) > 0.0 {
            return 0.0;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo - 1.0 < 1e-14 {
                break;
            }
        }
        hi
    }

    /// `(P(η > x), P(η < −x))` for `x > 0`.
    pub fn tails(&self, x: f64) -> (f64, f64) {
        let (mut up, mut low) = (0.0, 0.0);
        if self.c_plus != 0.0 {
            let p = self.innovation.survival(self.root(1.0, self.c_plus, x));
            if self.c_plus > 0.0 {
                up += p
            } else {
                low += p
            }
        }
        if self.c_minus != 0.0 {
            let p = self.innovation.cdf(-self.root(-1.0, self.c_minus, x));
            if self.c_minus > 0.0 {
                up += p
            } else {
                low += p
            }
        }
        (up, low)
    }

    /// `x` with `P(|η| > x) = q`.
    pub fn level(&self, q: f64) -> f64 {
        let mass = |x: f64| {
            let (a, b) = self.tails(x);
            a + b
        };
        let mut hi = 1.0;
        while mass(hi) > q {
            hi *= 2.0;
        }
        let mut lo = hi / 2.0;
        while mass(lo) <= q && lo > 1e-6 {
            lo /= 2.0;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if mass(mid) > q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-13 {
                break;
            }
        }
        hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaLevel {
    pub q: f64,
    pub x: f64,
    #[serde(rename = "pUpper")]
    pub p_upper: f64,
    #[serde(rename = "pLower")]
    pub p_lower: f64,
    #[serde(rename = "seUpper")]
    pub se_upper: f64,
    #[serde(rename = "seLower")]
    pub se_lower: f64,
    /// Scaled tails estimating `γ₂` and `γ₁`.
    #[serde(rename = "gamma2Hat")]
    pub gamma2_hat: f64,
    #[serde(rename = "gamma1Hat")]
    pub gamma1_hat: f64,
    pub exceedances: usize,
    /// Each side within 15% of its `γ` (sides with `γ = 0`: within 15% of `γ₁ + γ₂`).
    pub pass: bool,
    /// For balanced limits: `|γ̂₂ − γ̂₁|` within two standard errors.
    pub balanced: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaTailReport {
    pub draws: usize,
    /// Probability of the conditional tail stratum `|ε| > u`.
    #[serde(rename = "stratumMass")]
    pub stratum_mass: f64,
    #[serde(rename = "stratumThreshold")]
    pub stratum_threshold: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub levels: Vec<EtaLevel>,
    /// Scaled-tail error improves as the level decreases.
    pub improving: bool,
    #[serde(rename = "aN")]
    pub a_n: AnCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnCheck {
    pub n: f64,
    #[serde(rename = "aN")]
    pub a_n: f64,
    pub norm: f64,
    pub ratio: f64,
    pub target: f64,
    #[serde(rename = "aNEmpirical")]
    pub a_n_empirical: f64,
    pub pass: bool,
}

pub const ETA_STRATUM_MASS: f64 = 0.05;
const ETA_BLOCK: usize = 10_000;

/// Stratified Monte Carlo estimate of the tails of `η_K(ε)` and the
/// quantile `a_N = inf{x : P(|η_K(ε)| > x) ≤ 1/N}`.
pub fn eta_tail_diagnostics(exp: &Experiment, constants: &Constants, log: Log) -> Result<EtaTailReport> {
    let cfg = &exp.config;
    let draws = cfg.diagnostics.eta_draws;
    if draws < 2 * ETA_BLOCK {
        return Err(invalid(format!("eta tail diagnostics need at least {} draws", 2 * ETA_BLOCK)));
    }
    let table = exp.eta_table()?.ok_or_else(|| Error::Region("eta_K series diverges for this configuration".into()))?;
    let (Some(cp), Some(cm), Some(g1), Some(g2)) =
        (constants.limit.c_plus, constants.limit.c_minus, constants.limit.gamma1, constants.limit.gamma2)
    else {
        return Err(Error::Region("eta tail diagnostics need Theorem 2 or 3 constants".into()));
    };
    let norm23 = exp.normalizers.thm23().ok_or_else(|| Error::Region("Theorem 2/3 normalizer unavailable".into()))?;
    let inn = &exp.reference.innovation;
    let tails = EtaTails { table: &table, innovation: inn, c_plus: cp, c_minus: cm, beta: cfg.beta };
    log("eta tail: stratified sampling");

    // Stratum threshold u with P(|ε| > u) = ETA_STRATUM_MASS.
    let outside = |u: f64| inn.survival(u) + inn.cdf(-u);
    let (mut lo, mut hi) = (0.0, 1.0);
    while outside(hi) > ETA_STRATUM_MASS {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if outside(mid) > ETA_STRATUM_MASS {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = hi;
    let p_tail = outside(u);
    let (p_low, p_high) = (inn.cdf(-u), inn.survival(u));

    let xs: Vec<f64> = cfg.diagnostics.eta_levels.iter().map(|&q| tails.level(q)).collect();
    let half = draws / 2;
    let blocks = half.div_ceil(ETA_BLOCK);
    let seed = cfg.seed ^ 0x6574_615f_7461_696c;
    // Per block: counts above x and below −x for each level, in the bulk and tail strata.
    let counts = par::map_indexed(2 * blocks, exp.workers, |b| {
        let tail_stratum = b >= blocks;
        let start = (b % blocks) * ETA_BLOCK;
        let len = ETA_BLOCK.min(half - start);
        let mut rng = replication_rng(seed, b as u64);
        let mut up = vec![0usize; xs.len()];
        let mut down = vec![0usize; xs.len()];
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let w: f64 = rng.sample(Open01);
            let e = if tail_stratum {
                let v = w * p_tail;
                if v < p_low {
                    inn.quantile(v)
                } else {
                    inn.quantile_upper((v - p_low).max(f64::MIN_POSITIVE))
                }
            } else {
                inn.quantile(p_low + w * (1.0 - p_low - p_high))
            }
            .unwrap_or(0.0);
            let y = table.eval(e);
            values.push(y);
            for (k, &x) in xs.iter().enumerate() {
                if y > x {
                    up[k] += 1;
                } else if y < -x {
                    down[k] += 1;
                }
            }
        }
        (up, down, values)
    });
    let n_half = half as f64;
    let (bulk, tail) = counts.split_at(blocks);
    let sum_counts = |part: &[(Vec<usize>, Vec<usize>, Vec<f64>)], k: usize| -> (usize, usize) {
        part.iter().fold((0, 0), |(a, b), (u, d, _)| (a + u[k], b + d[k]))
    };
    let mut levels = Vec::new();
    let total = g1 + g2;
    for (k, (&q, &x)) in cfg.diagnostics.eta_levels.iter().zip(&xs).enumerate() {
        let (bu, bd) = sum_counts(bulk, k);
        let (tu, td) = sum_counts(tail, k);
        let est = |cb: usize, ct: usize| {
            let (fb, ft) = (cb as f64 / n_half, ct as f64 / n_half);
            let p = (1.0 - p_tail) * fb + p_tail * ft;
            let var = (1.0 - p_tail).powi(2) * fb * (1.0 - fb) / n_half + p_tail.powi(2) * ft * (1.0 - ft) / n_half;
            (p, var.sqrt())
        };
        let (p_upper, se_upper) = est(bu, tu);
        let (p_lower, se_lower) = est(bd, td);
        let scale = norm23.forward(x);
        let (gamma2_hat, gamma1_hat) = (scale * p_upper, scale * p_lower);
        let exceedances = bu + bd + tu + td;
        if exceedances < 100 {
            return Err(Error::Insufficient(format!("only {exceedances} exceedances at tail level {q}")));
        }
        let side_ok = |hat: f64, g: f64| if g > 0.0 { (hat - g).abs() <= 0.15 * g } else { hat <= 0.15 * total };
        let balanced = ((g2 - g1).abs() <= 1e-12 * total)
            .then(|| (p_upper - p_lower).abs() <= 2.0 * (se_upper.powi(2) + se_lower.powi(2)).sqrt());
        levels.push(EtaLevel {
            q,
            x,
            p_upper,
            p_lower,
            se_upper,
            se_lower,
            gamma2_hat,
            gamma1_hat,
            exceedances,
            pass: side_ok(gamma2_hat, g2) && side_ok(gamma1_hat, g1),
            balanced,
        });
    }
    let err = |l: &EtaLevel| ((l.gamma1_hat + l.gamma2_hat) - total).abs();
    let mut by_level: Vec<&EtaLevel> = levels.iter().collect();
    by_level.sort_by(|a, b| b.q.total_cmp(&a.q));
    let improving = by_level.windows(2).all(|w| err(w[1]) <= err(w[0]));

    // a_N from the exact tail, and the weighted empirical quantile for comparison.
    let n = cfg.diagnostics.a_n;
    let a_n = tails.level(1.0 / n);
    let norm = norm23.eval(n)?;
    let target = total.powf(1.0 / constants.alpha_beta);
    let ratio = a_n / norm;
    let mut weighted: Vec<(f64, f64)> = Vec::with_capacity(2 * half);
    for (part, w) in [(bulk, (1.0 - p_tail) / n_half), (tail, p_tail / n_half)] {
        for (_, _, vals) in part {
            weighted.extend(vals.iter().map(|v| (v.abs(), w)));
        }
    }
    weighted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut acc = 0.0;
    let mut a_n_empirical = f64::NAN;
    for (v, w) in &weighted {
        acc += w;
        if acc > 1.0 / n {
            a_n_empirical = *v;
            break;
        }
    }
    let a_n = AnCheck { n, a_n, norm, ratio, target, a_n_empirical, pass: (ratio / target - 1.0).abs() <= 0.10 };
    Ok(EtaTailReport { draws: 2 * half, stratum_mass: p_tail, stratum_threshold: u, gamma1: g1, gamma2: g2, levels, improving, a_n })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationCheck {
    pub n: usize,
    pub j: usize,
    #[serde(rename = "jLarge")]
    pub j_large: usize,
    pub ks: f64,
    #[serde(rename = "ksLarge")]
    pub ks_large: f64,
    /// `|ΔKS| < 0.025`.
    pub pass: bool,
}

/// KS at the smallest `N` with `J` and `4J` coefficients, on the same seeds.
pub fn truncation_check(exp: &mut Experiment, constants: &Constants, sums: &PartialSums, log: Log) -> Result<TruncationCheck> {
    let cfg = exp.config.clone();
    let (k, slice) = sums.slices.iter().enumerate().min_by_key(|(_, s)| s.n).expect("non-empty grid");
    let law = limit_law(&cfg, constants, 1.0)?;
    let cdf = StableCdf::new(law)?;
    let ks = stats::ks_one_sample(&sums.normalized(k, 1.0), |x| cdf.cdf(x));
    let j_large = 4 * slice.j;
    let model = exp.model(j_large, log)?;
    log(&format!("truncation check: N = {}, J = {j_large}", slice.n));
    let big = simulate_slice(&cfg, exp, model, slice.n, slice.seed, &[1.0], false, None)?;
    let xs: Vec<f64> = big.sums[0].iter().map(|v| v / big.norm).collect();
    let ks_large = stats::ks_one_sample(&xs, |x| cdf.cdf(x));
    Ok(TruncationCheck { n: slice.n, j: slice.j, j_large, ks, ks_large, pass: (ks - ks_large).abs() < 0.025 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizerRow {
    pub n: usize,
    pub j: usize,
    pub seed: u64,
    /// Centering used for `E K(X_n)`.
    #[serde(rename = "kInf0Truncated")]
    pub k0: f64,
    pub norm: f64,
    #[serde(rename = "normThm1")]
    pub norm_thm1: Option<f64>,
    #[serde(rename = "kernelScaleRatio")]
    pub kernel_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    #[serde(rename = "configHash")]
    pub config_hash: String,
    pub version: String,
    pub centering: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema: String,
    pub mode: String,
    pub theorem: u8,
    pub provenance: Provenance,
    /// The configuration without `workers` and `output`.
    pub config: serde_json::Value,
    pub constants: Constants,
    pub normalizers: Vec<NormalizerRow>,
    pub m: usize,
    pub cells: Vec<Cell>,
    pub trends: Vec<Trend>,
    pub increments: Vec<IncrementCheck>,
    pub decomposition: Option<Decomposition>,
    #[serde(rename = "etaTail")]
    pub eta_tail: Option<EtaTailReport>,
    pub truncation: Option<TruncationCheck>,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
    #[serde(skip)]
    pub quantiles: Vec<QuantileRow>,
}

pub const REPORT_SCHEMA: &str = "longmem-report/1";

fn hashed_config(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut v = cfg.to_value();
    if let serde_json::Value::Object(map) = &mut v {
        map.remove("workers");
        map.remove("output");
    }
    v
}

fn cell<'a>(cells: &'a [Cell], n: usize, t: f64) -> Option<&'a Cell> {
    cells.iter().find(|c| c.n == n && (c.t - t).abs() < 1e-12)
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Pass/fail of the marginal criteria that apply to the configured theorem.
fn marginal_criteria(cfg: &ExperimentConfig, c: &Constants, m: &Marginals) -> Vec<Criterion> {
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let Some(trend) = m.trends.iter().find(|t| (t.t - 1.0).abs() < 1e-12) else {
        return vec![];
    };
    let last = cell(&m.cells, n_max, 1.0).expect("cell present");
    let trend_detail = format!("KS(t=1) over N = {}", fmt_list(&trend.ks));
    match cfg.theorem {
        1 => {
            let gap = last.cf_gaps.iter().filter(|g| (g.u.abs() - 0.5).abs() < 1e-12).fold(0.0f64, |a, g| a.max(g.gap));
            let pass = trend.nonincreasing && last.ks <= 0.1 && gap <= 0.08;
            vec![Criterion {
                id: 6,
                name: "Theorem 1 marginals".into(),
                pass,
                detail: format!("{trend_detail}; KS(N_max) = {:.4} (<= 0.1); CF gap at |u| = 0.5: {gap:.4} (<= 0.08)", last.ks),
            }]
        }
        2 => {
            let g = c.limit.gamma2.unwrap_or(0.0) - c.limit.gamma1.unwrap_or(0.0);
            let expected = if g > 0.0 { 1.0 } else if g < 0.0 { -1.0 } else { 0.0 };
            let pass = trend.nonincreasing && (expected == 0.0 || last.skew_sign == expected);
            vec![Criterion {
                id: 7,
                name: "Theorem 2 marginals".into(),
                pass,
                detail: format!(
                    "{trend_detail}; empirical skew sign {} vs sgn(gamma2 - gamma1) = {expected}",
                    last.skew_sign
                ),
            }]
        }
        _ => {
            let meds: Vec<f64> = cfg
                .n_grid
                .iter()
                .filter_map(|&n| cell(&m.cells, n, 1.0).and_then(|c| c.median_abs_thm1))
                .collect();
            let decreasing = meds.windows(2).all(|w| w[1] < w[0]);
            let final_med = meds.last().copied().unwrap_or(f64::NAN);
            let int_ok = c.limit.int_k_df.abs() <= 1e-8;
            let pass = int_ok && trend.nonincreasing && decreasing && final_med < 0.05;
            vec![Criterion {
                id: 8,
                name: "Theorem 3 marginals".into(),
                pass,
                detail: format!(
                    "int K df = {:.3e}; {trend_detail}; median |S/B_N| = {} (decreasing, final < 0.05)",
                    c.limit.int_k_df,
                    fmt_list(&meds)
                ),
            }]
        }
    }
}

fn decomposition_criterion(cfg: &ExperimentConfig, d: &Decomposition) -> Criterion {
    let mut checks = vec![&d.s_minus_t];
    if cfg.theorem == 1 {
        checks.extend(d.t_minus_u.as_ref());
    } else {
        checks.extend(d.t_minus_tcal.as_ref());
    }
    let detail: Vec<String> =
        checks.iter().map(|c| format!("{}: slope {:.3} (<= {:.3})", c.name, c.slope, c.bound)).collect();
    Criterion {
        id: 9,
        name: "Decomposition rates".into(),
        pass: checks.iter().all(|c| c.pass) && checks.len() == 2,
        detail: detail.join("; "),
    }
}

fn eta_criterion(e: &EtaTailReport) -> Criterion {
    let smallest = e.levels.iter().min_by(|a, b| a.q.total_cmp(&b.q));
    let lvl_ok = smallest.is_some_and(|l| l.pass);
    let detail = match smallest {
        Some(l) => format!(
            "level {:e}: gamma1_hat = {:.5} (gamma1 = {:.5}), gamma2_hat = {:.5} (gamma2 = {:.5}); a_N/norm = {:.5} vs {:.5}",
            l.q, l.gamma1_hat, e.gamma1, l.gamma2_hat, e.gamma2, e.a_n.ratio, e.a_n.target
        ),
        None => "no levels".into(),
    };
    Criterion { id: 5, name: "Domain-of-attraction tails and a_N".into(), pass: lvl_ok && e.a_n.pass, detail }
}

/// Full verification run: partial sums, marginals, increments and the
/// diagnostics enabled in the configuration.
pub fn verify(cfg: &ExperimentConfig, log: Log) -> Result<(VerificationReport, Option<PathBatch>)> {
    let mut exp = Experiment::new(cfg, log)?;
    let constants = exp.constants()?;
    // Fail early on a degenerate limit.
    limit_law(cfg, &constants, 1.0)?;
    let decomposition = cfg.diagnostics.decomposition;
    if decomposition && cfg.n_grid.len() < 3 {
        return Err(Error::Insufficient("decomposition needs at least 3 sample sizes".into()));
    }
    let sums = run_partial_sums_with(&mut exp, decomposition, log)?;
    log("verifying marginals");
    let marg = verify_marginals(cfg, &constants, &sums)?;
    let increments = increment_checks(cfg, &sums);
    let mut criteria = marginal_criteria(cfg, &constants, &marg);
    let decomposition = if decomposition {
        let d = decomposition_diagnostics(cfg, &constants, &sums)?;
        criteria.push(decomposition_criterion(cfg, &d));
        Some(d)
    } else {
        None
    };
    let eta_tail = if cfg.diagnostics.eta_draws > 0 && cfg.theorem >= 2 {
        let e = eta_tail_diagnostics(&exp, &constants, log)?;
        criteria.push(eta_criterion(&e));
        Some(e)
    } else {
        None
    };
    let truncation = if cfg.diagnostics.truncation_check {
        Some(truncation_check(&mut exp, &constants, &sums, log)?)
    } else {
        None
    };
    let paths = if cfg.output.samples { Some(sample_paths(&exp, &sums)?) } else { None };
    let report = assemble(cfg, "verify", constants, &sums, marg, increments, decomposition, eta_tail, truncation, criteria);
    Ok((report, paths))
}

/// The first (up to 64) simulated paths at the largest `N`, on the run's seeds.
pub fn sample_paths(exp: &Experiment, sums: &PartialSums) -> Result<PathBatch> {
    let slice = sums.slices.iter().max_by_key(|s| s.n).expect("non-empty grid");
    let spec = CoefficientSpec { beta: exp.config.beta, ell: exp.config.ell.clone(), j: slice.j };
    let m = exp.config.m.min(64);
    crate::linproc::simulate_paths(
        &spec,
        &exp.reference.innovation,
        slice.n,
        m,
        slice.seed,
        exp.workers,
        crate::linproc::DEFAULT_MEMORY_BUDGET,
    )
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    cfg: &ExperimentConfig,
    mode: &str,
    constants: Constants,
    sums: &PartialSums,
    marg: Marginals,
    increments: Vec<IncrementCheck>,
    decomposition: Option<Decomposition>,
    eta_tail: Option<EtaTailReport>,
    truncation: Option<TruncationCheck>,
    criteria: Vec<Criterion>,
) -> VerificationReport {
    let normalizers = sums
        .slices
        .iter()
        .map(|s| NormalizerRow { n: s.n, j: s.j, seed: s.seed, k0: s.k0, norm: s.norm, norm_thm1: s.norm_thm1, kernel_ratio: s.kernel_ratio })
        .collect();
    let pass = criteria.iter().all(|c| c.pass);
    VerificationReport {
        schema: REPORT_SCHEMA.into(),
        mode: mode.into(),
        theorem: cfg.theorem,
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").into(),
            centering: "truncated-model K_inf(0)".into(),
        },
        config: hashed_config(cfg),
        constants,
        normalizers,
        m: sums.m,
        cells: marg.cells,
        trends: marg.trends,
        increments,
        decomposition,
        eta_tail,
        truncation,
        criteria,
        pass,
        quantiles: marg.quantiles,
    }
}

/// Diagnostics only: the decomposition rates and, where defined, the
/// `η_K` tail report.
pub fn diagnose(cfg: &ExperimentConfig, log: Log) -> Result<VerificationReport> {
    let mut cfg = cfg.clone();
    cfg.diagnostics.decomposition = true;
    cfg.m = cfg.diagnostics.decomposition_m.min(cfg.m).max(2);
    let mut exp = Experiment::new(&cfg, log)?;
    let constants = exp.constants()?;
    if cfg.n_grid.len() < 3 {
        return Err(Error::Insufficient("decomposition needs at least 3 sample sizes".into()));
    }
    let sums = run_partial_sums_with(&mut exp, true, log)?;
    let d = decomposition_diagnostics(&cfg, &constants, &sums)?;
    let mut criteria = vec![decomposition_criterion(&cfg, &d)];
    let eta_tail = if cfg.diagnostics.eta_draws > 0 && cfg.theorem >= 2 {
        let e = eta_tail_diagnostics(&exp, &constants, log)?;
        criteria.push(eta_criterion(&e));
        Some(e)
    } else {
        None
    };
    let marg = Marginals { cells: vec![], trends: vec![], quantiles: vec![] };
    Ok(assemble(&cfg, "diagnose", constants, &sums, marg, vec![], Some(d), eta_tail, None, criteria))
}

/// KS bound for samples drawn from the limit law itself.
pub fn selftest_bound(m: usize) -> f64 {
    1.36 / (m as f64).sqrt() + 0.01
}

/// Runs the verification pipeline on draws from the limit law itself.
pub fn selftest(cfg: &ExperimentConfig, log: Log) -> Result<VerificationReport> {
    let exp = Experiment::new(cfg, log)?;
    let constants = exp.constants()?;
    let times = all_times(cfg);
    let laws: Vec<StableLaw> = times.iter().map(|&t| limit_law(cfg, &constants, t)).collect::<Result<_>>()?;
    log("self-test: sampling the limit law");
    let mut slices = Vec::new();
    for &n in &cfg.n_grid {
        let seed = seed_for(cfg.seed, n) ^ 0x7365_6c66_7465_7374;
        let draws = par::map_indexed(cfg.m, exp.workers, |r| {
            let mut rng = replication_rng(seed, r as u64);
            laws.iter().map(|law| law.sample(&mut rng)).collect::<Result<Vec<f64>>>()
        });
        let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
        let sums = (0..times.len()).map(|k| draws.iter().map(|d| d[k]).collect()).collect();
        slices.push(NSlice { n, j: 0, seed, k0: 0.0, norm: 1.0, norm_thm1: None, kernel_ratio: None, sums, decomposition: None });
    }
    let sums = PartialSums { times, m: cfg.m, slices };
    let marg = verify_marginals(cfg, &constants, &sums)?;
    let bound = selftest_bound(cfg.m);
    let worst = marg.cells.iter().fold(0.0f64, |a, c| a.max(c.ks));
    let criteria = vec![Criterion {
        id: 0,
        name: "Self-test against the limit law".into(),
        pass: worst <= bound,
        detail: format!("max KS {worst:.4} <= {bound:.4}"),
    }];
    Ok(assemble(cfg, "selftest", constants, &sums, marg, vec![], None, None, None, criteria))
}
