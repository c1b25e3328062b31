//! Slowly and regularly varying functions in Karamata form, generalized
//! inverses of monotone maps, and the normalizing sequences of the limit
//! theorems.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The function `η` in `ℓ(x) = σ exp(∫_1^x η(t)/t dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EtaPreset {
    Zero,
    /// `η(t) = c1 (ln t)^{−a}`, `0 < a < 1`.
    LogPower { c1: f64, a: f64 },
    /// `η(t) = p / ln t`, i.e. `ℓ(x) = σ (ln x)^p`.
    Log { power: f64 },
    /// `η` tabulated at points `t`, linear in `ln t`, held constant outside.
    Tabulated { t: Vec<f64>, eta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowlyVarying {
    pub sigma: f64,
    pub eta: EtaPreset,
}

impl SlowlyVarying {
    pub fn constant(sigma: f64) -> Self {
        SlowlyVarying { sigma, eta: EtaPreset::Zero }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn log_power(sigma: f64, c1: f64, a: f64) -> Self {
        SlowlyVarying { sigma, eta: EtaPreset::LogPower { c1, a } }
    }

    pub fn log(sigma: f64, power: f64) -> Self {
        SlowlyVarying { sigma, eta: EtaPreset::Log { power } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("slowly varying sigma {} must be positive", self.sigma)));
        }
        match &self.eta {
            EtaPreset::Zero => {}
            EtaPreset::LogPower { c1, a } => {
                if !(*a > 0.0 && *a < 1.0) || !c1.is_finite() {
                    return Err(invalid(format!("log-power preset needs 0 < a < 1 (got a = {a})")));
                }
            }
            EtaPreset::Log { power } => {
                if !power.is_finite() {
                    return Err(invalid("log preset power must be finite"));
                }
            }
            EtaPreset::Tabulated { t, eta } => {
                if t.len() != eta.len() || t.len() < 2 {
                    return Err(invalid("tabulated eta needs matching t/eta arrays with at least two points"));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) || t[0] <= 1.0 {
                    return Err(invalid("tabulated eta points must be increasing and exceed 1"));
                }
                if eta.last().is_some_and(|e| e.abs() > 1.0) {
                    return Err(invalid("tabulated eta must satisfy |eta| <= 1 beyond the table"));
                }
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.eta, EtaPreset::Zero)
    }

    /// `η(t)`.
    pub fn eta(&self, t: f64) -> f64 {
        let lt = t.ln();
        match &self.eta {
            EtaPreset::Zero => 0.0,
            EtaPreset::LogPower { c1, a } => c1 * lt.powf(-a),
            EtaPreset::Log { power } => power / lt,
            EtaPreset::Tabulated { t: ts, eta } => {
                let s: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
                interp_held(&s, eta, lt)
            }
        }
    }

    /// `ln ℓ(x)` as a function of `ln x` (which must be positive).
    pub fn ln_eval_at_log(&self, lx: f64) -> f64 {
        let base = self.sigma.ln();
        match &self.eta {
            EtaPreset::Zero => base,
            EtaPreset::LogPower { c1, a } => base + c1 / (1.0 - a) * lx.powf(1.0 - a),
            EtaPreset::Log { power } => base + power * lx.ln(),
            EtaPreset::Tabulated { t, eta } => {
                let s: Vec<f64> = t.iter().map(|v| v.ln()).collect();
                base + integral_held(&s, eta, lx)
            }
        }
    }

    /// `ℓ(x)` for `x > 1`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 1.0) {
            return Err(Error::Domain(format!("slowly varying function needs x > 1 (got {x})")));
        }
        Ok(self.ln_eval_at_log(x.ln()).exp())
    }

    /// `ℓ(x)` for `x > 1`, panicking outside the domain (internal hot paths).
    pub(crate) fn at(&self, x: f64) -> f64 {
        debug_assert!(x > 1.0);
        self.ln_eval_at_log(x.ln()).exp()
    }

    /// Coefficient-style evaluation where `ℓ(1) = σ`.
    pub fn at_integer(&self, i: u64) -> f64 {
        if i <= 1 {
            self.sigma
        } else {
            self.at(i as f64)
        }
    }
}

fn interp_held(s: &[f64], v: &[f64], x: f64) -> f64 {
    if x <= s[0] {
        return v[0];
    }
    if x >= s[s.len() - 1] {
        return v[v.len() - 1];
    }
    let k = s.partition_point(|&p| p <= x) - 1;
    let w = (x - s[k]) / (s[k + 1] - s[k]);
    v[k] + w * (v[k + 1] - v[k])
}

/// `∫_0^{lx} η(e^s) ds` for `η` piecewise linear in `s`, held outside the knots.
fn integral_held(s: &[f64], v: &[f64], lx: f64) -> f64 {
    let mut total = 0.0;
    let first = s[0].min(lx);
    total += v[0] * first.max(0.0);
    for k in 0..s.len() - 1 {
        if lx <= s[k] {
            break;
        }
        let hi = lx.min(s[k + 1]);
        let vh = interp_held(s, v, hi);
        total += 0.5 * (v[k] + vh) * (hi - s[k]);
    }
    if lx > s[s.len() - 1] {
        total += v[v.len() - 1] * (lx - s[s.len() - 1]);
    }
    total
}

/// `ℓ_β(x) = x^{1/β} ℓ^{1/β}(x^{1/β})`.
pub fn ell_beta(ell: &SlowlyVarying, beta: f64, x: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    if !(x > 1.0) {
        return Err(Error::Domain(format!("ell_beta needs x^(1/beta) > 1 (got x = {x})")));
    }
    Ok(ln_ell_beta(ell, beta, x.ln()).exp())
}

fn ln_ell_beta(ell: &SlowlyVarying, beta: f64, lx: f64) -> f64 {
    let ly = lx / beta;
    ly + ell.ln_eval_at_log(ly) / beta
}

/// `ℓ(x ℓ^{1/β}(x)) / ℓ(x)` at each `x`.
pub fn check_ell_ratio(ell: &SlowlyVarying, beta: f64, xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let lx = x.ln();
            let l = ell.ln_eval_at_log(lx);
            let inner = lx + l / beta;
            if inner <= 0.0 {
                return f64::NAN;
            }
            (ell.ln_eval_at_log(inner) - l).exp()
        })
        .collect()
}

type Fun = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A nondecreasing map on `(A, hi]` with a cached log grid for inversion.
#[derive(Clone)]
pub struct MonotoneMap {
    g: Fun,
    log_grid: Vec<f64>,
    values: Vec<f64>,
    threshold: f64,
}

impl std::fmt::Debug for MonotoneMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MonotoneMap")
            .field("threshold", &self.threshold)
            .field("upper", &self.upper())
            .field("points", &self.log_grid.len())
            .finish()
    }
}

pub const POINTS_PER_DECADE: usize = 1024;

impl MonotoneMap {
    /// Tabulates `g` on a log grid over `[lo, hi]` (both positive). The
    /// threshold `A` is one grid step past the last point where the grid
    /// values fail to increase strictly.
    pub fn new(g: Fun, lo: f64, hi: f64) -> Result<Self> {
        Self::with_density(g, lo, hi, POINTS_PER_DECADE)
    }

    pub fn with_density(g: Fun, lo: f64, hi: f64, per_decade: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) {
            return Err(invalid("monotone map needs 0 < lo < hi"));
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        let n = (((lhi - llo) / std::f64::consts::LN_10) * per_decade as f64).ceil() as usize + 1;
        let log_grid: Vec<f64> = (0..n).map(|k| llo + (lhi - llo) * k as f64 / (n - 1) as f64).collect();
        let values: Vec<f64> = log_grid.iter().map(|&l| g(l.exp())).collect();
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("monotone map produced NaN on its grid"));
        }
        let last_bad = (0..n - 1).rev().find(|&k| !(values[k + 1] > values[k]));
        let start = match last_bad {
            None => 0,
            Some(k) => k + 2,
        };
        if start + 2 > n {
            return Err(Error::Domain("map is not increasing anywhere on its grid".into()));
        }
        let log_grid = log_grid[start..].to_vec();
        let values = values[start..].to_vec();
        let threshold = log_grid[0].exp();
        Ok(MonotoneMap { g, log_grid, values, threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn upper(&self) -> f64 {
        self.log_grid[self.log_grid.len() - 1].exp()
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.g)(s)
    }

    /// `inf{s > A : g(s) ≥ x}`; `+∞` above the tabulated range.
    pub fn inverse(&self, x: f64) -> f64 {
        let n = self.values.len();
        if x > self.values[n - 1] {
            return f64::INFINITY;
        }
        if x <= self.values[0] {
            return self.threshold;
        }
        let k = self.values.partition_point(|&v| v < x);
        let (mut lo, mut hi) = (self.log_grid[k - 1], self.log_grid[k]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.g)(mid.exp()) >= x {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        hi.exp()
    }
}

/// Fixed point `y = h(N^{1/α} y^{1/α})`, one representative of `h_α(N)`.
pub fn solve_h_alpha(h: &SlowlyVarying, alpha: f64, n: f64) -> Result<f64> {
    if !(n > 1.0) {
        return Err(Error::Domain(format!("h_alpha needs N > 1 (got {n})")));
    }
    if h.is_constant() {
        return Ok(h.sigma);
    }
    let ln_n = n.ln() / alpha;
    let map = |y: f64| -> f64 {
        let lx = ln_n + y.ln() / alpha;
        if lx <= 0.0 {
            return f64::NAN;
        }
        h.ln_eval_at_log(lx).exp()
    };
    let theta = 0.7;
    let mut y = map(1.0);
    for _ in 0..2000 {
        if !(y > 0.0 && y.is_finite()) {
            break;
        }
        let fy = map(y);
        if (fy / y - 1.0).abs() <= 1e-13 {
            return Ok(y);
        }
        y = (1.0 - theta) * y + theta * fy;
    }
    if y > 0.0 && (map(y) / y - 1.0).abs() <= 1e-8 {
        return Ok(y);
    }
    Err(Error::Convergence(format!("h_alpha fixed point did not converge at N = {n}")))
}

/// Denominator of the Theorem 1 normalization,
/// `B_N = N^{1+1/α−β} ℓ(N) h_α^{1/α}(N)`.
pub fn norm_thm1(alpha: f64, beta: f64, ell: &SlowlyVarying, h: &SlowlyVarying, n: f64) -> Result<f64> {
    if !(alpha > 1.0 && alpha < 2.0 && beta > 1.0 / alpha && beta <= 1.0) {
        return Err(Error::Region(format!("need 1 < alpha < 2 and 1/alpha < beta <= 1 (alpha = {alpha}, beta = {beta})")));
    }
    let ha = solve_h_alpha(h, alpha, n)?;
    let l = if n > 1.0 { ell.at(n) } else { ell.sigma };
    Ok(n.powf(1.0 + 1.0 / alpha - beta) * l * ha.powf(1.0 / alpha))
}

/// `((ℓ_β^←)^α / (h ∘ ℓ_β^←))^←`, built from two nested generalized inverses.
#[derive(Debug, Clone)]
pub struct Thm23Normalizer {
    pub alpha: f64,
    pub beta: f64,
    inner: MonotoneMap,
    outer: MonotoneMap,
}

impl Thm23Normalizer {
    pub fn new(alpha: f64, beta: f64, ell: &SlowlyVarying, h: &SlowlyVarying) -> Result<Self> {
        let ab = alpha * beta;
        if !(ab > 1.0 && ab < 2.0) {
            return Err(Error::Region(format!("need 1 < alpha*beta < 2 (got {ab})")));
        }
        ell.validate()?;
        h.validate()?;
        let e = ell.clone();
        let inner_fn: Fun = Arc::new(move |x: f64| ln_ell_beta(&e, beta, x.ln()).exp());
        let inner = MonotoneMap::new(inner_fn, 1.0 + 1e-6, 1e60)?;
        let upper_y = inner.values[inner.values.len() - 1].min(1e40);
        let inner_c = inner.clone();
        let hh = h.clone();
        let outer_fn: Fun = Arc::new(move |y: f64| {
            let s = inner_c.inverse(y);
            if !s.is_finite() || s <= 1.0 {
                return f64::NAN;
            }
            (alpha * s.ln() - hh.ln_eval_at_log(s.ln())).exp()
        });
        let lo = inner.values[0].max(1.0 + 1e-6);
        // Stop the outer grid once it is far beyond any sample size of interest.
        let mut hi = lo * 10.0;
        while hi < upper_y && outer_fn(hi) < 1e15 {
            hi *= 10.0;
        }
        let outer = MonotoneMap::new(outer_fn, lo, hi.min(upper_y))?;
        Ok(Thm23Normalizer { alpha, beta, inner, outer })
    }

    pub fn eval(&self, n: f64) -> Result<f64> {
        let v = self.outer.inverse(n);
        if !v.is_finite() {
            return Err(Error::Domain(format!("normalizer inverse undefined at N = {n}")));
        }
        Ok(v)
    }

    /// The composed forward map `y ↦ (ℓ_β^←(y))^α / h(ℓ_β^←(y))`.
    pub fn forward(&self, y: f64) -> f64 {
        self.outer.eval(y)
    }

    pub fn ell_beta_inverse(&self, x: f64) -> f64 {
        self.inner.inverse(x)
    }

    pub fn thresholds(&self) -> (f64, f64) {
        (self.inner.threshold(), self.outer.threshold())
    }
}

pub fn norm_thm23(alpha: f64, beta: f64, ell: &SlowlyVarying, h: &SlowlyVarying, n: f64) -> Result<f64> {
    Thm23Normalizer::new(alpha, beta, ell, h)?.eval(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn presets_closed_forms() {
        assert_eq!(SlowlyVarying::constant(2.0).eval(1e6).unwrap(), 2.0);
        let lp = SlowlyVarying::log_power(1.0, 1.0, 0.5);
        let x: f64 = 1e5;
        assert_relative_eq!(lp.eval(x).unwrap(), (2.0 * x.ln().sqrt()).exp(), max_relative = 1e-12);
        let lg = SlowlyVarying::log(1.0, 1.0);
        assert_relative_eq!(lg.eval(x).unwrap(), x.ln(), max_relative = 1e-12);
        assert!(lp.eval(1.0).is_err());
    }

    #[test]
    fn tabulated_matches_quadrature() {
        let sv = SlowlyVarying {
            sigma: 1.5,
            eta: EtaPreset::Tabulated { t: vec![2.0, 10.0, 1e3], eta: vec![0.3, -0.1, 0.05] },
        };
        sv.validate().unwrap();
        let x: f64 = 5e4;
        let est = crate::quad::integrate_with_breaks(
            |t: f64| sv.eta(t) / t,
            1.0,
            x,
            &[2.0, 10.0, 1e3],
            crate::quad::Tolerance::new(1e-13, 1e-13),
        )
        .unwrap();
        assert_relative_eq!(sv.eval(x).unwrap(), 1.5 * est.value.exp(), max_relative = 1e-9);
    }

    #[test]
    fn monotone_map_inverts_power() {
        let m = MonotoneMap::new(Arc::new(|s: f64| s.powf(1.0 / 1.5)), 1e-3, 1e6).unwrap();
        assert_relative_eq!(m.inverse(4.0), 8.0, max_relative = 1e-9);
        assert_eq!(m.inverse(1e9), f64::INFINITY);
    }

    #[test]
    fn threshold_skips_initial_decrease() {
        // 1/ln s + ln s decreases until s = e.
        let m = MonotoneMap::new(Arc::new(|s: f64| 1.0 / s.ln() + s.ln()), 1.01, 1e4).unwrap();
        assert!(m.threshold() > std::f64::consts::E && m.threshold() < 2.73);
    }

    #[test]
    fn h_alpha_constant_and_log() {
        assert_eq!(solve_h_alpha(&SlowlyVarying::one(), 1.5, 1e6).unwrap(), 1.0);
        let h = SlowlyVarying::log(1.0, 1.0);
        let y = solve_h_alpha(&h, 1.5, 1e6).unwrap();
        let resid = ((1e6f64.ln() + y.ln()) / 1.5) / y - 1.0;
        assert!(resid.abs() <= 1e-8);
    }

    #[test]
    fn thm1_power_law() {
        let one = SlowlyVarying::one();
        assert_relative_eq!(norm_thm1(1.5, 0.8, &one, &one, 1000.0).unwrap(), 1000f64.powf(1.0 + 1.0 / 1.5 - 0.8), max_relative = 1e-12);
        assert!(norm_thm1(1.5, 0.5, &one, &one, 1000.0).is_err());
    }

    #[test]
    fn thm23_power_law_chain() {
        let one = SlowlyVarying::one();
        let v = norm_thm23(0.8, 1.6, &one, &one, 16384.0).unwrap();
        assert_relative_eq!(v, 2f64.powf(14.0 / 1.28), max_relative = 1e-8);
    }
}
