//! The functional `K`, the smoothed functional `K_∞(x) = E K(X_1 + x)`, and the
//! constants built from them.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::linproc::{coefficient_at, tail_power_sum, ProcessCf, Spectrum};
use crate::par;
use crate::quad::{integrate, integrate_with_breaks, SampledEnvelope, Tolerance};
use crate::regvar::SlowlyVarying;

const SQRT_PI: f64 = 1.772_453_850_905_516;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `e^{−x²}`
    GaussianBump,
    /// `x e^{−x²}`
    OddBump,
    /// `1_{[a,b]}(x)`
    Indicator { a: f64, b: f64 },
}

impl Shape {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            Shape::GaussianBump => (-x * x).exp(),
            Shape::OddBump => x * (-x * x).exp(),
            Shape::Indicator { a, b } => {
                if (a..=b).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn hat(&self, u: f64) -> Complex64 {
        let i = Complex64::i();
        match *self {
            Shape::GaussianBump => Complex64::new(SQRT_PI * (-u * u / 4.0).exp(), 0.0),
            Shape::OddBump => i * (0.5 * u * SQRT_PI * (-u * u / 4.0).exp()),
            Shape::Indicator { a, b } => {
                if u.abs() * (b - a).max(a.abs()).max(b.abs()) < 1e-6 {
                    // Series of (e^{iub} − e^{iua})/(iu).
                    let (a2, b2) = (a * a, b * b);
                    Complex64::new(b - a, 0.0) + i * (0.5 * u * (b2 - a2)) - (u * u / 6.0) * (b2 * b - a2 * a)
                } else {
                    (Complex64::from_polar(1.0, u * b) - Complex64::from_polar(1.0, u * a)) / (i * u)
                }
            }
        }
    }

    fn l1(&self) -> f64 {
        match *self {
            Shape::GaussianBump => SQRT_PI,
            Shape::OddBump => 1.0,
            Shape::Indicator { a, b } => b - a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub weight: f64,
    pub shape: Shape,
}

/// `K = Σ w_i K_i` over the preset shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub terms: Vec<Term>,
}

impl FunctionalSpec {
    pub fn single(shape: Shape) -> Self {
        FunctionalSpec { terms: vec![Term { weight: 1.0, shape }] }
    }

    pub fn gaussian_bump() -> Self {
        Self::single(Shape::GaussianBump)
    }

    pub fn odd_bump() -> Self {
        Self::single(Shape::OddBump)
    }

    pub fn indicator(a: f64, b: f64) -> Self {
        Self::single(Shape::Indicator { a, b })
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        FunctionalSpec {
            terms: self.terms.iter().map(|t| Term { weight: t.weight * lambda, shape: t.shape }).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if !t.weight.is_finite() {
                return Err(invalid("functional weight must be finite"));
            }
            if let Shape::Indicator { a, b } = t.shape {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(invalid(format!("indicator needs finite a < b (got [{a}, {b}])")));
                }
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.weight == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.weight * t.shape.eval(x)).sum()
    }

    /// `K̂(u) = ∫ e^{ixu} K(x) dx`.
    pub fn k_hat(&self, u: f64) -> Complex64 {
        self.terms.iter().map(|t| t.shape.hat(u) * t.weight).sum()
    }

    /// Upper bound on `∫|K|` (exact for a single term).
    pub fn l1_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.weight.abs() * t.shape.l1()).sum()
    }

    /// True when `K` has no indicator terms.
    pub fn is_smooth(&self) -> bool {
        self.terms.iter().all(|t| !matches!(t.shape, Shape::Indicator { .. }))
    }
}

pub fn k_hat(spec: &FunctionalSpec, u: f64) -> Complex64 {
    spec.k_hat(u)
}

/// Cubic Hermite interpolant on sorted nodes.
#[derive(Debug, Clone)]
struct Hermite {
    xs: Vec<f64>,
    v: Vec<f64>,
    d: Vec<f64>,
}

impl Hermite {
    fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&t| t <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * self.v[i] + h10 * h * self.d[i] + h01 * self.v[i + 1] + h11 * h * self.d[i + 1];
        let dv = ((6.0 * t2 - 6.0 * t) * (self.v[i] - self.v[i + 1])) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * self.d[i]
            + (3.0 * t2 - 2.0 * t) * self.d[i + 1];
        (v, dv)
    }
}

/// Power-law continuation `v(x) ≈ v(x_c)(x_c/|x|)^p` fitted from two outer nodes.
#[derive(Debug, Clone, Copy)]
struct PowerTail {
    xc: f64,
    vc: f64,
    p: f64,
}

impl PowerTail {
    fn fit(x1: f64, v1: f64, x2: f64, v2: f64) -> Self {
        if v1 == 0.0 || v2 == 0.0 || v1.signum() != v2.signum() {
            return PowerTail { xc: x2, vc: 0.0, p: 0.0 };
        }
        let p = -(v2 / v1).abs().ln() / (x2 / x1).ln();
        PowerTail { xc: x2, vc: v2, p }
    }

    fn eval(&self, ax: f64) -> (f64, f64) {
        let v = self.vc * (self.xc / ax).powf(self.p);
        (v, -self.p * v / ax)
    }
}

const INNER: f64 = 64.0;
const INNER_STEP: f64 = 1.0 / 32.0;
const OUTER: f64 = 4096.0;
/// `|x|` beyond which [`KInfinity::eval`] uses its power-law continuation.
pub const KINF_CACHE_LIMIT: f64 = OUTER;
const OUTER_PER_DECADE: f64 = 64.0;
/// Derivatives of `K_∞` at zero kept for Taylor expansions.
pub const TAYLOR_ORDER: usize = 6;
/// Radius within which `K_∞` is evaluated from its Taylor series at 0.
pub const TAYLOR_RADIUS: f64 = 0.05;

/// `K_∞(x) = (1/π) Re ∫_0^U K̂(u) φ̄(u) e^{−iux} du` with a Hermite cache.
#[derive(Debug, Clone)]
pub struct KInfinity {
    pub spec: FunctionalSpec,
    pub spectrum: Arc<Spectrum>,
    envelope: SampledEnvelope,
    inner: Hermite,
    outer_pos: Hermite,
    outer_neg: Hermite,
    tail_pos: PowerTail,
    tail_neg: PowerTail,
    /// `K_∞^{(k)}(0)` for `k = 0..=TAYLOR_ORDER`.
    pub derivs0: [f64; TAYLOR_ORDER + 1],
    sup_abs_derivs: [f64; 3],
}

fn log_nodes(lo: f64, hi: f64, per_decade: f64) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade).ceil() as usize;
    (0..=n).map(|k| lo * (hi / lo).powf(k as f64 / n as f64)).collect()
}

impl KInfinity {
    pub fn new(spec: &FunctionalSpec, spectrum: Arc<Spectrum>, workers: usize) -> Result<Self> {
        spec.validate()?;
        let owned = spec.clone();
        let envelope = spectrum.envelope.map(|u, phi| owned.k_hat(u) * phi.conj());
        let mut k = KInfinity {
            spec: owned,
            spectrum,
            envelope,
            inner: Hermite { xs: vec![], v: vec![], d: vec![] },
            outer_pos: Hermite { xs: vec![], v: vec![], d: vec![] },
            outer_neg: Hermite { xs: vec![], v: vec![], d: vec![] },
            tail_pos: PowerTail { xc: OUTER, vc: 0.0, p: 0.0 },
            tail_neg: PowerTail { xc: OUTER, vc: 0.0, p: 0.0 },
            derivs0: [0.0; TAYLOR_ORDER + 1],
            sup_abs_derivs: [0.0; 3],
        };
        let d0 = k.derivatives(0.0, TAYLOR_ORDER);
        k.derivs0.copy_from_slice(&d0);

        let n_inner = (2.0 * INNER / INNER_STEP).round() as usize;
        let xs: Vec<f64> = (0..=n_inner).map(|i| -INNER + i as f64 * INNER_STEP).collect();
        let vals = par::map_indexed(xs.len(), workers, |i| k.derivatives(xs[i], 2));
        let mut sup = [0.0f64; 3];
        for v in &vals {
            for (s, x) in sup.iter_mut().zip(v) {
                *s = s.max(x.abs());
            }
        }
        k.sup_abs_derivs = sup;
        k.inner = Hermite { v: vals.iter().map(|v| v[0]).collect(), d: vals.iter().map(|v| v[1]).collect(), xs };

        let ox = log_nodes(INNER, OUTER, OUTER_PER_DECADE);
        let (pos, neg) = k.side_caches(&ox, workers);
        let n = ox.len();
        k.tail_pos = PowerTail::fit(ox[n - 2], pos.v[n - 2], ox[n - 1], pos.v[n - 1]);
        k.tail_neg = PowerTail::fit(ox[n - 2], neg.v[n - 2], ox[n - 1], neg.v[n - 1]);
        k.outer_pos = pos;
        k.outer_neg = neg;
        Ok(k)
    }

    /// Hermite caches of `K_∞(±x)` against `x` on the nodes `xs > 0`.
    fn side_caches(&self, xs: &[f64], workers: usize) -> (Hermite, Hermite) {
        let build = |sign: f64| par::map_indexed(xs.len(), workers, |i| self.derivatives(sign * xs[i], 1));
        let pos = build(1.0);
        let neg = build(-1.0);
        (
            Hermite { xs: xs.to_vec(), v: pos.iter().map(|v| v[0]).collect(), d: pos.iter().map(|v| v[1]).collect() },
            // Stored against |x|, so the derivative flips sign.
            Hermite { xs: xs.to_vec(), v: neg.iter().map(|v| v[0]).collect(), d: neg.iter().map(|v| -v[1]).collect() },
        )
    }

    /// `K_∞^{(k)}(x)` for `k = 0..=kmax` by direct quadrature.
    pub fn derivatives(&self, x: f64, kmax: usize) -> Vec<f64> {
        let m = self.envelope.fourier_moments(x, kmax);
        let mut rot = Complex64::new(1.0, 0.0);
        m.iter()
            .map(|&mk| {
                let v = (rot * mk).re / PI;
                rot *= -Complex64::i();
                v
            })
            .collect()
    }

    /// Uncached `K_∞(x)`.
    pub fn direct(&self, x: f64) -> f64 {
        self.envelope.fourier(x, 0).re / PI
    }

    /// Cached `(K_∞(x), K_∞′(x))`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let ax = x.abs();
        if ax <= INNER {
            self.inner.eval(x)
        } else if ax <= OUTER {
            let (v, d) = if x > 0.0 { self.outer_pos.eval(ax) } else { self.outer_neg.eval(ax) };
            (v, if x > 0.0 { d } else { -d })
        } else if x > 0.0 {
            self.tail_pos.eval(ax)
        } else {
            let (v, d) = self.tail_neg.eval(ax);
            (v, -d)
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// Cached value inside the cache range, direct quadrature outside it.
    pub fn eval_exact_tail(&self, x: f64) -> f64 {
        if x.abs() <= OUTER {
            self.eval(x)
        } else {
            self.direct(x)
        }
    }

    /// `(K_∞(x) − K_∞(0), K_∞′(x))`, from the Taylor series at 0 when
    /// `|x| ≤ TAYLOR_RADIUS` so that the difference keeps its relative accuracy.
    pub fn increment_with_derivative(&self, x: f64) -> (f64, f64) {
        if x.abs() > TAYLOR_RADIUS {
            let (v, d) = self.eval_with_derivative(x);
            return (v - self.at_zero(), d);
        }
        let (mut v, mut d) = (0.0, 0.0);
        let (mut xp, mut fact) = (1.0, 1.0);
        for k in 1..=TAYLOR_ORDER {
            // xp = x^{k−1}, fact = (k−1)!
            d += self.derivs0[k] * xp / fact;
            fact *= k as f64;
            xp *= x;
            v += self.derivs0[k] * xp / fact;
        }
        (v, d)
    }

    pub fn at_zero(&self) -> f64 {
        self.derivs0[0]
    }

    /// `∫ K df = −K_∞′(0)`.
    pub fn int_k_df(&self) -> f64 {
        -self.derivs0[1]
    }

    /// Largest `|K_∞|`, `|K_∞′|` and `|K_∞″|` over the inner grid.
    pub fn sup_abs(&self) -> [f64; 3] {
        self.sup_abs_derivs
    }

    pub fn process(&self) -> &ProcessCf {
        &self.spectrum.cf
    }

    /// `E K_∞(a ε) − K_∞(0)` by quadrature against `φ_ε`.
    pub fn shift_direct(&self, a: f64) -> f64 {
        let cf = &self.spectrum.cf;
        let s = self.envelope.integrate_weighted(|u| cexpm1(cf.innovation_log_cf(a * u)).conj());
        s.re / PI
    }
}

/// `e^z − 1` accurate for small `|z|`.
pub fn cexpm1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-5 {
        z * (Complex64::new(1.0, 0.0) + z * (0.5 + z / 6.0))
    } else {
        z.exp() - 1.0
    }
}

pub fn k_infty(kinf: &KInfinity, x: f64) -> f64 {
    kinf.eval(x)
}

pub fn int_k_df(kinf: &KInfinity) -> f64 {
    kinf.int_k_df()
}

const SHIFT_MIN: f64 = 1e-12;
const SHIFT_PER_DECADE: f64 = 32.0;

/// `c(a) = E K_∞(aε)`, stored as `(c(a) − K_∞(0))/a^α` on a log grid in `a`.
#[derive(Debug, Clone)]
pub struct ShiftCurve {
    alpha: f64,
    la_min: f64,
    step: f64,
    ratio: Vec<f64>,
}

impl ShiftCurve {
    pub fn new(kinf: &KInfinity, a_max: f64, workers: usize) -> Result<Self> {
        if !(a_max > SHIFT_MIN) {
            return Err(invalid("shift curve needs a_max above 1e-12"));
        }
        let alpha = kinf.process().innovation.alpha;
        let la_min = SHIFT_MIN.ln();
        let step = std::f64::consts::LN_10 / SHIFT_PER_DECADE;
        let count = ((a_max.ln() - la_min) / step).ceil() as usize + 4;
        let ratio = par::map_indexed(count, workers, |k| {
            let a = (la_min + k as f64 * step).exp();
            kinf.shift_direct(a) / a.powf(alpha)
        });
        Ok(ShiftCurve { alpha, la_min, step, ratio })
    }

    /// `c(a) − K_∞(0)` for `a > 0`.
    pub fn excess(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        let pos = (a.ln() - self.la_min) / self.step;
        let r = if pos <= 0.0 {
            self.ratio[0]
        } else {
            let n = self.ratio.len();
            let i0 = (pos.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
            let t = pos - i0 as f64;
            let mut acc = 0.0;
            for k in 0..6 {
                let mut w = 1.0;
                for m in 0..6 {
                    if m != k {
                        w *= (t - m as f64) / (k as f64 - m as f64);
                    }
                }
                acc += self.ratio[i0 + k] * w;
            }
            acc
        };
        r * a.powf(self.alpha)
    }

    /// `sup_a |c(a) − K_∞(0)| / a^α` over the grid.
    pub fn ratio_bound(&self) -> f64 {
        self.ratio.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// `c̃` with the stable-domain factor `Γ(1−α)cos(πα/2) = Γ(2−α)|cos(πα/2)|/(α−1)`
/// (positive on `1 < α < 2`).
pub fn c_tilde(alpha: f64, beta: f64, sigma1: f64, sigma2: f64, int_k_df: f64) -> Result<f64> {
    thm1_region(alpha, beta)?;
    let factor = gamma(1.0 - alpha) * (PI * alpha / 2.0).cos();
    Ok(c_tilde_with_factor(beta, sigma1 + sigma2, alpha, factor, int_k_df))
}

/// `c̃` exactly as displayed in Theorem 1, using `|Γ(α−1)cos(πα/2)|`.
pub fn c_tilde_printed(alpha: f64, beta: f64, sigma1: f64, sigma2: f64, int_k_df: f64) -> Result<f64> {
    thm1_region(alpha, beta)?;
    let factor = (gamma(alpha - 1.0) * (PI * alpha / 2.0).cos()).abs();
    Ok(c_tilde_with_factor(beta, sigma1 + sigma2, alpha, factor, int_k_df))
}

fn c_tilde_with_factor(beta: f64, sigma: f64, alpha: f64, factor: f64, int_k_df: f64) -> f64 {
    (sigma * factor).powf(1.0 / alpha) / (1.0 - beta) * (-int_k_df)
}

fn thm1_region(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0 && beta > 1.0 / alpha && beta < 1.0) {
        return Err(Error::Region(format!("need 1 < alpha < 2 and 1/alpha < beta < 1 (got alpha={alpha}, beta={beta})")));
    }
    Ok(())
}

/// `C_K^± = (1/β) ∫_0^∞ (K_∞(±u) − K_∞(0)) u^{−1/β−1} du`.
pub fn c_k_pm(kinf: &KInfinity, beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    let d = kinf.derivs0;
    let slope_is_zero = d[1].abs() <= 1e-9 * d[0].abs().max(1e-300) + 1e-12;
    if beta <= 1.0 && !slope_is_zero {
        return Err(Error::Region(format!(
            "C_K diverges: beta = {beta} <= 1 while K_inf'(0) = {:.3e} is nonzero",
            d[1]
        )));
    }
    let q = 1.0 / beta;
    let one_side = |sign: f64| -> Result<f64> {
        let delta: f64 = 1e-2;
        // Taylor part on [0, δ]: ∫ u^{k−q−1} du = δ^{k−q}/(k−q).
        let mut taylor = 0.0;
        let mut fact = 1.0;
        for k in 1..=5usize {
            fact *= k as f64;
            if k == 1 && slope_is_zero && beta <= 1.0 {
                continue;
            }
            let coef = f64::powi(sign, k as i32) * d[k] / fact;
            taylor += coef * delta.powf(k as f64 - q) / (k as f64 - q);
        }
        let tol = Tolerance::new(1e-12, 1e-10).with_segments(2000);
        let near = integrate(|u: f64| (kinf.direct(sign * u) - d[0]) * u.powf(-q - 1.0), delta, 1.0, tol)?.value;
        let mid = integrate_with_breaks(
            |u: f64| kinf.eval(sign * u) * u.powf(-q - 1.0),
            1.0,
            INNER,
            &[2.0, 4.0, 8.0, 16.0, 32.0],
            tol,
        )?
        .value;
        let outer = integrate(
            |s: f64| {
                let u = s.exp();
                kinf.eval(sign * u) * u.powf(-q)
            },
            INNER.ln(),
            OUTER.ln(),
            tol,
        )?
        .value;
        let tail = if sign > 0.0 { kinf.tail_pos } else { kinf.tail_neg };
        // ∫_X^∞ v_c (X/u)^p u^{−q−1} du = v_c X^{−q}/(p + q).
        let far = tail.vc * OUTER.powf(-q) / (tail.p + q);
        Ok(q * (taylor + near + mid + outer + far) - d[0])
    };
    Ok((one_side(1.0)?, one_side(-1.0)?))
}

/// `1/(p−1) + p(∫_1^∞ x^{−p}/(x²+1) − ∫_0^1 x^{2−p}/(x²+1)) + ∫_0^∞ x^{2−p}(x²+3)/(x²+1)²`.
pub fn cbar_bracket(p: f64) -> Result<f64> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::Region(format!("alpha*beta must lie in (1, 2) (got {p})")));
    }
    let tol = Tolerance::new(1e-13, 1e-12).with_segments(4000);
    // x = 1/y maps ∫_1^∞ x^{−p}/(x²+1) dx to ∫_0^1 y^p/(1+y²) dy.
    let i1 = integrate(|y: f64| y.powf(p) / (1.0 + y * y), 0.0, 1.0, tol)?.value;
    let i2 = integrate(|x: f64| x.powf(2.0 - p) / (x * x + 1.0), 0.0, 1.0, tol)?.value;
    let g = |x: f64| x.powf(2.0 - p) * (x * x + 3.0) / (x * x + 1.0).powi(2);
    // On [1, ∞) with x = 1/y: y^{p−2}(1 + 3y²)/(1 + y²)² dy; the singularity is integrable.
    let i3a = integrate(g, 0.0, 1.0, tol)?.value;
    let i3b = integrate(|y: f64| y.powf(p - 2.0) * (1.0 + 3.0 * y * y) / (1.0 + y * y).powi(2), 0.0, 1.0, tol)?.value;
    Ok(1.0 / (p - 1.0) + p * (i1 - i2) + i3a + i3b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gammas {
    pub gamma1: f64,
    pub gamma2: f64,
    /// `c̄` as displayed in Theorem 2.
    pub c_bar: f64,
}

pub fn gammas_and_cbar(p: f64, sigma1: f64, sigma2: f64, c_plus: f64, c_minus: f64) -> Result<Gammas> {
    let pos = |c: f64| if c > 0.0 { c.powf(p) } else { 0.0 };
    let neg = |c: f64| if c < 0.0 { (-c).powf(p) } else { 0.0 };
    let gamma2 = sigma2 * pos(c_plus) + sigma1 * pos(c_minus);
    let gamma1 = sigma2 * neg(c_plus) + sigma1 * neg(c_minus);
    if !(gamma1 + gamma2 > 0.0) {
        return Err(Error::Degenerate("gamma1 + gamma2 = 0".into()));
    }
    let c_bar = (gamma2 - gamma1) / (gamma2 + gamma1) * cbar_bracket(p)?;
    Ok(Gammas { gamma1, gamma2, c_bar })
}

/// Constants attached to a configuration; fields that do not apply are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LimitConstants {
    #[serde(rename = "intKdf")]
    pub int_k_df: f64,
    #[serde(rename = "kInf0")]
    pub k_inf0: f64,
    #[serde(rename = "cTilde")]
    pub c_tilde: Option<f64>,
    #[serde(rename = "cTildePrinted")]
    pub c_tilde_printed: Option<f64>,
    #[serde(rename = "cPlus")]
    pub c_plus: Option<f64>,
    #[serde(rename = "cMinus")]
    pub c_minus: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    #[serde(rename = "cBar")]
    pub c_bar: Option<f64>,
}

/// Value of a series together with a bound on what was left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub remainder_bound: f64,
}

const EM_DIRECT: usize = 2048;

/// `η_K(x) = Σ_j (K_∞(a_j x) − E K_∞(a_j ε))`, truncated at `J` or summed to infinity.
#[derive(Debug, Clone)]
pub struct EtaK {
    pub kinf: Arc<KInfinity>,
    pub shifts: Arc<ShiftCurve>,
    pub beta: f64,
    pub ell: SlowlyVarying,
    /// `None` sums the full series.
    pub upper: Option<usize>,
}

impl EtaK {
    pub fn new(kinf: Arc<KInfinity>, shifts: Arc<ShiftCurve>, upper: Option<usize>) -> Result<Self> {
        let cf = kinf.process();
        let (beta, ell) = (cf.beta, cf.ell.clone());
        let e = EtaK { kinf, shifts, beta, ell, upper };
        if upper.is_none() {
            e.check_convergent()?;
        }
        Ok(e)
    }

    fn slope_is_zero(&self) -> bool {
        self.kinf.derivs0[1].abs() <= 1e-12
    }

    fn check_convergent(&self) -> Result<()> {
        let alpha = self.kinf.process().innovation.alpha;
        if alpha * self.beta <= 1.0 {
            return Err(Error::Region("eta_K needs alpha*beta > 1".into()));
        }
        if self.beta <= 1.0 && !self.slope_is_zero() {
            return Err(Error::Region("eta_K diverges for beta <= 1 unless K_inf'(0) = 0".into()));
        }
        Ok(())
    }

    fn a(&self, j: f64) -> f64 {
        coefficient_at(self.beta, &self.ell, j)
    }

    /// `(term, d/dx term)` at real index `j`.
    fn term(&self, j: f64, x: f64) -> (f64, f64) {
        let a = self.a(j);
        let (k, dk) = self.kinf.increment_with_derivative(a * x);
        (k - self.shifts.excess(a), a * dk)
    }

    /// `(η(x), η′(x))` and a bound on the omitted tail.
    pub fn eval_with_derivative(&self, x: f64) -> Result<(f64, f64, f64)> {
        let end = self.upper.unwrap_or(usize::MAX);
        let direct = EM_DIRECT.min(end);
        let (mut v, mut d) = (0.0, 0.0);
        for j in 1..=direct {
            let (t, dt) = self.term(j as f64, x);
            v += t;
            d += dt;
        }
        if direct == end {
            return Ok((v, d, self.remainder_bound(x, end as f64)?));
        }
        let alpha = self.kinf.process().innovation.alpha;
        let ax = x.abs().max(1.0);
        // Beyond j_max the terms follow their Taylor expansion.
        let j_max = match self.upper {
            Some(j) => j as f64,
            None => {
                let by_x = (ax * 1e7).powf(1.0 / self.beta);
                let by_shift = (1e16f64).powf(1.0 / (alpha * self.beta));
                by_x.max(by_shift).max(2.0 * direct as f64)
            }
        };
        let j0 = direct as f64;
        let mut breaks = vec![];
        let star = ax.powf(1.0 / self.beta);
        for m in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let s = (star * m).ln();
            if s > j0.ln() && s < j_max.ln() {
                breaks.push(s);
            }
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tol = Tolerance::new(1e-10, 1e-9).with_segments(4000);
        let iv = integrate_with_breaks(
            |s: f64| {
                let j = s.exp();
                let (t, dt) = self.term(j, x);
                Complex64::new(t * j, dt * j)
            },
            j0.ln(),
            j_max.ln(),
            &breaks,
            tol,
        )?
        .value;
        let f = |j: f64| self.term(j, x);
        let fd = |j: f64| {
            let h = 1e-3 * j;
            let (p, pd) = f(j + h);
            let (m, md) = f(j - h);
            ((p - m) / (2.0 * h), (pd - md) / (2.0 * h))
        };
        let (f0, fd0) = (f(j0), fd(j0));
        let (f1, fd1) = (f(j_max), fd(j_max));
        // Σ_{j0<j≤j1} = ∫ + (f(j1) − f(j0))/2 + (f′(j1) − f′(j0))/12.
        v += iv.re + 0.5 * (f1.0 - f0.0) + (fd1.0 - fd0.0) / 12.0;
        d += iv.im + 0.5 * (f1.1 - f0.1) + (fd1.1 - fd0.1) / 12.0;
        if self.upper.is_some() {
            return Ok((v, d, self.remainder_bound(x, j_max)?));
        }
        let k = &self.kinf.derivs0;
        let g0 = self.shifts.excess(self.a(j_max)) / self.a(j_max).powf(alpha);
        let s = |p: f64| tail_power_sum(self.beta, &self.ell, j_max, p);
        let mut tail = k[2] * x * x / 2.0 * s(2.0)? + k[3] * x.powi(3) / 6.0 * s(3.0)? - g0 * s(alpha)?;
        let mut dtail = k[2] * x * s(2.0)? + k[3] * x * x / 2.0 * s(3.0)?;
        if !(self.beta <= 1.0 && self.slope_is_zero()) {
            tail += k[1] * x * s(1.0)?;
            dtail += k[1] * s(1.0)?;
        }
        // The next Taylor term bounds what the expansion leaves out.
        let err = (k[4] * x.powi(4) / 24.0 * s(4.0)?).abs() + 1e-3 * tail.abs();
        Ok((v + tail, d + dtail, err))
    }

    pub fn eval(&self, x: f64) -> Result<SeriesValue> {
        let (value, _, remainder_bound) = self.eval_with_derivative(x)?;
        Ok(SeriesValue { value, remainder_bound })
    }

    /// Bound on `Σ_{j>J} |K_∞(a_j x) − E K_∞(a_j ε)|` from the Lipschitz inequality.
    fn remainder_bound(&self, x: f64, j: f64) -> Result<f64> {
        let alpha = self.kinf.process().innovation.alpha;
        let sup = self.kinf.sup_abs();
        let shift = self.shifts.ratio_bound() * tail_power_sum(self.beta, &self.ell, j, alpha)?;
        let lin = if self.beta > 1.0 {
            sup[1] * x.abs() * tail_power_sum(self.beta, &self.ell, j, 1.0)?
        } else {
            f64::INFINITY
        };
        let quad = if self.slope_is_zero() && 2.0 * self.beta > 1.0 {
            0.5 * sup[2] * x * x * tail_power_sum(self.beta, &self.ell, j, 2.0)?
        } else {
            f64::INFINITY
        };
        Ok(lin.min(quad) + shift)
    }
}

const ETA_INNER: f64 = 64.0;
const ETA_INNER_STEP: f64 = 1.0 / 16.0;
const ETA_OUTER: f64 = 1e22;
const ETA_OUTER_PER_DECADE: f64 = 32.0;

/// Hermite table of `η_K` for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct EtaTable {
    inner: Hermite,
    pos: Hermite,
    neg: Hermite,
    beta: f64,
}

impl EtaTable {
    pub fn new(eta: &EtaK, workers: usize) -> Result<Self> {
        let n = (2.0 * ETA_INNER / ETA_INNER_STEP).round() as usize;
        let xs: Vec<f64> = (0..=n).map(|i| -ETA_INNER + i as f64 * ETA_INNER_STEP).collect();
        let build = |xs: &[f64], sign: f64| -> Result<Hermite> {
            let vals = par::map_indexed(xs.len(), workers, |i| eta.eval_with_derivative(sign * xs[i]));
            let mut v = Vec::with_capacity(xs.len());
            let mut d = Vec::with_capacity(xs.len());
            for r in vals {
                let (a, b, _) = r?;
                v.push(a);
                d.push(sign * b);
            }
            Ok(Hermite { xs: xs.to_vec(), v, d })
        };
        let inner = build(&xs, 1.0)?;
        let ox = log_nodes(ETA_INNER, ETA_OUTER, ETA_OUTER_PER_DECADE);
        Ok(EtaTable { inner, pos: build(&ox, 1.0)?, neg: build(&ox, -1.0)?, beta: eta.beta })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax <= ETA_INNER {
            return self.inner.eval(x).0;
        }
        let side = if x > 0.0 { &self.pos } else { &self.neg };
        if ax <= ETA_OUTER {
            side.eval(ax).0
        } else {
            // η grows like |x|^{1/β} beyond the table.
            side.v[side.v.len() - 1] * (ax / ETA_OUTER).powf(1.0 / self.beta)
        }
    }
}
