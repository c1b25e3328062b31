//! Innovation laws with exact power tails.
//!
//! Beyond `x0` the survival functions are `P(ε > x) = σ₂ S(x)` and
//! `P(ε ≤ −x) = σ₁ S(x)` with `S(x) = x^{−α} h(x)`. On `[−x0, x0]` the density
//! is a quartic matched to the tails in value and slope, with the remaining
//! probability mass. The centered mode subtracts the exact mean.

use num_complex::Complex64;
use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate_with_breaks, Tolerance};
use crate::regvar::{EtaPreset, SlowlyVarying};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Symmetric,
    Centered,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnovationSpec {
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    #[serde(default = "SlowlyVarying::one")]
    pub h: SlowlyVarying,
    /// Tail start; chosen automatically when absent.
    #[serde(default)]
    pub x0: Option<f64>,
    pub mode: Mode,
}

impl InnovationSpec {
    pub fn symmetric(alpha: f64, sigma: f64) -> Self {
        InnovationSpec { alpha, sigma1: sigma, sigma2: sigma, h: SlowlyVarying::one(), x0: None, mode: Mode::Symmetric }
    }

    pub fn build(&self) -> Result<Innovation> {
        Innovation::new(self)
    }
}

/// Fraction of probability placed in the tails when `x0` is chosen automatically.
const AUTO_TAIL_MASS: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct Innovation {
    pub spec: InnovationSpec,
    pub alpha: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub x0: f64,
    h: SlowlyVarying,
    /// Quartic core coefficients `c_0..c_4`.
    core: [f64; 5],
    /// `P(ε ≤ −x0)` and `P(ε > x0)`.
    p_lower: f64,
    p_upper: f64,
    /// Mean removed in centered mode (zero otherwise).
    pub shift: f64,
    /// Witness exponent for `|φ(u)| (1 + |u|^δ)` boundedness.
    pub cf_decay_delta: f64,
    /// Core CDF at evenly spaced points of `[−x0, x0]`, to bracket inversions.
    core_table: Vec<f64>,
}

const CORE_TABLE_SIZE: usize = 512;

impl Innovation {
    pub fn new(spec: &InnovationSpec) -> Result<Self> {
        let a = spec.alpha;
        if !(a > 0.0 && a < 2.0) {
            return Err(invalid(format!("innovation alpha {a} not in (0, 2)")));
        }
        if !(spec.sigma1 >= 0.0 && spec.sigma2 >= 0.0 && spec.sigma1 + spec.sigma2 > 0.0) {
            return Err(invalid("tail constants must be nonnegative with positive sum"));
        }
        spec.h.validate()?;
        if !matches!(spec.h.eta, EtaPreset::Zero | EtaPreset::LogPower { .. }) {
            return Err(invalid("innovation tails support only the zero and log_power presets of h"));
        }
        match spec.mode {
            Mode::Symmetric if spec.sigma1 != spec.sigma2 => {
                return Err(invalid("symmetric mode needs sigma1 = sigma2"));
            }
            Mode::Centered if a <= 1.0 => {
                return Err(invalid("centered mode needs alpha > 1 (the mean must exist)"));
            }
            Mode::Centered | Mode::Raw if a == 1.0 => {
                return Err(invalid("alpha = 1 requires symmetric innovations"));
            }
            Mode::Raw if a > 1.0 => {
                return Err(invalid("alpha > 1 requires centered or symmetric innovations"));
            }
            _ => {}
        }
        let total = spec.sigma1 + spec.sigma2;
        let mut x0 = match spec.x0 {
            Some(v) if v > 1.0 => v,
            Some(v) => return Err(invalid(format!("tail start x0 = {v} must exceed 1"))),
            None => auto_x0(&spec.h, a, total)?,
        };
        let mut last_err = None;
        for _ in 0..40 {
            match Self::assemble(spec, x0) {
                Ok(inn) => return Ok(inn),
                Err(e) => {
                    if spec.x0.is_some() {
                        return Err(e);
                    }
                    last_err = Some(e);
                    x0 *= 1.15;
                }
            }
        }
        Err(last_err.unwrap_or_else(|| invalid("could not build innovation core")))
    }

    fn assemble(spec: &InnovationSpec, x0: f64) -> Result<Self> {
        let a = spec.alpha;
        let h = spec.h.clone();
        let s0 = tail_s(&h, a, x0);
        let (p_lower, p_upper) = (spec.sigma1 * s0, spec.sigma2 * s0);
        let core_mass = 1.0 - p_lower - p_upper;
        if !(core_mass > 0.0) {
            return Err(invalid(format!("tail mass at x0 = {x0} exceeds one")));
        }
        // S must decrease on the tail: η(x) < α there.
        if h.eta(x0) >= a {
            return Err(invalid("h varies too fast at x0 for a decreasing tail"));
        }
        let (g0, dg0) = tail_density(&h, a, x0);
        let (d_up, ds_up) = (spec.sigma2 * g0, spec.sigma2 * dg0);
        let (d_lo, ds_lo) = (spec.sigma1 * g0, -spec.sigma1 * dg0);
        let core = if spec.sigma1 == spec.sigma2 {
            let m = [
                [1.0, x0 * x0, x0.powi(4)],
                [0.0, 2.0 * x0, 4.0 * x0.powi(3)],
                [2.0 * x0, 2.0 * x0.powi(3) / 3.0, 2.0 * x0.powi(5) / 5.0],
            ];
            let c = solve3(m, [d_up, ds_up, core_mass])?;
            [c[0], 0.0, c[1], 0.0, c[2]]
        } else {
            let mut rows = [[0.0; 5]; 5];
            let mut rhs = [0.0; 5];
            for k in 0..5 {
                rows[0][k] = x0.powi(k as i32);
                rows[1][k] = (-x0).powi(k as i32);
                rows[2][k] = if k == 0 { 0.0 } else { k as f64 * x0.powi(k as i32 - 1) };
                rows[3][k] = if k == 0 { 0.0 } else { k as f64 * (-x0).powi(k as i32 - 1) };
                rows[4][k] = (x0.powi(k as i32 + 1) - (-x0).powi(k as i32 + 1)) / (k + 1) as f64;
            }
            rhs[0] = d_up;
            rhs[1] = d_lo;
            rhs[2] = ds_up;
            rhs[3] = ds_lo;
            rhs[4] = core_mass;
            let c = solve_dense(rows.iter().map(|r| r.to_vec()).collect(), rhs.to_vec())?;
            [c[0], c[1], c[2], c[3], c[4]]
        };
        let mut inn = Innovation {
            spec: spec.clone(),
            alpha: a,
            sigma1: spec.sigma1,
            sigma2: spec.sigma2,
            x0,
            h,
            core,
            p_lower,
            p_upper,
            shift: 0.0,
            cf_decay_delta: 1.0,
            core_table: Vec::new(),
        };
        let min_density = (0..=2000)
            .map(|k| inn.core_density(-x0 + 2.0 * x0 * k as f64 / 2000.0))
            .fold(f64::INFINITY, f64::min);
        if !(min_density > 0.0) {
            return Err(invalid(format!("core density is not positive for x0 = {x0}")));
        }
        if spec.mode == Mode::Centered {
            inn.shift = inn.raw_mean()?;
        }
        inn.core_table = (0..=CORE_TABLE_SIZE).map(|k| inn.core_cdf(inn.core_node(k))).collect();
        Ok(inn)
    }

    fn core_density(&self, x: f64) -> f64 {
        let c = &self.core;
        c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4])))
    }

    /// `∫_{−x0}^{x} p`.
    fn core_cdf(&self, x: f64) -> f64 {
        let c = &self.core;
        let prim = |t: f64| t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * (c[3] / 4.0 + t * c[4] / 5.0))));
        prim(x) - prim(-self.x0)
    }

    fn tail_survival(&self, y: f64) -> f64 {
        tail_s(&self.h, self.alpha, y)
    }

    fn raw_mean(&self) -> Result<f64> {
        let c = &self.core;
        let x0 = self.x0;
        let core = 2.0 * (c[1] * x0.powi(3) / 3.0 + c[3] * x0.powi(5) / 5.0);
        // ∫_{x0}^∞ x (−S′) dx = x0 S(x0) + ∫_{x0}^∞ S.
        let integral = if self.h.is_constant() {
            self.h.sigma * x0.powf(1.0 - self.alpha) / (self.alpha - 1.0)
        } else {
            crate::quad::integrate_geometric_panels(|x| self.tail_survival(x), x0, x0, 180, Tolerance::new(1e-14, 1e-12))?
                .value
                + 0.0
        };
        let t = x0 * self.tail_survival(x0) + integral;
        Ok(core + (self.sigma2 - self.sigma1) * t)
    }

    /// CDF of the (shifted) innovation.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = x + self.shift;
        if z <= -self.x0 {
            self.sigma1 * self.tail_survival(-z)
        } else if z >= self.x0 {
            1.0 - self.sigma2 * self.tail_survival(z)
        } else {
            (self.p_lower + self.core_cdf(z)).clamp(0.0, 1.0)
        }
    }

    /// `P(ε > x)` without cancellation in the upper tail.
    pub fn survival(&self, x: f64) -> f64 {
        let z = x + self.shift;
        if z >= self.x0 {
            self.sigma2 * self.tail_survival(z)
        } else {
            1.0 - self.cdf(x)
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = x + self.shift;
        if z > self.x0 {
            self.sigma2 * tail_density(&self.h, self.alpha, z).0
        } else if z < -self.x0 {
            self.sigma1 * tail_density(&self.h, self.alpha, -z).0
        } else {
            self.core_density(z)
        }
    }

    /// Exact quantile.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level {p} not in (0, 1)")));
        }
        Ok(self.quantile_split(p, 1.0 - p))
    }

    /// `x` with `P(ε > x) = q`, exact for small `q`.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("tail level {q} not in (0, 1)")));
        }
        Ok(self.quantile_split(1.0 - q, q))
    }

    /// Quantile given both `p` and `1 − p`, which keeps full precision in
    /// the upper tail when the complement is known exactly.
    fn quantile_split(&self, p: f64, q: f64) -> f64 {
        let z = if p <= self.p_lower {
            -self.tail_inverse(p / self.sigma1)
        } else if q <= self.p_upper {
            self.tail_inverse(q / self.sigma2)
        } else {
            self.core_inverse(p - self.p_lower)
        };
        z - self.shift
    }

    /// Solves `S(y) = s` on `[x0, ∞)`.
    fn tail_inverse(&self, s: f64) -> f64 {
        let a = self.alpha;
        if self.h.is_constant() {
            return (self.h.sigma / s).powf(1.0 / a).max(self.x0);
        }
        // ln S is decreasing in ln y: bracket and refine by Newton–bisection.
        let target = s.ln();
        let ln_s = |ly: f64| -a * ly + self.h.ln_eval_at_log(ly);
        let mut lo = self.x0.ln();
        if ln_s(lo) <= target {
            return self.x0;
        }
        let mut hi = lo + 1.0;
        while ln_s(hi) > target {
            hi = lo + 2.0 * (hi - lo);
        }
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = ln_s(y) - target;
            if f > 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let slope = -a + self.h.eta(y.exp());
            let mut next = y - f / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() < 1e-15 * y.abs().max(1.0) {
                y = next;
                break;
            }
            y = next;
        }
        y.exp()
    }

    fn core_node(&self, k: usize) -> f64 {
        -self.x0 + 2.0 * self.x0 * k as f64 / CORE_TABLE_SIZE as f64
    }

    fn core_inverse(&self, mass: f64) -> f64 {
        let k = self.core_table.partition_point(|&v| v <= mass).clamp(1, CORE_TABLE_SIZE);
        let (mut lo, mut hi) = (self.core_node(k - 1), self.core_node(k));
        let (f0, f1) = (self.core_table[k - 1], self.core_table[k]);
        let w = if f1 > f0 { ((mass - f0) / (f1 - f0)).clamp(0.0, 1.0) } else { 0.5 };
        let mut x = lo + (hi - lo) * w;
        for _ in 0..200 {
            let f = self.core_cdf(x) - mass;
            if f == 0.0 {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - f / self.core_density(x);
            if !(next >= lo && next <= hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * self.x0 {
                return next;
            }
            x = next;
        }
        x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile_split(u, 1.0 - u)
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.sample(rng);
        }
    }

    /// `φ_ε(u) − 1`, accurate in relative terms for small `u`.
    pub fn cf_minus_one(&self, u: f64) -> Result<Complex64> {
        if u == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let x0 = self.x0;
        let mut core = Complex64::new(0.0, 0.0);
        for (k, &c) in self.core.iter().enumerate() {
            if c != 0.0 {
                core += c * monomial_ft_minus_zero(k, u, x0);
            }
        }
        // σ₂ (G(u) − S(x0)) + σ₁ (G(−u) − S(x0)) with G(−u) = conj G(u).
        let s0 = self.tail_survival(x0);
        let gu = self.tail_g_minus_s0(u.abs(), s0)?;
        let (g_plus, g_minus) = if u > 0.0 { (gu, gu.conj()) } else { (gu.conj(), gu) };
        let tails = if self.sigma1 == self.sigma2 {
            Complex64::new(2.0 * self.sigma1 * g_plus.re, 0.0)
        } else {
            self.sigma2 * g_plus + self.sigma1 * g_minus
        };
        let raw = core + tails;
        if self.shift == 0.0 {
            return Ok(raw);
        }
        // e^{−iuμ}(1 + raw) − 1
        let rot = Complex64::from_polar(1.0, -u * self.shift);
        let rot_m1 = Complex64::new(-2.0 * (0.5 * u * self.shift).sin().powi(2), -(u * self.shift).sin());
        Ok(rot_m1 + rot * raw)
    }

    /// `φ_ε(u)`.
    pub fn cf(&self, u: f64) -> Result<Complex64> {
        Ok(self.cf_minus_one(u)? + 1.0)
    }

    /// `G(u) − S(x0)` for `u > 0`, where
    /// `G(u) = e^{iux0}[S(x0) − ∫_0^∞ e^{−t} S(x0 + it/u) dt]`.
    fn tail_g_minus_s0(&self, u: f64, s0: f64) -> Result<Complex64> {
        let x0 = self.x0;
        let a = self.alpha;
        let h = &self.h;
        let s_complex = |z: Complex64| -> Complex64 {
            let lz = z.ln();
            let mut l = -a * lz;
            if let EtaPreset::LogPower { c1, a: ap } = h.eta {
                l += c1 / (1.0 - ap) * lz.powf(1.0 - ap);
            }
            l += h.sigma.ln();
            l.exp()
        };
        let scale = u * x0;
        let mut breaks = Vec::new();
        let mut b = scale * 1e-3;
        while b < 60.0 {
            if b > 1e-300 {
                breaks.push(b);
            }
            b *= 4.0;
        }
        breaks.extend([1.0, 4.0, 10.0, 25.0]);
        let est = integrate_with_breaks(
            |t: f64| s_complex(Complex64::new(x0, t / u)) * (-t).exp(),
            0.0,
            60.0,
            &breaks,
            Tolerance::new(1e-16, 1e-13).with_segments(4000),
        )?;
        let rot = Complex64::from_polar(1.0, u * x0);
        let rot_m1 = Complex64::new(-2.0 * (0.5 * u * x0).sin().powi(2), (u * x0).sin());
        Ok(s0 * rot_m1 - rot * est.value)
    }

    /// Largest `|φ(u)| (1 + |u|^δ)` over a log grid of `|u| ∈ [1, 10⁴]`.
    pub fn cf_decay_witness(&self) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for k in 0..=160 {
            let u = 10f64.powf(4.0 * k as f64 / 160.0);
            let v = self.cf(u)?.norm() * (1.0 + u.powf(self.cf_decay_delta));
            sup = sup.max(v);
        }
        Ok(sup)
    }

    /// Exact tail constant check: `P(ε > x) / (x^{−α} h(x))` in the pre-shift frame.
    pub fn tail_probabilities_unshifted(&self, x: f64) -> (f64, f64) {
        if x >= self.x0 {
            let s = self.tail_survival(x);
            (self.sigma1 * s, self.sigma2 * s)
        } else {
            let up = 1.0 - (self.p_lower + self.core_cdf(x.min(self.x0)));
            let lo = if -x <= -self.x0 { self.sigma1 * self.tail_survival(x) } else { self.p_lower + self.core_cdf(-x) };
            (lo, up)
        }
    }

    pub fn core_coefficients(&self) -> [f64; 5] {
        self.core
    }

    pub fn h(&self) -> &SlowlyVarying {
        &self.h
    }
}

/// `S(x) = x^{−α} h(x)`.
fn tail_s(h: &SlowlyVarying, a: f64, x: f64) -> f64 {
    (-a * x.ln() + h.ln_eval_at_log(x.ln())).exp()
}

/// Tail density `−S′(x)` and its derivative.
fn tail_density(h: &SlowlyVarying, a: f64, x: f64) -> (f64, f64) {
    let s = tail_s(h, a, x);
    let eta = h.eta(x);
    // x η′(x) for the log-power preset.
    let x_deta = match h.eta {
        EtaPreset::LogPower { c1, a: ap } => -ap * c1 * x.ln().powf(-ap - 1.0),
        EtaPreset::Log { power } => -power / x.ln().powi(2),
        _ => 0.0,
    };
    let g = s * (a - eta) / x;
    let dg = s / (x * x) * ((eta - a - 1.0) * (a - eta) - x_deta);
    (g, dg)
}

fn auto_x0(h: &SlowlyVarying, a: f64, total: f64) -> Result<f64> {
    let mut x = if h.is_constant() { (total * h.sigma / AUTO_TAIL_MASS).powf(1.0 / a) } else { 2.0 };
    x = x.max(1.5);
    for _ in 0..400 {
        if total * tail_s(h, a, x) <= AUTO_TAIL_MASS && h.eta(x) < 0.5 * a {
            return Ok(x);
        }
        x *= 1.1;
    }
    Err(invalid("could not choose a tail start x0"))
}

/// `∫_{−x0}^{x0} x^k (e^{iux} − 1) dx`.
fn monomial_ft_minus_zero(k: usize, u: f64, x0: f64) -> Complex64 {
    let w = u * x0;
    if w.abs() < 2.0 {
        // Σ_{n≥1} (iu)^n/n! · x0^{k+n+1}(1 − (−1)^{k+n+1})/(k+n+1)
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for n in 1..60 {
            term *= Complex64::new(0.0, w) / n as f64;
            let p = k + n + 1;
            if p % 2 == 1 {
                let c = 2.0 / p as f64;
                sum += term * c;
            }
            if term.norm() < 1e-18 * sum.norm().max(1e-300) {
                break;
            }
        }
        return sum * x0.powi(k as i32 + 1);
    }
    let iu = Complex64::new(0.0, u);
    let ep = Complex64::from_polar(1.0, w);
    let em = ep.conj();
    let mut m = (ep - em) / iu;
    for j in 1..=k {
        let xp = x0.powi(j as i32);
        let xm = (-x0).powi(j as i32);
        m = (xp * ep - xm * em) / iu - (j as f64 / iu) * m;
    }
    let zero = (x0.powi(k as i32 + 1) - (-x0).powi(k as i32 + 1)) / (k + 1) as f64;
    m - zero
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Result<[f64; 3]> {
    let v = solve_dense(m.iter().map(|r| r.to_vec()).collect(), b.to_vec())?;
    Ok([v[0], v[1], v[2]])
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(invalid("singular core system"));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// Empirical check of the Lemma 2.1 type bound `|1 − φ(λ)| ≤ C (|λ|^{α′} ∧ 1)`:
/// returns the smallest admissible `C` on a log grid of `λ ∈ [lo, hi]`.
pub fn fitted_bound_constant<F: Fn(f64) -> f64>(lo: f64, hi: f64, alpha_prime: f64, f: F) -> f64 {
    let mut c: f64 = 0.0;
    for k in 0..=200 {
        let l = lo * (hi / lo).powf(k as f64 / 200.0);
        c = c.max(f(l) / l.powf(alpha_prime).min(1.0));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn centered_skewed() -> Innovation {
        InnovationSpec { alpha: 1.5, sigma1: 0.2, sigma2: 0.6, h: SlowlyVarying::one(), x0: None, mode: Mode::Centered }
            .build()
            .unwrap()
    }

    #[test]
    fn density_integrates_to_one() {
        for inn in [InnovationSpec::symmetric(1.8, 0.5).build().unwrap(), centered_skewed()] {
            let total = integrate_with_breaks(
                |x| inn.pdf(x),
                -1e4,
                1e4,
                &[-inn.x0 - inn.shift, inn.x0 - inn.shift, -10.0, 10.0],
                Tolerance::new(1e-12, 1e-12).with_segments(5000),
            )
            .unwrap()
            .value;
            let missing = inn.cdf(-1e4) + inn.survival(1e4);
            assert_abs_diff_eq!(total + missing, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn density_is_continuous_at_tail_start() {
        let inn = centered_skewed();
        for side in [-1.0, 1.0] {
            let b = side * inn.x0 - inn.shift;
            assert_abs_diff_eq!(inn.pdf(b - 1e-9), inn.pdf(b + 1e-9), epsilon = 1e-7);
        }
    }

    #[test]
    fn tail_quantile_closed_form() {
        let spec = InnovationSpec { alpha: 1.2, sigma1: 0.5, sigma2: 0.5, h: SlowlyVarying::one(), x0: Some(3.0), mode: Mode::Symmetric };
        let inn = spec.build().unwrap();
        assert_abs_diff_eq!(inn.quantile(0.95).unwrap(), 10f64.powf(1.0 / 1.2), epsilon = 1e-10);
        assert_abs_diff_eq!(inn.quantile(0.5).unwrap(), 0.0, epsilon = 1e-12);
    }

    /// `∫_{lo}^{hi} pdf(x) e^{iux} dx` on fixed Gauss panels a fraction of a period wide.
    fn panel_ft(inn: &Innovation, u: f64, lo: f64, hi: f64) -> Complex64 {
        let (b1, b2) = (-inn.x0 - inn.shift, inn.x0 - inn.shift);
        panel_ft_smooth(inn, u, lo, b1) + panel_ft_smooth(inn, u, b1, b2) + panel_ft_smooth(inn, u, b2, hi)
    }

    fn panel_ft_smooth(inn: &Innovation, u: f64, lo: f64, hi: f64) -> Complex64 {
        let rule = crate::quad::GaussLegendre::new(16);
        let width = (1.0f64).min(1.0 / u.abs());
        let n = ((hi - lo) / width).ceil() as usize;
        let w = (hi - lo) / n as f64;
        (0..n)
            .map(|k| {
                let a = lo + k as f64 * w;
                rule.integrate(|x| inn.pdf(x) * Complex64::from_polar(1.0, u * x), a, a + w)
            })
            .sum()
    }

    #[test]
    fn cf_matches_quadrature() {
        let inn = centered_skewed();
        let cut = 2e5;
        let lost = inn.cdf(-cut) + inn.survival(cut);
        for &u in &[0.01, 0.3, 1.0, 4.0, 12.0] {
            let direct = panel_ft(&inn, u, -cut, cut);
            let cf = inn.cf(u).unwrap();
            assert!((cf - direct).norm() < lost + 1e-9, "u = {u}: {cf} vs {direct}");
        }
    }

    #[test]
    fn cf_of_log_power_tails() {
        let spec = InnovationSpec { alpha: 1.6, sigma1: 0.5, sigma2: 0.5, h: SlowlyVarying::log_power(1.0, 0.1, 0.75), x0: None, mode: Mode::Symmetric };
        let inn = spec.build().unwrap();
        let u = 0.7;
        let cut = 2e5;
        let lost = 2.0 * inn.survival(cut);
        let direct = panel_ft(&inn, u, -cut, cut);
        assert!((inn.cf(u).unwrap() - direct).norm() < lost + 1e-9);
        assert!(inn.cf(u).unwrap().im.abs() < 1e-12);
    }
}
