//! Numerical integration: Gauss–Legendre rules, adaptive Gauss–Kronrod (15-point)
//! for real and complex integrands, and a panelled oscillatory (Filon-type) rule
//! for Fourier integrals whose smooth envelope is sampled once and reused.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not reach tolerance {tol:e} (estimated error {err:e} after {subdivisions} subdivisions)")]
    NoConvergence { tol: f64, err: f64, subdivisions: usize },
    #[error("non-finite integrand value at x = {0}")]
    NonFinite(f64),
}

/// A value that can be integrated: reals and complex numbers.
pub trait Integrand:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Default
{
    fn magnitude(self) -> f64;
}

impl Integrand for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn kronrod15<T: Integrand, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> Result<(T, f64), QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.magnitude().is_finite() {
        return Err(QuadError::NonFinite(center));
    }
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        if !(f1.magnitude().is_finite() && f2.magnitude().is_finite()) {
            return Err(QuadError::NonFinite(center - dx));
        }
        let s = f1 + f2;
        kron = kron + s * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + s * WG[j / 2];
        }
    }
    let value = kron * half;
    let err = ((kron - gauss) * half).magnitude();
    Ok((value, err))
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Tolerances for the adaptive integrator. The run stops when the summed error
/// estimate drops below `max(abs, rel * |I|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_segments: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, max_segments: 2000 }
    }

    pub const fn with_segments(mut self, n: usize) -> Self {
        self.max_segments = n;
        self
    }
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`, starting from the
/// given breakpoints (which may be empty).
pub fn integrate_with_breaks<T, F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate<T>, QuadError>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    if a == b {
        return Ok(Estimate { value: T::default(), error: 0.0 });
    }
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|&p| p > a.min(b) && p < a.max(b)));
    let n = points.len();
    if a > b {
        points[1..n].sort_by(|x, y| y.total_cmp(x));
    } else {
        points[1..n].sort_by(|x, y| x.total_cmp(y));
    }
    points.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = T::default();
    let mut total_err = 0.0;
    for w in points.windows(2) {
        let (value, error) = kronrod15(&mut f, w[0], w[1])?;
        total = total + value;
        total_err += error;
        heap.push(Segment { a: w[0], b: w[1], value, error });
    }

    let mut count = heap.len();
    loop {
        let target = tol.abs.max(tol.rel * total.magnitude());
        if total_err <= target {
            break;
        }
        if count >= tol.max_segments {
            return Err(QuadError::NoConvergence { tol: target, err: total_err, subdivisions: count });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid == worst.a || mid == worst.b {
            // Interval cannot be split further in floating point.
            return Err(QuadError::NoConvergence { tol: target, err: total_err, subdivisions: count });
        }
        let (v1, e1) = kronrod15(&mut f, worst.a, mid)?;
        let (v2, e2) = kronrod15(&mut f, mid, worst.b)?;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        count += 1;
    }
    // Recompute the sum from scratch to shed accumulated cancellation.
    let mut value = T::default();
    let mut error = 0.0;
    for s in heap.iter() {
        value = value + s.value;
        error += s.error;
    }
    Ok(Estimate { value, error })
}

pub fn integrate<T, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<T>, QuadError>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    integrate_with_breaks(f, a, b, &[], tol)
}

/// Integral over `[a, ∞)` via the map `x = a + s t / (1 - t)` on `t ∈ [0, 1)`.
/// `scale` sets where the bulk of the integrand lives.
pub fn integrate_to_infinity<T, F>(mut f: F, a: f64, scale: f64, tol: Tolerance) -> Result<Estimate<T>, QuadError>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    let g = move |t: f64| {
        if t >= 1.0 {
            return T::default();
        }
        let one_minus = 1.0 - t;
        let x = a + scale * t / one_minus;
        let jac = scale / (one_minus * one_minus);
        let v = f(x);
        if v.magnitude() == 0.0 {
            T::default()
        } else {
            v * jac
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// Integral over `[a, ∞)` split into geometrically growing panels
/// `[a, a+w], [a+w, a+3w], ...` up to `a + w * 2^max_panels`. Each panel is
/// integrated adaptively. Suited to integrands decaying like a power.
pub fn integrate_geometric_panels<T, F>(
    mut f: F,
    a: f64,
    first_width: f64,
    max_panels: usize,
    tol: Tolerance,
) -> Result<Estimate<T>, QuadError>
where
    T: Integrand,
    F: FnMut(f64) -> T,
{
    let mut lo = a;
    let mut width = first_width;
    let mut total = T::default();
    let mut err = 0.0;
    for _ in 0..max_panels {
        let hi = lo + width;
        let piece = integrate(&mut f, lo, hi, Tolerance { abs: tol.abs / max_panels as f64, ..tol })?;
        total = total + piece.value;
        err += piece.error;
        lo = hi;
        width *= 2.0;
    }
    Ok(Estimate { value: total, error: err })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared 16-point rule used by the spectral panels.
    pub fn order16() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    pub fn integrate<T: Integrand, F: FnMut(f64) -> T>(&self, mut f: F, a: f64, b: f64) -> T {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = T::default();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            s = s + f(c + h * x) * w;
        }
        s * h
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Barycentric weights for interpolation through `nodes`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut w = 1.0;
            for k in 0..n {
                if k != j {
                    w *= nodes[j] - nodes[k];
                }
            }
            1.0 / w
        })
        .collect()
}

/// Evaluates the interpolant through `(nodes, values)` at `x`.
pub fn barycentric_eval<T: Integrand>(nodes: &[f64], bw: &[f64], values: &[T], x: f64) -> T {
    let mut num = T::default();
    let mut den = 0.0;
    for ((&xn, &w), &v) in nodes.iter().zip(bw).zip(values) {
        let d = x - xn;
        if d == 0.0 {
            return v;
        }
        let t = w / d;
        num = num + v * t;
        den += t;
    }
    num * (1.0 / den)
}

/// One panel of a sampled spectral envelope.
#[derive(Debug, Clone)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
    /// Envelope samples at the mapped 16-point Gauss nodes.
    pub values: Vec<Complex64>,
}

/// A smooth complex envelope `F(u)` on `[0, U]`, sampled on Gauss panels, with
/// the Fourier-type integral `∫_0^U F(u) e^{-iux} du` evaluated for any `x`.
/// Panels are integrated with the stored nodes when the phase varies slowly and
/// with an oversampled Gauss rule on the polynomial interpolant otherwise, so the
/// envelope is never re-evaluated.
#[derive(Debug, Clone)]
pub struct SampledEnvelope {
    pub panels: Vec<Panel>,
}

impl SampledEnvelope {
    /// Panel node positions (for callers filling in values).
    pub fn panel_nodes(a: f64, b: f64) -> Vec<f64> {
        let rule = GaussLegendre::order16();
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        rule.nodes.iter().map(|&t| c + h * t).collect()
    }

    /// Breakpoints for a sampled envelope: geometric refinement towards zero
    /// (for the `|u|^α` cusp of characteristic functions) followed by uniform
    /// panels of width `width` up to `upper`.
    pub fn breakpoints(width: f64, upper: f64, depth: usize) -> Vec<f64> {
        let mut pts = vec![0.0];
        let first = width.min(upper);
        for k in (1..=depth).rev() {
            pts.push(first * 0.5f64.powi(k as i32));
        }
        let mut x = first;
        pts.push(x);
        while x < upper - 1e-12 * upper {
            x = (x + width).min(upper);
            pts.push(x);
        }
        pts
    }

    pub fn from_fn<F: FnMut(f64) -> Complex64>(breaks: &[f64], mut f: F) -> Self {
        let panels = breaks
            .windows(2)
            .map(|w| {
                let values = Self::panel_nodes(w[0], w[1]).into_iter().map(&mut f).collect();
                Panel { a: w[0], b: w[1], values }
            })
            .collect();
        SampledEnvelope { panels }
    }

    /// Multiplies the envelope pointwise by `g(u)`, producing a new envelope.
    pub fn map<G: FnMut(f64, Complex64) -> Complex64>(&self, mut g: G) -> Self {
        let panels = self
            .panels
            .iter()
            .map(|p| {
                let nodes = Self::panel_nodes(p.a, p.b);
                let values = nodes.iter().zip(&p.values).map(|(&u, &v)| g(u, v)).collect();
                Panel { a: p.a, b: p.b, values }
            })
            .collect();
        SampledEnvelope { panels }
    }

    /// `∫_0^U F(u) u^k e^{-iux} du`.
    pub fn fourier(&self, x: f64, power: u32) -> Complex64 {
        let rule = GaussLegendre::order16();
        let bw = barycentric_weights_16();
        let mut total = Complex64::new(0.0, 0.0);
        for p in &self.panels {
            let c = 0.5 * (p.a + p.b);
            let h = 0.5 * (p.b - p.a);
            let omega = (x * h).abs();
            if omega <= 4.0 {
                let mut s = Complex64::new(0.0, 0.0);
                for ((&t, &w), &v) in rule.nodes.iter().zip(&rule.weights).zip(&p.values) {
                    let u = c + h * t;
                    s += v * Complex64::from_polar(w * u.powi(power as i32), -u * x);
                }
                total += s * h;
            } else if omega > FILON_OMEGA {
                let g: Vec<Complex64> =
                    rule.nodes.iter().zip(&p.values).map(|(&t, &v)| v * (c + h * t).powi(power as i32)).collect();
                total += Complex64::from_polar(h, -c * x) * legendre_fourier(&g, h * x);
            } else {
                let m = (16.0 + 1.2 * omega).ceil() as usize;
                let fine = fine_rule(m);
                let mut s = Complex64::new(0.0, 0.0);
                for (&t, &w) in fine.nodes.iter().zip(&fine.weights) {
                    let u = c + h * t;
                    let v = barycentric_eval(&rule.nodes, bw, &p.values, t);
                    s += v * Complex64::from_polar(w * u.powi(power as i32), -u * x);
                }
                total += s * h;
            }
        }
        total
    }

    /// `∫_0^U F(u) u^k e^{-iux} du` for `k = 0..=kmax` in one pass.
    pub fn fourier_moments(&self, x: f64, kmax: usize) -> Vec<Complex64> {
        let rule = GaussLegendre::order16();
        let bw = barycentric_weights_16();
        let mut out = vec![Complex64::new(0.0, 0.0); kmax + 1];
        let acc = |u: f64, w: f64, v: Complex64, out: &mut [Complex64]| {
            let mut t = v * Complex64::from_polar(w, -u * x);
            for o in out.iter_mut() {
                *o += t;
                t *= u;
            }
        };
        for p in &self.panels {
            let c = 0.5 * (p.a + p.b);
            let h = 0.5 * (p.b - p.a);
            let omega = (x * h).abs();
            if omega <= 4.0 {
                for ((&t, &w), &v) in rule.nodes.iter().zip(&rule.weights).zip(&p.values) {
                    acc(c + h * t, w * h, v, &mut out);
                }
            } else if omega > FILON_OMEGA {
                let phase = Complex64::from_polar(h, -c * x);
                let mut g: Vec<Complex64> = p.values.clone();
                for o in out.iter_mut() {
                    *o += phase * legendre_fourier(&g, h * x);
                    for (gi, &t) in g.iter_mut().zip(&rule.nodes) {
                        *gi *= c + h * t;
                    }
                }
            } else {
                let m = (16.0 + 1.2 * omega).ceil() as usize;
                let fine = fine_rule(m);
                for (&t, &w) in fine.nodes.iter().zip(&fine.weights) {
                    let v = barycentric_eval(&rule.nodes, bw, &p.values, t);
                    acc(c + h * t, w * h, v, &mut out);
                }
            }
        }
        out
    }

    /// `∫_0^U F(u) g(u) du` for an arbitrary smooth weight `g`.
    pub fn integrate_weighted<G: FnMut(f64) -> Complex64>(&self, mut g: G) -> Complex64 {
        let rule = GaussLegendre::order16();
        let mut total = Complex64::new(0.0, 0.0);
        for p in &self.panels {
            let c = 0.5 * (p.a + p.b);
            let h = 0.5 * (p.b - p.a);
            let mut s = Complex64::new(0.0, 0.0);
            for ((&t, &w), &v) in rule.nodes.iter().zip(&rule.weights).zip(&p.values) {
                s += v * g(c + h * t) * w;
            }
            total += s * h;
        }
        total
    }

    pub fn upper(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.b)
    }
}

fn barycentric_weights_16() -> &'static [f64] {
    static BW: OnceLock<Vec<f64>> = OnceLock::new();
    BW.get_or_init(|| barycentric_weights(&GaussLegendre::order16().nodes))
}

/// Panel phase `|hx|` above which panels are integrated through their
/// Legendre expansion; the Bessel recurrence is stable for orders below it.
const FILON_OMEGA: f64 = 24.0;

/// `(2k+1)/2 · w_i · P_k(t_i)`: maps values at the 16 Gauss nodes to the
/// Legendre coefficients of their interpolant (exact, as the products have
/// degree at most 30).
fn legendre_projection() -> &'static [[f64; 16]; 16] {
    static L: OnceLock<[[f64; 16]; 16]> = OnceLock::new();
    L.get_or_init(|| {
        let rule = GaussLegendre::order16();
        let mut m = [[0.0; 16]; 16];
        for (i, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let (mut p0, mut p1) = (1.0, t);
            for (k, row) in m.iter_mut().enumerate() {
                let pk = if k == 0 { p0 } else { p1 };
                row[i] = (2 * k + 1) as f64 / 2.0 * w * pk;
                if k >= 1 {
                    let next = ((2 * k + 1) as f64 * t * p1 - k as f64 * p0) / (k + 1) as f64;
                    p0 = p1;
                    p1 = next;
                }
            }
        }
        m
    })
}

/// `∫_{-1}^{1} G(t) e^{-iωt} dt` for the degree-15 interpolant of `g` at the
/// 16 Gauss nodes, via `∫ P_k(t) e^{-iωt} dt = 2(−i)^k j_k(ω)`. Needs `|ω| > 15`.
fn legendre_fourier(g: &[Complex64], omega: f64) -> Complex64 {
    let proj = legendre_projection();
    let w = omega.abs();
    let (sin, cos) = w.sin_cos();
    let mut j_prev = sin / w;
    let mut j_cur = sin / (w * w) - cos / w;
    let mut rot = Complex64::new(1.0, 0.0);
    let mut total = Complex64::new(0.0, 0.0);
    for (k, row) in proj.iter().enumerate() {
        let jk = match k {
            0 => j_prev,
            1 => j_cur,
            _ => {
                let next = (2 * k - 1) as f64 / w * j_cur - j_prev;
                j_prev = j_cur;
                j_cur = next;
                next
            }
        };
        let ck: Complex64 = row.iter().zip(g).map(|(&r, &v)| v * r).sum();
        // j_k(−w) = (−1)^k j_k(w).
        let parity = if omega < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
        total += ck * rot * (2.0 * parity * jk);
        rot *= -Complex64::i();
    }
    total
}

fn fine_rule(m: usize) -> std::sync::Arc<GaussLegendre> {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex};
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    // Round up so that the cache stays small.
    let m = m.div_ceil(8) * 8;
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("rule cache poisoned");
    guard.entry(m).or_insert_with(|| Arc::new(GaussLegendre::new(m))).clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_panel_rule_matches_the_oversampled_rule() {
        let rule = GaussLegendre::order16();
        let g: Vec<Complex64> = rule.nodes.iter().map(|&t| Complex64::new((0.7 * t).exp(), t * t - 0.3 * t)).collect();
        let bw = barycentric_weights_16();
        for omega in [25.0, -31.5, 80.0, 1.0e4] {
            let fine = fine_rule((16.0 + 1.2 * f64::abs(omega)).ceil() as usize);
            let reference: Complex64 = fine
                .nodes
                .iter()
                .zip(&fine.weights)
                .map(|(&t, &w)| barycentric_eval(&rule.nodes, bw, &g, t) * Complex64::from_polar(w, -omega * t))
                .sum();
            let v = legendre_fourier(&g, omega);
            assert!((v - reference).norm() < 1e-12, "omega {omega}: {v} vs {reference}");
        }
    }

    #[test]
    fn kronrod_rule_is_exact_for_degree_22() {
        let mut f = |x: f64| x.powi(22) + 3.0 * x.powi(7);
        let (v, _) = kronrod15(&mut f, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 / 23.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_part_is_exact_for_degree_13() {
        // The error estimate is |K - G|, so zero for a degree-13 polynomial.
        let mut f = |x: f64| 1.0 + x.powi(12) - x.powi(13);
        let (v, e) = kronrod15(&mut f, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 + 2f64.powi(13) / 13.0 - 2f64.powi(14) / 14.0, epsilon = 1e-9);
        assert!(e < 1e-9);
    }

    #[test]
    fn gauss_legendre_matches_kronrod_gauss_nodes() {
        let gl = GaussLegendre::new(7);
        let expected = [-XGK[1], -XGK[3], -XGK[5], 0.0, XGK[5], XGK[3], XGK[1]];
        for (a, b) in gl.nodes.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(gl.weights[3], WG[3], epsilon = 1e-15);
        assert_abs_diff_eq!(gl.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let est = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, Tolerance::new(1e-10, 1e-12)).unwrap();
        assert_abs_diff_eq!(est.value, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn semi_infinite_exponential() {
        let est = integrate_to_infinity(|x: f64| (-x).exp(), 0.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert_abs_diff_eq!(est.value, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn complex_integrand() {
        let est = integrate(|x: f64| Complex64::from_polar(1.0, x), 0.0, PI, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert_abs_diff_eq!(est.value.re, 0.0, epsilon = 1e-11);
        assert_abs_diff_eq!(est.value.im, 2.0, epsilon = 1e-11);
    }

    #[test]
    fn reports_non_convergence() {
        let tol = Tolerance::new(1e-14, 0.0).with_segments(3);
        let r = integrate(|x: f64| (50.0 * x).sin() / (x + 1e-3), 0.0, 10.0, tol);
        assert!(matches!(r, Err(QuadError::NoConvergence { .. })));
    }

    #[test]
    fn sampled_envelope_fourier_of_gaussian() {
        // ∫_0^∞ e^{-u²} e^{-iux} du has real part (√π/2) e^{-x²/4}.
        let breaks = SampledEnvelope::breakpoints(0.5, 8.0, 4);
        let env = SampledEnvelope::from_fn(&breaks, |u| Complex64::new((-u * u).exp(), 0.0));
        for &x in &[0.0, 1.0, 3.0, 40.0, 300.0] {
            let v = env.fourier(x, 0);
            let exact = 0.5 * PI.sqrt() * (-x * x / 4.0).exp();
            assert_abs_diff_eq!(v.re, exact, epsilon = 1e-12);
        }
        // First moment: ∫ u e^{-u²} du = 1/2.
        assert_abs_diff_eq!(env.fourier(0.0, 1).re, 0.5, epsilon = 1e-13);
    }
}
