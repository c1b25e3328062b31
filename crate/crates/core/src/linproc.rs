//! The truncated linear process `X_n = Σ_{i=1}^{J} a_i ε_{n−i}`: coefficients,
//! FFT simulation, characteristic function and density.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::innovations::Innovation;
use crate::par;
use crate::quad::{integrate, SampledEnvelope, Tolerance};
use crate::regvar::SlowlyVarying;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub beta: f64,
    pub ell: SlowlyVarying,
    pub j: usize,
}

impl CoefficientSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(invalid("beta must be positive"));
        }
        if self.j == 0 {
            return Err(invalid("truncation length J must be at least 1"));
        }
        self.ell.validate()
    }

    /// Checks the a.s. convergence condition `αβ > 1`.
    pub fn check_pair(&self, alpha: f64) -> Result<()> {
        if !(alpha * self.beta > 1.0) {
            return Err(Error::Region(format!("alpha*beta = {} must exceed 1", alpha * self.beta)));
        }
        Ok(())
    }
}

/// `a_i = i^{−β} ℓ(i)` for `i = 1..J`, with `ℓ(1) = σ`.
pub fn coefficients(spec: &CoefficientSpec) -> Vec<f64> {
    (1..=spec.j as u64).map(|i| (i as f64).powf(-spec.beta) * spec.ell.at_integer(i)).collect()
}

/// `a(x) = x^{−β} ℓ(x)` at real `x ≥ 1`, agreeing with [`coefficients`] at integers.
pub fn coefficient_at(beta: f64, ell: &SlowlyVarying, x: f64) -> f64 {
    x.powf(-beta) * if x > 1.0 { ell.at(x) } else { ell.sigma }
}

/// `Σ_{j>J} a_j^{α′}` by the Euler–Maclaurin formula around the tail integral.
pub fn truncation_budget(spec: &CoefficientSpec, alpha_prime: f64) -> Result<f64> {
    let p = alpha_prime * spec.beta;
    if !(p > 1.0) {
        return Err(Error::Region(format!("alpha'*beta = {p} <= 1: the tail sum diverges")));
    }
    tail_power_sum(spec.beta, &spec.ell, spec.j as f64, alpha_prime)
}

pub(crate) fn tail_power_sum(beta: f64, ell: &SlowlyVarying, j: f64, power: f64) -> Result<f64> {
    let g = |x: f64| (x.powf(-beta) * if x > 1.0 { ell.at(x) } else { ell.sigma }).powf(power);
    let p = power * beta;
    let integral = if ell.is_constant() {
        ell.sigma.powf(power) * j.powf(1.0 - p) / (p - 1.0)
    } else {
        // ∫_J^∞ g(x) dx with x = J e^s.
        integrate(|s: f64| g(j * s.exp()) * j * s.exp(), 0.0, 200.0 / (p - 1.0), Tolerance::new(0.0, 1e-10).with_segments(4000))?
            .value
    };
    let h = 1e-3 * j;
    let dg = (g(j + h) - g(j - h).max(0.0)) / (2.0 * h);
    // Σ_{i ≥ J} g(i) = ∫_J^∞ g + g(J)/2 − g′(J)/12, minus the i = J term.
    Ok(integral + 0.5 * g(j) - dg / 12.0 - g(j))
}

/// Smallest `J` with `Σ_{j>J} a_j ≤ tol` (for `β > 1`).
pub fn truncation_for_tail(beta: f64, ell: &SlowlyVarying, tol: f64) -> Result<usize> {
    if !(beta > 1.0) {
        return Err(Error::Region("tail-sum truncation needs beta > 1".into()));
    }
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    while tail_power_sum(beta, ell, hi, 1.0)? > tol {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Convergence("truncation length exceeds 1e12".into()));
        }
    }
    while hi - lo > 1.0 {
        let mid = (0.5 * (lo + hi)).floor();
        if tail_power_sum(beta, ell, mid, 1.0)? > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi as usize)
}

/// Simulated paths, stored row-major as `values[n * m_count + r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub n: usize,
    pub m: usize,
    pub j: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

const MAGIC: [u8; 8] = *b"LMPATHS1";

impl PathBatch {
    pub fn get(&self, n: usize, r: usize) -> f64 {
        self.values[n * self.m + r]
    }

    /// Header layout (32 bytes, little endian): 8-byte magic, `N` and `M` as
    /// u32, `J` and the seed as u64. Values follow as f64, row-major in `n`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; 32];
        header[..8].copy_from_slice(&MAGIC);
        header[8..12].copy_from_slice(&(self.n as u32).to_le_bytes());
        header[12..16].copy_from_slice(&(self.m as u32).to_le_bytes());
        header[16..24].copy_from_slice(&(self.j as u64).to_le_bytes());
        header[24..32].copy_from_slice(&self.seed.to_le_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if header[..8] != MAGIC {
            return Err(invalid("not a path batch file (bad magic)"));
        }
        let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let j = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(header[24..32].try_into().unwrap());
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * m * 8 {
            return Err(invalid("path batch payload has the wrong length"));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(PathBatch { n, m, j, seed, values })
    }
}

/// Random stream for replication `rep`: a ChaCha8 generator seeded from the
/// master seed, on its own stream number.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn fast_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p3 = 1usize;
    while p3 < 2 * n {
        let mut v = p3;
        while v < n {
            v *= 2;
        }
        best = best.min(v);
        p3 *= 3;
    }
    best
}

/// Circular FFT convolution with a fixed kernel, computing
/// `X_n = Σ_i a_i e[n + J − 1 − i]` for `n = 1..N` from `e` of length `N + J − 1`.
pub struct Convolver {
    n: usize,
    j: usize,
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex64>,
}

impl Convolver {
    pub fn new(a: &[f64], n: usize) -> Self {
        let j = a.len();
        let len = fast_size(n + j - 1);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); len];
        for (k, &v) in a.iter().enumerate() {
            kernel_hat[k] = Complex64::new(v / len as f64, 0.0);
        }
        fwd.process(&mut kernel_hat);
        Convolver { n, j, len, fwd, inv, kernel_hat }
    }

    pub fn input_len(&self) -> usize {
        self.n + self.j - 1
    }

    /// Convolves two real inputs at once (packed as real and imaginary parts).
    pub fn convolve_pair(&self, e1: &[f64], e2: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let m = self.input_len();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for k in 0..m {
            buf[k] = Complex64::new(e1[k], e2.map_or(0.0, |e| e[k]));
        }
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inv.process(&mut buf);
        let off = self.j - 1;
        let x1 = (0..self.n).map(|i| buf[off + i].re).collect();
        let x2 = e2.map(|_| (0..self.n).map(|i| buf[off + i].im).collect());
        (x1, x2)
    }
}

/// Direct `O(N·J)` evaluation of the same convolution.
pub fn convolve_naive(a: &[f64], e: &[f64], n: usize) -> Vec<f64> {
    let j = a.len();
    (1..=n)
        .map(|t| (1..=j).map(|i| a[i - 1] * e[t + j - 1 - i]).sum())
        .collect()
}

/// Everything needed to simulate replications of `X_1..X_N`.
pub struct Simulator {
    pub coefs: Arc<Vec<f64>>,
    pub innovation: Innovation,
    pub n: usize,
    conv: Convolver,
}

/// One replication: innovations `ε_{1−J}..ε_{N−1}` and the path `X_1..X_N`.
pub struct Replication {
    pub index: usize,
    pub eps: Vec<f64>,
    pub x: Vec<f64>,
}

impl Simulator {
    pub fn new(coefs: Arc<Vec<f64>>, innovation: Innovation, n: usize) -> Result<Self> {
        if n == 0 || coefs.is_empty() {
            return Err(invalid("N and J must be at least 1"));
        }
        let conv = Convolver::new(&coefs, n);
        Ok(Simulator { coefs, innovation, n, conv })
    }

    pub fn j(&self) -> usize {
        self.coefs.len()
    }

    pub fn draw_innovations(&self, seed: u64, rep: usize) -> Vec<f64> {
        let mut rng = replication_rng(seed, rep as u64);
        let mut e = vec![0.0; self.conv.input_len()];
        self.innovation.fill(&mut rng, &mut e);
        e
    }

    /// Simulates replications `2k` and `2k + 1` (when below `m`) together.
    pub fn simulate_pair(&self, seed: u64, k: usize, m: usize) -> Vec<Replication> {
        let r1 = 2 * k;
        let e1 = self.draw_innovations(seed, r1);
        if r1 + 1 < m {
            let e2 = self.draw_innovations(seed, r1 + 1);
            let (x1, x2) = self.conv.convolve_pair(&e1, Some(&e2));
            vec![Replication { index: r1, eps: e1, x: x1 }, Replication { index: r1 + 1, eps: e2, x: x2.unwrap() }]
        } else {
            let (x1, _) = self.conv.convolve_pair(&e1, None);
            vec![Replication { index: r1, eps: e1, x: x1 }]
        }
    }

    /// Runs `m` replications on `workers` threads, reducing each one with `f`.
    /// Results are returned in replication order and do not depend on `workers`.
    pub fn replicate<T, F>(&self, seed: u64, m: usize, workers: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Replication) -> T + Sync + Send,
    {
        let pairs = m.div_ceil(2);
        par::map_indexed(pairs, workers, |k| self.simulate_pair(seed, k, m).iter().map(&f).collect::<Vec<T>>())
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Default memory budget for `simulate_paths`.
pub const DEFAULT_MEMORY_BUDGET: u64 = 2 << 30;

pub fn simulate_paths(
    coefs: &CoefficientSpec,
    innovation: &Innovation,
    n: usize,
    m: usize,
    seed: u64,
    workers: usize,
    budget: u64,
) -> Result<PathBatch> {
    coefs.validate()?;
    coefs.check_pair(innovation.alpha)?;
    if n == 0 || m == 0 {
        return Err(invalid("N and M must be at least 1"));
    }
    let required = (n as u64) * (m as u64) * 8 + (workers.max(1) as u64) * 6 * fast_size(n + coefs.j - 1) as u64 * 16;
    if required > budget {
        return Err(Error::Memory { required, budget });
    }
    let sim = Simulator::new(Arc::new(coefficients(coefs)), innovation.clone(), n)?;
    let paths = sim.replicate(seed, m, workers, |r| r.x.clone());
    let mut values = vec![0.0; n * m];
    for (r, path) in paths.iter().enumerate() {
        for (t, &v) in path.iter().enumerate() {
            values[t * m + r] = v;
        }
    }
    Ok(PathBatch { n, m, j: coefs.j, seed, values })
}

/// `ln(1 + z)` accurate for small `|z|`.
pub fn ln_1p(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        // z − z²/2 + z³/3 − z⁴/4
        z * (Complex64::new(1.0, 0.0) - z * (0.5 - z * (1.0 / 3.0 - z * 0.25)))
    } else {
        (z + 1.0).ln()
    }
}

/// Tabulated `ln φ_ε(v)` for `v > 0` on a log grid, stored as `ln φ_ε(v) / v^α`.
#[derive(Debug, Clone)]
struct LogCfTable {
    alpha: f64,
    lv_min: f64,
    step: f64,
    v_max: f64,
    values: Vec<Complex64>,
}

const TABLE_PER_DECADE: f64 = 128.0;

impl LogCfTable {
    fn new(inn: &Innovation) -> Result<Self> {
        let alpha = inn.alpha;
        // The table stops before |φ_ε| gets small, where the log could wind.
        let mut v_max: f64 = 1e-2;
        while v_max < 1e4 && inn.cf(v_max * 1.25)?.norm() > 0.3 {
            v_max *= 1.25;
        }
        let lv_min = (1e-14f64).ln();
        let step = std::f64::consts::LN_10 / TABLE_PER_DECADE;
        let count = ((v_max.ln() - lv_min) / step).ceil() as usize + 4;
        let mut values = Vec::with_capacity(count);
        for k in 0..count {
            let v = (lv_min + k as f64 * step).exp();
            values.push(ln_1p(inn.cf_minus_one(v)?) / v.powf(alpha));
        }
        Ok(LogCfTable { alpha, lv_min, step, v_max, values })
    }

    /// Interpolated `ln φ_ε(v)` for `0 < v ≤ v_max`.
    fn eval(&self, v: f64) -> Complex64 {
        let lv = v.ln();
        let pos = (lv - self.lv_min) / self.step;
        if pos <= 0.0 {
            return self.values[0] * v.powf(self.alpha);
        }
        let n = self.values.len();
        let i0 = (pos.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
        let t = pos - i0 as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..6 {
            let mut w = 1.0;
            for m in 0..6 {
                if m != k {
                    w *= (t - m as f64) / (k as f64 - m as f64);
                }
            }
            acc += self.values[i0 + k] * w;
        }
        acc * v.powf(self.alpha)
    }
}

/// Characteristic function of `X_n` for the truncated process.
#[derive(Debug, Clone)]
pub struct ProcessCf {
    pub coefs: Arc<Vec<f64>>,
    pub beta: f64,
    pub ell: SlowlyVarying,
    pub innovation: Innovation,
    table: LogCfTable,
}

/// Terms beyond this index are summed by Euler–Maclaurin.
const EM_START: usize = 2048;

impl ProcessCf {
    pub fn new(spec: &CoefficientSpec, innovation: &Innovation) -> Result<Self> {
        spec.validate()?;
        let coefs = Arc::new(coefficients(spec));
        Ok(ProcessCf {
            coefs,
            beta: spec.beta,
            ell: spec.ell.clone(),
            innovation: innovation.clone(),
            table: LogCfTable::new(innovation)?,
        })
    }

    /// `ln φ_ε(v)` for any real `v`.
    pub fn innovation_log_cf(&self, v: f64) -> Complex64 {
        if v == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let av = v.abs();
        let l = if av <= self.table.v_max {
            self.table.eval(av)
        } else {
            match self.innovation.cf(av) {
                Ok(c) if c.norm() > 0.0 => c.ln(),
                _ => Complex64::new(-745.0, 0.0),
            }
        };
        if v < 0.0 {
            l.conj()
        } else {
            l
        }
    }

    fn coef_at(&self, x: f64) -> f64 {
        coefficient_at(self.beta, &self.ell, x)
    }

    /// `ln φ(u) = Σ_{i≤J} ln φ_ε(a_i u)`, stopping once the real part is below −40.
    pub fn log_cf(&self, u: f64) -> Complex64 {
        if u == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let j = self.coefs.len();
        let mut start = EM_START;
        while start < j && self.coefs[start - 1] * u.abs() > 0.5 * self.table.v_max {
            start *= 2;
        }
        let direct_end = start.min(j);
        let mut acc = Complex64::new(0.0, 0.0);
        for &a in &self.coefs[..direct_end] {
            acc += self.innovation_log_cf(a * u);
            if acc.re < -40.0 {
                return acc;
            }
        }
        if direct_end == j {
            return acc;
        }
        // Σ_{i=start+1}^{J} f(i) with f(x) = ln φ_ε(a(x) u).
        let f = |x: f64| self.innovation_log_cf(self.coef_at(x) * u);
        let (x0, x1) = (direct_end as f64, j as f64);
        let integral = crate::quad::integrate(
            |s: f64| {
                let x = s.exp();
                f(x) * x
            },
            x0.ln(),
            x1.ln(),
            Tolerance::new(1e-300, 1e-12),
        )
        .map(|e| e.value)
        .unwrap_or_else(|_| (direct_end + 1..=j).map(|i| f(i as f64)).sum());
        let d = |x: f64| {
            let h = 1e-3 * x;
            (f(x + h) - f(x - h)) / (2.0 * h)
        };
        // Σ_{i=x0}^{x1} f = ∫ + (f(x0) + f(x1))/2 + (f′(x1) − f′(x0))/12; drop i = x0.
        acc + integral + (f(x1) - f(x0)) * 0.5 + (d(x1) - d(x0)) / 12.0
    }

    pub fn cf(&self, u: f64) -> Complex64 {
        self.log_cf(u).exp()
    }

    /// Largest `|φ(u)|(1 + u⁴)` over a grid of `|u| ≤ u_max`.
    pub fn decay_witness(&self, u_max: f64) -> f64 {
        (0..=400)
            .map(|k| {
                let u = u_max * k as f64 / 400.0;
                self.cf(u).norm() * (1.0 + u.powi(4))
            })
            .fold(0.0, f64::max)
    }
}

/// `φ(u)` sampled on Gauss panels over `(0, U]`, reused for every Fourier
/// inversion against the marginal law of `X_n`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub cf: ProcessCf,
    pub envelope: SampledEnvelope,
}

impl Spectrum {
    pub fn new(cf: ProcessCf) -> Result<Self> {
        // Scale where |φ| = 1/2.
        let mut half = 1.0;
        while cf.cf(half).norm() < 0.5 && half > 1e-12 {
            half *= 0.5;
        }
        while cf.cf(half).norm() > 0.5 && half < 1e6 {
            half *= 2.0;
        }
        let mut upper = half;
        while cf.cf(upper).norm() * (1.0 + upper * upper) > 1e-13 {
            upper *= 1.25;
            if upper > 1e7 {
                return Err(Error::Convergence("process characteristic function does not decay".into()));
            }
        }
        let width = (half / 6.0).max(upper / 3000.0);
        let depth = ((width / (1e-15 * half)).log2().ceil() as usize).clamp(1, 80);
        let breaks = SampledEnvelope::breakpoints(width, upper, depth);
        let envelope = SampledEnvelope::from_fn(&breaks, |u| cf.cf(u));
        Ok(Spectrum { cf, envelope })
    }

    pub fn upper(&self) -> f64 {
        self.envelope.upper()
    }

    /// Density `f(x)` and derivative `f′(x)` of `X_n`.
    pub fn density(&self, x: f64) -> (f64, f64) {
        let f = self.envelope.fourier(x, 0).re / PI;
        // ∫ φ(u)(−iu) e^{−iux} du: real part of −i·(first moment) = Im.
        let fp = self.envelope.fourier(x, 1).im / PI;
        (f, fp)
    }
}

pub fn density_f(coefs: &CoefficientSpec, innovation: &Innovation, x: f64) -> Result<(f64, f64)> {
    let s = Spectrum::new(ProcessCf::new(coefs, innovation)?)?;
    Ok(s.density(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::InnovationSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coefficient_values() {
        let spec = CoefficientSpec { beta: 0.9, ell: SlowlyVarying::one(), j: 16 };
        let a = coefficients(&spec);
        assert_eq!(a[0], 1.0);
        assert_abs_diff_eq!(a[15], 16f64.powf(-0.9), epsilon = 1e-15);
    }

    #[test]
    fn budget_against_integral() {
        let spec = CoefficientSpec { beta: 0.9, ell: SlowlyVarying::one(), j: 100_000 };
        let b = truncation_budget(&spec, 1.7).unwrap();
        let oracle = 1e5f64.powf(1.0 - 1.53) / 0.53;
        assert!((b / oracle - 1.0).abs() < 0.01);
        assert!(truncation_budget(&spec, 1.0).is_err());
    }

    #[test]
    fn fft_matches_naive() {
        let a: Vec<f64> = (1..=512).map(|i| (i as f64).powf(-0.9)).collect();
        let n = 256;
        let e1: Vec<f64> = (0..n + 511).map(|k| ((k * 7919) % 1000) as f64 / 100.0 - 5.0).collect();
        let e2: Vec<f64> = (0..n + 511).map(|k| ((k * 104729) % 997) as f64 / 50.0 - 10.0).collect();
        let conv = Convolver::new(&a, n);
        let (x1, x2) = conv.convolve_pair(&e1, Some(&e2));
        for (x, e) in [(x1, &e1), (x2.unwrap(), &e2)] {
            let naive = convolve_naive(&a, e, n);
            for (p, q) in x.iter().zip(&naive) {
                assert!((p - q).abs() <= 1e-10 * q.abs().max(1.0));
            }
        }
    }

    #[test]
    fn header_round_trip() {
        let b = PathBatch { n: 3, m: 2, j: 5, seed: 11, values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 48);
        assert_eq!(PathBatch::read_from(&buf[..]).unwrap(), b);
    }

    #[test]
    fn process_cf_single_factor() {
        let inn = InnovationSpec::symmetric(1.5, 0.5).build().unwrap();
        let spec = CoefficientSpec { beta: 1.0, ell: SlowlyVarying::one(), j: 1 };
        let pcf = ProcessCf::new(&spec, &inn).unwrap();
        for &u in &[1e-9, 1e-3, 0.2, 1.0, 5.0] {
            assert!((pcf.cf(u) - inn.cf(u).unwrap()).norm() < 1e-11, "u = {u}");
        }
    }

    #[test]
    fn euler_maclaurin_tail_matches_direct_product() {
        let inn = InnovationSpec::symmetric(1.8, 0.5).build().unwrap();
        let spec = CoefficientSpec { beta: 0.9, ell: SlowlyVarying::one(), j: 20_000 };
        let pcf = ProcessCf::new(&spec, &inn).unwrap();
        for &u in &[1e-6, 0.01, 0.3, 1.0] {
            let direct: Complex64 = pcf.coefs.iter().map(|&a| pcf.innovation_log_cf(a * u)).sum();
            let em = pcf.log_cf(u);
            assert!((em - direct).norm() < 1e-9 * direct.norm().max(1e-12), "u = {u}: {em} vs {direct}");
        }
    }
}
