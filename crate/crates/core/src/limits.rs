//! Marginal laws of the limit processes.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::functionals::cbar_bracket;
use crate::quad::{integrate, integrate_to_infinity, Tolerance};
use crate::stable::StableLaw;

const TOL: Tolerance = Tolerance::new(1e-14, 1e-13).with_segments(4000);

fn lfsm_region(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0 && beta > 1.0 / alpha && beta < 1.0) {
        return Err(Error::Region(format!("LFSM kernel needs 1 < alpha < 2 and 1/alpha < beta < 1 (got {alpha}, {beta})")));
    }
    Ok(())
}

/// `(∫ |g_t(s)|^α ds)^{1/α}` for `g_t(s) = (t−s)^{1−β} − (−s)^{1−β} 1_{s<0}`.
pub fn lfsm_kernel_scale(alpha: f64, beta: f64, t: f64) -> Result<f64> {
    lfsm_region(alpha, beta)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be finite and nonnegative (got {t})")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let e = 1.0 - beta;
    // s ∈ [0, t].
    let recent = t.powf(e * alpha + 1.0) / (e * alpha + 1.0);
    // s = −w < 0, integrated in ln w up to W, then the two-term tail expansion.
    let big_w = 1e4 * t;
    let g = |w: f64| ((t + w).powf(e) - w.powf(e)).powf(alpha);
    let lo = 1e-14 * t;
    let past = integrate(
        |s: f64| {
            let w = s.exp();
            g(w) * w
        },
        lo.ln(),
        big_w.ln(),
        TOL,
    )?
    .value
        + g(0.5 * lo) * lo;
    let ab = alpha * beta;
    let tail = (e * t).powf(alpha) * (big_w.powf(1.0 - ab) / (ab - 1.0) - 0.5 * t * big_w.powf(-ab));
    Ok((recent + past + tail).powf(1.0 / alpha))
}

/// Law of `c̃ Z^{α,β}_t`; the kernel is nonnegative, so the skew of `Z^α` carries over.
pub fn thm1_marginal(alpha: f64, beta: f64, sigma1: f64, sigma2: f64, c_tilde: f64, t: f64) -> Result<StableLaw> {
    lfsm_region(alpha, beta)?;
    if c_tilde == 0.0 || t == 0.0 {
        return Err(Error::Degenerate("Theorem 1 limit is the point mass at 0".into()));
    }
    let b = (sigma2 - sigma1) / (sigma1 + sigma2);
    let scale = c_tilde.abs() * lfsm_kernel_scale(alpha, beta, t)?;
    StableLaw::new(alpha, scale, c_tilde.signum() * b, 0.0)
}

fn p_region(p: f64) -> Result<()> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::Region(format!("alpha*beta must lie in (1, 2) (got {p})")));
    }
    Ok(())
}

/// `∫_0^1 x^{−p} F(x) dx` after `x = y^{1/(2−p)}`, which removes the `x^{1−p}`
/// endpoint behaviour of integrands with `F(x) = O(x)`.
fn near_zero<T: crate::quad::Integrand, F: Fn(f64) -> T>(p: f64, f: F) -> Result<T> {
    let k = 1.0 / (2.0 - p);
    Ok(integrate(
        |y: f64| {
            if y == 0.0 {
                return T::default();
            }
            let x = y.powf(k);
            f(x) * (k * y.powf(k - 1.0) * x.powf(-p))
        },
        0.0,
        1.0,
        TOL,
    )?
    .value)
}

/// `∫_1^∞ e^{iux} x^{−q} dx` for `u > 0`, along the ray `x = 1 + iτ`.
fn oscillatory_tail(u: f64, q: f64) -> Result<Complex64> {
    let i = Complex64::i();
    let v = integrate_to_infinity(
        |tau: f64| Complex64::new(1.0, tau).powf(-q) * (-u * tau).exp(),
        0.0,
        1.0 / u,
        TOL,
    )?
    .value;
    Ok(Complex64::from_polar(1.0, u) * i * v)
}

/// `∫_0^∞ sin x / x^p dx` by quadrature.
pub fn sine_integral(p: f64) -> Result<f64> {
    p_region(p)?;
    let head = near_zero(p, |x: f64| x.sin())?;
    Ok(head + oscillatory_tail(1.0, p)?.im)
}

/// Mellin closed form `Γ(1−p) cos(πp/2)` of [`sine_integral`].
pub fn sine_integral_closed_form(p: f64) -> f64 {
    gamma(1.0 - p) * (PI * p / 2.0).cos()
}

/// `J(u) = ∫_0^∞ (e^{iux} − 1 − iux/(x²+1)) x^{−p−1} dx` for `u > 0`.
fn compensated(p: f64, u: f64, i1: f64) -> Result<Complex64> {
    let head = near_zero(p, |x: f64| {
        let ux = u * x;
        let re = -2.0 * (0.5 * ux).sin().powi(2);
        let sin_minus = if ux.abs() < 1e-3 { -ux.powi(3) / 6.0 * (1.0 - ux * ux / 20.0) } else { ux.sin() - ux };
        Complex64::new(re, sin_minus + ux * x * x / (1.0 + x * x)) / x
    })?;
    let osc = oscillatory_tail(u, p + 1.0)?;
    Ok(head + osc - 1.0 / p - Complex64::i() * (u * i1))
}

fn weights(gamma1: f64, gamma2: f64) -> Result<(f64, f64)> {
    if !(gamma1 >= 0.0 && gamma2 >= 0.0 && gamma1 + gamma2 > 0.0) {
        return Err(Error::Degenerate(format!("need gamma1, gamma2 >= 0 with positive sum (got {gamma1}, {gamma2})")));
    }
    let s = gamma1 + gamma2;
    Ok((gamma1 / s, gamma2 / s))
}

/// `∫_1^∞ x^{−p}/(x²+1) dx` and `∫_0^1 x^{2−p}/(x²+1) dx`.
fn drift_integrals(p: f64) -> Result<(f64, f64)> {
    let i1 = integrate(|y: f64| y.powf(p) / (1.0 + y * y), 0.0, 1.0, TOL)?.value;
    let i2 = integrate(|x: f64| x.powf(2.0 - p) / (x * x + 1.0), 0.0, 1.0, TOL)?.value;
    Ok((i1, i2))
}

/// Characteristic function of `𝐙^{αβ}` from its Lévy–Khintchine form.
pub fn z_levy_cf(p: f64, gamma1: f64, gamma2: f64, u: f64) -> Result<Complex64> {
    p_region(p)?;
    let (w1, w2) = weights(gamma1, gamma2)?;
    if u == 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let (i1, i2) = drift_integrals(p)?;
    let j = compensated(p, u.abs(), i1)?;
    let j = if u > 0.0 { j } else { j.conj() };
    let drift = Complex64::new(0.0, u * (w2 - w1) * p * (i1 - i2));
    Ok((drift + p * (w2 * j + w1 * j.conj())).exp())
}

/// The rewritten form: a drift plus a stable exponent with `∫ sin x/x^p dx`.
pub fn z_closed_form_cf(p: f64, gamma1: f64, gamma2: f64, u: f64) -> Result<Complex64> {
    p_region(p)?;
    let (w1, w2) = weights(gamma1, gamma2)?;
    let theta = w2 - w1;
    let (i1, i2) = drift_integrals(p)?;
    let i3 = cbar_bracket(p)? - 1.0 / (p - 1.0) - p * (i1 - i2);
    let drift = theta * p * (i1 - i2 + i3 / p);
    let s = sine_integral(p)?;
    let stable = -s * u.abs().powf(p) * Complex64::new(1.0, -theta * u.signum() * (PI * p / 2.0).tan());
    Ok((Complex64::new(0.0, u * drift) + stable).exp())
}

/// Which location the Theorem 2–3 limit is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftConvention {
    /// Zero location, matching the exact zero mean of the centered partial sums.
    #[default]
    Centered,
    /// `c̄ t^{1/αβ}` with `c̄` as displayed in Theorem 2.
    Printed,
}

/// Law of `(γ₂+γ₁)^{1/p}(c̄ t^{1/p} + 𝒵_t)`; also returns the location.
pub fn thm23_marginal(p: f64, gamma1: f64, gamma2: f64, c_bar: f64, t: f64) -> Result<(StableLaw, f64)> {
    p_region(p)?;
    let (w1, w2) = weights(gamma1, gamma2)?;
    if !(t > 0.0) {
        return Err(Error::Degenerate("t = 0 gives the point mass at 0".into()));
    }
    let g = (gamma1 + gamma2).powf(1.0 / p);
    let scale = g * (t * sine_integral(p)?).powf(1.0 / p);
    let shift = g * c_bar * t.powf(1.0 / p);
    Ok((StableLaw::new(p, scale, w2 - w1, shift)?, shift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kernel_scale_self_similar() {
        let (a, b) = (1.8, 0.9);
        assert_eq!(lfsm_kernel_scale(a, b, 0.0).unwrap(), 0.0);
        let r = lfsm_kernel_scale(a, b, 2.0).unwrap() / lfsm_kernel_scale(a, b, 1.0).unwrap();
        assert_abs_diff_eq!(r, 2f64.powf(1.0 / a + 1.0 - b), epsilon = 1e-9);
    }

    #[test]
    fn kernel_scale_by_log_trapezoid() {
        let (a, b) = (1.8, 0.9);
        // Trapezoid in s = ln w converges geometrically for this integrand.
        let h = 0.002;
        let mut past = 0.0;
        let mut s = -60.0;
        while s < 400.0 {
            let w = f64::exp(s);
            past += h * ((1.0 + w).powf(1.0 - b) - w.powf(1.0 - b)).powf(a) * w;
            s += h;
        }
        let recent = 1.0 / ((1.0 - b) * a + 1.0);
        let want = (recent + past).powf(1.0 / a);
        assert_abs_diff_eq!(lfsm_kernel_scale(a, b, 1.0).unwrap(), want, epsilon = 1e-8);
    }

    #[test]
    fn sine_integral_by_alternating_periods() {
        for p in [1.28, 1.35, 1.62] {
            let gl = crate::quad::GaussLegendre::new(32);
            let head = near_zero(p, |x: f64| x.sin()).unwrap();
            // Periods [kπ, (k+1)π] for x ≥ 1 alternate in sign; average partial sums.
            let mut terms = vec![gl.integrate(|x: f64| x.sin() * x.powf(-p), 1.0, PI)];
            for k in 1..4000 {
                let (lo, hi) = (k as f64 * PI, (k + 1) as f64 * PI);
                terms.push(gl.integrate(|x: f64| x.sin() * x.powf(-p), lo, hi));
            }
            let mut partial: Vec<f64> = terms
                .iter()
                .scan(0.0, |s, t| {
                    *s += t;
                    Some(*s)
                })
                .collect();
            for _ in 0..6 {
                partial = partial.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            }
            let filon = head + partial[partial.len() - 1];
            assert_abs_diff_eq!(sine_integral(p).unwrap(), sine_integral_closed_form(p), epsilon = 1e-9);
            assert_abs_diff_eq!(filon, sine_integral_closed_form(p), epsilon = 1e-7);
        }
    }

    #[test]
    fn levy_form_matches_rewrite() {
        for (p, g1, g2) in [(1.28, 0.0, 1.0), (1.62, 0.3, 0.7), (1.35, 1.0, 1.0)] {
            for k in -20..=20 {
                let u = 0.5 * k as f64;
                let a = z_levy_cf(p, g1, g2, u).unwrap();
                let b = z_closed_form_cf(p, g1, g2, u).unwrap();
                assert!((a - b).norm() < 1e-8, "p={p} u={u}: {a} vs {b}");
            }
            let u = 1.3;
            let (a, b) = (z_levy_cf(p, g1, g2, u).unwrap(), z_levy_cf(p, g1, g2, -u).unwrap());
            assert!((a - b.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn thm1_marginal_cf() {
        let law = thm1_marginal(1.8, 0.9, 0.3, 0.7, -1.2, 1.0).unwrap();
        let ks = lfsm_kernel_scale(1.8, 0.9, 1.0).unwrap();
        for u in [-3.0, -0.4, 0.25, 2.0] {
            let m = (1.2 * ks * f64::abs(u)).powf(1.8);
            let want = Complex64::new(-m, m * -0.4 * f64::signum(u) * (0.9 * PI).tan()).exp();
            assert!((law.cf(u) - want).norm() < 1e-12);
        }
        assert!(matches!(thm1_marginal(1.8, 0.9, 0.5, 0.5, 0.0, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn thm23_scaling_and_symmetry() {
        let (l1, _) = thm23_marginal(1.35, 0.4, 0.9, 0.7, 1.0).unwrap();
        let (l2, _) = thm23_marginal(1.35, 0.4, 0.9, 0.7, 0.3).unwrap();
        assert_abs_diff_eq!(l2.scale / l1.scale, 0.3f64.powf(1.0 / 1.35), epsilon = 1e-12);
        let (l, _) = thm23_marginal(1.35, 0.5, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(l.skew, 0.0);
        assert_eq!(l.shift, 0.0);
    }
}
