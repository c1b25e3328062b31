//! Experiment configuration: JSON schema, presets, `key.path=value`
//! overrides and the provenance hash.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::functionals::FunctionalSpec;
use crate::innovations::{InnovationSpec, Mode};
use crate::limits::DriftConvention;
use crate::regvar::SlowlyVarying;

pub const SCHEMA: &str = "longmem-experiment/1";

/// How many coefficients to keep for each `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JPolicy {
    /// `β > 1`: smallest `J` with `Σ_{j>J} a_j ≤ 10⁻³`; otherwise `16N`.
    Auto,
    Fixed { j: usize },
    /// `J = factor · N`.
    Multiple { factor: usize },
}

impl JPolicy {
    pub fn resolve(&self, beta: f64, ell: &SlowlyVarying, n: usize) -> Result<usize> {
        let j = match *self {
            JPolicy::Auto if beta > 1.0 => crate::linproc::truncation_for_tail(beta, ell, 1e-3)?,
            JPolicy::Auto => 16 * n,
            JPolicy::Fixed { j } => j,
            JPolicy::Multiple { factor } => factor * n,
        };
        if j == 0 {
            return Err(invalid("truncation length resolves to 0"));
        }
        Ok(j)
    }
}

/// Innovation law; the tail index is the experiment's `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnovationConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    #[serde(default = "SlowlyVarying::one")]
    pub h: SlowlyVarying,
    #[serde(default)]
    pub x0: Option<f64>,
    pub mode: Mode,
}

impl InnovationConfig {
    pub fn symmetric(sigma: f64) -> Self {
        InnovationConfig { sigma1: sigma, sigma2: sigma, h: SlowlyVarying::one(), x0: None, mode: Mode::Symmetric }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Shared-randomness evaluation of `T_N`, `U_N` and `𝒯_N`.
    pub decomposition: bool,
    /// Replications used for the decomposition (the first ones of the run).
    pub decomposition_m: usize,
    /// Draws of `η_K(ε)` for the tail report; 0 skips it.
    pub eta_draws: usize,
    pub eta_levels: Vec<f64>,
    /// Sample size at which `a_N` is compared with its limit.
    pub a_n: f64,
    /// Compare KS at `J` and `4J` for the smallest `N`.
    pub truncation_check: bool,
    /// Increment pairs `(t₁, t₂)` checked against `t₂ − t₁`.
    pub increments: Vec<(f64, f64)>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            decomposition: false,
            decomposition_m: 200,
            eta_draws: 0,
            eta_levels: vec![1e-2, 1e-3, 1e-4],
            a_n: 1e6,
            truncation_check: false,
            increments: vec![(0.25, 0.75)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
    /// Write `samples.bin` with the paths of the largest `N`.
    pub samples: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub theorem: u8,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "SlowlyVarying::one")]
    pub ell: SlowlyVarying,
    pub innovation: InnovationConfig,
    pub functional: FunctionalSpec,
    pub n_grid: Vec<usize>,
    pub m: usize,
    pub t_grid: Vec<f64>,
    pub j_policy: JPolicy,
    pub seed: u64,
    /// Worker threads; absent means the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub drift: DriftConvention,
    #[serde(default = "default_cf_points")]
    pub cf_points: Vec<f64>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_cf_points() -> Vec<f64> {
    vec![-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0]
}

fn pow2_grid() -> Vec<usize> {
    vec![1 << 10, 1 << 12, 1 << 14]
}

impl ExperimentConfig {
    fn base(theorem: u8, alpha: f64, beta: f64, functional: FunctionalSpec, j_policy: JPolicy) -> Self {
        ExperimentConfig {
            schema: SCHEMA.into(),
            theorem,
            alpha,
            beta,
            ell: SlowlyVarying::one(),
            innovation: InnovationConfig::symmetric(0.5),
            functional,
            n_grid: pow2_grid(),
            m: 2000,
            t_grid: vec![0.25, 0.5, 0.75, 1.0],
            j_policy,
            seed: 20240611,
            workers: None,
            drift: DriftConvention::Centered,
            cf_points: default_cf_points(),
            diagnostics: DiagnosticsConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// `α = 1.8`, `β = 0.9`, odd bump, `J = 16N`.
    pub fn thm1() -> Self {
        Self::base(1, 1.8, 0.9, FunctionalSpec::odd_bump(), JPolicy::Multiple { factor: 16 })
    }

    /// `α = 0.8`, `β = 1.6`, Gaussian bump, automatic `J`.
    pub fn thm2() -> Self {
        let mut c = Self::base(2, 0.8, 1.6, FunctionalSpec::gaussian_bump(), JPolicy::Auto);
        c.diagnostics.eta_draws = 1_000_000;
        c
    }

    /// `α = 1.6`, `β = 0.8`, Gaussian bump, `J = 16N`.
    pub fn thm3() -> Self {
        Self::base(3, 1.6, 0.8, FunctionalSpec::gaussian_bump(), JPolicy::Multiple { factor: 16 })
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "thm1" => Ok(Self::thm1()),
            "thm2" => Ok(Self::thm2()),
            "thm3" => Ok(Self::thm3()),
            _ => Err(invalid(format!("unknown preset '{name}' (expected thm1, thm2 or thm3)"))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_value(v).map_err(|e| invalid(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies `key.path=value` overrides; values are parsed as JSON and
    /// otherwise taken as strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut v = self.to_value();
        for o in overrides {
            apply_override(&mut v, o.as_ref())?;
        }
        Self::from_value(v)
    }

    pub fn innovation_spec(&self) -> InnovationSpec {
        let i = &self.innovation;
        InnovationSpec { alpha: self.alpha, sigma1: i.sigma1, sigma2: i.sigma2, h: i.h.clone(), x0: i.x0, mode: i.mode }
    }

    pub fn workers(&self) -> usize {
        self.workers.filter(|&w| w > 0).unwrap_or_else(crate::par::default_workers)
    }

    /// Structural checks; the parameter-region checks that need quadrature
    /// (e.g. `∫K df = 0` under Theorem 3) run when constants are computed.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(invalid(format!("unsupported schema '{}' (expected '{SCHEMA}')", self.schema)));
        }
        let (a, b) = (self.alpha, self.beta);
        let p = a * b;
        match self.theorem {
            1 if !(a > 1.0 && a < 2.0 && b > 1.0 / a && b < 1.0) => {
                return Err(Error::Region(format!("Theorem 1 needs 1 < alpha < 2 and 1/alpha < beta < 1 (alpha={a}, beta={b})")))
            }
            2 if !(p > 1.0 && p < 2.0 && b > 1.0) => {
                return Err(Error::Region(format!("Theorem 2 needs 1 < alpha*beta < 2 and beta > 1 (alpha={a}, beta={b})")))
            }
            3 if !(a > 1.0 && a < 2.0 && b > 1.0 / a && b <= 1.0) => {
                return Err(Error::Region(format!("Theorem 3 needs 1 < alpha < 2 and 1/alpha < beta <= 1 (alpha={a}, beta={b})")))
            }
            1..=3 => {}
            t => return Err(invalid(format!("theorem must be 1, 2 or 3 (got {t})"))),
        }
        if self.theorem == 2 {
            // The ratio must tend to 1; judged at the far end of a practical range.
            let r = crate::regvar::check_ell_ratio(&self.ell, b, &[1e8])[0];
            if !((r - 1.0).abs() <= 0.1) {
                return Err(Error::Region(format!("ratio l(x l^(1/beta)(x))/l(x) = {r} at x = 1e8 is not close to 1")));
            }
        }
        self.ell.validate()?;
        self.innovation.h.validate()?;
        self.functional.validate()?;
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(invalid("n_grid must be non-empty with positive entries"));
        }
        if self.m < 2 {
            return Err(invalid("m must be at least 2"));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(invalid("t_grid must be a non-empty subset of (0, 1]"));
        }
        if self.cf_points.iter().any(|u| !u.is_finite()) {
            return Err(invalid("cf_points must be finite"));
        }
        let d = &self.diagnostics;
        if d.eta_levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(invalid("eta_levels must lie in (0, 1)"));
        }
        if d.increments.iter().any(|&(s, t)| !(s >= 0.0 && s < t && t <= 1.0)) {
            return Err(invalid("increment pairs need 0 <= t1 < t2 <= 1"));
        }
        if !(d.a_n > 1.0) {
            return Err(invalid("diagnostics.a_n must exceed 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out settings that cannot
    /// change results (`workers`, `output`).
    pub fn hash(&self) -> String {
        let mut v = self.to_value();
        if let Value::Object(map) = &mut v {
            map.remove("workers");
            map.remove("output");
        }
        let text = serde_json::to_string(&v).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("override '{spec}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(invalid(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| invalid(format!("override '{key}': '{part}' is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| invalid(format!("override '{key}': index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            Value::Null => {
                *cur = Value::Object(Default::default());
                let Value::Object(map) = cur else { unreachable!() };
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(invalid(format!("override '{key}': '{part}' does not address an object or array"))),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_and_validate() {
        for name in ["thm1", "thm2", "thm3"] {
            let c = ExperimentConfig::preset(name).unwrap();
            let text = serde_json::to_string_pretty(&c).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = ExperimentConfig::thm1().to_value();
        v["alpah"] = Value::from(1.5);
        assert!(ExperimentConfig::from_value(v).is_err());
        assert!(ExperimentConfig::thm1().with_overrides(&["diagnostics.eta_draw=5"]).is_err());
    }

    #[test]
    fn overrides_apply_by_path() {
        let c = ExperimentConfig::thm1()
            .with_overrides(&["m=100", "n_grid=[64,128,256]", "diagnostics.decomposition=true", "j_policy.factor=4", "t_grid.0=0.5"])
            .unwrap();
        assert_eq!(c.m, 100);
        assert_eq!(c.n_grid, vec![64, 128, 256]);
        assert!(c.diagnostics.decomposition);
        assert_eq!(c.j_policy, JPolicy::Multiple { factor: 4 });
        assert_eq!(c.t_grid[0], 0.5);
        assert!(ExperimentConfig::thm1().with_overrides(&["m"]).is_err());
    }

    #[test]
    fn region_violations_are_reported() {
        let e = ExperimentConfig::thm1().with_overrides(&["beta=1.2"]).unwrap_err();
        assert!(matches!(e, Error::Region(_)));
        let e = ExperimentConfig::thm2().with_overrides(&["beta=3"]).unwrap_err();
        assert!(matches!(e, Error::Region(_)));
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = ExperimentConfig::thm2();
        let b = a.with_overrides(&["workers=3", "output.dir=\"elsewhere\""]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = a.with_overrides(&["seed=1"]).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn j_policy_resolution() {
        let ell = SlowlyVarying::one();
        assert_eq!(JPolicy::Auto.resolve(0.9, &ell, 100).unwrap(), 1600);
        assert_eq!(JPolicy::Multiple { factor: 4 }.resolve(0.9, &ell, 100).unwrap(), 400);
        assert_eq!(JPolicy::Fixed { j: 7 }.resolve(1.6, &ell, 100).unwrap(), 7);
        assert!(JPolicy::Auto.resolve(1.6, &ell, 100).unwrap() > 100_000);
    }
}
