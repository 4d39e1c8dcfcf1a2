//! Problem description for one-dimensional G-BSDEs.
//!
//! A problem is the terminal function `Φ`, the generator pair `(f, g)` with
//! its time-varying regularity data `(u, v, φ, L)`, the volatility interval
//! `[σ_low, σ_high]` and the horizon `T`. Everything here is an immutable value
//! that is cheap to clone (closures live behind `Arc`).

pub(crate) mod validate;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use validate::{validate_problem, InvariantCheck, ValidationReport};

/// Scalar function of time.
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Generator component `(t, y, z) -> value`.
pub type GenFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Scalar function of one real variable.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid problem specification: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
}

/// Volatility bounds of the one-dimensional G-function.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GParams {
    pub sigma_low: f64,
    pub sigma_high: f64,
}

impl GParams {
    /// Checked constructor; requires `0 < sigma_low <= sigma_high`.
    pub fn new(sigma_low: f64, sigma_high: f64) -> Result<Self, ModelError> {
        let p = Self { sigma_low, sigma_high };
        let problems = p.violations();
        if problems.is_empty() {
            Ok(p)
        } else {
            Err(ModelError::InvalidSpec(problems))
        }
    }

    pub(crate) fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.sigma_low.is_finite() && self.sigma_high.is_finite()) {
            out.push("volatility bounds must be finite".to_string());
        }
        if !(self.sigma_low > 0.0) {
            out.push("sigma_low > 0 violated".to_string());
        }
        if !(self.sigma_low <= self.sigma_high) {
            out.push("sigma_low ≤ sigma_high violated".to_string());
        }
        out
    }

    pub fn var_low(&self) -> f64 {
        self.sigma_low * self.sigma_low
    }

    pub fn var_high(&self) -> f64 {
        self.sigma_high * self.sigma_high
    }

    /// `M` volatilities whose variances are equally spaced in
    /// `[σ_low², σ_high²]`, ascending. Level sets with `M - 1` a power of two
    /// are nested.
    pub fn sigma_levels(&self, levels: usize) -> Vec<f64> {
        let levels = levels.max(2);
        let (lo, hi) = (self.var_low(), self.var_high());
        (0..levels)
            .map(|k| {
                let w = k as f64 / (levels - 1) as f64;
                (lo + (hi - lo) * w).sqrt()
            })
            .collect()
    }
}

/// `G(a) = ½(σ_high²·a⁺ − σ_low²·a⁻)`, the supremum of `½σ²a` over the
/// volatility interval.
pub fn big_g(a: f64, params: &GParams) -> f64 {
    0.5 * (params.var_high() * a.max(0.0) - params.var_low() * (-a).max(0.0))
}

/// Modulus of continuity `φ` in the `z` variable with its linear-growth
/// constant `L`.
#[derive(Clone)]
pub struct ModulusOfContinuity {
    name: String,
    phi: ScalarFn,
    growth: f64,
}

impl ModulusOfContinuity {
    pub fn new(name: impl Into<String>, growth: f64, phi: ScalarFn) -> Self {
        Self { name: name.into(), phi, growth }
    }

    /// `φ(x) = x`, the Lipschitz case.
    pub fn identity() -> Self {
        Self::new("identity", 1.0, Arc::new(|x| x))
    }

    /// `φ(x) = √x`, with `√x ≤ 1 + x`.
    pub fn sqrt() -> Self {
        Self::new("sqrt", 1.0, Arc::new(f64::sqrt))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    /// The declared constant `L` in `φ(x) ≤ L(1 + x)`.
    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// `max(L, 1)`, the normalization under which the approximant estimates hold.
    pub fn normalized_growth(&self) -> f64 {
        self.growth.max(1.0)
    }
}

impl fmt::Debug for ModulusOfContinuity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModulusOfContinuity").field("name", &self.name).field("growth", &self.growth).finish()
    }
}

/// Time-varying regularity coefficients `u(t)` (in `y`) and `v(t)` (in `z`).
#[derive(Clone)]
pub struct TimeVaryingCoeff {
    pub u: TimeFn,
    pub v: TimeFn,
    /// The coefficients may blow up at `t = 0`; solvers then evaluate at
    /// interval midpoints only.
    pub singular_at_zero: bool,
}

impl TimeVaryingCoeff {
    pub fn constant(u: f64, v: f64) -> Self {
        Self { u: Arc::new(move |_| u), v: Arc::new(move |_| v), singular_at_zero: false }
    }

    pub fn u(&self, t: f64) -> f64 {
        (self.u)(t)
    }

    pub fn v(&self, t: f64) -> f64 {
        (self.v)(t)
    }
}

impl fmt::Debug for TimeVaryingCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeVaryingCoeff").field("singular_at_zero", &self.singular_at_zero).finish_non_exhaustive()
    }
}

/// Quadrature for `Λ(u, v) = ∫₀ᵀ (u(t) + v(t)²) dt`.
///
/// Midpoint rule after substituting `t = s²`, which turns a `t^{-1/2}`
/// singularity at the left end into a bounded integrand. Nodes never touch
/// `t = 0`.
pub fn lambda_integral(coeff: &TimeVaryingCoeff, horizon: f64, n_quad: usize) -> Result<f64, ModelError> {
    lambda_integral_on(coeff, 0.0, horizon, n_quad)
}

/// Same as [`lambda_integral`] on `[a, b]`.
pub fn lambda_integral_on(coeff: &TimeVaryingCoeff, a: f64, b: f64, n_quad: usize) -> Result<f64, ModelError> {
    let n = n_quad.max(1);
    let h = (b - a).sqrt() / n as f64;
    // Kahan summation: n_quad can be 10⁶ and the integrand is unbounded.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for i in 0..n {
        let s = (i as f64 + 0.5) * h;
        let t = a + s * s;
        let u = coeff.u(t);
        let v = coeff.v(t);
        let term = 2.0 * s * (u + v * v);
        if !term.is_finite() {
            return Err(ModelError::NonFinite(format!("u(t) + v(t)² at t = {t}")));
        }
        let y = term - comp;
        let next = sum + y;
        comp = (next - sum) - y;
        sum = next;
    }
    Ok(sum * h)
}

/// Which generator component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    F,
    G,
}

impl Which {
    pub const BOTH: [Which; 2] = [Which::F, Which::G];
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::F => "f",
            Which::G => "g",
        })
    }
}

/// The generator pair `(f, g)` of `dY = −f dt − g d⟨B⟩ + Z dB + dK`.
#[derive(Clone)]
pub struct Generator {
    pub f: GenFn,
    pub g: GenFn,
    pub coeff: TimeVaryingCoeff,
    pub modulus: ModulusOfContinuity,
}

impl Generator {
    pub fn zero() -> Self {
        Self {
            f: Arc::new(|_, _, _| 0.0),
            g: Arc::new(|_, _, _| 0.0),
            coeff: TimeVaryingCoeff::constant(0.0, 0.0),
            modulus: ModulusOfContinuity::identity(),
        }
    }

    pub fn eval(&self, which: Which, t: f64, y: f64, z: f64) -> f64 {
        match which {
            Which::F => (self.f)(t, y, z),
            Which::G => (self.g)(t, y, z),
        }
    }

    /// `φ₀(t) = φ(t, 0, 0)`.
    pub fn at_origin(&self, which: Which, t: f64) -> f64 {
        self.eval(which, t, 0.0, 0.0)
    }

    pub fn f0(&self, t: f64) -> f64 {
        self.at_origin(Which::F, t)
    }

    pub fn g0(&self, t: f64) -> f64 {
        self.at_origin(Which::G, t)
    }

    /// `h₀(t) = |f₀(t)| + |g₀(t)|`.
    pub fn h0(&self, t: f64) -> f64 {
        self.f0(t).abs() + self.g0(t).abs()
    }
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator").field("coeff", &self.coeff).field("modulus", &self.modulus).finish_non_exhaustive()
    }
}

/// Markovian terminal condition `ξ = Φ(B_T)` with declared polynomial growth
/// `|Φ(x)| ≤ C(1 + |x|^degree)`.
#[derive(Clone)]
pub struct Terminal {
    func: ScalarFn,
    pub degree: u32,
    pub growth_const: f64,
}

impl Terminal {
    pub fn new(degree: u32, growth_const: f64, func: ScalarFn) -> Self {
        Self { func, degree, growth_const }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.func)(x)
    }
}

impl fmt::Debug for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Terminal")
            .field("degree", &self.degree)
            .field("growth_const", &self.growth_const)
            .finish_non_exhaustive()
    }
}

/// A complete G-BSDE instance on `[0, T]`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub params: GParams,
    pub gen: Generator,
    pub terminal: Terminal,
    pub horizon: f64,
}

impl ProblemSpec {
    /// Default time-evaluation rule for this problem's coefficients.
    pub fn time_eval(&self) -> TimeEval {
        if self.gen.coeff.singular_at_zero {
            TimeEval::Midpoint
        } else {
            TimeEval::Left
        }
    }

    /// Copy of the problem with the generator replaced by zero.
    pub fn without_generator(&self) -> Self {
        Self { gen: Generator::zero(), ..self.clone() }
    }
}

/// Where on `[t_i, t_{i+1}]` a discrete scheme evaluates time-dependent data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeEval {
    Left,
    Midpoint,
}

impl TimeEval {
    /// Evaluation time for the step `[i·dt, (i+1)·dt]`.
    pub fn at(self, i: usize, dt: f64) -> f64 {
        match self {
            TimeEval::Left => i as f64 * dt,
            TimeEval::Midpoint => (i as f64 + 0.5) * dt,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lo: f64, hi: f64) -> GParams {
        GParams { sigma_low: lo, sigma_high: hi }
    }

    #[test]
    fn big_g_examples() {
        let params = p(0.5, 1.0);
        assert_eq!(big_g(0.0, &params), 0.0);
        assert_eq!(big_g(2.0, &params), 1.0);
        assert_eq!(big_g(-2.0, &params), -0.25);
    }

    #[test]
    fn big_g_sandwich_between_extreme_variances() {
        let params = p(0.3, 1.7);
        let pts = [-5.0, -1.0, -0.1, 0.0, 0.2, 3.0];
        for &a1 in &pts {
            for &a2 in &pts {
                if a1 < a2 {
                    continue;
                }
                let d = big_g(a1, &params) - big_g(a2, &params);
                assert!(d >= 0.5 * params.var_low() * (a1 - a2) - 1e-15);
                assert!(d <= 0.5 * params.var_high() * (a1 - a2) + 1e-15);
            }
        }
    }

    #[test]
    fn gparams_rejects_inverted_interval() {
        let err = GParams::new(1.0, 0.5).unwrap_err();
        assert_eq!(err, ModelError::InvalidSpec(vec!["sigma_low ≤ sigma_high violated".into()]));
        assert!(GParams::new(0.0, 1.0).is_err());
        assert!(GParams::new(0.5, 0.5).is_ok());
    }

    #[test]
    fn sigma_levels_are_nested_when_refined_dyadically() {
        let params = p(0.5, 1.0);
        let two = params.sigma_levels(2);
        let nine = params.sigma_levels(9);
        assert_eq!(two, vec![0.5, 1.0]);
        for s in &two {
            assert!(nine.iter().any(|x| (x - s).abs() < 1e-15));
        }
        let three = params.sigma_levels(3);
        assert!((three[1] * three[1] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn lambda_integral_trivial_cases() {
        let zero = TimeVaryingCoeff::constant(0.0, 0.0);
        assert_eq!(lambda_integral(&zero, 1.0, 10).unwrap(), 0.0);
        let one = TimeVaryingCoeff::constant(1.0, 1.0);
        assert!((lambda_integral(&one, 2.0, 7).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn lambda_integral_handles_integrable_singularity() {
        let coeff =
            TimeVaryingCoeff { u: Arc::new(|t: f64| 0.5 / t.sqrt()), v: Arc::new(|_| 0.0), singular_at_zero: true };
        // closed form: √T
        let got = lambda_integral(&coeff, 1.0, 1_000_000).unwrap();
        assert!((got - 1.0).abs() < 1e-4, "{got}");
        // the substitution makes this integrand constant
        assert!((lambda_integral(&coeff, 1.0, 10).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_integral_reports_non_finite() {
        let coeff = TimeVaryingCoeff {
            u: Arc::new(|t: f64| if t > 0.5 { f64::NAN } else { 1.0 }),
            v: Arc::new(|_| 0.0),
            singular_at_zero: false,
        };
        assert!(matches!(lambda_integral(&coeff, 1.0, 4), Err(ModelError::NonFinite(_))));
    }

    #[test]
    fn lambda_integral_is_additive() {
        let coeff = TimeVaryingCoeff {
            u: Arc::new(|t: f64| 0.5 / t.sqrt()),
            v: Arc::new(|t: f64| t.powf(-0.25)),
            singular_at_zero: true,
        };
        let whole = lambda_integral_on(&coeff, 0.0, 1.0, 400_000).unwrap();
        let left = lambda_integral_on(&coeff, 0.0, 0.3, 120_000).unwrap();
        let right = lambda_integral_on(&coeff, 0.3, 1.0, 280_000).unwrap();
        assert!((whole - left - right).abs() < 1e-9);
        assert!((whole - 3.0).abs() < 5e-3);
    }

    #[test]
    fn time_eval_midpoint_avoids_zero() {
        assert_eq!(TimeEval::Left.at(0, 0.1), 0.0);
        assert!((TimeEval::Midpoint.at(0, 0.1) - 0.05).abs() < 1e-15);
    }
}
