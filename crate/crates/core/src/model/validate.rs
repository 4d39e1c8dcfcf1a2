use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lambda_integral, ModelError, ModulusOfContinuity, ProblemSpec};

/// Relative slack for inequalities that hold exactly in real arithmetic.
const ROUNDING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest observed `bound − value`; negative when violated.
    pub worst_margin: f64,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub problem: String,
    pub seed: u64,
    pub sample_budget: usize,
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| format!("{} violated", c.name)).collect()
    }
}

/// Tracks the worst margin seen for one invariant.
struct Tracker {
    name: &'static str,
    worst: f64,
    witness: String,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self { name, worst: f64::INFINITY, witness: String::new() }
    }

    fn observe(&mut self, margin: f64, witness: impl FnOnce() -> String) {
        // NaN margins are failures.
        if margin.is_nan() || margin < self.worst {
            self.worst = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
            self.witness = witness();
        }
    }

    fn finish(self) -> InvariantCheck {
        InvariantCheck {
            name: self.name.to_string(),
            passed: self.worst >= 0.0,
            worst_margin: if self.worst.is_infinite() && self.worst > 0.0 { 0.0 } else { self.worst },
            witness: self.witness,
        }
    }
}

fn modulus_samples(rng: &mut ChaCha8Rng, budget: usize) -> Vec<f64> {
    let mut xs = vec![0.0, 1e-6, 0.01, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0];
    for _ in 0..budget {
        // log-uniform on [1e-6, 10]
        let e: f64 = rng.gen_range(-6.0..1.0);
        xs.push(10f64.powf(e));
    }
    xs
}

/// Sampled checks of a modulus of continuity: `φ(0) = 0`, monotone,
/// sub-additive and `φ(x) ≤ L(1 + x)`.
pub(crate) fn check_modulus(modulus: &ModulusOfContinuity, budget: usize, seed: u64) -> Vec<InvariantCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6475);
    let xs = modulus_samples(&mut rng, budget);
    let phi = |x: f64| modulus.eval(x);

    let mut zero = Tracker::new("phi(0)=0");
    let p0 = phi(0.0);
    zero.observe(-p0.abs(), || format!("phi(0) = {p0}"));

    let mut mono = Tracker::new("phi non-decreasing");
    let mut sub = Tracker::new("phi sub-additive");
    let mut growth = Tracker::new("phi(x) ≤ L(1+x)");
    let l = modulus.growth();
    for (i, &x) in xs.iter().enumerate() {
        let px = phi(x);
        growth.observe(l * (1.0 + x) - px + ROUNDING * (1.0 + px.abs()), || format!("x = {x}, phi = {px}"));
        // pair with a rotating partner so every sample is used both ways
        let y = xs[(i * 7 + 3) % xs.len()];
        let py = phi(y);
        let (lo, hi, plo, phi_hi) = if x <= y { (x, y, px, py) } else { (y, x, py, px) };
        mono.observe(phi_hi - plo + ROUNDING * (1.0 + plo.abs()), || format!("x = {lo}, y = {hi}"));
        let pxy = phi(x + y);
        sub.observe(px + py - pxy + ROUNDING * (1.0 + pxy.abs()), || format!("x = {x}, y = {y}"));
    }
    vec![zero.finish(), mono.finish(), sub.finish(), growth.finish()]
}

/// Sampled validation of a problem's standing assumptions.
///
/// Returns the full report when every invariant holds and
/// [`ModelError::InvalidSpec`] listing every violated invariant otherwise.
/// Deterministic for a given seed.
pub fn validate_problem(spec: &ProblemSpec, sample_budget: usize, seed: u64) -> Result<ValidationReport, ModelError> {
    let budget = sample_budget.max(1);
    let mut checks = Vec::new();

    let sig = spec.params.violations();
    checks.push(InvariantCheck {
        name: "sigma_low ≤ sigma_high".into(),
        passed: sig.is_empty(),
        worst_margin: spec.params.sigma_high - spec.params.sigma_low,
        witness: sig.join("; "),
    });
    let horizon_ok = spec.horizon.is_finite() && spec.horizon > 0.0;
    checks.push(InvariantCheck {
        name: "horizon > 0".into(),
        passed: horizon_ok,
        worst_margin: spec.horizon,
        witness: format!("T = {}", spec.horizon),
    });

    checks.extend(check_modulus(&spec.gen.modulus, budget, seed));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = if horizon_ok { spec.horizon } else { 1.0 };
    let coeff = &spec.gen.coeff;

    let mut finite = Tracker::new("u(t), v(t) finite and nonnegative on (0,T]");
    for k in 0..budget {
        // always include T and a point close to 0
        let t = match k {
            0 => horizon,
            1 => horizon * 1e-9,
            _ => horizon * (1.0 - rng.gen::<f64>()),
        };
        let (u, v) = (coeff.u(t), coeff.v(t));
        let m = if u.is_finite() && v.is_finite() { u.min(v) } else { f64::NAN };
        finite.observe(m, || format!("t = {t}, u = {u}, v = {v}"));
    }
    checks.push(finite.finish());

    let lambda = lambda_integral(coeff, horizon, 10_000);
    checks.push(InvariantCheck {
        name: "Lambda(u,v) finite".into(),
        passed: lambda.is_ok(),
        worst_margin: lambda.as_ref().map(|x| -x).unwrap_or(f64::NEG_INFINITY),
        witness: match &lambda {
            Ok(x) => format!("Lambda = {x}"),
            Err(e) => e.to_string(),
        },
    });

    let gen = &spec.gen;
    let mut reg = Tracker::new("|Δf|+|Δg| ≤ u|Δy| + v·phi(|Δz|)");
    for _ in 0..budget {
        let t = horizon * (1.0 - rng.gen::<f64>());
        let y1: f64 = rng.gen_range(-10.0..10.0);
        let y2: f64 = if rng.gen_bool(0.5) { y1 + rng.gen_range(-0.1..0.1) } else { rng.gen_range(-10.0..10.0) };
        let z1: f64 = rng.gen_range(-10.0..10.0);
        let z2: f64 = if rng.gen_bool(0.5) { z1 + rng.gen_range(-0.01..0.01) } else { rng.gen_range(-10.0..10.0) };
        let f1 = (gen.f)(t, y1, z1);
        let f2 = (gen.f)(t, y2, z2);
        let g1 = (gen.g)(t, y1, z1);
        let g2 = (gen.g)(t, y2, z2);
        let lhs = (f1 - f2).abs() + (g1 - g2).abs();
        let rhs = coeff.u(t) * (y1 - y2).abs() + coeff.v(t) * gen.modulus.eval((z1 - z2).abs());
        let scale = 1.0 + f1.abs() + f2.abs() + g1.abs() + g2.abs();
        reg.observe(rhs - lhs + ROUNDING * scale, || format!("t={t}, y=({y1},{y2}), z=({z1},{z2})"));
    }
    checks.push(reg.finish());

    let term = &spec.terminal;
    let mut growth = Tracker::new("terminal polynomial growth");
    for k in 0..budget {
        let x = match k {
            0 => 0.0,
            1 => 50.0,
            2 => -50.0,
            _ => rng.gen_range(-50.0..50.0),
        };
        let val = term.eval(x);
        let bound = term.growth_const * (1.0 + x.abs().powi(term.degree as i32));
        growth.observe(if val.is_finite() { bound - val.abs() } else { f64::NAN }, || format!("x = {x}, Phi = {val}"));
    }
    checks.push(growth.finish());

    let report = ValidationReport { problem: spec.name.clone(), seed, sample_budget: budget, checks };
    if report.all_passed() {
        Ok(report)
    } else {
        Err(ModelError::InvalidSpec(report.failures()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{GParams, Generator, Terminal, TimeVaryingCoeff};

    fn base() -> ProblemSpec {
        ProblemSpec {
            name: "test".into(),
            params: GParams { sigma_low: 0.5, sigma_high: 1.0 },
            gen: Generator {
                f: Arc::new(|_, y, z: f64| 0.25 * y + 0.5 * z.abs().sqrt()),
                g: Arc::new(|_, _, z: f64| 0.5 * z.abs().sqrt()),
                coeff: TimeVaryingCoeff::constant(1.0, 1.0),
                modulus: ModulusOfContinuity::sqrt(),
            },
            terminal: Terminal::new(2, 1.0, Arc::new(|x| x * x)),
            horizon: 1.0,
        }
    }

    #[test]
    fn valid_problem_passes() {
        let report = validate_problem(&base(), 500, 7).unwrap();
        assert!(report.all_passed());
        assert_eq!(report, validate_problem(&base(), 500, 7).unwrap());
    }

    #[test]
    fn inverted_sigma_reported() {
        let mut p = base();
        p.params = GParams { sigma_low: 1.0, sigma_high: 0.5 };
        let err = validate_problem(&p, 10, 1).unwrap_err();
        let ModelError::InvalidSpec(list) = err else { panic!() };
        assert_eq!(list, vec!["sigma_low ≤ sigma_high violated".to_string()]);
    }

    #[test]
    fn shifted_modulus_reported() {
        let mut p = base();
        p.gen.modulus = ModulusOfContinuity::new("shifted", 1.0, Arc::new(|x: f64| 0.1 + x.sqrt() * 0.5));
        let ModelError::InvalidSpec(list) = validate_problem(&p, 50, 3).unwrap_err() else { panic!() };
        assert!(list.contains(&"phi(0)=0 violated".to_string()), "{list:?}");
    }

    #[test]
    fn squared_modulus_is_not_subadditive() {
        let m = ModulusOfContinuity::new("square", 1.0, Arc::new(|x: f64| x * x));
        let checks = check_modulus(&m, 20, 0);
        let sub = checks.iter().find(|c| c.name == "phi sub-additive").unwrap();
        assert!(!sub.passed);
    }

    #[test]
    fn generator_exceeding_modulus_reported() {
        let mut p = base();
        p.gen.f = Arc::new(|_, y, z: f64| 2.0 * y + z.abs().sqrt());
        let ModelError::InvalidSpec(list) = validate_problem(&p, 200, 3).unwrap_err() else { panic!() };
        assert_eq!(list.len(), 1);
        assert!(list[0].starts_with("|Δf|+|Δg|"));
    }

    #[test]
    fn terminal_growth_reported() {
        let mut p = base();
        p.terminal = Terminal::new(1, 1.0, Arc::new(|x| x * x));
        assert!(validate_problem(&p, 50, 3).is_err());
    }
}
