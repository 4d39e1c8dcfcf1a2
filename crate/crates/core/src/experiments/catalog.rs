use std::sync::Arc;

use super::ExperimentError;
use crate::model::{GParams, Generator, ModulusOfContinuity, ProblemSpec, Terminal, TimeVaryingCoeff};
use crate::tree::LinearSpec;

/// A named problem and the assumption it stresses.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub stresses: &'static str,
    pub problem: ProblemSpec,
    /// Second problem with pointwise larger data, for comparison runs.
    pub partner: Option<ProblemSpec>,
    pub linear: Option<LinearSpec>,
}

pub const NAMES: [&str; 5] = ["lipschitz", "sqrt_z", "singular_uv", "comparison_pair", "linear_rep"];

fn params() -> GParams {
    GParams { sigma_low: 0.5, sigma_high: 1.0 }
}

fn square() -> Terminal {
    Terminal::new(2, 1.0, Arc::new(|x| x * x))
}

fn spec(name: &str, gen: Generator, terminal: Terminal) -> ProblemSpec {
    ProblemSpec { name: name.into(), params: params(), gen, terminal, horizon: 1.0 }
}

fn lipschitz() -> CatalogEntry {
    let gen = Generator {
        f: Arc::new(|_, y, z: f64| 0.25 * y + 0.5 * z.abs()),
        g: Arc::new(|_, _, z: f64| 0.5 * z.abs()),
        coeff: TimeVaryingCoeff::constant(1.0, 1.0),
        modulus: ModulusOfContinuity::identity(),
    };
    CatalogEntry {
        name: "lipschitz",
        stresses: "degenerate uniformly continuous case: phi is the identity",
        problem: spec("lipschitz", gen, square()),
        partner: None,
        linear: None,
    }
}

fn sqrt_z() -> CatalogEntry {
    let gen = Generator {
        f: Arc::new(|_, y, z: f64| 0.25 * y + 0.5 * z.abs().sqrt() + 0.1),
        g: Arc::new(|_, _, z: f64| 0.5 * z.abs().sqrt() - 0.2),
        coeff: TimeVaryingCoeff::constant(1.0, 1.0),
        modulus: ModulusOfContinuity::sqrt(),
    };
    CatalogEntry {
        name: "sqrt_z",
        stresses: "genuinely non-Lipschitz in z: phi = sqrt, L = 1",
        problem: spec("sqrt_z", gen, square()),
        partner: None,
        linear: None,
    }
}

fn singular_uv() -> CatalogEntry {
    let u = |t: f64| 0.5 / t.sqrt();
    let v = |t: f64| t.powf(-0.25);
    let gen = Generator {
        f: Arc::new(move |t, y, z: f64| 0.25 * u(t) * y + 0.5 * v(t) * z.abs().sqrt()),
        g: Arc::new(move |t, _, z: f64| 0.25 * v(t) * z.abs().sqrt()),
        coeff: TimeVaryingCoeff { u: Arc::new(u), v: Arc::new(v), singular_at_zero: true },
        modulus: ModulusOfContinuity::sqrt(),
    };
    CatalogEntry {
        name: "singular_uv",
        stresses: "integrability: u(t) = t^(-1/2)/2 and v(t) = t^(-1/4) blow up at 0 with Lambda(u,v) = 3",
        problem: spec("singular_uv", gen, square()),
        partner: None,
        linear: None,
    }
}

fn comparison_pair() -> CatalogEntry {
    let lo = Generator {
        f: Arc::new(|_, y, z: f64| 0.25 * y + 0.5 * z.abs().sqrt().min(1.0)),
        g: Arc::new(|_, _, z: f64| 0.25 * z.abs().sqrt() - 0.1),
        coeff: TimeVaryingCoeff::constant(1.0, 1.0),
        modulus: ModulusOfContinuity::sqrt(),
    };
    let hi = Generator {
        f: Arc::new(|_, y, z: f64| 0.25 * y + 0.5 * z.abs().sqrt() + 0.1),
        g: Arc::new(|_, _, z: f64| 0.25 * z.abs().sqrt()),
        coeff: TimeVaryingCoeff::constant(1.0, 1.0),
        modulus: ModulusOfContinuity::sqrt(),
    };
    CatalogEntry {
        name: "comparison_pair",
        stresses: "ordered data: terminal, f and g of the first problem lie below those of the second",
        problem: spec("comparison_pair", lo, Terminal::new(2, 1.0, Arc::new(|x| (x * x).min(2.0)))),
        partner: Some(spec("comparison_pair.upper", hi, square())),
        linear: None,
    }
}

fn linear_rep() -> CatalogEntry {
    let lin = LinearSpec::constant(0.5, 0.3, 0.1, -0.05);
    CatalogEntry {
        name: "linear_rep",
        stresses: "linear generator f = a·y + m, g = c·y + n with a Γ-weighted representation",
        problem: spec("linear_rep", lin.generator(), square()),
        partner: None,
        linear: Some(lin),
    }
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![lipschitz(), sqrt_z(), singular_uv(), comparison_pair(), linear_rep()]
}

pub fn lookup(name: &str) -> Result<CatalogEntry, ExperimentError> {
    catalog().into_iter().find(|e| e.name == name).ok_or_else(|| ExperimentError::UnknownProblem(name.to_string()))
}

/// The three closed-form linear parameterizations: `a ≡ 1` with `Φ = x²`,
/// `c ≡ 1` with `Φ ≡ 1`, and the zero generator with `Φ = x²`.
pub fn linear_variants() -> Vec<(&'static str, LinearSpec, ProblemSpec)> {
    let cases = [
        ("a=1", LinearSpec::constant(1.0, 0.0, 0.0, 0.0), square()),
        ("c=1", LinearSpec::constant(0.0, 1.0, 0.0, 0.0), Terminal::new(0, 1.0, Arc::new(|_| 1.0))),
        ("zero", LinearSpec::constant(0.0, 0.0, 0.0, 0.0), square()),
    ];
    cases
        .into_iter()
        .map(|(label, lin, term)| {
            let p = spec(&format!("linear_rep.{label}"), lin.generator(), term);
            (label, lin, p)
        })
        .collect()
}
