//! Lipschitz approximants of a uniformly continuous generator.
//!
//! For `φ ∈ {f, g}` and an index `n > L` the lower and upper approximants are
//!
//! ```text
//! φ̲ₙ(t, y, z) = inf_q { φ(t, y, q) + n·v(t)·|z − q| } − φ(t, 0, 0)
//! φ̄ₙ(t, y, z) = sup_q { φ(t, y, q) − n·v(t)·|z − q| } − φ(t, 0, 0)
//! ```
//!
//! The optimum over `q` lies within `2L/(n − L)` of `z`, so the search runs
//! over a finite symmetric grid centred at `z` (plus the point `q = 0`) on a
//! window of radius `radius_factor · 2L/(n − L)`, followed by a few levels of
//! local refinement around the best grid point. Any probe is a valid witness,
//! so the result overestimates the infimum (underestimates the supremum) by
//! at most the one-cell slack returned by [`ApproxGenerator::grid_slack`].

mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Generator, Which};

pub use verify::{verify_approximant_properties, PropertyCheck, PropertyReport, PropertyWitness, SampleBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("approximation index n = {n} must exceed the normalized growth constant L = {growth}")]
    IndexTooSmall { n: u32, growth: f64 },
    #[error("non-finite probe value at t = {t}, y = {y}, q = {q}")]
    NonFinite { t: f64, y: f64, q: f64 },
    #[error("operation requires a {expected:?} approximant")]
    WrongDirection { expected: Direction },
    #[error("invalid search configuration: {0}")]
    InvalidSearch(String),
    #[error("modulus precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("property {property} violated by {margin:e} at {witness}")]
    PropertyViolation { property: String, margin: f64, witness: String },
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Lower,
    Upper,
}

/// Finite stand-in for the search over `q ∈ ℚ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QSearchConfig {
    /// Window radius as a multiple of `2L/(n − L)`.
    pub radius_factor: f64,
    /// Number of grid points on the window; odd so that `q = z` is on it.
    pub grid_points: usize,
    /// Local refinement levels around the best grid point.
    pub refine_levels: usize,
    /// Points per side of each refinement level.
    pub refine_points: usize,
}

impl Default for QSearchConfig {
    fn default() -> Self {
        Self { radius_factor: 2.0, grid_points: 2001, refine_levels: 4, refine_points: 5 }
    }
}

impl QSearchConfig {
    /// Coarser grid used inside the backward solvers, where the search runs
    /// once per node and volatility level.
    pub fn solver_default() -> Self {
        Self { grid_points: 201, ..Self::default() }
    }

    /// Plain grid search, no refinement.
    pub fn grid_only(grid_points: usize) -> Self {
        Self { grid_points, refine_levels: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        if self.grid_points < 3 || self.grid_points.is_multiple_of(2) {
            return Err(ApproxError::InvalidSearch(format!(
                "grid_points must be odd and ≥ 3, got {}",
                self.grid_points
            )));
        }
        if !(self.radius_factor >= 1.0 && self.radius_factor.is_finite()) {
            return Err(ApproxError::InvalidSearch(format!("radius_factor must be ≥ 1, got {}", self.radius_factor)));
        }
        if self.refine_levels > 0 && self.refine_points == 0 {
            return Err(ApproxError::InvalidSearch("refine_points must be ≥ 1 when refining".into()));
        }
        Ok(())
    }
}

/// Minimum of `objective(q)` over the probes `q`. The objective must already
/// include the cone term. Returns the minimum and its argmin.
pub fn min_over_probes(probes: &[f64], mut objective: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut best = f64::INFINITY;
    let mut arg = f64::NAN;
    for &q in probes {
        let v = objective(q);
        if v < best || v.is_nan() {
            best = v;
            arg = q;
            if v.is_nan() {
                break;
            }
        }
    }
    (best, arg)
}

/// One index-`n` approximant of a base generator.
#[derive(Debug, Clone)]
pub struct ApproxGenerator {
    base: Generator,
    n: u32,
    direction: Direction,
    search: QSearchConfig,
    growth: f64,
}

impl ApproxGenerator {
    pub fn new(base: Generator, n: u32, direction: Direction, search: QSearchConfig) -> Result<Self, ApproxError> {
        search.validate()?;
        let growth = base.modulus.normalized_growth();
        if !(n as f64 > growth) {
            return Err(ApproxError::IndexTooSmall { n, growth });
        }
        Ok(Self { base, n, direction, search, growth })
    }

    pub fn base(&self) -> &Generator {
        &self.base
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn search(&self) -> &QSearchConfig {
        &self.search
    }

    /// `max(L, 1)`.
    pub fn normalized_growth(&self) -> f64 {
        self.growth
    }

    /// `2L/(n − L)`: the optimum over `q` is attained within this distance of `z`.
    pub fn support_radius(&self) -> f64 {
        2.0 * self.growth / (self.n as f64 - self.growth)
    }

    pub fn window_radius(&self) -> f64 {
        self.search.radius_factor * self.support_radius()
    }

    /// Spacing `h_q` of the search grid.
    pub fn grid_spacing(&self) -> f64 {
        let half = (self.search.grid_points - 1) / 2;
        self.window_radius() / half as f64
    }

    /// `ε_grid = n·v(t)·h_q + v(t)·φ(h_q)`: how far the search can miss the
    /// exact infimum (supremum).
    pub fn grid_slack(&self, t: f64) -> f64 {
        let h = self.grid_spacing();
        let v = self.base.coeff.v(t);
        self.n as f64 * v * h + v * self.base.modulus.eval(h)
    }

    /// `v(t)·φ(2L/(n − L))`.
    pub fn gap_bound(&self, t: f64) -> f64 {
        self.base.coeff.v(t) * self.base.modulus.eval(self.support_radius())
    }

    /// The approximant value in this generator's direction (without `φ₀` added back).
    pub fn value(&self, which: Which, t: f64, y: f64, z: f64) -> Result<f64, ApproxError> {
        let weight = self.n as f64 * self.base.coeff.v(t);
        let sign = match self.direction {
            Direction::Lower => 1.0,
            Direction::Upper => -1.0,
        };
        let base = &self.base;
        // minimize sign·φ(q) + weight·|z − q|
        let objective = |q: f64| sign * base.eval(which, t, y, q) + weight * (z - q).abs();
        let (best, arg) = self.search_min(z, objective);
        if !best.is_finite() {
            return Err(ApproxError::NonFinite { t, y, q: arg });
        }
        Ok(sign * best - base.at_origin(which, t))
    }

    /// The generator to plug into a solver: `φ̲ₙ + φ₀` or `φ̄ₙ + φ₀`.
    pub fn effective(&self, which: Which, t: f64, y: f64, z: f64) -> Result<f64, ApproxError> {
        Ok(self.value(which, t, y, z)? + self.base.at_origin(which, t))
    }

    fn search_min(&self, z: f64, mut objective: impl FnMut(f64) -> f64) -> (f64, f64) {
        let half = (self.search.grid_points - 1) / 2;
        let r = self.window_radius();
        let h = r / half as f64;

        let mut best = objective(z);
        let mut arg = z;
        let mut consider = |q: f64, best: &mut f64, arg: &mut f64| {
            let v = objective(q);
            if v < *best || v.is_nan() {
                *best = v;
                *arg = q;
            }
        };
        consider(0.0, &mut best, &mut arg);
        for k in 1..=half {
            let off = h * k as f64;
            consider(z - off, &mut best, &mut arg);
            consider(z + off, &mut best, &mut arg);
        }
        let mut step = h;
        for _ in 0..self.search.refine_levels {
            if !best.is_finite() {
                break;
            }
            let m = self.search.refine_points;
            let sub = step / m as f64;
            let centre = arg;
            for k in 1..=m {
                let off = sub * k as f64;
                consider(centre - off, &mut best, &mut arg);
                consider(centre + off, &mut best, &mut arg);
            }
            step = sub;
        }
        (best, arg)
    }
}

/// Lower approximant `φ̲ₙ(t, y, z)`.
pub fn lower_approx(ag: &ApproxGenerator, which: Which, t: f64, y: f64, z: f64) -> Result<f64, ApproxError> {
    if ag.direction != Direction::Lower {
        return Err(ApproxError::WrongDirection { expected: Direction::Lower });
    }
    ag.value(which, t, y, z)
}

/// Upper approximant `φ̄ₙ(t, y, z)`.
pub fn upper_approx(ag: &ApproxGenerator, which: Which, t: f64, y: f64, z: f64) -> Result<f64, ApproxError> {
    if ag.direction != Direction::Upper {
        return Err(ApproxError::WrongDirection { expected: Direction::Upper });
    }
    ag.value(which, t, y, z)
}

/// `v(t)·φ(2L/(n − L))`, the pointwise distance between an approximant and
/// the centred base generator.
pub fn gap_bound(ag: &ApproxGenerator, t: f64) -> f64 {
    ag.gap_bound(t)
}

/// Which generator a solver integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "n")]
pub enum SolveMode {
    Raw,
    Lower(u32),
    Upper(u32),
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMode::Raw => write!(f, "raw"),
            SolveMode::Lower(n) => write!(f, "lower({n})"),
            SolveMode::Upper(n) => write!(f, "upper({n})"),
        }
    }
}

/// Pointwise evaluator of the generator pair a solver actually uses.
#[derive(Debug, Clone)]
pub enum DrivingGenerator {
    Raw(Generator),
    Approx(ApproxGenerator),
}

impl DrivingGenerator {
    pub fn new(base: &Generator, mode: SolveMode, search: QSearchConfig) -> Result<Self, ApproxError> {
        Ok(match mode {
            SolveMode::Raw => DrivingGenerator::Raw(base.clone()),
            SolveMode::Lower(n) => {
                DrivingGenerator::Approx(ApproxGenerator::new(base.clone(), n, Direction::Lower, search)?)
            }
            SolveMode::Upper(n) => {
                DrivingGenerator::Approx(ApproxGenerator::new(base.clone(), n, Direction::Upper, search)?)
            }
        })
    }

    pub fn eval(&self, which: Which, t: f64, y: f64, z: f64) -> Result<f64, ApproxError> {
        match self {
            DrivingGenerator::Raw(g) => Ok(g.eval(which, t, y, z)),
            DrivingGenerator::Approx(a) => a.effective(which, t, y, z),
        }
    }

    /// `f + σ²·g` at one point; the combination every backward step needs.
    pub fn combined(&self, t: f64, y: f64, z: f64, var: f64) -> Result<f64, ApproxError> {
        Ok(self.eval(Which::F, t, y, z)? + var * self.eval(Which::G, t, y, z)?)
    }

    pub fn base(&self) -> &Generator {
        match self {
            DrivingGenerator::Raw(g) => g,
            DrivingGenerator::Approx(a) => a.base(),
        }
    }

    /// Worst-case search slack at time `t` (zero for the raw generator).
    pub fn grid_slack(&self, t: f64) -> f64 {
        match self {
            DrivingGenerator::Raw(_) => 0.0,
            DrivingGenerator::Approx(a) => a.grid_slack(t),
        }
    }
}

/// Checks that a ladder of approximation indices is non-empty, strictly
/// increasing and above the normalized growth constant.
pub fn check_ladder(ladder: &[u32], growth: f64) -> Result<(), ApproxError> {
    if ladder.is_empty() {
        return Err(ApproxError::InvalidLadder("empty ladder".into()));
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ApproxError::InvalidLadder(format!("ladder {ladder:?} is not strictly increasing")));
    }
    if let Some(&n) = ladder.iter().find(|&&n| !(n as f64 > growth)) {
        return Err(ApproxError::InvalidLadder(format!("index {n} does not exceed L = {growth}")));
    }
    Ok(())
}
