//! Backward dynamic programming on a uniform spatial grid.
//!
//! Each backward step looks up the next slice at `x ± σ√Δ` for every
//! volatility level `σ`, forms the one-step value
//!
//! ```text
//! m^σ = ½[Y(x+σ√Δ) + Y(x−σ√Δ)]
//! Z^σ = [Y(x+σ√Δ) − Y(x−σ√Δ)] / (2σ√Δ)
//! V^σ = m^σ + Δ·f(t, ŷ, Z^σ) + Δ·σ²·g(t, ŷ, Z^σ)
//! ```
//!
//! and keeps the worst case `Y = max_σ V^σ`. The per-node slack
//! `min_σ V^σ − Y ≤ 0` is reported as the `K` residual.

mod studies;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{ApproxError, DrivingGenerator, QSearchConfig, SolveMode};
use crate::model::{GParams, ProblemSpec, ScalarFn, Terminal, TimeEval};

pub use studies::{gap_study, sandwich_run, GapReport, GapRow, LadderSolutions, OrderingCheck, SandwichReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at time index {time_index}, x = {x}")]
    NonFinite { time_index: usize, x: f64 },
    #[error("fixed point did not converge at time index {time_index}, x = {x} after {iterations} iterations")]
    FixedPointDiverged { time_index: usize, x: f64, iterations: usize },
    #[error("domain too small: boundary extrapolation carries mass {mass:e} > {limit:e}")]
    DomainTooSmall { mass: f64, limit: f64 },
    #[error("time step too large for a monotone step: Δ·u(t)·max(1,σ̄²) = {product} ≥ 1 at t = {t}")]
    StepTooLarge { product: f64, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    LinearExtrapolation,
}

/// How the `y` argument of the generator is coupled within one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum YCoupling {
    /// `ŷ = m^σ`.
    Explicit,
    /// Solve `V = m + Δ·F(t, V, Z)` by fixed-point iteration.
    FixedPoint { tol: f64, max_iter: usize },
}

impl YCoupling {
    pub fn fixed_point_default() -> Self {
        YCoupling::FixedPoint { tol: 1e-12, max_iter: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub n_time: usize,
    /// Odd, so that `x = 0` is a grid node.
    pub n_space: usize,
    /// The grid covers `|x| ≤ domain_halfwidth_sigmas · σ̄ · √T`.
    pub domain_halfwidth_sigmas: f64,
    pub sigma_levels: usize,
    pub interpolation: Interpolation,
    pub y_coupling: YCoupling,
    pub boundary: Boundary,
    pub q_search: QSearchConfig,
    /// `None` picks midpoints for singular coefficients and left points otherwise.
    pub time_eval: Option<TimeEval>,
    /// Largest tolerated probability mass (under the optimal policy) of
    /// reaching the extrapolated boundary from `(0, 0)`.
    pub max_boundary_mass: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_time: 200,
            n_space: 2401,
            domain_halfwidth_sigmas: 6.0,
            sigma_levels: 2,
            interpolation: Interpolation::Linear,
            y_coupling: YCoupling::Explicit,
            boundary: Boundary::LinearExtrapolation,
            q_search: QSearchConfig::solver_default(),
            time_eval: None,
            max_boundary_mass: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn with_grid(n_time: usize, n_space: usize) -> Self {
        Self { n_time, n_space, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.n_time == 0 {
            return Err(LatticeError::InvalidConfig("n_time must be ≥ 1".into()));
        }
        if self.n_space < 3 || self.n_space.is_multiple_of(2) {
            return Err(LatticeError::InvalidConfig(format!("n_space must be odd and ≥ 3, got {}", self.n_space)));
        }
        if !(self.domain_halfwidth_sigmas > 0.0 && self.domain_halfwidth_sigmas.is_finite()) {
            return Err(LatticeError::InvalidConfig("domain_halfwidth_sigmas must be positive".into()));
        }
        if self.sigma_levels < 2 {
            return Err(LatticeError::InvalidConfig("sigma_levels must be ≥ 2".into()));
        }
        if let YCoupling::FixedPoint { tol, max_iter } = self.y_coupling {
            if !(tol > 0.0) || max_iter == 0 {
                return Err(LatticeError::InvalidConfig("fixed point needs tol > 0 and max_iter ≥ 1".into()));
            }
        }
        self.q_search.validate()?;
        Ok(())
    }

    /// A grid on which every tree node of an `n_steps`-step, two-level tree
    /// is a lattice node, so no interpolation happens inside the root's cone.
    ///
    /// Requires `σ̄/σ̲` to be a ratio of small integers.
    pub fn matched_to_tree(params: &GParams, horizon: f64, n_steps: usize) -> Result<Self, LatticeError> {
        let ratio = params.sigma_high / params.sigma_low;
        let k = (1..=64usize)
            .find(|&k| {
                let r = ratio * k as f64;
                (r - r.round()).abs() < 1e-9
            })
            .ok_or_else(|| {
                LatticeError::InvalidConfig(format!("sigma ratio {ratio} is not a ratio of small integers"))
            })?;
        let dt = horizon / n_steps as f64;
        let dx = params.sigma_low * dt.sqrt() / k as f64;
        let reach = n_steps as f64 * params.sigma_high * dt.sqrt();
        let cells = (1.5 * reach / dx).ceil() as usize + 2;
        let halfwidth = cells as f64 * dx;
        Ok(Self {
            n_time: n_steps,
            n_space: 2 * cells + 1,
            domain_halfwidth_sigmas: halfwidth / (params.sigma_high * horizon.sqrt()),
            ..Self::default()
        })
    }
}

/// Surfaces `Y`, `Z` and the `K` residual on the space-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSolution {
    pub mode: SolveMode,
    pub config: SolverConfig,
    pub sigmas: Vec<f64>,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// `y[i][j] = Y(t_i, x_j)`.
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// `min_σ V^σ − max_σ V^σ`, nonpositive.
    pub k_residual: Vec<Vec<f64>>,
    /// Mass of optimal-policy paths from `(0, 0)` that hit the extrapolated boundary.
    pub boundary_mass: f64,
}

impl LatticeSolution {
    pub fn center(&self) -> usize {
        self.xs.len() / 2
    }

    /// `Y(0, 0)`.
    pub fn y0(&self) -> f64 {
        self.y[0][self.center()]
    }

    pub fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    /// Linear interpolation of slice `i` at `x` (clamped to the domain).
    pub fn value_at(&self, i: usize, x: f64) -> f64 {
        let p = (x - self.xs[0]) / self.dx();
        interp_clamped(&self.y[i], p)
    }

    /// Indices `j` with `|x_j| ≤ fraction · halfwidth`.
    pub fn inner_indices(&self, fraction: f64) -> std::ops::Range<usize> {
        let c = self.center();
        let half = ((c as f64) * fraction).floor() as usize;
        (c - half)..(c + half + 1)
    }

    /// `max |Y|` over the whole surface.
    pub fn sup_norm(&self) -> f64 {
        self.y.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn interp_clamped(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let p = p.clamp(0.0, (n - 1) as f64);
    let j = (p.floor() as usize).min(n - 2);
    let w = p - j as f64;
    (1.0 - w) * values[j] + w * values[j + 1]
}

/// Value of a slice at fractional index `p`; linear extrapolation from the
/// two edge nodes outside the grid. The flag reports extrapolation.
#[inline]
fn lookup(values: &[f64], p: f64) -> (f64, bool) {
    let n = values.len();
    let last = (n - 1) as f64;
    if p < 0.0 {
        (values[0] + (values[1] - values[0]) * p, true)
    } else if p > last {
        (values[n - 1] + (values[n - 1] - values[n - 2]) * (p - last), true)
    } else {
        let j = (p.floor() as usize).min(n - 2);
        let w = p - j as f64;
        if w == 0.0 {
            (values[j], false)
        } else {
            ((1.0 - w) * values[j] + w * values[j + 1], false)
        }
    }
}

#[inline]
fn lookup_index(values: &[f64], idx: isize) -> (f64, bool) {
    if idx >= 0 && (idx as usize) < values.len() {
        (values[idx as usize], false)
    } else {
        lookup(values, idx as f64)
    }
}

/// Offset of one volatility level in grid units.
#[derive(Debug, Clone, Copy)]
enum Shift {
    Exact(isize),
    Fractional(f64),
}

impl Shift {
    fn new(offset: f64, dx: f64) -> Self {
        let s = offset / dx;
        let r = s.round();
        if (s - r).abs() < 1e-9 * s.max(1.0) {
            Shift::Exact(r as isize)
        } else {
            Shift::Fractional(s)
        }
    }

    #[inline]
    fn pair(self, values: &[f64], j: usize) -> ((f64, bool), (f64, bool)) {
        match self {
            Shift::Exact(s) => (lookup_index(values, j as isize + s), lookup_index(values, j as isize - s)),
            Shift::Fractional(s) => (lookup(values, j as f64 + s), lookup(values, j as f64 - s)),
        }
    }
}

struct NodeOut {
    y: f64,
    z: f64,
    k: f64,
    mass: f64,
}

pub(crate) struct Grid {
    pub xs: Vec<f64>,
    pub dx: f64,
    pub dt: f64,
    pub times: Vec<f64>,
}

impl Grid {
    pub(crate) fn new(problem: &ProblemSpec, config: &SolverConfig) -> Self {
        let halfwidth = config.domain_halfwidth_sigmas * problem.params.sigma_high * problem.horizon.sqrt();
        let half = (config.n_space - 1) / 2;
        let dx = halfwidth / half as f64;
        let xs = (0..config.n_space).map(|j| (j as f64 - half as f64) * dx).collect();
        let dt = problem.horizon / config.n_time as f64;
        let times = (0..=config.n_time).map(|i| i as f64 * dt).collect();
        Self { xs, dx, dt, times }
    }
}

pub(crate) fn terminal_slices(terminal: &Terminal, xs: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let y: Vec<f64> = xs.iter().map(|&x| terminal.eval(x)).collect();
    let n = y.len();
    let z = (0..n)
        .map(|j| {
            if j == 0 {
                (y[1] - y[0]) / dx
            } else if j == n - 1 {
                (y[n - 1] - y[n - 2]) / dx
            } else {
                (y[j + 1] - y[j - 1]) / (2.0 * dx)
            }
        })
        .collect();
    (y, z)
}

/// Checks `Δ·u(t)·max(1, σ̄²) < 1`, under which one step is monotone in `y`.
pub(crate) fn check_step(driver: &DrivingGenerator, params: &GParams, t: f64, dt: f64) -> Result<(), LatticeError> {
    let product = dt * driver.base().coeff.u(t) * params.var_high().max(1.0);
    if product < 1.0 {
        Ok(())
    } else {
        Err(LatticeError::StepTooLarge { product, t })
    }
}

/// Solve the G-BSDE (or one of its approximating equations) on the lattice.
pub fn solve(problem: &ProblemSpec, mode: SolveMode, config: &SolverConfig) -> Result<LatticeSolution, LatticeError> {
    config.validate()?;
    let driver = DrivingGenerator::new(&problem.gen, mode, config.q_search)?;
    solve_with_driver(problem, &driver, mode, config)
}

pub(crate) fn solve_with_driver(
    problem: &ProblemSpec,
    driver: &DrivingGenerator,
    mode: SolveMode,
    config: &SolverConfig,
) -> Result<LatticeSolution, LatticeError> {
    config.validate()?;
    let grid = Grid::new(problem, config);
    let n_time = config.n_time;
    let time_eval = config.time_eval.unwrap_or_else(|| problem.time_eval());
    let sigmas = problem.params.sigma_levels(config.sigma_levels);
    let sqrt_dt = grid.dt.sqrt();
    let shifts: Vec<Shift> = sigmas.iter().map(|s| Shift::new(s * sqrt_dt, grid.dx)).collect();

    let mut y = vec![Vec::new(); n_time + 1];
    let mut z = vec![Vec::new(); n_time + 1];
    let mut k = vec![Vec::new(); n_time + 1];
    let (yt, zt) = terminal_slices(&problem.terminal, &grid.xs, grid.dx);
    y[n_time] = yt;
    z[n_time] = zt;
    k[n_time] = vec![0.0; config.n_space];
    let mut mass = vec![0.0; config.n_space];

    for i in (0..n_time).rev() {
        let t = time_eval.at(i, grid.dt);
        check_step(driver, &problem.params, t, grid.dt)?;
        let next = &y[i + 1];
        let next_mass = &mass;
        let xs = &grid.xs;
        let out: Result<Vec<NodeOut>, LatticeError> = (0..config.n_space)
            .into_par_iter()
            .map(|j| {
                let mut best = f64::NEG_INFINITY;
                let mut worst = f64::INFINITY;
                let mut best_z = 0.0;
                let mut best_mass = 0.0;
                for (lvl, &sigma) in sigmas.iter().enumerate() {
                    let ((up, up_ext), (dn, dn_ext)) = shifts[lvl].pair(next, j);
                    let m = 0.5 * (up + dn);
                    let zz = (up - dn) / (2.0 * sigma * sqrt_dt);
                    let var = sigma * sigma;
                    let v = step_value(driver, config.y_coupling, t, m, zz, var, grid.dt).map_err(|e| match e {
                        StepError::Approx(a) => LatticeError::Approx(a),
                        StepError::Diverged(iterations) => {
                            LatticeError::FixedPointDiverged { time_index: i, x: xs[j], iterations }
                        }
                    })?;
                    if !v.is_finite() {
                        return Err(LatticeError::NonFinite { time_index: i, x: xs[j] });
                    }
                    worst = worst.min(v);
                    // strict comparison: lowest level wins ties
                    if v > best {
                        best = v;
                        best_z = zz;
                        let mu = if up_ext { 1.0 } else { shifts[lvl].pair(next_mass, j).0 .0 };
                        let md = if dn_ext { 1.0 } else { shifts[lvl].pair(next_mass, j).1 .0 };
                        best_mass = 0.5 * (mu + md);
                    }
                }
                Ok(NodeOut { y: best, z: best_z, k: worst - best, mass: best_mass })
            })
            .collect();
        let out = out?;
        y[i] = out.iter().map(|o| o.y).collect();
        z[i] = out.iter().map(|o| o.z).collect();
        k[i] = out.iter().map(|o| o.k).collect();
        mass = out.iter().map(|o| o.mass).collect();
    }

    let centre = config.n_space / 2;
    let boundary_mass = mass[centre];
    if boundary_mass > config.max_boundary_mass {
        return Err(LatticeError::DomainTooSmall { mass: boundary_mass, limit: config.max_boundary_mass });
    }
    Ok(LatticeSolution {
        mode,
        config: *config,
        sigmas,
        times: grid.times,
        xs: grid.xs,
        y,
        z,
        k_residual: k,
        boundary_mass,
    })
}

pub(crate) enum StepError {
    Approx(ApproxError),
    Diverged(usize),
}

/// `m + Δ·(f + σ²g)(t, ŷ, z)` with `ŷ` chosen by the coupling rule.
#[inline]
pub(crate) fn step_value(
    driver: &DrivingGenerator,
    coupling: YCoupling,
    t: f64,
    m: f64,
    z: f64,
    var: f64,
    dt: f64,
) -> Result<f64, StepError> {
    match coupling {
        YCoupling::Explicit => Ok(m + dt * driver.combined(t, m, z, var).map_err(StepError::Approx)?),
        YCoupling::FixedPoint { tol, max_iter } => {
            let mut v = m;
            for _ in 0..max_iter {
                let next = m + dt * driver.combined(t, v, z, var).map_err(StepError::Approx)?;
                if !next.is_finite() {
                    return Ok(next);
                }
                if (next - v).abs() <= tol * (1.0 + next.abs()) {
                    return Ok(next);
                }
                v = next;
            }
            Err(StepError::Diverged(max_iter))
        }
    }
}

/// Sublinear expectation `Ê[payoff(B_T)]` on the lattice: the backward step
/// with a vanishing generator. Returns the value at `(0, 0)` and the surface.
pub fn g_expect(
    payoff: ScalarFn,
    params: &GParams,
    horizon: f64,
    config: &SolverConfig,
) -> Result<(f64, LatticeSolution), LatticeError> {
    let problem = ProblemSpec {
        name: "g_expectation".into(),
        params: *params,
        gen: crate::model::Generator::zero(),
        terminal: Terminal::new(0, f64::INFINITY, payoff),
        horizon,
    };
    let sol = solve(&problem, SolveMode::Raw, config)?;
    Ok((sol.y0(), sol))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{Generator, ModulusOfContinuity, TimeVaryingCoeff};

    fn params() -> GParams {
        GParams { sigma_low: 0.5, sigma_high: 1.0 }
    }

    fn problem(gen: Generator, terminal: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ProblemSpec {
        ProblemSpec {
            name: "t".into(),
            params: params(),
            gen,
            terminal: Terminal::new(2, 10.0, Arc::new(terminal)),
            horizon: 1.0,
        }
    }

    #[test]
    fn g_expect_closed_forms() {
        let cfg = SolverConfig::with_grid(200, 2401);
        let (lin, _) = g_expect(Arc::new(|x| x), &params(), 1.0, &cfg).unwrap();
        assert!(lin.abs() < 1e-9, "{lin}");
        let (sq, _) = g_expect(Arc::new(|x| x * x), &params(), 1.0, &cfg).unwrap();
        assert!((sq - 1.0).abs() < 0.02, "{sq}");
        let (nsq, _) = g_expect(Arc::new(|x| -x * x), &params(), 1.0, &cfg).unwrap();
        assert!((nsq + 0.25).abs() < 0.02 * 0.25, "{nsq}");
    }

    #[test]
    fn linear_growth_generator_compounds() {
        let gen = Generator {
            f: Arc::new(|_, y, _| y),
            g: Arc::new(|_, _, _| 0.0),
            coeff: TimeVaryingCoeff::constant(1.0, 0.0),
            modulus: ModulusOfContinuity::identity(),
        };
        let sol = solve(&problem(gen, |_| 1.0), SolveMode::Raw, &SolverConfig::with_grid(200, 201)).unwrap();
        let e = std::f64::consts::E;
        assert!((sol.y0() - e).abs() < 0.01 * e, "{}", sol.y0());
        // discrete compounding is exact: (1 + Δ)^N
        assert!((sol.y0() - 1.005f64.powi(200)).abs() < 1e-12);
    }

    #[test]
    fn constant_g_accumulates_at_upper_variance() {
        let gen = Generator {
            f: Arc::new(|_, _, _| 0.0),
            g: Arc::new(|_, _, _| 1.0),
            coeff: TimeVaryingCoeff::constant(0.0, 0.0),
            modulus: ModulusOfContinuity::identity(),
        };
        let sol = solve(&problem(gen, |_| 0.0), SolveMode::Raw, &SolverConfig::with_grid(100, 201)).unwrap();
        assert!((sol.y0() - 1.0).abs() < 0.01);
    }

    #[test]
    fn terminal_slice_exact_and_residual_nonpositive() {
        let p = problem(Generator::zero(), |x: f64| x.sin() * x);
        let sol = solve(&p, SolveMode::Raw, &SolverConfig::with_grid(20, 101)).unwrap();
        let last = sol.y.last().unwrap();
        for (j, &x) in sol.xs.iter().enumerate() {
            assert_eq!(last[j].to_bits(), p.terminal.eval(x).to_bits());
        }
        assert!(sol.k_residual.iter().flatten().all(|&k| k <= 0.0));
        // mixed convexity: the residual is strictly negative somewhere
        assert!(sol.k_residual.iter().flatten().any(|&k| k < -1e-6));
    }

    #[test]
    fn rejects_bad_configs() {
        let p = problem(Generator::zero(), |x| x);
        for cfg in [
            SolverConfig { n_space: 100, ..SolverConfig::default() },
            SolverConfig { n_time: 0, ..SolverConfig::default() },
            SolverConfig { sigma_levels: 1, ..SolverConfig::default() },
        ] {
            assert!(matches!(solve(&p, SolveMode::Raw, &cfg), Err(LatticeError::InvalidConfig(_))));
        }
        // n must exceed L = 1
        assert!(matches!(
            solve(&p, SolveMode::Lower(1), &SolverConfig::default()),
            Err(LatticeError::Approx(ApproxError::IndexTooSmall { .. }))
        ));
    }

    #[test]
    fn small_domain_is_diagnosed() {
        let p = problem(Generator::zero(), |x| x * x);
        let cfg = SolverConfig { domain_halfwidth_sigmas: 0.5, ..SolverConfig::with_grid(50, 101) };
        assert!(matches!(solve(&p, SolveMode::Raw, &cfg), Err(LatticeError::DomainTooSmall { .. })));
    }

    #[test]
    fn stiff_coefficient_rejected() {
        let gen = Generator {
            f: Arc::new(|_, y, _| 50.0 * y),
            g: Arc::new(|_, _, _| 0.0),
            coeff: TimeVaryingCoeff::constant(50.0, 0.0),
            modulus: ModulusOfContinuity::identity(),
        };
        let p = problem(gen, |_| 1.0);
        assert!(matches!(
            solve(&p, SolveMode::Raw, &SolverConfig::with_grid(10, 101)),
            Err(LatticeError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn fixed_point_coupling_matches_implicit_compounding() {
        let gen = Generator {
            f: Arc::new(|_, y, _| y),
            g: Arc::new(|_, _, _| 0.0),
            coeff: TimeVaryingCoeff::constant(1.0, 0.0),
            modulus: ModulusOfContinuity::identity(),
        };
        let cfg = SolverConfig { y_coupling: YCoupling::fixed_point_default(), ..SolverConfig::with_grid(100, 101) };
        let sol = solve(&problem(gen, |_| 1.0), SolveMode::Raw, &cfg).unwrap();
        // V = m + ΔV  ⇒  V = m / (1 − Δ)
        let expected = (1.0f64 / 0.99).powi(100);
        assert!((sol.y0() - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn fixed_point_divergence_reported() {
        let gen = Generator {
            f: Arc::new(|_, y: f64, _| 0.9 * (y * 1e3).sin()),
            g: Arc::new(|_, _, _| 0.0),
            coeff: TimeVaryingCoeff::constant(0.0, 0.0),
            modulus: ModulusOfContinuity::identity(),
        };
        let cfg = SolverConfig {
            y_coupling: YCoupling::FixedPoint { tol: 1e-14, max_iter: 3 },
            ..SolverConfig::with_grid(5, 51)
        };
        assert!(matches!(
            solve(&problem(gen, |x| x), SolveMode::Raw, &cfg),
            Err(LatticeError::FixedPointDiverged { .. })
        ));
    }

    #[test]
    fn matched_grid_contains_tree_offsets() {
        let cfg = SolverConfig::matched_to_tree(&params(), 1.0, 10).unwrap();
        let p = problem(Generator::zero(), |x| x);
        let grid = Grid::new(&p, &cfg);
        for s in [0.5, 1.0] {
            assert!(matches!(Shift::new(s * grid.dt.sqrt(), grid.dx), Shift::Exact(_)));
        }
        let odd = GParams { sigma_low: 1.0, sigma_high: std::f64::consts::PI };
        assert!(SolverConfig::matched_to_tree(&odd, 1.0, 4).is_err());
    }

    #[test]
    fn lookup_extrapolates_linearly() {
        let v = [1.0, 2.0, 4.0];
        assert_eq!(lookup(&v, -1.0), (0.0, true));
        assert_eq!(lookup(&v, 3.0), (6.0, true));
        assert_eq!(lookup(&v, 1.5), (3.0, false));
        assert_eq!(lookup_index(&v, 2), (4.0, false));
    }
}
