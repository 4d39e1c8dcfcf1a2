//! Explicit finite differences for
//! `∂ₜu + G(∂²ₓu + 2g(t,u,∂ₓu)) + f(t,u,∂ₓu) = 0`, `u(T,·) = Φ`.
//!
//! By the nonlinear Feynman–Kac correspondence `u(0, 0)` equals the G-BSDE
//! value `Y₀`, which makes this an oracle for the lattice that shares no
//! code path with it beyond the generator evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{ApproxError, DrivingGenerator, QSearchConfig, SolveMode};
use crate::lattice::{self, LatticeError, SolverConfig};
use crate::model::{big_g, ProblemSpec, TimeEval, Which};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("CFL ratio σ̄²Δt/Δx² = {ratio} exceeds 0.5")]
    CflViolation { ratio: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value at time index {time_index}, x = {x}")]
    NonFinite { time_index: usize, x: f64 },
    #[error("inconsistent configurations: {0}")]
    InconsistentConfigs(String),
}

/// Largest stable `σ̄²Δt/Δx²` for the explicit step.
pub const MAX_CFL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeGrid {
    pub horizon: f64,
    pub n_time: usize,
    /// Odd, so that `x = 0` is a node.
    pub n_space: usize,
    pub halfwidth: f64,
    pub cfl_ratio: f64,
    pub q_search: QSearchConfig,
    pub time_eval: Option<TimeEval>,
}

impl PdeGrid {
    pub fn new(sigma_high: f64, horizon: f64, n_time: usize, n_space: usize, halfwidth: f64) -> Result<Self, PdeError> {
        if n_time == 0 || n_space < 5 || n_space.is_multiple_of(2) {
            return Err(PdeError::InvalidGrid(format!("need n_time ≥ 1 and odd n_space ≥ 5, got {n_time}, {n_space}")));
        }
        if !(halfwidth > 0.0 && horizon > 0.0 && halfwidth.is_finite() && horizon.is_finite()) {
            return Err(PdeError::InvalidGrid("halfwidth and horizon must be positive".into()));
        }
        let dx = 2.0 * halfwidth / (n_space - 1) as f64;
        let dt = horizon / n_time as f64;
        let ratio = sigma_high * sigma_high * dt / (dx * dx);
        if ratio > MAX_CFL {
            return Err(PdeError::CflViolation { ratio });
        }
        Ok(Self {
            horizon,
            n_time,
            n_space,
            halfwidth,
            cfl_ratio: ratio,
            q_search: QSearchConfig::solver_default(),
            time_eval: None,
        })
    }

    /// The fewest time steps keeping the CFL ratio at or below `target`.
    pub fn with_cfl(
        sigma_high: f64,
        horizon: f64,
        n_space: usize,
        halfwidth: f64,
        target: f64,
    ) -> Result<Self, PdeError> {
        if !(target > 0.0 && target <= MAX_CFL) {
            return Err(PdeError::InvalidGrid(format!("CFL target {target} outside (0, {MAX_CFL}]")));
        }
        let dx = 2.0 * halfwidth / (n_space.max(2) - 1) as f64;
        let n_time = (sigma_high * sigma_high * horizon / (target * dx * dx)).ceil().max(1.0) as usize;
        Self::new(sigma_high, horizon, n_time, n_space, halfwidth)
    }

    /// Default grid on the same domain as a lattice configuration.
    pub fn matching(problem: &ProblemSpec, config: &SolverConfig) -> Result<Self, PdeError> {
        let halfwidth = config.domain_halfwidth_sigmas * problem.params.sigma_high * problem.horizon.sqrt();
        Self::with_cfl(problem.params.sigma_high, problem.horizon, 241, halfwidth, 0.4)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.halfwidth / (self.n_space - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_time as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    pub mode: SolveMode,
    pub grid: PdeGrid,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// `u[i][j] = u(t_i, x_j)`.
    pub u: Vec<Vec<f64>>,
}

impl PdeSolution {
    pub fn u0(&self) -> f64 {
        self.u[0][self.xs.len() / 2]
    }
}

/// Solve the PDE backward from `u(T,·) = Φ` with central differences and
/// linearly extrapolated boundary nodes.
pub fn solve_pde(problem: &ProblemSpec, mode: SolveMode, grid: &PdeGrid) -> Result<PdeSolution, PdeError> {
    if (grid.horizon - problem.horizon).abs() > 1e-12 * problem.horizon {
        return Err(PdeError::InconsistentConfigs(format!(
            "grid horizon {} vs problem horizon {}",
            grid.horizon, problem.horizon
        )));
    }
    let ratio = problem.params.var_high() * grid.dt() / grid.dx().powi(2);
    if ratio > MAX_CFL {
        return Err(PdeError::CflViolation { ratio });
    }
    let driver = DrivingGenerator::new(&problem.gen, mode, grid.q_search)?;
    let (n, m) = (grid.n_time, grid.n_space);
    let (dx, dt) = (grid.dx(), grid.dt());
    let half = (m - 1) / 2;
    let xs: Vec<f64> = (0..m).map(|j| (j as f64 - half as f64) * dx).collect();
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let time_eval = grid.time_eval.unwrap_or_else(|| problem.time_eval());

    let mut u = vec![Vec::new(); n + 1];
    u[n] = xs.iter().map(|&x| problem.terminal.eval(x)).collect();
    for i in (0..n).rev() {
        let t = time_eval.at(i, dt);
        let next = &u[i + 1];
        let inner: Result<Vec<f64>, PdeError> = (1..m - 1)
            .into_par_iter()
            .map(|j| {
                let v = next[j];
                let du = (next[j + 1] - next[j - 1]) / (2.0 * dx);
                let d2u = (next[j + 1] - 2.0 * v + next[j - 1]) / (dx * dx);
                let g = driver.eval(Which::G, t, v, du)?;
                let f = driver.eval(Which::F, t, v, du)?;
                let out = v + dt * (big_g(d2u + 2.0 * g, &problem.params) + f);
                if out.is_finite() {
                    Ok(out)
                } else {
                    Err(PdeError::NonFinite { time_index: i, x: xs[j] })
                }
            })
            .collect();
        let inner = inner?;
        let mut row = Vec::with_capacity(m);
        row.push(2.0 * inner[0] - inner[1]);
        row.extend_from_slice(&inner);
        row.push(2.0 * inner[m - 3] - inner[m - 4]);
        u[i] = row;
    }
    Ok(PdeSolution { mode, grid: *grid, times, xs, u })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDiscrepancy {
    pub t_lattice: f64,
    pub t_pde: f64,
    /// Max over the inner half of the domain.
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub mode: SolveMode,
    pub lattice_y0: f64,
    pub pde_u0: f64,
    pub abs_diff: f64,
    /// `|u₀ − Y₀| / max(|Y₀|, 1)`.
    pub rel_diff: f64,
    pub slices: Vec<SliceDiscrepancy>,
    /// The raw non-Lipschitz generator has no convergence theory for the
    /// scheme; its rows are indicative only.
    pub indicative: bool,
}

/// Solve on both the lattice and the PDE grid and compare.
pub fn cross_check(
    problem: &ProblemSpec,
    mode: SolveMode,
    config: &SolverConfig,
    grid: &PdeGrid,
) -> Result<DiscrepancyReport, PdeError> {
    let lattice_half = config.domain_halfwidth_sigmas * problem.params.sigma_high * problem.horizon.sqrt();
    if (lattice_half - grid.halfwidth).abs() > 1e-9 * lattice_half {
        return Err(PdeError::InconsistentConfigs(format!(
            "lattice halfwidth {lattice_half} vs pde halfwidth {}",
            grid.halfwidth
        )));
    }
    if (grid.horizon - problem.horizon).abs() > 1e-12 * problem.horizon {
        return Err(PdeError::InconsistentConfigs(format!(
            "pde horizon {} vs problem horizon {}",
            grid.horizon, problem.horizon
        )));
    }
    let lat = lattice::solve(problem, mode, config)?;
    let pde = solve_pde(problem, mode, grid)?;

    let mut slices = Vec::new();
    let inner: Vec<usize> = (0..pde.xs.len()).filter(|&j| pde.xs[j].abs() <= 0.5 * grid.halfwidth).collect();
    for q in 0..=10 {
        let target = problem.horizon * q as f64 / 10.0;
        let il = nearest(&lat.times, target);
        let ip = nearest(&pde.times, target);
        let max_abs = inner.iter().map(|&j| (lat.value_at(il, pde.xs[j]) - pde.u[ip][j]).abs()).fold(0.0, f64::max);
        slices.push(SliceDiscrepancy { t_lattice: lat.times[il], t_pde: pde.times[ip], max_abs });
    }

    let (y0, u0) = (lat.y0(), pde.u0());
    let abs_diff = (u0 - y0).abs();
    let lipschitz = problem.gen.modulus.name() == "identity";
    Ok(DiscrepancyReport {
        mode,
        lattice_y0: y0,
        pde_u0: u0,
        abs_diff,
        rel_diff: abs_diff / y0.abs().max(1.0),
        slices,
        indicative: mode == SolveMode::Raw && !lipschitz,
    })
}

fn nearest(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, &s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = i;
        }
    }
    best
}
