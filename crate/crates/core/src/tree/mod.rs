//! Exact backward induction on a non-recombining scenario tree.
//!
//! At every node an adversary picks a volatility `σ` from a finite set and
//! the path moves by `±σ√Δ` with probability ½ each, so a node at depth `k`
//! has `2·|S|` children. Child `c` of node `p` is `p·2|S| + 2s + sign`, where
//! `s` indexes the volatility and `sign` is 0 for the up move. The root value
//! is the sublinear expectation: the best the adversary can do over adapted
//! volatility policies.

mod checks;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{ApproxError, DrivingGenerator, QSearchConfig, SolveMode};
use crate::lattice::{step_value, StepError, YCoupling};
use crate::model::{GParams, ProblemSpec, TimeEval};

pub use checks::{
    check_qv_bound, compare_trees, linear_representation, norms_study, verify_k_martingale, KMartingaleReport,
    LinearSpec, NormsReport, NormsRow, QvBoundReport,
};

/// Hard cap on tree depth regardless of the leaf budget.
pub const MAX_STEPS: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("tree with {leaves} leaves exceeds the budget of {budget}")]
    BudgetExceeded { leaves: u128, budget: u64 },
    #[error("invalid tree configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at depth {level}, node {node}")]
    NonFinite { level: usize, node: usize },
    #[error("fixed point did not converge at depth {level}, node {node}")]
    FixedPointDiverged { level: usize, node: usize },
    #[error("generator is not linear: {0}")]
    NotLinear(String),
    #[error("eta must be nonnegative, got {value} at t = {t}")]
    NegativeEta { t: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub n_steps: usize,
    /// Strictly increasing volatilities inside `[σ̲, σ̄]`.
    pub sigma_set: Vec<f64>,
    #[serde(default = "default_max_leaves")]
    pub max_leaves: u64,
    #[serde(default = "QSearchConfig::solver_default")]
    pub q_search: QSearchConfig,
    #[serde(default = "default_coupling")]
    pub y_coupling: YCoupling,
    #[serde(default)]
    pub time_eval: Option<TimeEval>,
}

fn default_max_leaves() -> u64 {
    1 << 22
}

fn default_coupling() -> YCoupling {
    YCoupling::Explicit
}

impl TreeConfig {
    /// Two volatility levels `{σ̲, σ̄}`, the same pair the lattice uses by default.
    pub fn new(params: &GParams, n_steps: usize) -> Self {
        Self {
            n_steps,
            sigma_set: vec![params.sigma_low, params.sigma_high],
            max_leaves: default_max_leaves(),
            q_search: QSearchConfig::solver_default(),
            y_coupling: default_coupling(),
            time_eval: None,
        }
    }

    pub fn fan_out(&self) -> usize {
        2 * self.sigma_set.len()
    }

    pub fn leaves(&self) -> u128 {
        (self.fan_out() as u128).checked_pow(self.n_steps as u32).unwrap_or(u128::MAX)
    }

    pub fn validate(&self, params: &GParams) -> Result<(), TreeError> {
        if self.n_steps == 0 || self.n_steps > MAX_STEPS {
            return Err(TreeError::InvalidConfig(format!("n_steps must be in 1..={MAX_STEPS}, got {}", self.n_steps)));
        }
        if self.sigma_set.is_empty() {
            return Err(TreeError::InvalidConfig("sigma_set is empty".into()));
        }
        let slack = 1e-12 * params.sigma_high;
        for (i, &s) in self.sigma_set.iter().enumerate() {
            if !(s > 0.0 && s >= params.sigma_low - slack && s <= params.sigma_high + slack) {
                return Err(TreeError::InvalidConfig(format!(
                    "sigma {s} outside [{}, {}]",
                    params.sigma_low, params.sigma_high
                )));
            }
            if i > 0 && s <= self.sigma_set[i - 1] {
                return Err(TreeError::InvalidConfig("sigma_set must be strictly increasing".into()));
            }
        }
        self.q_search.validate()?;
        let leaves = self.leaves();
        if leaves > self.max_leaves as u128 {
            return Err(TreeError::BudgetExceeded { leaves, budget: self.max_leaves });
        }
        Ok(())
    }

    /// Solving the equation needs the full volatility range.
    fn validate_for_solve(&self, params: &GParams) -> Result<(), TreeError> {
        self.validate(params)?;
        let first = self.sigma_set[0];
        let last = *self.sigma_set.last().unwrap();
        if first != params.sigma_low || last != params.sigma_high {
            return Err(TreeError::InvalidConfig("sigma_set must contain both sigma_low and sigma_high".into()));
        }
        Ok(())
    }

    fn steps(&self, horizon: f64) -> Steps {
        let dt = horizon / self.n_steps as f64;
        let sqrt_dt = dt.sqrt();
        Steps {
            dt,
            sqrt_dt,
            offsets: self.sigma_set.iter().map(|s| s * sqrt_dt).collect(),
            var_dt: self.sigma_set.iter().map(|s| s * s * dt).collect(),
        }
    }
}

/// Per-step increments shared by every traversal so positions agree bitwise.
#[derive(Debug, Clone)]
pub(crate) struct Steps {
    pub dt: f64,
    pub sqrt_dt: f64,
    /// `σ√Δ` per level.
    pub offsets: Vec<f64>,
    /// `σ²Δ` per level.
    pub var_dt: Vec<f64>,
}

impl Steps {
    #[inline]
    pub(crate) fn child(&self, b: f64, qv: f64, s: usize, sign: usize) -> (f64, f64) {
        let nb = if sign == 0 { b + self.offsets[s] } else { b - self.offsets[s] };
        (nb, qv + self.var_dt[s])
    }
}

/// One depth of the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeLevel {
    pub b: Vec<f64>,
    /// Accumulated quadratic variation `⟨B⟩`.
    pub qv: Vec<f64>,
    pub y: Vec<f64>,
    /// Empty at the leaves.
    pub z: Vec<f64>,
    /// Index into `sigma_set` of the maximizing volatility; empty at the leaves.
    pub sigma_star: Vec<u8>,
    /// `ΔK(σ) = V^σ − max V` at `node·|S| + s`; empty at the leaves.
    pub dk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSolution {
    pub mode: SolveMode,
    pub sigma_set: Vec<f64>,
    pub dt: f64,
    pub levels: Vec<TreeLevel>,
}

impl TreeSolution {
    pub fn y0(&self) -> f64 {
        self.levels[0].y[0]
    }

    pub fn n_steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn fan_out(&self) -> usize {
        2 * self.sigma_set.len()
    }

    /// Index of the volatility that leads from a node to child `c`.
    #[inline]
    pub fn branch_sigma(&self, child: usize) -> usize {
        (child % self.fan_out()) / 2
    }

    /// Adversarial value of a functional of the stored path: leaves get
    /// `functional(path)` with `path[k]` the node index at depth `k`; inner
    /// nodes take the max over `σ` of the mean of the two children.
    pub fn path_expect<F>(&self, functional: F) -> f64
    where
        F: Fn(&[usize]) -> f64 + Sync,
    {
        let fan = self.fan_out();
        let n = self.n_steps();
        let top: Vec<f64> = (0..fan)
            .into_par_iter()
            .map(|c| {
                let mut path = Vec::with_capacity(n + 1);
                path.push(0);
                path.push(c);
                self.path_rec(1, &mut path, &functional)
            })
            .collect();
        combine(&top, self.sigma_set.len())
    }

    fn path_rec<F: Fn(&[usize]) -> f64>(&self, level: usize, path: &mut Vec<usize>, functional: &F) -> f64 {
        if level == self.n_steps() {
            return functional(path);
        }
        let fan = self.fan_out();
        let node = *path.last().unwrap();
        let mut vals = Vec::with_capacity(fan);
        for c in 0..fan {
            path.push(node * fan + c);
            vals.push(self.path_rec(level + 1, path, functional));
            path.pop();
        }
        combine(&vals, self.sigma_set.len())
    }
}

/// `max_s ½(v[2s] + v[2s+1])`; the lowest index wins ties.
#[inline]
pub(crate) fn combine(vals: &[f64], levels: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for s in 0..levels {
        let m = 0.5 * (vals[2 * s] + vals[2 * s + 1]);
        if m > best {
            best = m;
        }
    }
    best
}

/// A point of a path: `(B_{t_k}, ⟨B⟩_{t_k})`.
pub type PathPoint = (f64, f64);

/// Sublinear expectation of a path functional by exhaustive backward
/// induction over every adapted volatility policy.
pub fn sublinear_expect<F>(functional: F, params: &GParams, horizon: f64, config: &TreeConfig) -> Result<f64, TreeError>
where
    F: Fn(&[PathPoint]) -> f64 + Sync,
{
    config.validate(params)?;
    let steps = config.steps(horizon);
    let fan = config.fan_out();
    let levels = config.sigma_set.len();
    let n = config.n_steps;
    let top: Vec<f64> = (0..fan)
        .into_par_iter()
        .map(|c| {
            let mut path = Vec::with_capacity(n + 1);
            path.push((0.0, 0.0));
            path.push(steps.child(0.0, 0.0, c / 2, c % 2));
            expect_rec(1, n, &steps, levels, &mut path, &functional)
        })
        .collect();
    Ok(combine(&top, levels))
}

fn expect_rec<F: Fn(&[PathPoint]) -> f64>(
    level: usize,
    n: usize,
    steps: &Steps,
    levels: usize,
    path: &mut Vec<PathPoint>,
    functional: &F,
) -> f64 {
    if level == n {
        return functional(path);
    }
    let (b, qv) = *path.last().unwrap();
    let mut vals = Vec::with_capacity(2 * levels);
    for s in 0..levels {
        for sign in 0..2 {
            path.push(steps.child(b, qv, s, sign));
            vals.push(expect_rec(level + 1, n, steps, levels, path, functional));
            path.pop();
        }
    }
    combine(&vals, levels)
}

/// `(Y, Z, index of the maximizing σ, value under each σ)` at one node.
type NodeOutcome = (f64, f64, u8, Vec<f64>);

/// Solve the G-BSDE (or an approximating equation) on the tree with the
/// same one-step algebra as the lattice, without interpolation.
pub fn solve_tree(problem: &ProblemSpec, mode: SolveMode, config: &TreeConfig) -> Result<TreeSolution, TreeError> {
    config.validate_for_solve(&problem.params)?;
    let driver = DrivingGenerator::new(&problem.gen, mode, config.q_search)?;
    let steps = config.steps(problem.horizon);
    let fan = config.fan_out();
    let n_sig = config.sigma_set.len();
    let n = config.n_steps;
    let time_eval = config.time_eval.unwrap_or_else(|| problem.time_eval());

    let mut levels: Vec<TreeLevel> = Vec::with_capacity(n + 1);
    levels.push(TreeLevel {
        b: vec![0.0],
        qv: vec![0.0],
        y: Vec::new(),
        z: Vec::new(),
        sigma_star: Vec::new(),
        dk: Vec::new(),
    });
    for k in 0..n {
        let prev = &levels[k];
        let (b, qv): (Vec<f64>, Vec<f64>) = (0..prev.b.len() * fan)
            .into_par_iter()
            .map(|c| {
                let p = c / fan;
                let r = c % fan;
                steps.child(prev.b[p], prev.qv[p], r / 2, r % 2)
            })
            .unzip();
        levels.push(TreeLevel { b, qv, y: Vec::new(), z: Vec::new(), sigma_star: Vec::new(), dk: Vec::new() });
    }

    {
        let leaf = &mut levels[n];
        leaf.y = leaf.b.par_iter().map(|&x| problem.terminal.eval(x)).collect();
        if let Some(node) = leaf.y.iter().position(|v| !v.is_finite()) {
            return Err(TreeError::NonFinite { level: n, node });
        }
    }

    for k in (0..n).rev() {
        let t = time_eval.at(k, steps.dt);
        let (head, tail) = levels.split_at_mut(k + 1);
        let next = &tail[0].y;
        let cur = &mut head[k];
        let out: Result<Vec<NodeOutcome>, TreeError> = (0..cur.b.len())
            .into_par_iter()
            .map(|node| {
                let mut best = f64::NEG_INFINITY;
                let mut best_z = 0.0;
                let mut star = 0u8;
                let mut vs = Vec::with_capacity(n_sig);
                for s in 0..n_sig {
                    let up = next[node * fan + 2 * s];
                    let dn = next[node * fan + 2 * s + 1];
                    let m = 0.5 * (up + dn);
                    let sigma = config.sigma_set[s];
                    let zz = (up - dn) / (2.0 * sigma * steps.sqrt_dt);
                    let v =
                        step_value(&driver, config.y_coupling, t, m, zz, sigma * sigma, steps.dt).map_err(
                            |e| match e {
                                StepError::Approx(a) => TreeError::Approx(a),
                                StepError::Diverged(_) => TreeError::FixedPointDiverged { level: k, node },
                            },
                        )?;
                    if !v.is_finite() {
                        return Err(TreeError::NonFinite { level: k, node });
                    }
                    if v > best {
                        best = v;
                        best_z = zz;
                        star = s as u8;
                    }
                    vs.push(v);
                }
                let dk = vs.iter().map(|v| v - best).collect();
                Ok((best, best_z, star, dk))
            })
            .collect();
        let out = out?;
        cur.y = out.iter().map(|o| o.0).collect();
        cur.z = out.iter().map(|o| o.1).collect();
        cur.sigma_star = out.iter().map(|o| o.2).collect();
        cur.dk = out.into_iter().flat_map(|o| o.3).collect();
    }

    Ok(TreeSolution { mode, sigma_set: config.sigma_set.clone(), dt: steps.dt, levels })
}
