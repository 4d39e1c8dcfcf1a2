use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{combine, solve_tree, TreeConfig, TreeError, TreeSolution};
use crate::approx::{check_ladder, SolveMode};
use crate::lattice::YCoupling;
use crate::model::{GParams, Generator, ModulusOfContinuity, ProblemSpec, TimeFn, TimeVaryingCoeff};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMartingaleReport {
    /// `max |Ê_t[K_T] − K_t|` over every node.
    pub max_martingale_violation: f64,
    /// Largest positive increment of `K` along any branch.
    pub max_positive_jump: f64,
    /// Smallest `K_T` over every path; zero when no compensation was needed.
    pub min_terminal_k: f64,
    pub nodes_checked: u64,
}

impl KMartingaleReport {
    pub fn max_violation(&self) -> f64 {
        self.max_martingale_violation.max(self.max_positive_jump)
    }
}

#[derive(Clone, Copy)]
struct KAcc {
    value: f64,
    viol: f64,
    jump: f64,
    min_k: f64,
    nodes: u64,
}

impl KAcc {
    fn merge(&mut self, o: &KAcc) {
        self.viol = self.viol.max(o.viol);
        self.jump = self.jump.max(o.jump);
        self.min_k = self.min_k.min(o.min_k);
        self.nodes += o.nodes;
    }
}

fn k_rec(sol: &TreeSolution, level: usize, node: usize, k: f64) -> KAcc {
    if level == sol.n_steps() {
        return KAcc { value: k, viol: 0.0, jump: 0.0, min_k: k, nodes: 1 };
    }
    let fan = sol.fan_out();
    let n_sig = sol.sigma_set.len();
    let lvl = &sol.levels[level];
    let mut acc = KAcc { value: 0.0, viol: 0.0, jump: f64::NEG_INFINITY, min_k: f64::INFINITY, nodes: 1 };
    let mut vals = Vec::with_capacity(fan);
    for c in 0..fan {
        let dk = lvl.dk[node * n_sig + c / 2];
        acc.jump = acc.jump.max(dk);
        let child = k_rec(sol, level + 1, node * fan + c, k + dk);
        vals.push(child.value);
        acc.merge(&child);
    }
    acc.value = combine(&vals, n_sig);
    acc.viol = acc.viol.max((acc.value - k).abs());
    acc
}

/// Rebuilds `K` along every path from the stored increments and checks that
/// it never increases and that the sub-tree adversarial value of `K_T`
/// equals `K_t` at every node.
pub fn verify_k_martingale(sol: &TreeSolution) -> KMartingaleReport {
    let fan = sol.fan_out();
    let n_sig = sol.sigma_set.len();
    let root = &sol.levels[0];
    let children: Vec<KAcc> = (0..fan).into_par_iter().map(|c| k_rec(sol, 1, c, root.dk[c / 2])).collect();
    let mut acc = KAcc { value: 0.0, viol: 0.0, jump: f64::NEG_INFINITY, min_k: f64::INFINITY, nodes: 1 };
    for (c, ch) in children.iter().enumerate() {
        acc.jump = acc.jump.max(root.dk[c / 2]);
        acc.merge(ch);
    }
    let vals: Vec<f64> = children.iter().map(|c| c.value).collect();
    let root_value = combine(&vals, n_sig);
    acc.viol = acc.viol.max(root_value.abs());
    KMartingaleReport {
        max_martingale_violation: acc.viol,
        max_positive_jump: acc.jump.max(0.0),
        min_terminal_k: acc.min_k,
        nodes_checked: acc.nodes,
    }
}

/// `max (Y¹ − Y²)` over every node of two trees of the same shape; a
/// nonpositive result means `Y¹ ≤ Y²` everywhere.
pub fn compare_trees(first: &TreeSolution, second: &TreeSolution) -> Result<f64, TreeError> {
    if first.sigma_set != second.sigma_set || first.levels.len() != second.levels.len() {
        return Err(TreeError::InvalidConfig("trees have different shapes".into()));
    }
    Ok(first
        .levels
        .iter()
        .zip(&second.levels)
        .flat_map(|(a, b)| a.y.iter().zip(&b.y).map(|(x, y)| x - y))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Coefficients of a linear generator `f = a·y + m`, `g = c·y + n`.
#[derive(Clone)]
pub struct LinearSpec {
    pub a: TimeFn,
    pub c: TimeFn,
    pub m: TimeFn,
    pub n: TimeFn,
}

impl fmt::Debug for LinearSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSpec").finish_non_exhaustive()
    }
}

impl LinearSpec {
    pub fn constant(a: f64, c: f64, m: f64, n: f64) -> Self {
        Self { a: Arc::new(move |_| a), c: Arc::new(move |_| c), m: Arc::new(move |_| m), n: Arc::new(move |_| n) }
    }

    /// The generator pair these coefficients describe.
    pub fn generator(&self) -> Generator {
        let (a, m) = (self.a.clone(), self.m.clone());
        let (c, n) = (self.c.clone(), self.n.clone());
        let (ua, uc) = (self.a.clone(), self.c.clone());
        Generator {
            f: Arc::new(move |t, y, _| a(t) * y + m(t)),
            g: Arc::new(move |t, y, _| c(t) * y + n(t)),
            coeff: TimeVaryingCoeff {
                u: Arc::new(move |t| ua(t).abs() + uc(t).abs()),
                v: Arc::new(|_| 0.0),
                singular_at_zero: false,
            },
            modulus: ModulusOfContinuity::identity(),
        }
    }

    /// Sampled check that `gen` is this linear generator.
    fn check(&self, gen: &Generator, horizon: f64) -> Result<(), TreeError> {
        for i in 0..=8 {
            let t = horizon * (i as f64 + 0.5) / 9.0;
            for &y in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
                for &z in &[-2.0, 0.0, 0.3, 5.0] {
                    let f = (gen.f)(t, y, z);
                    let g = (gen.g)(t, y, z);
                    let fe = (self.a)(t) * y + (self.m)(t);
                    let ge = (self.c)(t) * y + (self.n)(t);
                    let tol = 1e-12 * (1.0 + fe.abs() + ge.abs());
                    if (f - fe).abs() > tol || (g - ge).abs() > tol {
                        return Err(TreeError::NotLinear(format!("t={t}, y={y}, z={z}: f={f} vs {fe}, g={g} vs {ge}")));
                    }
                }
            }
        }
        Ok(())
    }
}

struct GammaCtx<'a> {
    problem: &'a ProblemSpec,
    lin: &'a LinearSpec,
    steps: super::Steps,
    sigma_set: &'a [f64],
    times: Vec<f64>,
    n: usize,
}

fn gamma_rec(ctx: &GammaCtx, level: usize, b: f64, gamma: f64, acc: f64) -> f64 {
    if level == ctx.n {
        return gamma * ctx.problem.terminal.eval(b) + acc;
    }
    let t = ctx.times[level];
    let dt = ctx.steps.dt;
    let (a, c, m, n) = ((ctx.lin.a)(t), (ctx.lin.c)(t), (ctx.lin.m)(t), (ctx.lin.n)(t));
    let mut vals = Vec::with_capacity(2 * ctx.sigma_set.len());
    for (s, &sigma) in ctx.sigma_set.iter().enumerate() {
        let var = sigma * sigma;
        let next_gamma = gamma * (1.0 + a * dt + c * var * dt);
        let next_acc = acc + gamma * dt * (m + var * n);
        for sign in 0..2 {
            let (nb, _) = ctx.steps.child(b, 0.0, s, sign);
            vals.push(gamma_rec(ctx, level + 1, nb, next_gamma, next_acc));
        }
    }
    combine(&vals, ctx.sigma_set.len())
}

/// Root value of a linear equation two ways: by backward induction
/// (`y_dp`) and as the adversarial value of the `Γ`-weighted functional
/// `Γ_N·Φ(B_T) + Σ Γ_k·Δ·(m + σ_k²·n)` with
/// `Γ_{k+1} = Γ_k·(1 + aΔ + cσ_k²Δ)`, `Γ₀ = 1` (`y_gamma`).
pub fn linear_representation(
    problem: &ProblemSpec,
    lin: &LinearSpec,
    config: &TreeConfig,
) -> Result<(f64, f64), TreeError> {
    if config.y_coupling != YCoupling::Explicit {
        return Err(TreeError::InvalidConfig("the Γ recursion matches the explicit step only".into()));
    }
    lin.check(&problem.gen, problem.horizon)?;
    let y_dp = solve_tree(problem, SolveMode::Raw, config)?.y0();

    let steps = config.steps(problem.horizon);
    let time_eval = config.time_eval.unwrap_or_else(|| problem.time_eval());
    let times: Vec<f64> = (0..config.n_steps).map(|k| time_eval.at(k, steps.dt)).collect();
    for &t in &times {
        for &sigma in &config.sigma_set {
            let factor = 1.0 + (lin.a)(t) * steps.dt + (lin.c)(t) * sigma * sigma * steps.dt;
            if !(factor > 0.0) {
                return Err(TreeError::InvalidConfig(format!("Γ factor {factor} ≤ 0 at t = {t}, σ = {sigma}")));
            }
        }
    }
    let ctx = GammaCtx { problem, lin, steps, sigma_set: &config.sigma_set, times, n: config.n_steps };
    let y_gamma = gamma_rec(&ctx, 0, 0.0, 1.0, 0.0);
    Ok((y_dp, y_gamma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvBoundReport {
    pub holds: bool,
    /// `min (σ̄²∫η ds − ∫η d⟨B⟩)` over every path.
    pub worst_margin: f64,
    /// Largest margin over every path.
    pub best_margin: f64,
    pub paths: u128,
}

/// Checks `∫₀ᵀ η d⟨B⟩ ≤ σ̄² ∫₀ᵀ η ds` on every path of the tree, with `η`
/// a nonnegative step function taking the value `eta(t_k)` on `[t_k, t_{k+1})`.
pub fn check_qv_bound(
    eta: impl Fn(f64) -> f64,
    params: &GParams,
    horizon: f64,
    config: &TreeConfig,
) -> Result<QvBoundReport, TreeError> {
    config.validate(params)?;
    let steps = config.steps(horizon);
    let n = config.n_steps;
    let etas: Vec<f64> = (0..n).map(|k| eta(k as f64 * steps.dt)).collect();
    for (k, &e) in etas.iter().enumerate() {
        if !(e >= 0.0) {
            return Err(TreeError::NegativeEta { t: k as f64 * steps.dt, value: e });
        }
    }
    let cap = params.sigma_high * params.sigma_high * steps.dt;
    let rhs: f64 = etas.iter().map(|e| e * cap).sum();
    // ⟨B⟩ does not depend on the sign of the move, so the volatility
    // sequences enumerate every path up to the sign choices.
    let n_sig = config.sigma_set.len();
    let mut worst = f64::INFINITY;
    let mut best = f64::NEG_INFINITY;
    let mut choice = vec![0usize; n];
    loop {
        let lhs: f64 = etas.iter().zip(&choice).map(|(e, &s)| e * steps.var_dt[s]).sum();
        worst = worst.min(rhs - lhs);
        best = best.max(rhs - lhs);
        let mut k = 0;
        while k < n {
            choice[k] += 1;
            if choice[k] < n_sig {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    Ok(QvBoundReport { holds: worst >= 0.0, worst_margin: worst, best_margin: best, paths: config.leaves() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormsRow {
    pub mode: SolveMode,
    /// `Ê[max_k |Y_k|²]`.
    pub sup_y2: f64,
    /// `Ê[Σ_k |Z_k|² σ_k² Δ]`.
    pub int_z2: f64,
    /// `Ê[|K_T|²]`.
    pub k_t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormsReport {
    pub ladder: Vec<u32>,
    pub growth_factor: f64,
    pub rows: Vec<NormsRow>,
    /// Per norm: `max over the ladder / value at the first rung`.
    pub growth: [f64; 3],
    pub bounded: bool,
}

fn norms(sol: &TreeSolution) -> NormsRow {
    let n_sig = sol.sigma_set.len();
    let n = sol.n_steps();
    let sup_y2 = sol.path_expect(|path| (0..=n).map(|k| sol.levels[k].y[path[k]].powi(2)).fold(0.0, f64::max));
    let int_z2 = sol.path_expect(|path| {
        (0..n)
            .map(|k| {
                let s = sol.branch_sigma(path[k + 1]);
                sol.levels[k].z[path[k]].powi(2) * sol.sigma_set[s].powi(2) * sol.dt
            })
            .sum()
    });
    let k_t2 = sol.path_expect(|path| {
        let k: f64 = (0..n).map(|k| sol.levels[k].dk[path[k] * n_sig + sol.branch_sigma(path[k + 1])]).sum();
        k * k
    });
    NormsRow { mode: sol.mode, sup_y2, int_z2, k_t2 }
}

/// Tree-computed `Ê[sup|Yⁿ|²]`, `Ê[∫|Zⁿ|² d⟨B⟩]` and `Ê[|K_Tⁿ|²]` for the
/// lower and upper approximating equations along a ladder. The norms are
/// bounded when none exceeds `growth_factor` times its first-rung value.
pub fn norms_study(
    problem: &ProblemSpec,
    ladder: &[u32],
    config: &TreeConfig,
    growth_factor: f64,
) -> Result<NormsReport, TreeError> {
    check_ladder(ladder, problem.gen.modulus.normalized_growth())?;
    let mut rows = Vec::new();
    for &n in ladder {
        for mode in [SolveMode::Lower(n), SolveMode::Upper(n)] {
            rows.push(norms(&solve_tree(problem, mode, config)?));
        }
    }
    let first =
        [rows[0].sup_y2.max(rows[1].sup_y2), rows[0].int_z2.max(rows[1].int_z2), rows[0].k_t2.max(rows[1].k_t2)];
    let mut growth = [0.0f64; 3];
    for r in &rows {
        for (i, v) in [r.sup_y2, r.int_z2, r.k_t2].into_iter().enumerate() {
            // a vanishing first-rung norm only counts as bounded if it stays at rounding level
            let ratio = if first[i] > 1e-14 {
                v / first[i]
            } else if v <= 1e-14 {
                1.0
            } else {
                f64::INFINITY
            };
            growth[i] = growth[i].max(ratio);
        }
    }
    let bounded = growth.iter().all(|&g| g <= growth_factor);
    Ok(NormsReport { ladder: ladder.to_vec(), growth_factor, rows, growth, bounded })
}
