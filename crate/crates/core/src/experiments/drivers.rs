use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::catalog::{self, CatalogEntry};
use super::config::ExperimentConfig;
use super::report::{CheckRecord, Environment, RunReport};
use super::ExperimentError;
use crate::approx::{verify_approximant_properties, QSearchConfig, SampleBox, SolveMode};
use crate::lattice::{self, g_expect, LadderSolutions, LatticeSolution, SolverConfig};
use crate::model::{Generator, ModulusOfContinuity, ProblemSpec, Terminal, TimeVaryingCoeff};
use crate::pde::{cross_check, PdeGrid};
use crate::tree::{
    check_qv_bound, compare_trees, linear_representation, norms_study, solve_tree, sublinear_expect,
    verify_k_martingale, TreeConfig,
};

/// Relative rounding allowance for orderings that are exact in real arithmetic.
const ROUNDING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Expect,
    Solve,
    Props,
    Sandwich,
    Gap,
    Compare,
    LinearRep,
    CrossCheck,
    QvBound,
    Norms,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Expect => "expect",
            Command::Solve => "solve",
            Command::Props => "props",
            Command::Sandwich => "sandwich",
            Command::Gap => "gap",
            Command::Compare => "compare",
            Command::LinearRep => "linear-rep",
            Command::CrossCheck => "cross-check",
            Command::QvBound => "qv-bound",
            Command::Norms => "norms",
        }
    }

    pub fn default_ladder(self) -> &'static [u32] {
        match self {
            Command::Gap => &[4, 8, 16, 32],
            Command::CrossCheck => &[8],
            _ => &[2, 4, 8, 16],
        }
    }

    pub fn default_problem(self) -> &'static str {
        match self {
            Command::Compare => "comparison_pair",
            Command::LinearRep => "linear_rep",
            _ => "sqrt_z",
        }
    }

    pub fn default_tree_steps(self) -> usize {
        match self {
            Command::Expect => 6,
            Command::CrossCheck => 10,
            _ => 8,
        }
    }

    /// Commands whose `--steps` override sets the tree depth rather than the
    /// lattice time steps.
    pub fn steps_are_tree_depth(self) -> bool {
        matches!(self, Command::LinearRep | Command::QvBound | Command::Norms)
    }
}

struct Output {
    checks: Vec<CheckRecord>,
    details: serde_json::Value,
}

fn details<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Run one subcommand and collect its checks.
pub fn run(command: Command, config: &ExperimentConfig, threads: usize) -> Result<RunReport, ExperimentError> {
    config.validate()?;
    let entry = config.problem_or(command.default_problem()).resolve()?;
    let ladder = config.ladder_or(command.default_ladder());
    let steps = command.default_tree_steps();
    let out = match command {
        Command::Expect => expect(&entry, config, steps)?,
        Command::Solve => solve(&entry, config, steps)?,
        Command::Props => props(&entry, config, &ladder)?,
        Command::Sandwich => sandwich(&entry, config, &ladder)?,
        Command::Gap => gap(&entry, config, &ladder)?,
        Command::Compare => compare(&entry, config, steps)?,
        Command::LinearRep => linear_rep(&entry, config, steps)?,
        Command::CrossCheck => cross(&entry, config, &ladder, steps)?,
        Command::QvBound => qv_bound(&entry, config, steps)?,
        Command::Norms => norms(&entry, config, &ladder, steps)?,
    };
    let p = &entry.problem;
    Ok(RunReport {
        command: command.as_str().into(),
        problem: entry.name.into(),
        environment: Environment {
            seed: config.seed,
            threads,
            ladder,
            n_time: config.solver.n_time,
            n_space: config.solver.n_space,
            sigma_levels: p.params.sigma_levels(config.solver.sigma_levels),
            tree_steps: config.tree.n_steps.unwrap_or(steps),
            pde_space: config.pde.n_space,
            declared_growth: p.gen.modulus.growth(),
            normalized_growth: p.gen.modulus.normalized_growth(),
        },
        checks: out.checks,
        details: out.details,
    })
}

fn expect(entry: &CatalogEntry, config: &ExperimentConfig, steps: usize) -> Result<Output, ExperimentError> {
    let p = &entry.problem;
    let (params, horizon) = (p.params, p.horizon);
    let tree = config.tree.config(&params, steps);
    let tol = &config.tolerances;
    let hi = params.var_high() * horizon;
    let lo = -params.var_low() * horizon;

    let tree_sq = sublinear_expect(|path| path.last().unwrap().0.powi(2), &params, horizon, &tree)?;
    let tree_nsq = sublinear_expect(|path| -path.last().unwrap().0.powi(2), &params, horizon, &tree)?;
    let (lat_sq, _) = g_expect(Arc::new(|x| x * x), &params, horizon, &config.solver)?;
    let (lat_nsq, _) = g_expect(Arc::new(|x| -x * x), &params, horizon, &config.solver)?;

    let anchor = "g_expectation.variance_bounds";
    let checks = vec![
        CheckRecord::at_most("expect.tree.square", anchor, None, (tree_sq - hi).abs(), tol.expect_tree_abs),
        CheckRecord::at_most("expect.tree.neg_square", anchor, None, (tree_nsq - lo).abs(), tol.expect_tree_abs),
        CheckRecord::at_most("expect.lattice.square", anchor, None, ((lat_sq - hi) / hi).abs(), tol.expect_lattice_rel),
        CheckRecord::at_most(
            "expect.lattice.neg_square",
            anchor,
            None,
            ((lat_nsq - lo) / lo).abs(),
            tol.expect_lattice_rel,
        ),
    ];
    let d = serde_json::json!({
        "closed_form_square": hi, "closed_form_neg_square": lo,
        "tree_square": tree_sq, "tree_neg_square": tree_nsq,
        "lattice_square": lat_sq, "lattice_neg_square": lat_nsq,
    });
    Ok(Output { checks, details: d })
}

fn solve(entry: &CatalogEntry, config: &ExperimentConfig, steps: usize) -> Result<Output, ExperimentError> {
    let p = &entry.problem;
    let sol = lattice::solve(p, SolveMode::Raw, &config.solver)?;
    let k_max = sol.k_residual.iter().flatten().fold(f64::NEG_INFINITY, |m, &k| m.max(k));
    let tree = solve_tree(p, SolveMode::Raw, &config.tree.config(&p.params, steps))?;
    let k = verify_k_martingale(&tree);
    let checks = vec![
        CheckRecord::holds("solve.y0_finite", "solution.existence", None, sol.y0().is_finite()),
        CheckRecord::at_most("solve.k_residual", "k.decreasing", None, k_max, 0.0),
        CheckRecord::at_most(
            "solve.boundary_mass",
            "solver.domain",
            None,
            sol.boundary_mass,
            config.solver.max_boundary_mass,
        ),
        CheckRecord::at_most(
            "solve.tree.k_martingale",
            "k.decreasing_martingale",
            None,
            k.max_violation(),
            config.tolerances.k_martingale,
        ),
    ];
    let d = serde_json::json!({
        "lattice_y0": sol.y0(),
        "tree_y0": tree.y0(),
        "boundary_mass": sol.boundary_mass,
        "k_residual_max": k_max,
        "k_martingale": details(&k),
        "y0_slice": summarize(&sol),
    });
    Ok(Output { checks, details: d })
}

/// `(x, Y(0,x))` at a handful of points, for the report.
fn summarize(sol: &LatticeSolution) -> Vec<(f64, f64)> {
    [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|&x| (x, sol.value_at(0, x))).collect()
}

fn props(entry: &CatalogEntry, config: &ExperimentConfig, ladder: &[u32]) -> Result<Output, ExperimentError> {
    let p = &entry.problem;
    let report = verify_approximant_properties(
        &p.gen,
        p.horizon,
        ladder,
        QSearchConfig::default(),
        config.sample_budget,
        config.seed,
        SampleBox::default(),
    )?;
    let anchors = [
        "approximant.linear_growth",
        "approximant.monotone_in_n",
        "approximant.lipschitz",
        "approximant.uniform_continuity",
        "approximant.gap_bound",
        "approximant.convergence",
    ];
    let checks = report
        .checks
        .iter()
        .zip(anchors)
        .map(|(c, a)| CheckRecord::at_least(format!("props.{}", c.id), a, None, c.worst_margin, 0.0))
        .collect();
    Ok(Output { checks, details: details(&report) })
}

fn sandwich(entry: &CatalogEntry, config: &ExperimentConfig, ladder: &[u32]) -> Result<Output, ExperimentError> {
    let report = LadderSolutions::solve(&entry.problem, ladder, &config.solver)?.sandwich();
    let mut checks: Vec<CheckRecord> = report
        .checks
        .iter()
        .map(|c| {
            let id = format!("sandwich.{}", c.relation);
            let n = if c.n == c.n2 { c.n } else { c.n2 };
            CheckRecord::at_most(id, "sandwich.ordering", Some(n), c.violation, c.allowed)
        })
        .collect();
    for (k, &n) in report.ladder.iter().enumerate() {
        let sup = report.sup_norms_lower[k].max(report.sup_norms_upper[k]);
        checks.push(CheckRecord::at_most(
            "sandwich.sup_norm",
            "sandwich.uniform_bound",
            Some(n),
            sup,
            report.uniform_bound * (1.0 + ROUNDING),
        ));
    }
    Ok(Output { checks, details: details(&report) })
}

fn gap(entry: &CatalogEntry, config: &ExperimentConfig, ladder: &[u32]) -> Result<Output, ExperimentError> {
    let factor = config.tolerances.gap_growth_factor;
    let report = LadderSolutions::solve(&entry.problem, ladder, &config.solver)?.gap(factor);
    let first = report.rows[0].ratio;
    let mut checks: Vec<CheckRecord> = report
        .rows
        .iter()
        .map(|r| CheckRecord::at_most("gap.ratio", "gap.bound", Some(r.n), r.ratio, factor * first))
        .collect();
    let last = report.rows.last().unwrap();
    checks.extend([
        CheckRecord::at_most("gap.ratio_growth", "gap.bound", None, report.max_relative_growth, factor),
        CheckRecord::at_most("gap.ratio_spread", "gap.bound", None, report.spread_after_first, factor),
        CheckRecord {
            pass: report.decreasing_overall,
            ..CheckRecord::at_most("gap.decreasing", "gap.bound", Some(last.n), last.gap, report.rows[0].gap)
        },
        CheckRecord::holds(
            "convergence.y0_gap_nonincreasing",
            "convergence.common_limit",
            None,
            report.y0_gap_nonincreasing,
        ),
        CheckRecord::holds(
            "convergence.mismatch_nonincreasing",
            "convergence.common_limit",
            None,
            report.mismatch_nonincreasing,
        ),
        CheckRecord::at_least("convergence.cauchy", "convergence.common_limit", None, report.cauchy_margin, 0.0),
    ]);
    Ok(Output { checks, details: details(&report) })
}

/// Randomized data pair with `Φ¹ ≤ Φ²`, `f¹ ≤ f²` and `g¹ ≤ g²` pointwise.
/// Both generators share `u = v = 1` and the square-root modulus.
pub fn random_ordered_pair(rng: &mut ChaCha8Rng) -> (ProblemSpec, ProblemSpec) {
    let a: f64 = rng.gen_range(-0.25..0.25);
    let b1: f64 = rng.gen_range(0.0..0.3);
    let b2 = b1 + rng.gen_range(0.0..0.2);
    let c1: f64 = rng.gen_range(0.0..0.2);
    let c2 = c1 + rng.gen_range(0.0..0.1);
    let e1: f64 = rng.gen_range(-0.2..0.2);
    let e2 = e1 + rng.gen_range(0.0..0.1);
    let h1: f64 = rng.gen_range(-0.2..0.2);
    let h2 = h1 + rng.gen_range(0.0..0.1);
    let alpha: f64 = rng.gen_range(-0.5..1.0);
    let beta: f64 = rng.gen_range(-1.0..1.0);
    let gamma: f64 = rng.gen_range(-0.5..0.5);
    let dip: f64 = rng.gen_range(0.0..0.5);
    let kappa: f64 = rng.gen_range(0.5..3.0);
    let lift: f64 = rng.gen_range(0.0..0.2);
    let growth = 1.0 + alpha.abs() + beta.abs() + gamma.abs() + dip + lift;

    let gen = |b: f64, c: f64, e: f64, h: f64| Generator {
        f: Arc::new(move |_, y, z: f64| a * y + b * z.abs().sqrt() + e),
        g: Arc::new(move |_, _, z: f64| c * z.abs().sqrt() + h),
        coeff: TimeVaryingCoeff::constant(1.0, 1.0),
        modulus: ModulusOfContinuity::sqrt(),
    };
    let base = move |x: f64| alpha * x * x + beta * x + gamma * x.sin();
    let lo = ProblemSpec {
        name: "random_pair.lower".into(),
        params: catalog::lookup("comparison_pair")
            .map(|e| e.problem.params)
            .unwrap_or(crate::model::GParams { sigma_low: 0.5, sigma_high: 1.0 }),
        gen: gen(b1, c1, e1, h1),
        terminal: Terminal::new(2, growth, Arc::new(move |x| base(x) - dip * (x * x).min(kappa))),
        horizon: 1.0,
    };
    let hi = ProblemSpec {
        name: "random_pair.upper".into(),
        gen: gen(b2, c2, e2, h2),
        terminal: Terminal::new(2, growth, Arc::new(move |x| base(x) + lift)),
        ..lo.clone()
    };
    (lo, hi)
}

/// `max (Y¹ − Y²)` over every lattice node.
pub fn lattice_order_violation(a: &LatticeSolution, b: &LatticeSolution) -> (f64, f64) {
    let mut v = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    for (x, y) in a.y.iter().flatten().zip(b.y.iter().flatten()) {
        v = v.max(x - y);
        scale = scale.max(x.abs()).max(y.abs());
    }
    (v, ROUNDING * (1.0 + scale))
}

/// Lattice grid for the randomized comparison pairs.
pub fn pair_solver() -> SolverConfig {
    SolverConfig::with_grid(50, 401)
}

fn compare(entry: &CatalogEntry, config: &ExperimentConfig, steps: usize) -> Result<Output, ExperimentError> {
    let hi = entry
        .partner
        .as_ref()
        .ok_or_else(|| ExperimentError::Config(format!("{} has no comparison partner", entry.name)))?;
    let lo = &entry.problem;
    let tree_cfg = config.tree.config(&lo.params, steps);
    let tol = config.tolerances.comparison_tree;
    let anchor = "comparison.ordered_data";

    let tree_v =
        compare_trees(&solve_tree(lo, SolveMode::Raw, &tree_cfg)?, &solve_tree(hi, SolveMode::Raw, &tree_cfg)?)?;
    let (lat_v, lat_slack) = lattice_order_violation(
        &lattice::solve(lo, SolveMode::Raw, &config.solver)?,
        &lattice::solve(hi, SolveMode::Raw, &config.solver)?,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut rt, mut rl, mut rl_margin) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let pair_cfg = TreeConfig { n_steps: tree_cfg.n_steps.min(6), ..tree_cfg.clone() };
    for _ in 0..config.comparison_pairs {
        let (a, b) = random_ordered_pair(&mut rng);
        rt = rt.max(compare_trees(
            &solve_tree(&a, SolveMode::Raw, &pair_cfg)?,
            &solve_tree(&b, SolveMode::Raw, &pair_cfg)?,
        )?);
        let (v, s) = lattice_order_violation(
            &lattice::solve(&a, SolveMode::Raw, &pair_solver())?,
            &lattice::solve(&b, SolveMode::Raw, &pair_solver())?,
        );
        rl = rl.max(v);
        rl_margin = rl_margin.min(s - v);
    }
    let mut checks = vec![
        CheckRecord::at_most("compare.tree", anchor, None, tree_v, tol),
        CheckRecord::at_most("compare.lattice", anchor, None, lat_v, lat_slack),
    ];
    if config.comparison_pairs > 0 {
        checks.push(CheckRecord::at_most("compare.random.tree", anchor, None, rt, tol));
        checks.push(CheckRecord::at_least("compare.random.lattice_margin", anchor, None, rl_margin, 0.0));
    }
    let d = serde_json::json!({
        "tree_violation": tree_v, "lattice_violation": lat_v, "lattice_slack": lat_slack,
        "pairs": config.comparison_pairs, "random_tree_violation": rt, "random_lattice_violation": rl,
    });
    Ok(Output { checks, details: d })
}

fn linear_rep(entry: &CatalogEntry, config: &ExperimentConfig, steps: usize) -> Result<Output, ExperimentError> {
    let lin = entry
        .linear
        .as_ref()
        .ok_or_else(|| ExperimentError::Config(format!("{} is not a linear catalog entry", entry.name)))?;
    let tol = config.tolerances.linear_rep;
    let anchor = "linear.gamma_representation";
    let p = &entry.problem;
    let cfg = config.tree.config(&p.params, steps);
    let n = Some(cfg.n_steps as u32);
    let (dp, gamma) = linear_representation(p, lin, &cfg)?;
    let mut checks = vec![CheckRecord::at_most("linear.catalog", anchor, n, (dp - gamma).abs(), tol)];
    let mut rows = vec![serde_json::json!({"case": entry.name, "y_dp": dp, "y_gamma": gamma})];

    let dt = p.horizon / cfg.n_steps as f64;
    let steps = cfg.n_steps as i32;
    let var_hi = p.params.var_high();
    for (label, lin, problem) in catalog::linear_variants() {
        let problem = ProblemSpec { params: p.params, horizon: p.horizon, ..problem };
        let (dp, gamma) = linear_representation(&problem, &lin, &cfg)?;
        let expected = match label {
            "a=1" => (1.0 + dt).powi(steps) * var_hi * p.horizon,
            "c=1" => (1.0 + var_hi * dt).powi(steps),
            _ => var_hi * p.horizon,
        };
        checks.push(CheckRecord::at_most(format!("linear.{label}"), anchor, n, (dp - gamma).abs(), tol));
        checks.push(CheckRecord::at_most(
            format!("linear.{label}.closed_form"),
            anchor,
            n,
            (dp - expected).abs(),
            1e-12 * (1.0 + expected.abs()),
        ));
        rows.push(serde_json::json!({"case": label, "y_dp": dp, "y_gamma": gamma, "closed_form": expected}));
    }
    Ok(Output { checks, details: serde_json::Value::Array(rows) })
}

fn cross(
    entry: &CatalogEntry,
    config: &ExperimentConfig,
    ladder: &[u32],
    steps: usize,
) -> Result<Output, ExperimentError> {
    let p = &entry.problem;
    let tol = &config.tolerances;
    let grid = {
        let half = config.solver.domain_halfwidth_sigmas * p.params.sigma_high * p.horizon.sqrt();
        PdeGrid::with_cfl(p.params.sigma_high, p.horizon, config.pde.n_space, half, config.pde.cfl)?
    };
    let tree_cfg = config.tree.config(&p.params, steps);
    let matched = SolverConfig::matched_to_tree(&p.params, p.horizon, tree_cfg.n_steps)?;
    let interp = SolverConfig { n_time: tree_cfg.n_steps, n_space: tol.interp_space, ..config.solver };

    let modes: Vec<SolveMode> =
        std::iter::once(SolveMode::Raw).chain(ladder.iter().map(|&n| SolveMode::Upper(n))).collect();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for mode in modes {
        let n = match mode {
            SolveMode::Raw => None,
            SolveMode::Lower(n) | SolveMode::Upper(n) => Some(n),
        };
        let r = cross_check(p, mode, &config.solver, &grid)?;
        let suffix = if r.indicative { ".indicative" } else { "" };
        checks.push(CheckRecord::at_most(
            format!("cross_check.pde.{mode}{suffix}"),
            "oracle.pde_lattice",
            n,
            r.rel_diff,
            tol.pde_rel,
        ));
        let tree = solve_tree(p, mode, &tree_cfg)?.y0();
        let lm = lattice::solve(p, mode, &matched)?.y0();
        let li = lattice::solve(p, mode, &interp)?.y0();
        checks.push(CheckRecord::at_most(
            format!("cross_check.tree_matched.{mode}"),
            "oracle.tree_lattice",
            n,
            (tree - lm).abs(),
            tol.tree_lattice_matched,
        ));
        checks.push(CheckRecord::at_most(
            format!("cross_check.tree_interp.{mode}"),
            "oracle.tree_lattice",
            n,
            (tree - li).abs(),
            tol.tree_lattice_interp,
        ));
        rows.push(serde_json::json!({
            "mode": mode.to_string(), "pde": details(&r), "tree_y0": tree,
            "lattice_matched_y0": lm, "lattice_interp_y0": li,
        }));
    }
    Ok(Output { checks, details: serde_json::Value::Array(rows) })
}

type EtaCase = (&'static str, fn(f64) -> f64);

fn qv_bound(entry: &CatalogEntry, config: &ExperimentConfig, steps: usize) -> Result<Output, ExperimentError> {
    let p = &entry.problem;
    let cfg = config.tree.config(&p.params, steps);
    let anchor = "qv.bound";
    let cases: [EtaCase; 3] = [("one", |_| 1.0), ("t", |t| t), ("decay", |t| (-t).exp())];
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (label, eta) in cases {
        let r = check_qv_bound(eta, &p.params, p.horizon, &cfg)?;
        checks.push(CheckRecord::at_least(format!("qv.{label}"), anchor, None, r.worst_margin, 0.0));
        rows.push(serde_json::json!({"eta": label, "report": details(&r)}));
    }
    let sat = TreeConfig { sigma_set: vec![p.params.sigma_high], ..cfg };
    let r = check_qv_bound(|_| 1.0, &p.params, p.horizon, &sat)?;
    checks.push(CheckRecord::at_most(
        "qv.saturated_equality",
        anchor,
        None,
        r.worst_margin.abs().max(r.best_margin.abs()),
        0.0,
    ));
    rows.push(serde_json::json!({"eta": "one", "sigma_set": [p.params.sigma_high], "report": details(&r)}));
    Ok(Output { checks, details: serde_json::Value::Array(rows) })
}

fn norms(
    entry: &CatalogEntry,
    config: &ExperimentConfig,
    ladder: &[u32],
    steps: usize,
) -> Result<Output, ExperimentError> {
    let p = &entry.problem;
    let factor = config.tolerances.norms_growth_factor;
    let report = norms_study(p, ladder, &config.tree.config(&p.params, steps), factor)?;
    let anchor = "norms.uniform_boundedness";
    let checks = ["sup_y2", "int_z2", "k_t2"]
        .iter()
        .zip(report.growth)
        .map(|(name, g)| CheckRecord::at_most(format!("norms.{name}"), anchor, None, g, factor))
        .collect();
    Ok(Output { checks, details: details(&report) })
}
