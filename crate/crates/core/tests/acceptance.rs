//! Acceptance criteria, one line each. Run with
//! `cargo test --release -p gbsde --test acceptance`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use gbsde::approx::{verify_approximant_properties, QSearchConfig, SampleBox, SolveMode};
use gbsde::experiments::catalog::{catalog, linear_variants, lookup};
use gbsde::experiments::config::{ExperimentConfig, ProblemRef};
use gbsde::experiments::drivers::{run, Command};
use gbsde::experiments::report::RunReport;
use gbsde::lattice::{self, g_expect, SolverConfig};
use gbsde::model::{Generator, ProblemSpec, Terminal};
use gbsde::pde::{cross_check, PdeGrid};
use gbsde::tree::{linear_representation, solve_tree, sublinear_expect, verify_k_martingale, TreeConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(problem: &str) -> ExperimentConfig {
    ExperimentConfig { problem: Some(ProblemRef::Name(problem.into())), ..ExperimentConfig::default() }
}

fn run_cmd(command: Command, config: &ExperimentConfig) -> RunReport {
    run(command, config, rayon::current_num_threads()).expect("driver run")
}

fn failing(report: &RunReport) -> Vec<String> {
    report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} ({:e} vs {:e})", c.check_id, c.value, c.bound))
        .collect()
}

fn check(report: &RunReport, id: &str) -> bool {
    let rows: Vec<_> = report.checks.iter().filter(|c| c.check_id == id).collect();
    !rows.is_empty() && rows.iter().all(|c| c.pass)
}

fn value(report: &RunReport, id: &str) -> f64 {
    report.checks.iter().find(|c| c.check_id == id).map(|c| c.value).unwrap_or(f64::NAN)
}

fn approximant_properties() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["lipschitz", "sqrt_z"] {
        let p = lookup(name).unwrap().problem;
        let r = verify_approximant_properties(
            &p.gen,
            p.horizon,
            &[2, 4, 8, 16],
            QSearchConfig::default(),
            1000,
            42,
            SampleBox::default(),
        )
        .unwrap();
        let violations: usize = r.checks.iter().map(|c| c.violations).sum();
        pass &= violations == 0 && r.checks.len() == 6;
        parts.push(format!("{name}: {violations} violations over {} properties", r.checks.len()));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    Outcome { pass, detail: format!("{}; {:.1?}", parts.join(", "), elapsed) }
}

fn closed_form_expectations() -> Outcome {
    let p = lookup("sqrt_z").unwrap().problem.params;
    let tree = TreeConfig::new(&p, 6);
    let sq = sublinear_expect(|path| path.last().unwrap().0.powi(2), &p, 1.0, &tree).unwrap();
    let nsq = sublinear_expect(|path| -path.last().unwrap().0.powi(2), &p, 1.0, &tree).unwrap();
    let tree_err = (sq - p.var_high()).abs().max((nsq + p.var_low()).abs());

    let solver = SolverConfig { n_time: 200, ..SolverConfig::default() };
    let (lsq, _) = g_expect(Arc::new(|x| x * x), &p, 1.0, &solver).unwrap();
    let (lnsq, _) = g_expect(Arc::new(|x| -x * x), &p, 1.0, &solver).unwrap();
    let lat_rel = ((lsq - p.var_high()) / p.var_high()).abs().max(((lnsq + p.var_low()) / p.var_low()).abs());
    Outcome {
        pass: tree_err <= 1e-14 && lat_rel <= 0.02,
        detail: format!("tree |err| {tree_err:.2e} (≤ 1e-14), lattice rel {lat_rel:.2e} (≤ 2e-2)"),
    }
}

fn sandwich() -> Outcome {
    let r = run_cmd(Command::Sandwich, &config("sqrt_z"));
    let worst = r
        .checks
        .iter()
        .filter(|c| c.check_id.starts_with("sandwich.") && c.check_id != "sandwich.sup_norm")
        .map(|c| c.value)
        .fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: r.all_passed(),
        detail: format!("{} checks, worst ordering violation {worst:.2e}, failing {:?}", r.checks.len(), failing(&r)),
    }
}

fn gap_config(problem: &str) -> ExperimentConfig {
    ExperimentConfig {
        ladder: Some(vec![4, 8, 16, 32]),
        solver: SolverConfig { n_time: 400, n_space: 801, ..SolverConfig::default() },
        ..config(problem)
    }
}

fn gap_bound(r: &RunReport, elapsed: Duration) -> Outcome {
    let spread = value(r, "gap.ratio_spread");
    let pass = check(r, "gap.ratio_spread") && check(r, "gap.decreasing") && elapsed < Duration::from_secs(300);
    Outcome {
        pass,
        detail: format!(
            "max/min ratio after first rung {spread:.3} (≤ 1.2), relative growth {:.3}, gap(32) {:.2e} < gap(4) {}, {elapsed:.1?}",
            value(r, "gap.ratio_growth"),
            value(r, "gap.decreasing"),
            check(r, "gap.decreasing"),
        ),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut worst_matched = 0.0f64;
    let mut worst_interp = 0.0f64;
    for e in catalog() {
        let p = &e.problem;
        let tree_cfg = TreeConfig::new(&p.params, 10);
        let matched = SolverConfig::matched_to_tree(&p.params, p.horizon, 10).unwrap();
        let interp = SolverConfig { n_time: 10, n_space: 6001, ..SolverConfig::default() };
        for mode in [SolveMode::Raw, SolveMode::Upper(8), SolveMode::Lower(8)] {
            let t = solve_tree(p, mode, &tree_cfg).unwrap().y0();
            worst_matched = worst_matched.max((t - lattice::solve(p, mode, &matched).unwrap().y0()).abs());
            worst_interp = worst_interp.max((t - lattice::solve(p, mode, &interp).unwrap().y0()).abs());
        }
    }
    Outcome {
        pass: worst_matched <= 1e-9 && worst_interp <= 5e-3,
        detail: format!("matched |ΔY₀| {worst_matched:.2e} (≤ 1e-9), interpolated {worst_interp:.2e} (≤ 5e-3)"),
    }
}

fn pde_cross_check() -> Outcome {
    let solver = SolverConfig::default();
    let mut worst = 0.0f64;
    let mut at = String::new();
    for e in catalog() {
        let grid = PdeGrid::matching(&e.problem, &solver).unwrap();
        for mode in [SolveMode::Raw, SolveMode::Upper(8), SolveMode::Lower(8)] {
            let r = cross_check(&e.problem, mode, &solver, &grid).unwrap();
            if r.rel_diff > worst {
                worst = r.rel_diff;
                at = format!("{} {mode}", e.name);
            }
        }
    }
    Outcome { pass: worst <= 0.01, detail: format!("worst relative difference {worst:.2e} (≤ 1e-2) at {at}") }
}

fn comparison() -> Outcome {
    let r = run_cmd(Command::Compare, &config("comparison_pair"));
    Outcome {
        pass: r.all_passed() && r.checks.len() == 4,
        detail: format!(
            "tree {:.2e}, lattice {:.2e}, 100 random pairs: tree {:.2e}, lattice margin {:.2e}",
            value(&r, "compare.tree"),
            value(&r, "compare.lattice"),
            value(&r, "compare.random.tree"),
            value(&r, "compare.random.lattice_margin"),
        ),
    }
}

fn linear_representation_check() -> Outcome {
    let e = lookup("linear_rep").unwrap();
    let mut cases = vec![(e.linear.clone().unwrap(), e.problem.clone())];
    cases.extend(linear_variants().into_iter().map(|(_, l, p)| (l, p)));
    let mut worst = 0.0f64;
    for steps in 1..=8 {
        for (lin, p) in &cases {
            let (dp, gamma) = linear_representation(p, lin, &TreeConfig::new(&p.params, steps)).unwrap();
            worst = worst.max((dp - gamma).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("max |y_dp − y_gamma| {worst:.2e} (≤ 1e-9) over 4 parameterizations, n_steps 1..=8"),
    }
}

fn k_compensator() -> Outcome {
    let mixed = {
        let base = lookup("sqrt_z").unwrap().problem;
        ProblemSpec {
            name: "mixed".into(),
            gen: Generator::zero(),
            terminal: Terminal::new(2, 1.0, Arc::new(|x| if x < 0.0 { x * x } else { 0.0 })),
            ..base
        }
    };
    let mut worst = 0.0f64;
    let mut mixed_k = 0.0f64;
    let problems = catalog().into_iter().map(|e| e.problem).chain(std::iter::once(mixed));
    for p in problems {
        for steps in [4, 6, 8] {
            let r = verify_k_martingale(&solve_tree(&p, SolveMode::Raw, &TreeConfig::new(&p.params, steps)).unwrap());
            worst = worst.max(r.max_violation());
            if p.name == "mixed" {
                mixed_k = mixed_k.min(r.min_terminal_k);
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12 && mixed_k < -1e-3,
        detail: format!("max violation {worst:.2e} (≤ 1e-12), mixed-convexity min K_T {mixed_k:.3e}"),
    }
}

fn qv_bound() -> Outcome {
    let r = run_cmd(Command::QvBound, &config("sqrt_z"));
    Outcome {
        pass: r.all_passed() && check(&r, "qv.saturated_equality"),
        detail: format!("{} checks, failing {:?}", r.checks.len(), failing(&r)),
    }
}

fn common_limit(sqrt_gap: &RunReport, singular_gap: &RunReport) -> Outcome {
    let limit = ["convergence.y0_gap_nonincreasing", "convergence.mismatch_nonincreasing", "convergence.cauchy"];
    let sqrt_ok = limit.iter().all(|id| check(sqrt_gap, id));

    // the singular coefficients must not change the outcome of any of the
    // sandwich, gap and oracle criteria
    let sandwich = run_cmd(Command::Sandwich, &config("singular_uv"));
    let cross = run_cmd(Command::CrossCheck, &config("singular_uv"));
    let same_gap = ["gap.ratio_growth", "gap.ratio_spread", "gap.decreasing"]
        .iter()
        .all(|id| check(sqrt_gap, id) == check(singular_gap, id));
    let singular_ok = limit.iter().all(|id| check(singular_gap, id))
        && sandwich.all_passed()
        && cross.checks.iter().filter(|c| c.check_id.starts_with("cross_check.tree")).all(|c| c.pass)
        && same_gap;
    Outcome {
        pass: sqrt_ok && singular_ok,
        detail: format!(
            "sqrt_z Cauchy margin {:.2e}; singular_uv: limit {}, sandwich {}, oracles {}, gap outcomes match {}",
            value(sqrt_gap, "convergence.cauchy"),
            limit.iter().all(|id| check(singular_gap, id)),
            sandwich.all_passed(),
            cross.checks.iter().filter(|c| c.check_id.starts_with("cross_check.tree")).all(|c| c.pass),
            same_gap,
        ),
    }
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |id: u32, title: &'static str, o: Outcome| {
        println!("[{}] {id:>2} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, title, o));
    };

    record(1, "approximant properties", approximant_properties());
    record(2, "closed-form G-expectations", closed_form_expectations());
    record(3, "sandwich ordering", sandwich());
    let t = Instant::now();
    let sqrt_gap = run_cmd(Command::Gap, &gap_config("sqrt_z"));
    record(4, "gap bound", gap_bound(&sqrt_gap, t.elapsed()));
    record(5, "tree and lattice agree", oracle_equivalence());
    record(6, "PDE cross-check", pde_cross_check());
    record(7, "comparison", comparison());
    record(8, "linear representation", linear_representation_check());
    record(9, "K compensator", k_compensator());
    record(10, "quadratic variation bound", qv_bound());
    let singular_gap = run_cmd(Command::Gap, &gap_config("singular_uv"));
    record(11, "common limit of the approximations", common_limit(&sqrt_gap, &singular_gap));

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(id, _, _)| *id).collect();
    println!("acceptance: {} criteria, {} failed {:?}", results.len(), failed.len(), failed);
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
