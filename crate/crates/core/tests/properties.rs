use std::sync::Arc;

use proptest::prelude::*;

use gbsde::approx::{ApproxGenerator, Direction, QSearchConfig, SolveMode};
use gbsde::experiments::catalog::lookup;
use gbsde::experiments::config::{parse_ladder, ExperimentConfig};
use gbsde::experiments::report::{read_checks_csv, write_checks_csv, CheckRecord};
use gbsde::lattice::{g_expect, SolverConfig};
use gbsde::model::{GParams, Generator, ProblemSpec, Terminal, Which};
use gbsde::pde::{solve_pde, PdeGrid};
use gbsde::tree::{sublinear_expect, TreeConfig};

fn params() -> GParams {
    GParams { sigma_low: 0.5, sigma_high: 1.0 }
}

fn approximants(name: &str, n: u32) -> (Generator, ApproxGenerator, ApproxGenerator) {
    let base = lookup(name).unwrap().problem.gen;
    let search = QSearchConfig::solver_default();
    let lo = ApproxGenerator::new(base.clone(), n, Direction::Lower, search).unwrap();
    let hi = ApproxGenerator::new(base.clone(), n, Direction::Upper, search).unwrap();
    (base, lo, hi)
}

/// `a·x² + b·x + c·sin(x)`, quadratic growth.
fn payoff(a: f64, b: f64, c: f64) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
    Arc::new(move |x| a * x * x + b * x + c * x.sin())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn approximants_bracket_the_generator(
        name in prop::sample::select(vec!["lipschitz", "sqrt_z", "singular_uv"]),
        n in 2u32..40,
        t in 0.01f64..1.0,
        y in -5.0f64..5.0,
        z in -5.0f64..5.0,
    ) {
        let (base, lo, hi) = approximants(name, n);
        for which in [Which::F, Which::G] {
            let f = base.eval(which, t, y, z);
            let l = lo.effective(which, t, y, z).unwrap();
            let u = hi.effective(which, t, y, z).unwrap();
            // q = z is always probed, so the bracket is exact
            prop_assert!(l <= f && f <= u, "{l} {f} {u}");
            prop_assert!(u - l <= 2.0 * (hi.gap_bound(t) + hi.grid_slack(t)) + 1e-12);
        }
    }

    #[test]
    fn approximants_tighten_with_index(n in 2u32..20, t in 0.01f64..1.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let (_, lo, hi) = approximants("sqrt_z", n);
        let (_, lo2, hi2) = approximants("sqrt_z", 2 * n);
        let slack = lo.grid_slack(t) + lo2.grid_slack(t);
        for which in [Which::F, Which::G] {
            prop_assert!(lo.effective(which, t, y, z).unwrap() <= lo2.effective(which, t, y, z).unwrap() + slack);
            prop_assert!(hi2.effective(which, t, y, z).unwrap() <= hi.effective(which, t, y, z).unwrap() + slack);
        }
    }

    #[test]
    fn lattice_expectation_is_sublinear(
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
        a2 in -1.0f64..1.0, b2 in -1.0f64..1.0,
        shift in -2.0f64..2.0, scale in 0.0f64..3.0,
    ) {
        let cfg = SolverConfig::with_grid(20, 201);
        let e = |f: Arc<dyn Fn(f64) -> f64 + Send + Sync>| g_expect(f, &params(), 1.0, &cfg).unwrap().0;
        let x = e(payoff(a, b, c));
        let y = e(payoff(a2, b2, 0.0));
        let shifted = payoff(a, b, c);
        prop_assert!(close(e(Arc::new(move |v| shifted(v) + shift)), x + shift));
        prop_assert!(close(e(payoff(scale * a, scale * b, scale * c)), scale * x));
        prop_assert!(e(payoff(a + a2, b + b2, c)) <= x + y + 1e-10 * (1.0 + x.abs() + y.abs()));
        prop_assert!(e(payoff(a, b, c)) >= -e(payoff(-a, -b, -c)) - 1e-12);
    }

    #[test]
    fn tree_expectation_is_sublinear(a in -1.0f64..1.0, b in -1.0f64..1.0, a2 in -1.0f64..1.0, shift in -2.0f64..2.0) {
        let cfg = TreeConfig::new(&params(), 5);
        let e = |f: &(dyn Fn(f64) -> f64 + Sync)| {
            sublinear_expect(|path| f(path.last().unwrap().0), &params(), 1.0, &cfg).unwrap()
        };
        let x = e(&|v| a * v * v + b * v);
        let y = e(&|v| a2 * v * v);
        prop_assert!(close(e(&|v| a * v * v + b * v + shift), x + shift));
        prop_assert!(e(&|v| (a + a2) * v * v + b * v) <= x + y + 1e-12);
    }

    #[test]
    fn pde_step_preserves_order(a in -1.0f64..1.0, b in -1.0f64..1.0, lift in 0.0f64..0.5, bump in 0.0f64..1.0) {
        let base = lookup("sqrt_z").unwrap().problem;
        let lo = ProblemSpec {
            terminal: Terminal::new(2, 2.0, Arc::new(move |x| a * x * x + b * x)),
            ..base.clone()
        };
        let hi = ProblemSpec {
            terminal: Terminal::new(2, 2.0, Arc::new(move |x| a * x * x + b * x + lift + bump * (-x * x).exp())),
            ..base
        };
        let grid = PdeGrid::with_cfl(1.0, 1.0, 61, 6.0, 0.4).unwrap();
        let ul = solve_pde(&lo, SolveMode::Raw, &grid).unwrap();
        let uh = solve_pde(&hi, SolveMode::Raw, &grid).unwrap();
        // ordering on the half of the grid away from the extrapolated edges
        let n = ul.xs.len();
        for (rl, rh) in ul.u.iter().zip(&uh.u) {
            for j in n / 4..3 * n / 4 {
                prop_assert!(rl[j] <= rh[j] + 1e-10, "{} > {}", rl[j], rh[j]);
            }
        }
    }

    #[test]
    fn config_parser_never_panics(s in ".{0,200}") {
        let _ = ExperimentConfig::from_json_str(&s);
        let _ = parse_ladder(&s);
    }

    #[test]
    fn ladder_text_round_trips(ladder in prop::collection::vec(0u32..100_000, 1..10)) {
        let text = ladder.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
        prop_assert_eq!(parse_ladder(&text).unwrap(), ladder);
    }

    #[test]
    fn checks_csv_round_trips(
        rows in prop::collection::vec(("[a-z.,\" ]{0,12}", any::<Option<u32>>(), any::<f64>(), any::<f64>()), 0..8)
    ) {
        let checks: Vec<CheckRecord> = rows
            .into_iter()
            .map(|(id, n, v, b)| CheckRecord::at_most(id, "anchor", n, v, b))
            .collect();
        let back = read_checks_csv(&write_checks_csv(&checks).unwrap()).unwrap();
        prop_assert_eq!(back.len(), checks.len());
        for (x, y) in checks.iter().zip(&back) {
            prop_assert_eq!(&x.check_id, &y.check_id);
            prop_assert_eq!(x.n, y.n);
            prop_assert_eq!(x.pass, y.pass);
            for (p, q) in [(x.value, y.value), (x.bound, y.bound), (x.margin, y.margin)] {
                prop_assert!(p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan()));
            }
        }
    }
}
