mod common;

use common::{rel_err, sample_box, two_stage_class, zero_noise_pair, GRAD_PROBLEMS};
use proptest::prelude::*;

use ocscape_core::diff::{fd_gradient, oneshot_gradient, GradMode};
use ocscape_core::expr::{parse_expression, Expr, ExprMap, Func, Var, VarGroup};
use ocscape_core::landscape::lqr::{generate_lqr_with, lqr_riccati_residual, LqrSpec};
use ocscape_core::landscape::{generate_lqr, LqrScenario};
use ocscape_core::registry::{self, detparam_theta};
use ocscape_core::stochastic::{gauss_hermite, gauss_legendre};
use ocscape_core::{ExpectationEngine, FeasibleSet, OneShotObjective};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adjoint_gradient_matches_finite_differences(which in 0usize..6, unit in prop::collection::vec(0.0f64..1.0, 120)) {
        let eng = ExpectationEngine::quadrature(8);
        if which == 5 {
            let spec = LqrSpec { horizon: 6, ..LqrSpec::default() };
            let inst = generate_lqr_with(which as u64 + (unit[0] * 1e6) as u64, LqrScenario::Unconstrained, &spec);
            let reg = registry::lqr(&inst);
            let obj = OneShotObjective::params(&reg.problem, reg.class.clone().unwrap(), Some(&ExpectationEngine::quadrature(3))).unwrap();
            let z: Vec<f64> = unit.iter().take(obj.feasible().dim()).map(|u| 0.2 * (u - 0.5)).collect();
            let adj = oneshot_gradient(&obj, &z, GradMode::Adjoint, false).unwrap().gradient;
            let fd = fd_gradient(&obj, &z);
            prop_assert!(rel_err(&adj, &fd) <= 1e-5, "lqr {}", rel_err(&adj, &fd));
            return Ok(());
        }
        let name = GRAD_PROBLEMS[which];
        let reg = registry::lookup(name).unwrap();
        let e = reg.problem.is_stochastic().then_some(&eng);
        let obj = match &reg.class {
            Some(c) => OneShotObjective::params(&reg.problem, c.clone(), e).unwrap(),
            None => OneShotObjective::inputs(&reg.problem, e).unwrap(),
        };
        let z: Vec<f64> = sample_box(name).iter().zip(&unit).map(|((lo, hi), u)| lo + (hi - lo) * u).collect();
        let adj = oneshot_gradient(&obj, &z, GradMode::Adjoint, false).unwrap().gradient;
        let fd = fd_gradient(&obj, &z);
        prop_assert!(rel_err(&adj, &fd) <= 1e-5, "{name} at {z:?}: {adj:?} vs {fd:?}");
    }

    #[test]
    fn box_projection_is_idempotent(z in prop::collection::vec(-50.0f64..50.0, 3)) {
        let set = FeasibleSet::boxed(vec![-1.0, -10.0, 0.5], vec![1.0, 10.0, 0.75]).unwrap();
        let p = set.project(&z);
        prop_assert_eq!(set.project(&p), p);
    }

    #[test]
    fn polytope_projection_is_idempotent(z in prop::collection::vec(-6.0f64..6.0, 2)) {
        let set = detparam_theta();
        let p = set.project(&z);
        prop_assert!(set.contains(&p, 1e-12));
        prop_assert_eq!(set.project(&p), p);
    }

    #[test]
    fn spectral_projection_is_idempotent(z in prop::collection::vec(-300.0f64..300.0, 12)) {
        let set = FeasibleSet::spectral_floor(4, 3, 100.0).unwrap();
        let p = set.project(&z);
        prop_assert_eq!(set.project(&p), p);
    }

    #[test]
    fn printing_a_parsed_expression_is_a_fixed_point(e in expr_strategy()) {
        let text = e.to_string();
        let parsed = parse_expression(&text).unwrap();
        let again = parsed.to_string();
        prop_assert_eq!(&again, &text);
        let lookup = |v: Var| 0.3 + 0.1 * v.index as f64 + if v.group == VarGroup::U { 0.05 } else { 0.0 };
        let (a, b) = (e.eval(&lookup), parsed.eval(&lookup));
        prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..10.0).prop_map(|c| Expr::Const((c * 100.0).round() / 100.0)),
        (0usize..2).prop_map(|i| Expr::Var(Var { group: VarGroup::X, index: i })),
        (0usize..2).prop_map(|i| Expr::Var(Var { group: VarGroup::U, index: i })),
    ]
}

fn expr_strategy() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(a.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(a.into(), b.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(a.into(), b.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(a.into(), b.into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(a.into(), b.into())),
            (inner.clone(), 0u8..4).prop_map(|(a, k)| Expr::Pow(a.into(), Expr::Const(k as f64).into())),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Pow(a.into(), b.into())),
            inner.clone().prop_map(|a| Expr::Func(Func::Exp, a.into())),
            inner.clone().prop_map(|a| Expr::Func(Func::Log, a.into())),
            inner.prop_map(|a| Expr::Func(Func::Sqrt, a.into())),
        ]
    })
}

#[test]
fn parser_round_trip_on_generated_expressions() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    for _ in 0..100 {
        let e = expr_strategy().new_tree(&mut runner).unwrap().current();
        let text = e.to_string();
        assert_eq!(parse_expression(&text).unwrap().to_string(), text);
    }
}

fn eval_at(e: &Expr, vars: &[Var], vals: &[f64]) -> f64 {
    e.eval(&|v: Var| vars.iter().position(|w| *w == v).map_or(0.0, |i| vals[i]))
}

#[test]
fn dsl_derivatives_match_central_differences() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for name in registry::NAMES.iter().filter(|n| !n.starts_with("lqr")) {
        let reg = registry::lookup(name).unwrap();
        for (role, text) in &reg.dsl {
            let e = parse_expression(text).unwrap();
            let mut vars = Vec::new();
            e.variables(&mut vars);
            vars.sort_by_key(|v| (v.group as u8, v.index));
            vars.dedup();
            for _ in 0..100 {
                let vals: Vec<f64> = vars.iter().map(|_| rng.random_range(-1.2..1.2)).collect();
                for (i, v) in vars.iter().enumerate() {
                    let sym = eval_at(&e.derivative(*v), &vars, &vals);
                    let h = 1e-5 * vals[i].abs().max(1.0);
                    let (mut up, mut dn) = (vals.clone(), vals.clone());
                    up[i] += h;
                    dn[i] -= h;
                    let fd = (eval_at(&e, &vars, &up) - eval_at(&e, &vars, &dn)) / (2.0 * h);
                    assert!((sym - fd).abs() <= 1e-7 * sym.abs().max(1.0), "{name} {role} d/d{v} at {vals:?}: {sym} vs {fd}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked >= 1000);
}

#[test]
fn dsl_costs_agree_with_registered_built_ins() {
    for name in ["example1", "example2", "detparam-counterexample", "stochastic-counterexample", "equivalence-example"] {
        let reg = registry::lookup(name).unwrap();
        for (role, text) in reg.dsl.iter().filter(|(r, _)| r.starts_with('c') && r.len() == 2) {
            let k: usize = role[1..].parse().unwrap();
            if k >= reg.problem.horizon {
                continue;
            }
            let dsl = ExprMap::parse(vec![(VarGroup::X, 1), (VarGroup::U, 1)], &[text]).unwrap().into_map();
            let built_in = &reg.problem.stage_cost[k];
            for (x, u) in [(0.0, 3.0), (0.5, -1.0), (-1.1, 0.7), (1.0, 2.0)] {
                let (mut a, mut b) = ([0.0], [0.0]);
                dsl.eval(&[&[x], &[u]], &mut a);
                built_in.eval(&[&[x], &[u]], &mut b);
                assert!((a[0] - b[0]).abs() <= 1e-12 * b[0].abs().max(1.0), "{name} {role} at ({x}, {u}): {} vs {}", a[0], b[0]);
            }
        }
    }
    // Example 1 at (x, u) = (0, 3): 81/4 − 36 + 27/2 + 1.
    let reg = registry::lookup("example1").unwrap();
    let e = parse_expression(&reg.dsl[1].1).unwrap();
    let v = e.eval(&|v: Var| if v.group == VarGroup::U { 3.0 } else { 0.0 });
    assert!((v - (-1.25)).abs() < 1e-12 && (registry::example1_c1(0.0, 3.0) - v).abs() < 1e-12);
}

#[test]
fn quadrature_is_exact_up_to_degree_nine_at_order_five() {
    let (x, w) = gauss_legendre(5);
    for d in 0..=9 {
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
        let exact = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
        assert!((q - exact).abs() < 1e-14, "Legendre degree {d}: {q} vs {exact}");
    }
    let (x, w) = gauss_hermite(5);
    let mut double_fact = 1.0;
    for d in 0..=9 {
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d)).sum();
        let exact = if d % 2 == 0 {
            let m = double_fact;
            double_fact *= (d + 1) as f64;
            m
        } else {
            0.0
        };
        assert!((q - exact).abs() < 1e-12 * exact.max(1.0), "Hermite degree {d}: {q} vs {exact}");
    }
}

#[test]
fn zero_noise_evaluators_equal_deterministic_bitwise() {
    let (noisy, det) = zero_noise_pair();
    let class = two_stage_class();
    for eng in [ExpectationEngine::quadrature(8), ExpectationEngine::monte_carlo(64, 3)] {
        let a = OneShotObjective::params(&noisy, class.clone(), Some(&eng)).unwrap();
        let b = OneShotObjective::params(&det, class.clone(), None).unwrap();
        let ai = OneShotObjective::inputs(&noisy, Some(&eng)).unwrap();
        let bi = OneShotObjective::inputs(&det, None).unwrap();
        for z in [[0.0, 0.0, 0.0], [0.4, -1.3, 0.2], [-2.0, 1.1, 1.9]] {
            let (mut ga, mut gb) = (vec![0.0; 3], vec![0.0; 3]);
            let (va, vb) = (a.eval_grad(&z, &mut ga).unwrap(), b.eval_grad(&z, &mut gb).unwrap());
            assert_eq!(va.to_bits(), vb.to_bits());
            assert_eq!(ga.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), gb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            let u = &z[1..];
            assert_eq!(ai.eval(u).unwrap().to_bits(), bi.eval(u).unwrap().to_bits());
        }
    }
}

#[test]
fn riccati_residual_is_tiny() {
    for seed in 0..20 {
        let inst = generate_lqr(seed, LqrScenario::Unconstrained);
        let r = lqr_riccati_residual(&inst).unwrap();
        assert!(r <= 1e-10, "seed {seed}: {r:e}");
    }
}

#[test]
fn lqr_generator_is_deterministic_and_well_posed() {
    for seed in [0, 1, 99, u64::MAX] {
        let a = generate_lqr(seed, LqrScenario::Constrained);
        assert_eq!(a, generate_lqr(seed, LqrScenario::Constrained));
        assert_eq!((a.horizon(), a.state_dim(), a.action_dim()), (30, 3, 4));
        for r in &a.r {
            let lo = r.clone().symmetric_eigen().eigenvalues.min();
            assert!(lo > 0.0);
        }
        let u = generate_lqr(seed, LqrScenario::Unconstrained);
        assert_eq!((&u.a, &u.b, &u.q, &u.r), (&a.a, &a.b, &a.q, &a.r));
    }
    assert_ne!(generate_lqr(0, LqrScenario::Unconstrained).a[0], generate_lqr(1, LqrScenario::Unconstrained).a[0]);
}
