//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::{dist_inf, rel_err, sample_box, same_points, two_stage_class, zero_noise_pair, GRAD_PROBLEMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ocscape_core::diff::{fd_gradient, oneshot_gradient, GradMode};
use ocscape_core::dp::param::overall;
use ocscape_core::dp::{dp_param_certify, dp_param_solve, dp_tabular, Anchor, BranchStrategy, CertifyOptions, DpVerdict, ParamSolveOptions, TabularOptions};
use ocscape_core::landscape::lqr::{generate_lqr_with, lqr_riccati_residual, LqrSolveOptions, LqrSpec};
use ocscape_core::landscape::{
    classify_point, enumerate_stationary, generate_lqr, lqr_experiment, theorem_probe, Census, CensusOptions, ClassifyOptions, LqrScenario,
    ProbeOptions, ProbeSubject,
};
use ocscape_core::model::Grid;
use ocscape_core::registry::{self, detparam_theta, RegisteredProblem};
use ocscape_core::stochastic::{gauss_hermite, gauss_legendre};
use ocscape_core::{ExpectationEngine, FeasibleSet, OneShotObjective, PolicyParams};

const TOL: f64 = 1e-3;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn points<'a>(it: impl Iterator<Item = &'a ocscape_core::landscape::StationaryPointRecord>) -> Vec<Vec<f64>> {
    it.map(|r| r.point.clone()).collect()
}

fn engine(reg: &RegisteredProblem) -> Option<ExpectationEngine> {
    reg.problem.is_stochastic().then(|| ExpectationEngine::quadrature(8))
}

fn objective<'a>(reg: &'a RegisteredProblem, eng: Option<&ExpectationEngine>) -> OneShotObjective<'a> {
    match &reg.class {
        Some(c) => OneShotObjective::params(&reg.problem, c.clone(), eng).unwrap(),
        None => OneShotObjective::inputs(&reg.problem, eng).unwrap(),
    }
}

fn census(reg: &RegisteredProblem) -> Census {
    let eng = engine(reg);
    let obj = objective(reg, eng.as_ref());
    enumerate_stationary(&obj, &obj.feasible(), &CensusOptions::default()).unwrap()
}

fn certify(reg: &RegisteredProblem, z: &[f64]) -> (DpVerdict, usize) {
    let class = reg.class.as_ref().unwrap();
    let eng = engine(reg);
    let certs = dp_param_certify(&reg.problem, class, &class.split(z).unwrap(), reg.samples.as_ref().unwrap(), eng.as_ref(), &CertifyOptions::default())
        .unwrap();
    (overall(&certs), certs.iter().map(|c| c.failures.len()).sum())
}

fn criterion1() -> Outcome {
    let t = Instant::now();
    let reg = registry::lookup("example1").unwrap();
    let c = census(&reg);
    let elapsed = t.elapsed();
    let minima = points(c.minima());
    let listed = [vec![-0.523, -0.523], vec![-0.523, 2.477], vec![0.938, 0.938], vec![0.938, 3.938]];
    let four = same_points(&minima, &listed, TOL);
    let best = c.best().is_some_and(|b| dist_inf(&b.point, &[0.938, 3.938]) <= TOL);
    let fast = elapsed < Duration::from_secs(10);
    outcome(four && best && fast, format!("{} minima, best at (0.938, 3.938): {best}, census {}", minima.len(), secs(elapsed)))
}

fn criterion2() -> Outcome {
    let reg = registry::lookup("example2").unwrap();
    let c = census(&reg);
    let r = registry::example2_root();
    let minima = points(c.minima());
    let pair = same_points(&minima, &[vec![r, 2.0 * r], vec![-r, -2.0 * r]], TOL);
    let origin = c.records.iter().find(|rec| dist_inf(&rec.point, &[0.0, 0.0]) <= TOL);
    let grad = origin.map_or(f64::INFINITY, |o| o.gradient_norm);

    let obj = objective(&reg, None);
    let j0 = obj.eval(&[0.0, 0.0]).unwrap();
    let drop = [1e-3, 1e-2, 0.1, -1e-3, -1e-2, -0.1].into_iter().find(|t| obj.eval(&[*t, *t]).unwrap() < j0);

    let grid = Grid::new(vec![-2.0], vec![2.0], vec![81]).unwrap();
    let strategy = BranchStrategy::Continuation(vec![None, Some(Anchor { state: vec![1.0], action: vec![0.0] })]);
    let run = dp_tabular(&reg.problem, &grid, &strategy, &TabularOptions::default()).unwrap();
    let z = [0.0, 0.0];
    let t1 = theorem_probe(&reg, 1, ProbeSubject::Induced { inputs: &z, policy: &run }, None, &ProbeOptions::default()).unwrap();
    let h = t1.hypotheses.iter().find(|h| h.name.starts_with("hessian of Q_1")).and_then(|h| h.value);
    let hyp_fails = !t1.hypotheses_hold && h.is_some_and(|v| v.abs() <= 1e-6);

    outcome(
        pair && grad <= 1e-7 && drop.is_some() && hyp_fails,
        format!("minima {minima:?}, origin gradient {grad:e}, J(t,t) < J(0,0) at t = {drop:?}, Q_1 hessian {h:?}"),
    )
}

/// Worst `|π₁(x) − x − offset|` over the nodes in `[lo, hi]` (infinite when a node has no selected minimizer).
fn branch_error(reg: &RegisteredProblem, offset: f64, lo: f64, hi: f64) -> (f64, f64, usize, Vec<Vec<f64>>) {
    let grid = Grid::new(vec![lo], vec![hi], vec![81]).unwrap();
    let strategy = BranchStrategy::Continuation(vec![None, Some(Anchor { state: vec![0.0], action: vec![offset] })]);
    let run = dp_tabular(&reg.problem, &grid, &strategy, &TabularOptions::default()).unwrap();
    let st = run.stage(1);
    let mut worst: f64 = 0.0;
    let mut missing = 0;
    for i in 0..grid.len() {
        match st.nodes[i].selected_action() {
            Some(a) => worst = worst.max((a[0] - grid.node(i)[0] - offset).abs()),
            None => {
                missing += 1;
                worst = f64::INFINITY;
            }
        }
    }
    let induced = run.induced.iter().map(|i| i.inputs.concat()).collect();
    (worst, 2.0 * grid.spacing(0), missing, induced)
}

fn criterion3() -> Outcome {
    let reg = registry::lookup("example1").unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (offset, lo, hi) in [(0.0, -10.0, 10.0), (3.0, -13.0, 7.0)] {
        let (worst, tol, missing, _) = branch_error(&reg, offset, lo, hi);
        ok &= worst <= tol;
        notes.push(format!("u = x + {offset} on [{lo}, {hi}]: worst {worst:e}, {missing} of 81 nodes without a minimizer"));
    }
    let mut induced: Vec<Vec<f64>> = Vec::new();
    for offset in [0.0, 3.0] {
        let (worst, tol, _, ind) = branch_error(&reg, offset, -2.0, 2.0);
        notes.push(format!("u = x + {offset} on [-2, 2]: worst {worst:e} (tolerance {tol:e})"));
        for z in ind {
            if !induced.iter().any(|q| dist_inf(q, &z) <= TOL) {
                induced.push(z);
            }
        }
    }
    let listed = [vec![-0.523, -0.523], vec![-0.523, 2.477], vec![0.938, 0.938], vec![0.938, 3.938]];
    let pairs = same_points(&induced, &listed, TOL);
    ok &= pairs;
    notes.push(format!("induced pairs match the census: {pairs}"));
    outcome(ok, notes.join("; "))
}

fn criterion4() -> Outcome {
    let reg = registry::lookup("detparam-counterexample").unwrap();
    let c = census(&reg);
    let strict = points(c.strict_minima());
    let found = same_points(&strict, &[vec![1.0, 1.0], vec![1.0, -1.0]], TOL);
    let (accept, _) = certify(&reg, &[1.0, -1.0]);
    let (reject, failures) = certify(&reg, &[1.0, 1.0]);
    let ok = found && accept == DpVerdict::LocalMin && reject != DpVerdict::LocalMin && failures >= 1;
    outcome(ok, format!("strict minima {strict:?}; (1,-1) {}, (1,1) {} with {failures} failing samples", accept.as_str(), reject.as_str()))
}

fn criterion5() -> (Outcome, Vec<Vec<f64>>) {
    let t = Instant::now();
    let reg = registry::lookup("stochastic-counterexample").unwrap();
    let c = census(&reg);
    let interior = points(c.records.iter().filter(|r| r.interior));
    let strict = points(c.strict_minima());
    let nine = interior.len() == 9 && same_points(&interior, &reg.truth.oneshot_stationary, TOL);
    let four = strict.len() == 4 && same_points(&strict, &reg.truth.oneshot_strict_minima, TOL);
    let mut dp_ok = true;
    let mut accepted = Vec::new();
    for z in &interior {
        let (v, _) = certify(&reg, z);
        let expected = if [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]].iter().any(|q| dist_inf(z, q) <= TOL) {
            DpVerdict::LocalMin
        } else if dist_inf(z, &[0.0, 0.0, 0.0]) <= TOL {
            DpVerdict::StationaryOnly
        } else {
            DpVerdict::Neither
        };
        dp_ok &= v == expected || (expected == DpVerdict::Neither && v != DpVerdict::LocalMin);
        if v == DpVerdict::LocalMin {
            accepted.push(z.clone());
        }
    }
    let elapsed = t.elapsed();
    let ok = nine && four && dp_ok && elapsed < Duration::from_secs(60);
    let detail = format!(
        "{} interior stationary, {} strict minima, DP accepts {accepted:?}, verdicts as listed: {dp_ok}, {}",
        interior.len(),
        strict.len(),
        secs(elapsed)
    );
    (outcome(ok, detail), interior)
}

fn criterion6() -> (Outcome, Vec<Vec<f64>>) {
    let t = Instant::now();
    let reg = registry::lookup("equivalence-example").unwrap();
    let target = [0.0, 1.0, 0.5];
    let c = census(&reg);
    let interior = points(c.records.iter().filter(|r| r.interior));
    let census_ok = interior.len() == 1 && dist_inf(&interior[0], &target) <= TOL;

    let class = reg.class.as_ref().unwrap();
    let eng = engine(&reg);
    let start = PolicyParams { theta: class.stages.iter().map(|b| vec![0.3; b.count()]).collect() };
    let run = dp_param_solve(&reg.problem, class, &start, reg.samples.as_ref().unwrap(), eng.as_ref(), &ParamSolveOptions::default()).unwrap();
    let dp = run.params.flat();
    let dp_ok = run.converged && dist_inf(&dp, &target) <= TOL;

    let params = class.split(&target).unwrap();
    let pr = theorem_probe(&reg, 9, ProbeSubject::Params(&params), eng.as_ref(), &ProbeOptions::default()).unwrap();
    let single = pr.hypotheses.iter().find(|h| h.name == "single stationary control policy");
    let single_ok = single.is_some_and(|h| h.passed);
    let detail = format!(
        "census {interior:?}, DP solve {dp:?}, single-policy check {} ({}), {}",
        single_ok,
        single.map_or("", |h| h.detail.as_str()),
        secs(t.elapsed())
    );
    let mut pts = interior;
    pts.push(dp);
    (outcome(census_ok && dp_ok && single_ok, detail), pts)
}

fn criterion7() -> Outcome {
    let t = Instant::now();
    let seeds: Vec<u64> = (0..20).collect();
    let opts = LqrSolveOptions::default();
    let un = lqr_experiment(&seeds, LqrScenario::Unconstrained, &opts).unwrap();
    let co = lqr_experiment(&seeds, LqrScenario::Constrained, &opts).unwrap();
    let zero = |e: &ocscape_core::landscape::lqr::LqrExperiment| e.seeds.iter().all(|s| s.dp_to_os.zero_update);
    let un_worst = un.seeds.iter().map(|s| s.os_to_dp.distances[0].max(s.os_to_dp.distances[1])).fold(0.0, f64::max);
    let co_k1 = co.seeds.iter().map(|s| s.os_to_dp.distances[1]).fold(0.0, f64::max);
    let co_last = co.seeds.iter().map(|s| *s.os_to_dp.distances.last().unwrap()).fold(0.0, f64::max);
    let elapsed = t.elapsed();
    let ok = zero(&un) && zero(&co) && un_worst <= 1e-3 && co_k1 > 0.5 && elapsed < Duration::from_secs(600);
    outcome(
        ok,
        format!(
            "DP to one-shot zero: {} / {}; unconstrained K0,K1 worst {un_worst:e}; constrained K1 largest {co_k1:e} (K_last largest {co_last:e}); {}",
            zero(&un),
            zero(&co),
            secs(elapsed)
        ),
    )
}

fn oneshot_local_min(reg: &RegisteredProblem, z: &[f64]) -> bool {
    let eng = engine(reg);
    let obj = objective(reg, eng.as_ref());
    classify_point(&obj, z, &obj.feasible(), &ClassifyOptions::default()).unwrap().class.is_local_min()
}

fn criterion8(extra: &[(&str, Vec<Vec<f64>>)]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut notes = Vec::new();

    let eng = ExpectationEngine::quadrature(8);
    let mut worst_grad: f64 = 0.0;
    for i in 0..200 {
        let (adj, fd) = if i % 6 == 5 {
            let inst = generate_lqr_with(i as u64, LqrScenario::Unconstrained, &LqrSpec { horizon: 6, ..LqrSpec::default() });
            let reg = registry::lqr(&inst);
            let obj = OneShotObjective::params(&reg.problem, reg.class.clone().unwrap(), Some(&ExpectationEngine::quadrature(3))).unwrap();
            let z: Vec<f64> = (0..obj.feasible().dim()).map(|_| rng.random_range(-0.1..0.1)).collect();
            (oneshot_gradient(&obj, &z, GradMode::Adjoint, false).unwrap().gradient, fd_gradient(&obj, &z))
        } else {
            let name = GRAD_PROBLEMS[i % 6];
            let reg = registry::lookup(name).unwrap();
            let obj = objective(&reg, reg.problem.is_stochastic().then_some(&eng));
            let z: Vec<f64> = sample_box(name).iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect();
            (oneshot_gradient(&obj, &z, GradMode::Adjoint, false).unwrap().gradient, fd_gradient(&obj, &z))
        };
        worst_grad = worst_grad.max(rel_err(&adj, &fd));
    }
    let grad_ok = worst_grad <= 1e-5;
    notes.push(format!("gradient rel. error {worst_grad:e}"));

    let riccati = (0..20).map(|s| lqr_riccati_residual(&generate_lqr(s, LqrScenario::Unconstrained)).unwrap()).fold(0.0, f64::max);
    let riccati_ok = riccati <= 1e-10;
    notes.push(format!("Riccati residual {riccati:e}"));

    let (lx, lw) = gauss_legendre(5);
    let (hx, hw) = gauss_hermite(5);
    let mut quad_err: f64 = 0.0;
    let mut double_fact = 1.0;
    for d in 0..=9 {
        let leg: f64 = lx.iter().zip(&lw).map(|(x, w)| w * x.powi(d)).sum();
        let leg_exact = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
        let her: f64 = hx.iter().zip(&hw).map(|(x, w)| w * x.powi(d)).sum();
        let her_exact = if d % 2 == 0 {
            let m = double_fact;
            double_fact *= (d + 1) as f64;
            m
        } else {
            0.0
        };
        quad_err = quad_err.max((leg - leg_exact).abs()).max((her - her_exact).abs() / her_exact.max(1.0));
    }
    let quad_ok = quad_err <= 1e-12;
    notes.push(format!("quadrature error {quad_err:e}"));

    let sets = [
        (FeasibleSet::boxed(vec![-1.0, -10.0, 0.5], vec![1.0, 10.0, 0.75]).unwrap(), 50.0),
        (detparam_theta(), 6.0),
        (FeasibleSet::spectral_floor(4, 3, 100.0).unwrap(), 300.0),
    ];
    let mut idem_ok = true;
    for (set, r) in &sets {
        for _ in 0..200 {
            let z: Vec<f64> = (0..set.dim()).map(|_| rng.random_range(-*r..*r)).collect();
            let p = set.project(&z);
            idem_ok &= set.project(&p) == p;
        }
    }
    notes.push(format!("projection idempotence {idem_ok}"));

    let (noisy, det) = zero_noise_pair();
    let class = two_stage_class();
    let mut bitwise = true;
    for e in [ExpectationEngine::quadrature(8), ExpectationEngine::monte_carlo(64, 3)] {
        let a = OneShotObjective::params(&noisy, class.clone(), Some(&e)).unwrap();
        let b = OneShotObjective::params(&det, class.clone(), None).unwrap();
        for _ in 0..50 {
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (mut ga, mut gb) = (vec![0.0; 3], vec![0.0; 3]);
            let (va, vb) = (a.eval_grad(&z, &mut ga).unwrap(), b.eval_grad(&z, &mut gb).unwrap());
            bitwise &= va.to_bits() == vb.to_bits() && ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits());
        }
    }
    notes.push(format!("zero-noise bitwise {bitwise}"));

    let mut contained = true;
    let mut certified = 0;
    for name in ["detparam-counterexample", "stochastic-counterexample", "equivalence-example"] {
        let reg = registry::lookup(name).unwrap();
        let t = &reg.truth;
        let mut pts: Vec<Vec<f64>> = t.oneshot_stationary.iter().chain(&t.oneshot_strict_minima).chain(&t.dp_local_minima).cloned().collect();
        for (n, more) in extra {
            if *n == name {
                pts.extend(more.iter().cloned());
            }
        }
        for z in &pts {
            if certify(&reg, z).0 == DpVerdict::LocalMin {
                certified += 1;
                contained &= oneshot_local_min(&reg, z);
            }
        }
    }
    let reg = registry::lookup("stochastic-counterexample").unwrap();
    let witness = [[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]].iter().all(|z| oneshot_local_min(&reg, z) && certify(&reg, z).0 != DpVerdict::LocalMin);
    notes.push(format!("{certified} DP-certified minima all one-shot minima: {contained}; (0,±1,0) witness: {witness}"));

    outcome(grad_ok && riccati_ok && quad_ok && idem_ok && bitwise && contained && certified > 0 && witness, notes.join("; "))
}

fn main() {
    let mut results = vec![criterion1(), criterion2(), criterion3()];
    let det_points = points(census(&registry::lookup("detparam-counterexample").unwrap()).records.iter());
    results.push(criterion4());
    let (c5, stoch_points) = criterion5();
    results.push(c5);
    let (c6, equiv_points) = criterion6();
    results.push(c6);
    results.push(criterion7());
    results.push(criterion8(&[
        ("detparam-counterexample", det_points),
        ("stochastic-counterexample", stoch_points),
        ("equivalence-example", equiv_points),
    ]));
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        println!("criterion {}: {} | {}", i + 1, if r.passed { "PASS" } else { "FAIL" }, r.detail);
        failed += usize::from(!r.passed);
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
