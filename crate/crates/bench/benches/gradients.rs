use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;

use ocscape_bench::{objective, problem};
use ocscape_core::diff::{fd_gradient, oneshot_gradient, GradMode};
use ocscape_core::landscape::lqr::lqr_cost_grad;
use ocscape_core::landscape::{generate_lqr, LqrScenario};
use ocscape_core::registry;
use ocscape_core::ExpectationEngine;

fn deterministic(c: &mut Criterion) {
    let reg = problem("example1");
    let obj = objective(&reg, None);
    let z = [0.3, 1.2];
    c.bench_function("example1/adjoint", |b| b.iter(|| oneshot_gradient(&obj, black_box(&z), GradMode::Adjoint, false).unwrap()));
    c.bench_function("example1/finite-difference", |b| b.iter(|| fd_gradient(&obj, black_box(&z))));
}

fn stochastic(c: &mut Criterion) {
    let reg = problem("stochastic-counterexample");
    let z = [0.1, 0.4, -0.2];
    for order in [8, 16] {
        let eng = ExpectationEngine::quadrature(order);
        let obj = objective(&reg, Some(&eng));
        c.bench_function(&format!("stochastic/adjoint/quadrature-{order}"), |b| {
            b.iter(|| oneshot_gradient(&obj, black_box(&z), GradMode::Adjoint, false).unwrap())
        });
    }
}

fn lqr(c: &mut Criterion) {
    let inst = generate_lqr(0, LqrScenario::Unconstrained);
    let gains = vec![DMatrix::from_element(4, 3, 0.01); inst.horizon()];
    c.bench_function("lqr/moment-gradient", |b| b.iter(|| lqr_cost_grad(&inst, black_box(&gains))));
    let reg = registry::lqr(&inst);
    let eng = ExpectationEngine::quadrature(3);
    let obj = objective(&reg, Some(&eng));
    let z = vec![0.01; 12 * inst.horizon()];
    c.bench_function("lqr/rollout-adjoint", |b| b.iter(|| oneshot_gradient(&obj, black_box(&z), GradMode::Adjoint, false).unwrap()));
}

criterion_group!(benches, deterministic, stochastic, lqr);
criterion_main!(benches);
