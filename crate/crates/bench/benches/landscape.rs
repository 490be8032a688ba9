use criterion::{criterion_group, criterion_main, Criterion};

use ocscape_bench::{objective, problem};
use ocscape_core::dp::{dp_tabular, Anchor, BranchStrategy, TabularOptions};
use ocscape_core::landscape::lqr::{lqr_dp, lqr_oneshot, LqrSolveOptions};
use ocscape_core::landscape::{enumerate_stationary, generate_lqr, CensusOptions, LqrScenario};
use ocscape_core::model::Grid;

fn census(c: &mut Criterion) {
    let mut g = c.benchmark_group("census");
    g.sample_size(10);
    for name in ["example1", "example2", "detparam-counterexample"] {
        let reg = problem(name);
        let obj = objective(&reg, None);
        let set = obj.feasible();
        g.bench_function(name, |b| b.iter(|| enumerate_stationary(&obj, &set, &CensusOptions::default()).unwrap()));
    }
    g.finish();
}

fn tabular(c: &mut Criterion) {
    let reg = problem("example1");
    let grid = Grid::new(vec![-2.0], vec![2.0], vec![81]).unwrap();
    let strategy = BranchStrategy::Continuation(vec![None, Some(Anchor { state: vec![0.0], action: vec![3.0] })]);
    let mut g = c.benchmark_group("dp-tabular");
    g.sample_size(10);
    g.bench_function("example1/81-nodes", |b| b.iter(|| dp_tabular(&reg.problem, &grid, &strategy, &TabularOptions::default()).unwrap()));
    g.finish();
}

fn lqr(c: &mut Criterion) {
    let opts = LqrSolveOptions::default();
    let mut g = c.benchmark_group("lqr");
    g.sample_size(10);
    for scenario in [LqrScenario::Unconstrained, LqrScenario::Constrained] {
        let inst = generate_lqr(0, scenario);
        g.bench_function(format!("dp/{}", scenario.as_str()), |b| b.iter(|| lqr_dp(&inst, None, &opts).unwrap()));
        g.bench_function(format!("oneshot/{}", scenario.as_str()), |b| b.iter(|| lqr_oneshot(&inst, &inst.zero_gains(), &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, census, tabular, lqr);
criterion_main!(benches);
