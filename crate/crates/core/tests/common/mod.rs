//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use ocscape_core::expr::{ExprMap, VarGroup};
use ocscape_core::model::{BasisKind, InitialCondition};
use ocscape_core::{ControlProblem, FeasibleSet, NoiseLaw, NoiseModel, PolicyBasis, PolicyClass};

pub const GRAD_PROBLEMS: [&str; 5] = ["example1", "example2", "detparam-counterexample", "stochastic-counterexample", "equivalence-example"];

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1.0)
}

/// Decision boxes that keep `exp(x⁴)` costs finite.
pub fn sample_box(name: &str) -> Vec<(f64, f64)> {
    match name {
        "example1" | "example2" => vec![(-1.5, 1.5), (-4.0, 5.0)],
        "detparam-counterexample" => vec![(0.5, 1.5), (-1.0, 1.0)],
        "stochastic-counterexample" | "equivalence-example" => vec![(-2.0, 2.0); 3],
        _ => unreachable!(),
    }
}

pub fn zero_noise_pair() -> (ControlProblem, ControlProblem) {
    let maps = |with_w: bool| {
        let groups = |v: Vec<(VarGroup, usize)>| v;
        let f = if with_w {
            ExprMap::parse(groups(vec![(VarGroup::X, 1), (VarGroup::U, 1), (VarGroup::W, 1)]), &["x0 + u0 + w0"])
        } else {
            ExprMap::parse(groups(vec![(VarGroup::X, 1), (VarGroup::U, 1), (VarGroup::W, 0)]), &["x0 + u0"])
        }
        .unwrap()
        .into_map();
        let c0 = ExprMap::parse(vec![(VarGroup::X, 1), (VarGroup::U, 1)], &["0.1*u0^2"]).unwrap().into_map();
        let c1 = ExprMap::parse(vec![(VarGroup::X, 1), (VarGroup::U, 1)], &["0.25*u0^4 - 0.5*u0^2 + x0^2"]).unwrap().into_map();
        let cn = ExprMap::parse(vec![(VarGroup::X, 1)], &["x0^2"]).unwrap().into_map();
        (f, c0, c1, cn)
    };
    let build = |with_w: bool| {
        let (f, c0, c1, cn) = maps(with_w);
        ControlProblem {
            name: format!("zero-noise-{with_w}"),
            horizon: 2,
            state_dim: 1,
            action_dim: 1,
            noise_dim: usize::from(with_w),
            dynamics: vec![f.clone(), f],
            stage_cost: vec![c0, c1],
            terminal_cost: cn,
            action_set: FeasibleSet::cube(1, -20.0, 20.0),
            initial: InitialCondition::Fixed(vec![0.3]),
            noise: with_w.then(|| NoiseModel::iid(NoiseLaw::uniform_symmetric(1, 0.0), 2)),
            eval_box: FeasibleSet::cube(1, -4.0, 4.0),
        }
    };
    (build(true), build(false))
}

/// Constant stage-0 policy and affine stage-1 policy, as in the stochastic examples.
pub fn two_stage_class() -> PolicyClass {
    let b0 = PolicyBasis::new(BasisKind::Constant { action_dim: 1 }, FeasibleSet::cube(1, -2.0, 2.0)).unwrap();
    let b1 = PolicyBasis::new(BasisKind::Affine1d, FeasibleSet::cube(2, -2.0, 2.0)).unwrap();
    PolicyClass::new(vec![b0, b1])
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Same point sets up to `tol` coordinatewise.
pub fn same_points(found: &[Vec<f64>], listed: &[Vec<f64>], tol: f64) -> bool {
    let near = |p: &Vec<f64>, set: &[Vec<f64>]| set.iter().any(|q| dist_inf(p, q) <= tol);
    found.iter().all(|p| near(p, listed)) && listed.iter().all(|q| near(q, found))
}
