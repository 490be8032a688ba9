//! Built-in problems with their known stationary points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::landscape::lqr::{generate_lqr, LqrInstance, LqrScenario};
use crate::model::{BasisKind, ControlProblem, InitialCondition, PolicyBasis, PolicyClass};
use crate::smooth::{ClosureMap, Map};
use crate::stochastic::{NoiseLaw, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemFlavor {
    Det,
    DetParam,
    StochasticParam,
}

/// Points listed for a registered problem; coordinates follow the one-shot decision vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub oneshot_minima: Vec<Vec<f64>>,
    pub oneshot_strict_minima: Vec<Vec<f64>>,
    /// Complete interior stationary set when it is known.
    pub oneshot_stationary: Vec<Vec<f64>>,
    pub global_minima: Vec<Vec<f64>>,
    pub dp_local_minima: Vec<Vec<f64>>,
    pub dp_stationary_only: Vec<Vec<f64>>,
    pub dp_rejected: Vec<Vec<f64>>,
}

/// Per-stage states at which DP conditions are checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSampleSpec {
    pub stages: Vec<Vec<Vec<f64>>>,
}

impl StateSampleSpec {
    /// `count` evenly spaced points per axis of `bx` at every stage, `x0` only at stage 0 when `fixed_start`.
    pub fn uniform(p: &ControlProblem, count: usize, fixed_start: bool) -> Result<Self> {
        let (lo, hi) = p.eval_box.bounds().ok_or_else(|| Error::Invalid("evaluation box must be bounded".into()))?;
        let pts = lattice(&lo, &hi, count);
        let mut stages = vec![pts.clone(); p.horizon];
        if fixed_start && p.horizon > 0 {
            stages[0] = vec![p.x0()];
        } else if p.horizon > 0 && p.initial.is_fixed() {
            stages[0].push(p.x0());
        }
        Ok(Self { stages })
    }

    pub fn is_empty(&self) -> bool {
        self.stages.iter().all(Vec::is_empty)
    }
}

pub(crate) fn lattice(lo: &[f64], hi: &[f64], count: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let count = count.max(1);
    let total = count.pow(d as u32);
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut z = vec![0.0; d];
            for i in (0..d).rev() {
                let j = rem % count;
                rem /= count;
                z[i] = if count == 1 { 0.5 * (lo[i] + hi[i]) } else { lo[i] + (hi[i] - lo[i]) * j as f64 / (count - 1) as f64 };
            }
            z
        })
        .collect()
}

pub struct RegisteredProblem {
    pub problem: ControlProblem,
    pub class: Option<PolicyClass>,
    pub flavor: ProblemFlavor,
    pub truth: GroundTruth,
    /// DSL text of the costs, as `(role, text)`, for cross-checks.
    pub dsl: Vec<(String, String)>,
    pub samples: Option<StateSampleSpec>,
    pub lqr: Option<LqrInstance>,
}

pub const NAMES: [&str; 7] = [
    "example1",
    "example1-affine",
    "example2",
    "detparam-counterexample",
    "stochastic-counterexample",
    "equivalence-example",
    "lqr(seed, scenario)",
];

pub fn lookup(name: &str) -> Result<RegisteredProblem> {
    let name = name.trim();
    match name {
        "example1" => Ok(example1()),
        "example1-affine" => Ok(example1_affine()),
        "example2" => Ok(example2()),
        "detparam-counterexample" => Ok(detparam()),
        "stochastic-counterexample" => Ok(stochastic()),
        "equivalence-example" => Ok(equivalence()),
        _ => {
            if let Some((seed, scenario)) = parse_lqr_name(name) {
                return Ok(lqr(&generate_lqr(seed, scenario)));
            }
            Err(Error::Unknown(format!("problem '{name}'")))
        }
    }
}

/// Accepts `lqr(7, constrained)`, `lqr(7,unconstrained)` and `lqr(7)`.
pub fn parse_lqr_name(name: &str) -> Option<(u64, LqrScenario)> {
    let inner = name.strip_prefix("lqr(")?.strip_suffix(')')?;
    let mut parts = inner.split(',').map(str::trim);
    let seed = parts.next()?.parse().ok()?;
    let scenario = match parts.next() {
        None | Some("unconstrained") | Some("a") => LqrScenario::Unconstrained,
        Some("constrained") | Some("spectral-floor") | Some("b") => LqrScenario::Constrained,
        _ => return None,
    };
    if parts.next().is_some() {
        return None;
    }
    Some((seed, scenario))
}

fn sum_dynamics(with_noise: bool) -> Map {
    let w = usize::from(with_noise);
    ClosureMap::new(vec![1, 1, w], 1, move |a, o| {
        o[0] = a[0][0] + a[1][0] + if w == 1 { a[2][0] } else { 0.0 };
    })
    .with_jacobian(|_, _, o| o[0] = 1.0)
    .into_map()
}

fn zero_stage() -> Map {
    ClosureMap::new(vec![1, 1], 1, |_, o| o[0] = 0.0).with_jacobian(|_, _, o| o[0] = 0.0).into_map()
}

fn zero_terminal() -> Map {
    ClosureMap::new(vec![1], 1, |_, o| o[0] = 0.0).with_jacobian(|_, _, o| o[0] = 0.0).into_map()
}

/// Builds a scalar stage cost from value and partial-derivative closures of `(x, u)`.
fn scalar_cost(
    f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    fx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    fu: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Map {
    ClosureMap::new(vec![1, 1], 1, move |a, o| o[0] = f(a[0][0], a[1][0]))
        .with_jacobian(move |a, wrt, o| {
            let (x, u) = (a[0][0], a[1][0]);
            o[0] = if wrt == 0 { fx(x, u) } else { fu(x, u) };
        })
        .into_map()
}

pub fn example1_c1(x: f64, u: f64) -> f64 {
    0.25 * u.powi(4) - (3.0 * x + 4.0) / 3.0 * u.powi(3) + (3.0 * x * x + 8.0 * x + 3.0) / 2.0 * u * u
        - x * (x + 1.0) * (x + 3.0) * u
        + (x.powi(4)).exp()
}

fn example1_c1_x(x: f64, u: f64) -> f64 {
    -u.powi(3) + (3.0 * x + 4.0) * u * u - (3.0 * x * x + 8.0 * x + 3.0) * u + 4.0 * x.powi(3) * x.powi(4).exp()
}

fn example1_c1_u(x: f64, u: f64) -> f64 {
    (u - x) * (u - x - 1.0) * (u - x - 3.0)
}

pub fn example2_c1(x: f64, u: f64) -> f64 {
    0.25 * u.powi(4) - x / 3.0 * u.powi(3) - x * x * u * u + x.powi(4).exp()
}

fn example2_c1_x(x: f64, u: f64) -> f64 {
    -u.powi(3) / 3.0 - 2.0 * x * u * u + 4.0 * x.powi(3) * x.powi(4).exp()
}

fn example2_c1_u(x: f64, u: f64) -> f64 {
    u * (u - 2.0 * x) * (u + x)
}

fn deterministic_two_step(name: &str, c1: Map) -> ControlProblem {
    ControlProblem {
        name: name.into(),
        horizon: 2,
        state_dim: 1,
        action_dim: 1,
        noise_dim: 0,
        dynamics: vec![sum_dynamics(false), sum_dynamics(false)],
        stage_cost: vec![zero_stage(), c1],
        terminal_cost: zero_terminal(),
        action_set: FeasibleSet::cube(1, -10.0, 10.0),
        initial: InitialCondition::Fixed(vec![0.0]),
        noise: None,
        eval_box: FeasibleSet::cube(1, -2.0, 2.0),
    }
}

fn example1() -> RegisteredProblem {
    let problem = deterministic_two_step("example1", scalar_cost(example1_c1, example1_c1_x, example1_c1_u));
    let minima = vec![vec![-0.523, -0.523], vec![-0.523, 2.477], vec![0.938, 0.938], vec![0.938, 3.938]];
    RegisteredProblem {
        problem,
        class: None,
        flavor: ProblemFlavor::Det,
        truth: GroundTruth {
            oneshot_strict_minima: minima.clone(),
            oneshot_minima: minima,
            global_minima: vec![vec![0.938, 3.938]],
            ..GroundTruth::default()
        },
        dsl: vec![
            ("c0".into(), "0".into()),
            ("c1".into(), "0.25*u0^4 - (3*x0+4)/3*u0^3 + (3*x0^2+8*x0+3)/2*u0^2 - x0*(x0+1)*(x0+3)*u0 + exp(x0^4)".into()),
            ("c2".into(), "0".into()),
            ("f0".into(), "x0 + u0".into()),
            ("f1".into(), "x0 + u0".into()),
        ],
        samples: None,
        lqr: None,
    }
}

/// Example 1 with an overparameterized affine policy `u = a x + b` per stage (`m = 2 > M = 1`).
fn example1_affine() -> RegisteredProblem {
    let mut reg = example1();
    reg.problem.name = "example1-affine".into();
    let basis = PolicyBasis::new(BasisKind::Affine1d, FeasibleSet::cube(2, -5.0, 5.0)).expect("affine basis on a box");
    reg.class = Some(PolicyClass::uniform(basis, 2));
    reg.flavor = ProblemFlavor::DetParam;
    reg.truth = GroundTruth::default();
    reg.samples = Some(StateSampleSpec::uniform(&reg.problem, 41, false).expect("bounded box"));
    reg
}

/// `(ln 8/3)^{1/4}`.
pub fn example2_root() -> f64 {
    (8.0_f64 / 3.0).ln().powf(0.25)
}

fn example2() -> RegisteredProblem {
    let problem = deterministic_two_step("example2", scalar_cost(example2_c1, example2_c1_x, example2_c1_u));
    let a = example2_root();
    let minima = vec![vec![a, 2.0 * a], vec![-a, -2.0 * a]];
    RegisteredProblem {
        problem,
        class: None,
        flavor: ProblemFlavor::Det,
        truth: GroundTruth {
            oneshot_strict_minima: minima.clone(),
            oneshot_minima: minima.clone(),
            oneshot_stationary: vec![minima[0].clone(), minima[1].clone(), vec![0.0, 0.0]],
            global_minima: minima,
            ..GroundTruth::default()
        },
        dsl: vec![
            ("c0".into(), "0".into()),
            ("c1".into(), "0.25*u0^4 - x0/3*u0^3 - x0^2*u0^2 + exp(x0^4)".into()),
            ("c2".into(), "0".into()),
            ("f0".into(), "x0 + u0".into()),
            ("f1".into(), "x0 + u0".into()),
        ],
        samples: None,
        lqr: None,
    }
}

fn detparam_c0(x: f64, u: f64) -> f64 {
    0.25 * u.powi(4) - (x * x + 2.0 * x) / 3.0 * u.powi(3) + 0.5 * (2.0 * x.powi(3) + x - 1.0) * u * u
        - (x.powi(4) - x.powi(3) + x * x - x) * u
}

fn detparam_c0_x(x: f64, u: f64) -> f64 {
    -(2.0 * x + 2.0) / 3.0 * u.powi(3) + 0.5 * (6.0 * x * x + 1.0) * u * u - (4.0 * x.powi(3) - 3.0 * x * x + 2.0 * x - 1.0) * u
}

fn detparam_c0_u(x: f64, u: f64) -> f64 {
    (u - (x * x + 1.0)) * (u - x) * (u - (x - 1.0))
}

/// The diamond `1 ≤ 2d₁ − d₂ ≤ 3`, `1 ≤ 2d₁ + d₂ ≤ 3`.
pub fn detparam_theta() -> FeasibleSet {
    FeasibleSet::polytope(
        vec![vec![2.0, -1.0], vec![-2.0, 1.0], vec![2.0, 1.0], vec![-2.0, -1.0]],
        vec![3.0, -1.0, 3.0, -1.0],
        vec![1.0, 0.0],
    )
    .expect("diamond has interior point (1, 0)")
}

fn detparam() -> RegisteredProblem {
    let problem = ControlProblem {
        name: "detparam-counterexample".into(),
        horizon: 1,
        state_dim: 1,
        action_dim: 1,
        noise_dim: 0,
        dynamics: vec![sum_dynamics(false)],
        stage_cost: vec![scalar_cost(detparam_c0, detparam_c0_x, detparam_c0_u)],
        terminal_cost: zero_terminal(),
        action_set: FeasibleSet::cube(1, -50.0, 50.0),
        initial: InitialCondition::Fixed(vec![1.0]),
        noise: None,
        eval_box: FeasibleSet::cube(1, -20.0, 20.0),
    };
    let basis = PolicyBasis::new(BasisKind::Affine1d, detparam_theta()).expect("affine basis on a 2-d set");
    let class = PolicyClass::new(vec![basis]);
    let samples = StateSampleSpec::uniform(&problem, 101, false).expect("bounded box");
    RegisteredProblem {
        problem,
        class: Some(class),
        flavor: ProblemFlavor::DetParam,
        truth: GroundTruth {
            oneshot_minima: vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            oneshot_strict_minima: vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            global_minima: vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            dp_local_minima: vec![vec![1.0, -1.0]],
            dp_rejected: vec![vec![1.0, 1.0]],
            ..GroundTruth::default()
        },
        dsl: vec![
            (
                "c0".into(),
                "0.25*u0^4 - (x0^2+2*x0)/3*u0^3 + 0.5*(2*x0^3+x0-1)*u0^2 - (x0^4-x0^3+x0^2-x0)*u0".into(),
            ),
            ("c1".into(), "0".into()),
            ("f0".into(), "x0 + u0".into()),
        ],
        samples: Some(samples),
        lqr: None,
    }
}

/// Half-width `√(5/3)` of the uniform noise, for which `E[w²] = E[w⁴] = 5/9`.
pub fn stochastic_half_width() -> f64 {
    (5.0_f64 / 3.0).sqrt()
}

fn stochastic_two_step(name: &str, c1: Map, c1_text: &str) -> (ControlProblem, PolicyClass, Vec<(String, String)>) {
    let law = NoiseLaw::uniform_symmetric(1, stochastic_half_width());
    let problem = ControlProblem {
        name: name.into(),
        horizon: 2,
        state_dim: 1,
        action_dim: 1,
        noise_dim: 1,
        dynamics: vec![sum_dynamics(true), sum_dynamics(true)],
        stage_cost: vec![zero_stage(), c1],
        terminal_cost: zero_terminal(),
        action_set: FeasibleSet::cube(1, -20.0, 20.0),
        initial: InitialCondition::Fixed(vec![0.0]),
        noise: Some(NoiseModel::iid(law, 2)),
        eval_box: FeasibleSet::cube(1, -4.0, 4.0),
    };
    let b0 = PolicyBasis::new(BasisKind::Constant { action_dim: 1 }, FeasibleSet::cube(1, -2.0, 2.0)).expect("constant basis");
    let b1 = PolicyBasis::new(BasisKind::Affine1d, FeasibleSet::cube(2, -2.0, 2.0)).expect("affine basis");
    let dsl = vec![
        ("c0".into(), "0".into()),
        ("c1".into(), c1_text.into()),
        ("c2".into(), "0".into()),
        ("f0".into(), "x0 + u0 + w0".into()),
        ("f1".into(), "x0 + u0 + w0".into()),
    ];
    (problem, PolicyClass::new(vec![b0, b1]), dsl)
}

fn stochastic() -> RegisteredProblem {
    let c1 = scalar_cost(
        |x, u| 0.25 * u.powi(4) - 0.5 * u * u + x * x,
        |x, _| 2.0 * x,
        |_, u| u * (u - 1.0) * (u + 1.0),
    );
    let (problem, class, dsl) = stochastic_two_step("stochastic-counterexample", c1, "0.25*u0^4 - 0.5*u0^2 + x0^2");
    let (a, b) = (std::f64::consts::FRAC_1_SQRT_2, 1.0 / 6.0_f64.sqrt());
    let mut stationary = vec![];
    for sa in [1.0, -1.0] {
        for sb in [1.0, -1.0] {
            stationary.push(vec![0.0, sa * a, sb * b]);
        }
    }
    let strict = vec![vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]];
    stationary.extend(strict.iter().cloned());
    stationary.push(vec![0.0, 0.0, 0.0]);
    let samples = StateSampleSpec::uniform(&problem, 41, true).expect("bounded box");
    RegisteredProblem {
        problem,
        class: Some(class),
        flavor: ProblemFlavor::StochasticParam,
        truth: GroundTruth {
            oneshot_minima: strict.clone(),
            oneshot_strict_minima: strict,
            oneshot_stationary: stationary,
            dp_local_minima: vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]],
            dp_stationary_only: vec![vec![0.0, 0.0, 0.0]],
            dp_rejected: vec![vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 0.0]],
            ..GroundTruth::default()
        },
        dsl,
        samples: Some(samples),
        lqr: None,
    }
}

fn equivalence() -> RegisteredProblem {
    let c1 = scalar_cost(
        |x, u| 0.25 * (u - x - 0.5).powi(4) + x.powi(4),
        |x, u| -(u - x - 0.5).powi(3) + 4.0 * x.powi(3),
        |x, u| (u - x - 0.5).powi(3),
    );
    let (problem, class, dsl) = stochastic_two_step("equivalence-example", c1, "0.25*(u0 - x0 - 0.5)^4 + x0^4");
    let point = vec![0.0, 1.0, 0.5];
    let samples = StateSampleSpec::uniform(&problem, 41, true).expect("bounded box");
    RegisteredProblem {
        problem,
        class: Some(class),
        flavor: ProblemFlavor::StochasticParam,
        truth: GroundTruth {
            oneshot_minima: vec![point.clone()],
            oneshot_strict_minima: vec![point.clone()],
            oneshot_stationary: vec![point.clone()],
            global_minima: vec![point.clone()],
            dp_local_minima: vec![point],
            ..GroundTruth::default()
        },
        dsl,
        samples: Some(samples),
        lqr: None,
    }
}

/// LQR instance as a generic parameterized problem with linear gains `u = K x`.
pub fn lqr(inst: &LqrInstance) -> RegisteredProblem {
    let (nx, nu, n) = (inst.state_dim(), inst.action_dim(), inst.horizon());
    let dynamics = (0..n)
        .map(|k| -> Map { std::sync::Arc::new(crate::smooth::LinearDynamics::new(inst.a[k].clone(), inst.b[k].clone(), None)) })
        .collect();
    let stage_cost = (0..n)
        .map(|k| -> Map { std::sync::Arc::new(crate::smooth::QuadraticCost::stage(inst.q[k].clone(), inst.r[k].clone())) })
        .collect();
    let problem = ControlProblem {
        name: inst.name(),
        horizon: n,
        state_dim: nx,
        action_dim: nu,
        noise_dim: 0,
        dynamics,
        stage_cost,
        terminal_cost: std::sync::Arc::new(crate::smooth::QuadraticCost::terminal(inst.q[n].clone())),
        action_set: FeasibleSet::Free { dim: nu },
        initial: InitialCondition::Gaussian { mean: inst.mean.clone(), factor: inst.v.clone() },
        noise: None,
        eval_box: FeasibleSet::cube(nx, -1000.0, 1000.0),
    };
    let class = PolicyClass::new(inst.param_sets().into_iter().map(|s| {
        PolicyBasis::new(BasisKind::Linear { action_dim: nu, state_dim: nx }, s).expect("linear basis")
    }).collect());
    RegisteredProblem {
        problem,
        class: Some(class),
        flavor: ProblemFlavor::StochasticParam,
        truth: GroundTruth::default(),
        dsl: vec![],
        samples: None,
        lqr: Some(inst.clone()),
    }
}

