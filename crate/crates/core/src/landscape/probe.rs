//! Numerical probes of the DP / one-shot correspondence theorems and of overparameterization.

use serde::{Deserialize, Serialize};

use super::census::polish_point;
use super::classify::{classify_point, ClassifyOptions, PointClass};
use crate::diff::{fd_hessian, stationarity_test, TOL_STAT};
use crate::dp::assumptions::check_assumptions;
use crate::dp::param::{dp_param_certify, overall, CertifyOptions, DpVerdict};
use crate::dp::{stage_scenarios, StageQ};
use crate::error::{Error, Result};
use crate::feasible::{FeasibleSet, ProductSet};
use crate::landscape::census::start_points;
use crate::model::{rollout, ControlProblem, Decision, OpenLoop, ParamPolicy, Policy, PolicyParams, Sweep};
use crate::objective::{Objective, OneShotObjective};
use crate::registry::{ProblemFlavor, RegisteredProblem};
use crate::solvers::{gradient_root_search, projected_descent, DescentOptions};
use crate::stochastic::ExpectationEngine;

/// Eigenvalue floor for positive-definiteness hypotheses.
pub const PD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, value: Option<f64>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, value, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremProbe {
    pub theorem: u8,
    pub hypotheses: Vec<Check>,
    pub conclusion: Vec<Check>,
    pub hypotheses_hold: bool,
    pub conclusion_holds: bool,
}

/// What a theorem is probed at.
#[derive(Clone, Copy)]
pub enum ProbeSubject<'a> {
    /// Input sequence (stage-major) together with the DP policy whose tail defines the Q-functions.
    Induced { inputs: &'a [f64], policy: &'a dyn Policy },
    /// Policy parameters of a registered parameterized problem.
    Params(&'a PolicyParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub tol_stat: f64,
    pub classify: ClassifyOptions,
    pub certify: CertifyOptions,
    /// Lattice starts per action axis for the single-stationary-policy probe.
    pub policy_starts: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { tol_stat: TOL_STAT, classify: ClassifyOptions::default(), certify: CertifyOptions::default(), policy_starts: 21, seed: 0 }
    }
}

fn classify_check(name: &str, obj: &dyn Objective, z: &[f64], set: &ProductSet, opts: &ProbeOptions, strict: bool) -> Result<Check> {
    let mut g = vec![0.0; z.len()];
    let f = obj.value_grad(z, &mut g);
    if !f.is_finite() {
        return Ok(Check::new(name, false, None, "objective is not finite"));
    }
    let st = stationarity_test(&g, z, set, opts.tol_stat)?;
    if !st.is_stationary {
        return Ok(Check::new(name, false, Some(st.projected_gradient_norm), "not stationary"));
    }
    let cl = classify_point(obj, z, set, &ClassifyOptions { tol_stat: opts.tol_stat, ..opts.classify })?;
    let passed = if strict { cl.class == PointClass::StrictLocalMin } else { cl.class.is_local_min() };
    Ok(Check::new(name, passed, cl.eigenvalues.first().copied(), cl.class.as_str()))
}

fn stationary_check(name: &str, obj: &dyn Objective, z: &[f64], set: &ProductSet, tol: f64) -> Result<Check> {
    let mut g = vec![0.0; z.len()];
    obj.value_grad(z, &mut g);
    let st = stationarity_test(&g, z, set, tol)?;
    Ok(Check::new(name, st.is_stationary, Some(st.projected_gradient_norm), format!("tolerance {tol:e}")))
}

fn expect_flavor(reg: &RegisteredProblem, ok: &[ProblemFlavor], theorem: u8) -> Result<()> {
    if ok.contains(&reg.flavor) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("theorem {theorem} does not apply to a {:?} problem", reg.flavor)))
    }
}

fn states_along(p: &ControlProblem, inputs: &[f64]) -> Result<Vec<Vec<f64>>> {
    if inputs.len() != p.horizon * p.action_dim {
        return Err(Error::dim("input sequence", p.horizon * p.action_dim, inputs.len()));
    }
    let noise = p.nominal_noise(0);
    let mut sw = Sweep::new(p, 0);
    sw.forward(p, &OpenLoop { inputs, action_dim: p.action_dim }, &p.x0(), &noise)?;
    Ok((0..=p.horizon).map(|k| sw.state(k).to_vec()).collect())
}

fn theta_convex(reg: &RegisteredProblem) -> Check {
    let class = reg.class.as_ref().expect("parameterized problem");
    let convex = class.stages.iter().all(|b| !matches!(b.param_set, FeasibleSet::SpectralFloor { .. }));
    Check::new("parameter set convex", convex, None, "box, polytope or free blocks")
}

/// Checks a theorem's hypotheses and its conclusion separately at `subject`.
pub fn theorem_probe(
    reg: &RegisteredProblem,
    theorem: u8,
    subject: ProbeSubject<'_>,
    engine: Option<&ExpectationEngine>,
    opts: &ProbeOptions,
) -> Result<TheoremProbe> {
    let p = &reg.problem;
    let (hypotheses, conclusion) = match (theorem, subject) {
        (1..=3, ProbeSubject::Induced { inputs, policy }) => {
            expect_flavor(reg, &[ProblemFlavor::Det], theorem)?;
            induced_probe(p, theorem, inputs, policy, opts)?
        }
        (4..=8, ProbeSubject::Params(params)) | (9, ProbeSubject::Params(params)) => {
            let flavors: &[ProblemFlavor] = if theorem <= 6 { &[ProblemFlavor::DetParam] } else { &[ProblemFlavor::StochasticParam] };
            expect_flavor(reg, flavors, theorem)?;
            param_probe(reg, theorem, params, engine, opts)?
        }
        (1..=9, _) => return Err(Error::Invalid(format!("theorem {theorem} needs a different subject kind"))),
        _ => return Err(Error::Unknown(format!("theorem {theorem}"))),
    };
    Ok(TheoremProbe {
        theorem,
        hypotheses_hold: hypotheses.iter().all(|c| c.passed),
        conclusion_holds: conclusion.iter().all(|c| c.passed),
        hypotheses,
        conclusion,
    })
}

fn induced_probe(p: &ControlProblem, theorem: u8, inputs: &[f64], policy: &dyn Policy, opts: &ProbeOptions) -> Result<(Vec<Check>, Vec<Check>)> {
    let states = states_along(p, inputs)?;
    let nu = p.action_dim;
    let aset = ProductSet::single(p.action_set.clone());
    let os = OneShotObjective::inputs(p, None)?;
    let os_set = os.feasible();
    let mut hyp = Vec::new();
    let mut con = Vec::new();
    let stage_q = |k: usize| -> Result<(StageQ<'_>, Vec<f64>)> {
        let sc = stage_scenarios(p, k, None)?;
        Ok((StageQ { problem: p, tail: policy, stage: k, state: &states[k], scenarios: sc }, inputs[k * nu..(k + 1) * nu].to_vec()))
    };
    match theorem {
        1 => {
            for k in 0..p.horizon {
                let (q, u) = stage_q(k)?;
                let h = fd_hessian(&q, &u, None, None);
                let lo = h.eigenvalues.first().copied().unwrap_or(f64::NAN);
                hyp.push(Check::new(format!("hessian of Q_{k} positive definite"), lo > PD_FLOOR, Some(lo), format!("floor {PD_FLOOR:e}")));
                hyp.push(classify_check(&format!("u_{k} local minimizer of Q_{k}"), &q, &u, &aset, opts, false)?);
            }
            con.push(classify_check("inputs are a one-shot local minimizer", &os, inputs, &os_set, opts, false)?);
        }
        2 => {
            for k in 0..p.horizon {
                let (q, u) = stage_q(k)?;
                hyp.push(stationary_check(&format!("u_{k} stationary for Q_{k}"), &q, &u, &aset, opts.tol_stat)?);
            }
            con.push(stationary_check("inputs are one-shot stationary", &os, inputs, &os_set, opts.tol_stat)?);
        }
        _ => {
            hyp.push(classify_check("inputs are a strict one-shot local minimizer", &os, inputs, &os_set, opts, true)?);
            for k in 0..p.horizon {
                let (q, u) = stage_q(k)?;
                con.push(classify_check(&format!("u_{k} local minimizer of Q_{k}"), &q, &u, &aset, opts, false)?);
                if k > 0 {
                    let mut a = vec![0.0; nu];
                    let gap = match policy.action(k, &states[k], &mut a) {
                        Ok(()) => a.iter().zip(&u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
                        Err(_) => f64::INFINITY,
                    };
                    con.push(Check::new(format!("policy reproduces u_{k}"), gap <= 1e-3, Some(gap), "tolerance 1e-3"));
                }
            }
        }
    }
    Ok((hyp, con))
}

fn param_probe(
    reg: &RegisteredProblem,
    theorem: u8,
    params: &PolicyParams,
    engine: Option<&ExpectationEngine>,
    opts: &ProbeOptions,
) -> Result<(Vec<Check>, Vec<Check>)> {
    let p = &reg.problem;
    let class = reg.class.as_ref().ok_or_else(|| Error::Invalid("problem has no policy class".into()))?;
    let samples = reg.samples.as_ref().ok_or_else(|| Error::Invalid("problem has no state samples".into()))?;
    let os = OneShotObjective::params(p, class.clone(), engine)?;
    let os_set = os.feasible();
    let z = params.flat();
    let certify = |hyp: bool| -> Result<(DpVerdict, Check)> {
        let certs = dp_param_certify(p, class, params, samples, engine, &opts.certify)?;
        let v = overall(&certs);
        let worst = certs.iter().map(|c| c.worst_gradient).fold(0.0, f64::max);
        let detail = format!("{} (certified on sample)", v.as_str());
        let passed = if hyp && matches!(theorem, 5 | 8) { v >= DpVerdict::StationaryOnly } else { v == DpVerdict::LocalMin };
        Ok((v, Check::new("DP certification", passed, Some(worst), detail)))
    };
    let mut hyp = Vec::new();
    let mut con = Vec::new();
    match theorem {
        4 | 7 => {
            hyp.push(certify(true)?.1);
            con.push(classify_check("one-shot local minimizer", &os, &z, &os_set, opts, false)?);
        }
        5 | 8 => {
            hyp.push(certify(true)?.1);
            con.push(stationary_check("one-shot stationary", &os, &z, &os_set, opts.tol_stat)?);
        }
        6 => {
            hyp.push(theta_convex(reg));
            hyp.push(classify_check("strict one-shot local minimizer", &os, &z, &os_set, opts, true)?);
            let traj = rollout(p, Decision::Params(class, params), &[])?;
            let rep = check_assumptions(&p.action_set, class, &traj.states[..p.horizon], opts.seed);
            let min_sv = rep.stages.iter().map(|s| s.singular_values.iter().copied().fold(f64::INFINITY, f64::min)).fold(f64::INFINITY, f64::min);
            hyp.push(Check::new("basis matrix full row rank along trajectory", rep.rank_holds, Some(min_sv), "threshold 1e-8·σmax"));
            let cov = rep.stages.iter().filter_map(|s| s.coverage).fold(1.0, f64::min);
            hyp.push(Check::new("parameter image covers the action set", rep.coverage_holds, Some(cov), format!("{} sampled actions per stage", rep.coverage_samples)));
            con.push(certify(false)?.1);
        }
        _ => {
            hyp.push(theta_convex(reg));
            hyp.push(classify_check("strict one-shot local minimizer", &os, &z, &os_set, opts, true)?);
            let continuous = p.noise.as_ref().is_some_and(|m| m.stages.iter().all(|l| !l.is_degenerate()));
            hyp.push(Check::new("states after stage 0 are continuous random variables", continuous, None, "non-degenerate uniform or Gaussian noise"));
            hyp.push(single_stationary_policy(p, class, params, samples, engine, opts)?);
            con.push(certify(false)?.1);
        }
    }
    Ok((hyp, con))
}

/// Counts distinct stationary actions of `u ↦ Q^π_k(x, u)` at every sampled state by dense multistart.
fn single_stationary_policy(
    p: &ControlProblem,
    class: &crate::model::PolicyClass,
    params: &PolicyParams,
    samples: &crate::registry::StateSampleSpec,
    engine: Option<&ExpectationEngine>,
    opts: &ProbeOptions,
) -> Result<Check> {
    let aset = ProductSet::single(p.action_set.clone());
    let starts = start_points(&aset, opts.policy_starts, 0, opts.seed)?;
    let tail = ParamPolicy { class, params };
    let descent = DescentOptions { max_iter: 5_000, tol_stat: 1e-5, ..DescentOptions::default() };
    let mut worst = 0usize;
    let mut where_ = String::new();
    let mut checked = 0;
    for k in 0..p.horizon {
        let sc = stage_scenarios(p, k, engine)?;
        for x in &samples.stages[k] {
            let q = StageQ { problem: p, tail: &tail, stage: k, state: x, scenarios: sc.clone() };
            let mut found: Vec<Vec<f64>> = Vec::new();
            for s in &starts {
                let mut cands = Vec::new();
                if let Ok(r) = projected_descent(&q, s, &aset, &descent) {
                    cands.push(r.point);
                }
                if let Some(z) = gradient_root_search(&q, s, &aset, opts.tol_stat, 200) {
                    cands.push(z);
                }
                for c in cands {
                    if found.iter().any(|f| dist_inf(f, &c) <= 1e-3) {
                        continue;
                    }
                    let z = polish_point(&q, &c, &aset);
                    let mut g = vec![0.0; z.len()];
                    q.value_grad(&z, &mut g);
                    if stationarity_test(&g, &z, &aset, opts.tol_stat).is_ok_and(|s| s.is_stationary)
                        && !found.iter().any(|f| dist_inf(f, &z) <= 1e-3)
                    {
                        found.push(z);
                    }
                }
            }
            checked += 1;
            if found.len() != 1 && (worst == 1 || found.len() > worst || worst == 0) {
                worst = found.len();
                where_ = format!("stage {k}, x = {x:?}: {} stationary actions", found.len());
            } else if worst == 0 {
                worst = found.len();
            }
        }
    }
    let passed = worst == 1;
    let detail = if passed { format!("one stationary action at each of {checked} sampled states") } else { where_ };
    Ok(Check::new("single stationary control policy", passed, Some(worst as f64), detail))
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSpaceProbe {
    /// Null-space dimension of `F_k(x_k*)` per stage.
    pub null_dims: Vec<usize>,
    pub base_value: f64,
    pub steps: Vec<f64>,
    /// `|J(θ + t v) − J(θ)| / max(1, |J(θ)|)` per step.
    pub changes: Vec<f64>,
    pub max_change: f64,
    pub preserved: bool,
}

/// Moves every stage along a null direction of its basis matrix on the nominal trajectory.
pub fn null_space_probe(p: &ControlProblem, class: &crate::model::PolicyClass, params: &PolicyParams) -> Result<NullSpaceProbe> {
    if p.is_stochastic() {
        return Err(Error::Invalid("null-space probe needs a deterministic trajectory".into()));
    }
    let traj = rollout(p, Decision::Params(class, params), &[])?;
    let mut dirs = Vec::new();
    let mut null_dims = Vec::new();
    for (k, b) in class.stages.iter().enumerate() {
        let (nu, m) = (b.action_dim(), b.count());
        let mut f = vec![0.0; nu * m];
        b.matrix(&traj.states[k], &mut f);
        let fm = nalgebra::DMatrix::from_row_slice(nu, m, &f);
        let svd = nalgebra::linalg::SVD::new(fm.transpose() * &fm, true, true);
        let smax = svd.singular_values.max();
        let v_t = svd.v_t.expect("requested");
        let mut dir = vec![0.0; m];
        let mut dims = 0;
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s <= 1e-12 * smax.max(1e-300) {
                dims += 1;
                if dims == 1 {
                    dir = v_t.row(i).iter().copied().collect();
                }
            }
        }
        null_dims.push(dims);
        dirs.push(dir);
    }
    let os = OneShotObjective::params(p, class.clone(), None)?;
    let base_value = os.eval(&params.flat())?;
    let mut steps = Vec::new();
    let mut changes = Vec::new();
    for t in [1e-3, -1e-3, 1e-2, -1e-2, 0.1, -0.1] {
        let moved = PolicyParams { theta: params.theta.iter().zip(&dirs).map(|(th, d)| th.iter().zip(d).map(|(a, b)| a + t * b).collect()).collect() };
        if moved.check(class, 0.0).is_err() {
            continue;
        }
        let v = os.eval(&moved.flat())?;
        steps.push(t);
        changes.push((v - base_value).abs() / base_value.abs().max(1.0));
    }
    let max_change = changes.iter().copied().fold(0.0, f64::max);
    Ok(NullSpaceProbe { preserved: !steps.is_empty() && null_dims.iter().any(|d| *d > 0) && max_change <= 1e-10, null_dims, base_value, steps, changes, max_change })
}
