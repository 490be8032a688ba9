//! Certification of parameterized DP local minimizers and a backward coordinate solve.

use serde::{Deserialize, Serialize};

use super::{stage_scenarios, StageTheta};
use crate::diff::{stationarity_test, TOL_STAT};
use crate::error::{Error, Result};
use crate::feasible::ProductSet;
use crate::landscape::census::polish_point;
use crate::landscape::classify::{classify_point, ClassifyOptions, PointClass};
use crate::model::{ControlProblem, PolicyClass, PolicyParams};
use crate::objective::Objective;
use crate::registry::StateSampleSpec;
use crate::solvers::{projected_descent, DescentOptions};
use crate::stochastic::ExpectationEngine;

/// Ordered so that the stage verdict is the minimum over sampled states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpVerdict {
    Neither,
    StationaryOnly,
    LocalMin,
}

impl DpVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            DpVerdict::Neither => "neither",
            DpVerdict::StationaryOnly => "stationary-only",
            DpVerdict::LocalMin => "local-min",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub state: Vec<f64>,
    pub verdict: DpVerdict,
    pub projected_gradient_norm: f64,
    pub class: Option<PointClass>,
}

/// Verdict of one stage, certified on the sampled states only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCertificate {
    pub stage: usize,
    pub verdict: DpVerdict,
    pub samples: usize,
    pub tol_stat: f64,
    pub worst_gradient: f64,
    /// States whose verdict is below `LocalMin`.
    pub failures: Vec<SampleVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub tol_stat: f64,
    pub classify: ClassifyOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { tol_stat: TOL_STAT, classify: ClassifyOptions { probes: 200, ..ClassifyOptions::default() } }
    }
}

pub fn overall(certs: &[StageCertificate]) -> DpVerdict {
    certs.iter().map(|c| c.verdict).min().unwrap_or(DpVerdict::Neither)
}

fn check_class(p: &ControlProblem, class: &PolicyClass, params: &PolicyParams) -> Result<()> {
    if class.stages.len() != p.horizon {
        return Err(Error::dim("policy class stages", p.horizon, class.stages.len()));
    }
    params.check(class, 1e-9)
}

/// Per-stage check that `θ_k` is a local minimizer (or stationary point) of `θ ↦ Q^π_k(x, μ_θ(x))` at every sampled `x`.
pub fn dp_param_certify(
    p: &ControlProblem,
    class: &PolicyClass,
    params: &PolicyParams,
    samples: &StateSampleSpec,
    engine: Option<&ExpectationEngine>,
    opts: &CertifyOptions,
) -> Result<Vec<StageCertificate>> {
    check_class(p, class, params)?;
    if samples.stages.len() != p.horizon || samples.stages.iter().any(Vec::is_empty) {
        return Err(Error::Invalid("state sample set is empty for at least one stage".into()));
    }
    let mut out = Vec::with_capacity(p.horizon);
    for k in 0..p.horizon {
        let sc = stage_scenarios(p, k, engine)?;
        let set = ProductSet::single(class.stages[k].param_set.clone());
        let theta = &params.theta[k];
        let mut verdict = DpVerdict::LocalMin;
        let mut worst: f64 = 0.0;
        let mut failures = Vec::new();
        for x in &samples.stages[k] {
            if x.len() != p.state_dim {
                return Err(Error::dim("sampled state", p.state_dim, x.len()));
            }
            let states = [x.clone()];
            let obj = StageTheta { problem: p, class, params, stage: k, states: &states, scenarios: sc.clone() };
            let mut g = vec![0.0; theta.len()];
            let f = obj.value_grad(theta, &mut g);
            if !f.is_finite() {
                return Err(Error::NonFinite { stage: k, what: format!("Q-function at sampled state {x:?}") });
            }
            let st = stationarity_test(&g, theta, &set, opts.tol_stat)?;
            worst = worst.max(st.projected_gradient_norm);
            let (v, class_) = if !st.is_stationary {
                (DpVerdict::Neither, None)
            } else {
                let cl = classify_point(&obj, theta, &set, &ClassifyOptions { tol_stat: opts.tol_stat, ..opts.classify })?;
                let v = if cl.class.is_local_min() { DpVerdict::LocalMin } else { DpVerdict::StationaryOnly };
                (v, Some(cl.class))
            };
            verdict = verdict.min(v);
            if v != DpVerdict::LocalMin {
                failures.push(SampleVerdict { state: x.clone(), verdict: v, projected_gradient_norm: st.projected_gradient_norm, class: class_ });
            }
        }
        out.push(StageCertificate { stage: k, verdict, samples: samples.stages[k].len(), tol_stat: opts.tol_stat, worst_gradient: worst, failures });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSolveOptions {
    pub max_sweeps: usize,
    pub tol_change: f64,
    pub descent: DescentOptions,
}

impl Default for ParamSolveOptions {
    fn default() -> Self {
        Self { max_sweeps: 50, tol_change: 1e-9, descent: DescentOptions { max_iter: 20_000, ..DescentOptions::default() } }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDpRun {
    pub params: PolicyParams,
    pub sweeps: usize,
    pub converged: bool,
    pub last_change: f64,
    /// Sample-averaged `Q^π_k` at the final parameters.
    pub stage_values: Vec<f64>,
}

/// Backward sweeps `n-1 → 0`, each stage minimizing its sample-averaged Q with the other stages fixed.
/// Each stage result is Newton-polished.
pub fn dp_param_solve(
    p: &ControlProblem,
    class: &PolicyClass,
    start: &PolicyParams,
    samples: &StateSampleSpec,
    engine: Option<&ExpectationEngine>,
    opts: &ParamSolveOptions,
) -> Result<ParamDpRun> {
    check_class(p, class, start)?;
    if samples.stages.len() != p.horizon || samples.stages.iter().any(Vec::is_empty) {
        return Err(Error::Invalid("state sample set is empty for at least one stage".into()));
    }
    let scen: Vec<_> = (0..p.horizon).map(|k| stage_scenarios(p, k, engine)).collect::<Result<_>>()?;
    let mut params = start.clone();
    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    while sweeps < opts.max_sweeps && last_change >= opts.tol_change {
        sweeps += 1;
        last_change = 0.0;
        for k in (0..p.horizon).rev() {
            let set = ProductSet::single(class.stages[k].param_set.clone());
            let frozen = params.clone();
            let obj = StageTheta { problem: p, class, params: &frozen, stage: k, states: &samples.stages[k], scenarios: scen[k].clone() };
            let r = projected_descent(&obj, &params.theta[k], &set, &opts.descent)?;
            let point = polish_point(&obj, &r.point, &set);
            let change = point.iter().zip(&params.theta[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            last_change = last_change.max(change);
            params.theta[k] = point;
        }
    }
    let stage_values = (0..p.horizon)
        .map(|k| {
            let obj = StageTheta { problem: p, class, params: &params, stage: k, states: &samples.stages[k], scenarios: scen[k].clone() };
            obj.value(&params.theta[k])
        })
        .collect();
    Ok(ParamDpRun { converged: last_change < opts.tol_change, params, sweeps, last_change, stage_values })
}
