//! Dynamic programming with local search: tabular, parametric and Riccati.

pub mod assumptions;
pub mod param;
pub mod riccati;
pub mod tabular;

use std::sync::Arc;

use crate::error::Result;
use crate::model::{ControlProblem, Override, ParamPolicy, Policy, PolicyClass, PolicyParams, Sweep};
use crate::objective::Objective;
use crate::stochastic::{ExpectationEngine, ScenarioSet};

pub use assumptions::{check_assumptions, check_basis_independence, AssumptionReport, IndependenceReport};
pub use param::{dp_param_certify, dp_param_solve, CertifyOptions, DpVerdict, ParamDpRun, ParamSolveOptions, StageCertificate};
pub use riccati::{riccati_solve, RiccatiSolution};
pub use tabular::{dp_tabular, Anchor, BranchStrategy, InducedInput, TabularDpRun, TabularOptions};

/// Noise scenarios over `w_k..w_{n-1}`; a single nominal one when the tail is noise-free.
pub fn stage_scenarios(p: &ControlProblem, k: usize, engine: Option<&ExpectationEngine>) -> Result<Arc<ScenarioSet>> {
    let noisy = p.noise.as_ref().is_some_and(|m| !m.is_degenerate_from(k));
    if !noisy {
        return Ok(Arc::new(ScenarioSet::single(p, k, vec![0.0; p.state_dim])));
    }
    engine.ok_or(crate::error::Error::MissingEngine)?.noise_scenarios(p, k)
}

/// `u ↦ Q^π_k(x, u)` with gradient from the adjoint sweep.
pub struct StageQ<'a> {
    pub problem: &'a ControlProblem,
    pub tail: &'a dyn Policy,
    pub stage: usize,
    pub state: &'a [f64],
    pub scenarios: Arc<ScenarioSet>,
}

impl StageQ<'_> {
    fn eval(&self, u: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let p = self.problem;
        let pol = Override { stage: self.stage, action: u, inner: self.tail };
        let mut sw = Sweep::new(p, self.stage);
        let mut total = 0.0;
        let mut g_acc = vec![0.0; p.action_dim];
        let want = grad.is_some();
        for i in 0..self.scenarios.len() {
            let w = self.scenarios.weights[i];
            let noise = self.scenarios.noise(i);
            total += w * sw.forward(p, &pol, self.state, noise)?;
            if want {
                sw.backward(p, &pol, noise)?;
                for (a, v) in g_acc.iter_mut().zip(&sw.gu[..p.action_dim]) {
                    *a += w * v;
                }
            }
        }
        if let Some(g) = grad {
            g.copy_from_slice(&g_acc);
        }
        Ok(total)
    }
}

impl Objective for StageQ<'_> {
    fn dim(&self) -> usize {
        self.problem.action_dim
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.eval(z, None).unwrap_or(f64::INFINITY)
    }
    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> f64 {
        match self.eval(z, Some(g)) {
            Ok(v) => v,
            Err(_) => {
                g.fill(f64::NAN);
                f64::INFINITY
            }
        }
    }
}

/// `θ_k ↦ mean_x Q^π_k(x, μ_{θ_k}(x))` over a set of states, other stages held at `params`.
pub struct StageTheta<'a> {
    pub problem: &'a ControlProblem,
    pub class: &'a PolicyClass,
    pub params: &'a PolicyParams,
    pub stage: usize,
    pub states: &'a [Vec<f64>],
    pub scenarios: Arc<ScenarioSet>,
}

impl StageTheta<'_> {
    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let p = self.problem;
        let k = self.stage;
        let basis = &self.class.stages[k];
        let m = basis.count();
        let nu = p.action_dim;
        let mut params = self.params.clone();
        params.theta[k] = theta.to_vec();
        let pol = ParamPolicy { class: self.class, params: &params };
        let mut sw = Sweep::new(p, k);
        let mut fmat = vec![0.0; nu * m];
        let mut g_acc = vec![0.0; m];
        let want = grad.is_some();
        let mut total = 0.0;
        let scale = 1.0 / self.states.len() as f64;
        for x in self.states {
            if want {
                basis.matrix(x, &mut fmat);
            }
            for i in 0..self.scenarios.len() {
                let w = self.scenarios.weights[i] * scale;
                let noise = self.scenarios.noise(i);
                total += w * sw.forward(p, &pol, x, noise)?;
                if want {
                    sw.backward(p, &pol, noise)?;
                    for (j, gj) in g_acc.iter_mut().enumerate() {
                        *gj += w * (0..nu).map(|a| fmat[a * m + j] * sw.gu[a]).sum::<f64>();
                    }
                }
            }
        }
        if let Some(g) = grad {
            g.copy_from_slice(&g_acc);
        }
        Ok(total)
    }
}

impl Objective for StageTheta<'_> {
    fn dim(&self) -> usize {
        self.class.stages[self.stage].count()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.eval(z, None).unwrap_or(f64::INFINITY)
    }
    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> f64 {
        match self.eval(z, Some(g)) {
            Ok(v) => v,
            Err(_) => {
                g.fill(f64::NAN);
                f64::INFINITY
            }
        }
    }
}
