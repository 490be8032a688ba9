//! Scalar objectives over flat decision vectors.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::feasible::ProductSet;
use crate::model::{ControlProblem, OpenLoop, ParamPolicy, PolicyClass, Sweep};
use crate::stochastic::{objective_scenarios, ExpectationEngine, ScenarioSet};

/// Smooth objective with gradient; failures evaluate to `+∞`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;
    /// Writes the gradient into `g` and returns the value.
    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> f64;
}

/// Objective built from closures.
pub struct FnObjective<F, G> {
    pub dim: usize,
    pub f: F,
    pub g: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }
    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> f64 {
        (self.g)(z, g);
        (self.f)(z)
    }
}

/// `α · f`.
pub struct Scaled<'a> {
    pub alpha: f64,
    pub inner: &'a dyn Objective,
}

impl Objective for Scaled<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.alpha * self.inner.value(z)
    }
    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> f64 {
        let v = self.inner.value_grad(z, g);
        for x in g.iter_mut() {
            *x *= self.alpha;
        }
        self.alpha * v
    }
}

/// Decision variables of a one-shot problem.
#[derive(Debug, Clone)]
pub enum Flavor {
    /// Open-loop inputs `u_0..u_{n-1}`.
    Inputs,
    /// Parameters of a per-stage linear-basis class.
    Params(PolicyClass),
}

/// The one-shot objective `z ↦ E[Σ c_k + c_n]`, evaluated on a frozen scenario set.
#[derive(Debug, Clone)]
pub struct OneShotObjective<'a> {
    pub problem: &'a ControlProblem,
    pub flavor: Flavor,
    pub scenarios: Arc<ScenarioSet>,
}

impl<'a> OneShotObjective<'a> {
    pub fn inputs(problem: &'a ControlProblem, engine: Option<&ExpectationEngine>) -> Result<Self> {
        problem.validate()?;
        Ok(Self { problem, flavor: Flavor::Inputs, scenarios: objective_scenarios(problem, engine)? })
    }

    pub fn params(problem: &'a ControlProblem, class: PolicyClass, engine: Option<&ExpectationEngine>) -> Result<Self> {
        problem.validate()?;
        if class.stages.len() != problem.horizon {
            return Err(Error::dim("policy class stages", problem.horizon, class.stages.len()));
        }
        for b in &class.stages {
            if b.action_dim() != problem.action_dim {
                return Err(Error::dim("basis action dimension", problem.action_dim, b.action_dim()));
            }
        }
        Ok(Self { problem, flavor: Flavor::Params(class), scenarios: objective_scenarios(problem, engine)? })
    }

    pub fn class(&self) -> Option<&PolicyClass> {
        match &self.flavor {
            Flavor::Params(c) => Some(c),
            Flavor::Inputs => None,
        }
    }

    /// Per-stage block sizes of the decision vector.
    pub fn block_dims(&self) -> Vec<usize> {
        match &self.flavor {
            Flavor::Inputs => vec![self.problem.action_dim; self.problem.horizon],
            Flavor::Params(c) => c.counts(),
        }
    }

    pub fn feasible(&self) -> ProductSet {
        match &self.flavor {
            Flavor::Inputs => ProductSet::new(vec![self.problem.action_set.clone(); self.problem.horizon]),
            Flavor::Params(c) => c.param_set(),
        }
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        let d: usize = self.block_dims().iter().sum();
        if z.len() != d {
            return Err(Error::dim("decision vector", d, z.len()));
        }
        Ok(())
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.check(z)?;
        let p = self.problem;
        let mut sw = Sweep::new(p, 0);
        let sc = &*self.scenarios;
        let mut acc = 0.0;
        match &self.flavor {
            Flavor::Inputs => {
                let pol = OpenLoop { inputs: z, action_dim: p.action_dim };
                for i in 0..sc.len() {
                    acc += sc.weights[i] * sw.forward(p, &pol, sc.x0(i), sc.noise(i))?;
                }
            }
            Flavor::Params(class) => {
                let params = class.split(z)?;
                let pol = ParamPolicy { class, params: &params };
                for i in 0..sc.len() {
                    acc += sc.weights[i] * sw.forward(p, &pol, sc.x0(i), sc.noise(i))?;
                }
            }
        }
        Ok(acc)
    }

    /// Adjoint gradient averaged over scenarios.
    pub fn eval_grad(&self, z: &[f64], g: &mut [f64]) -> Result<f64> {
        self.check(z)?;
        let p = self.problem;
        let (nx, nu) = (p.state_dim, p.action_dim);
        let mut sw = Sweep::new(p, 0);
        let sc = &*self.scenarios;
        g.fill(0.0);
        let mut acc = 0.0;
        match &self.flavor {
            Flavor::Inputs => {
                let pol = OpenLoop { inputs: z, action_dim: nu };
                for i in 0..sc.len() {
                    let w = sc.weights[i];
                    acc += w * sw.forward(p, &pol, sc.x0(i), sc.noise(i))?;
                    sw.backward(p, &pol, sc.noise(i))?;
                    for (gi, v) in g.iter_mut().zip(&sw.gu) {
                        *gi += w * v;
                    }
                }
            }
            Flavor::Params(class) => {
                let params = class.split(z)?;
                let pol = ParamPolicy { class, params: &params };
                let counts = class.counts();
                let mmax = counts.iter().copied().max().unwrap_or(0);
                let mut f = vec![0.0; nu * mmax];
                for i in 0..sc.len() {
                    let w = sc.weights[i];
                    acc += w * sw.forward(p, &pol, sc.x0(i), sc.noise(i))?;
                    sw.backward(p, &pol, sc.noise(i))?;
                    let mut off = 0;
                    for (k, b) in class.stages.iter().enumerate() {
                        let m = counts[k];
                        b.matrix(&sw.xs[k * nx..(k + 1) * nx], &mut f[..nu * m]);
                        let gu = &sw.gu[k * nu..(k + 1) * nu];
                        for j in 0..m {
                            let mut s = 0.0;
                            for a in 0..nu {
                                s += f[a * m + j] * gu[a];
                            }
                            g[off + j] += w * s;
                        }
                        off += m;
                    }
                }
            }
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: 0, what: "gradient".into() });
        }
        Ok(acc)
    }
}

impl Objective for OneShotObjective<'_> {
    fn dim(&self) -> usize {
        self.block_dims().iter().sum()
    }
    fn value(&self, z: &[f64]) -> f64 {
        self.eval(z).unwrap_or(f64::INFINITY)
    }
    fn value_grad(&self, z: &[f64], g: &mut [f64]) -> f64 {
        match self.eval_grad(z, g) {
            Ok(v) => v,
            Err(_) => {
                g.fill(f64::NAN);
                f64::INFINITY
            }
        }
    }
}
