//! Control problems, policies, rollouts and cost-to-go / Q / J evaluation.

mod policy;
mod rollout;
mod tabular;

pub use policy::{
    BasisKind, OpenLoop, Override, ParamPolicy, Policy, PolicyBasis, PolicyClass, PolicyParams,
};
pub use rollout::{cost_to_go, j_function, q_function, q_function_theta, rollout, rollout_from, Decision, Sweep, Trajectory};
pub use tabular::{Grid, NodeActions, TabularPolicy, TabularStage};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::feasible::FeasibleSet;
use crate::smooth::Map;
use crate::stochastic::NoiseModel;

/// Law of the initial state.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Fixed(Vec<f64>),
    /// `x0 = mean + factor · z`, `z ~ N(0, I)`.
    Gaussian { mean: Vec<f64>, factor: DMatrix<f64> },
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
}

impl InitialCondition {
    pub fn is_fixed(&self) -> bool {
        matches!(self, InitialCondition::Fixed(_))
    }

    /// Fixed state, or the mean of a random one.
    pub fn nominal(&self) -> Vec<f64> {
        match self {
            InitialCondition::Fixed(x) => x.clone(),
            InitialCondition::Gaussian { mean, .. } => mean.clone(),
            InitialCondition::Uniform { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()
            }
        }
    }
}

/// Finite-horizon problem `min Σ c_k(x_k, u_k) + c_n(x_n)`, `x_{k+1} = f_k(x_k, u_k, w_k)`.
#[derive(Clone)]
pub struct ControlProblem {
    pub name: String,
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub noise_dim: usize,
    /// Arguments `(x, u, w)`.
    pub dynamics: Vec<Map>,
    /// Arguments `(x, u)`.
    pub stage_cost: Vec<Map>,
    /// Argument `(x)`.
    pub terminal_cost: Map,
    pub action_set: FeasibleSet,
    pub initial: InitialCondition,
    pub noise: Option<NoiseModel>,
    /// Compact box on which "for all x" conditions are checked.
    pub eval_box: FeasibleSet,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("state_dim", &self.state_dim)
            .field("action_dim", &self.action_dim)
            .field("noise_dim", &self.noise_dim)
            .field("action_set", &self.action_set)
            .field("initial", &self.initial)
            .finish()
    }
}

impl ControlProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.horizon;
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Invalid("state and action dimensions must be positive".into()));
        }
        if self.dynamics.len() != n {
            return Err(Error::dim("dynamics count", n, self.dynamics.len()));
        }
        if self.stage_cost.len() != n {
            return Err(Error::dim("stage cost count", n, self.stage_cost.len()));
        }
        for f in &self.dynamics {
            let d = f.arg_dims();
            if d.len() != 3 || d[0] != self.state_dim || d[1] != self.action_dim || d[2] != self.noise_dim {
                return Err(Error::Invalid(format!("dynamics signature {d:?} does not match problem")));
            }
            if f.out_dim() != self.state_dim {
                return Err(Error::dim("dynamics output", self.state_dim, f.out_dim()));
            }
        }
        for c in &self.stage_cost {
            let d = c.arg_dims();
            if d != [self.state_dim, self.action_dim] || c.out_dim() != 1 {
                return Err(Error::Invalid(format!("stage cost signature {d:?} does not match problem")));
            }
        }
        if self.terminal_cost.arg_dims() != [self.state_dim] || self.terminal_cost.out_dim() != 1 {
            return Err(Error::Invalid("terminal cost signature does not match problem".into()));
        }
        if self.action_set.dim() != self.action_dim {
            return Err(Error::dim("action set", self.action_dim, self.action_set.dim()));
        }
        if self.eval_box.dim() != self.state_dim {
            return Err(Error::dim("evaluation box", self.state_dim, self.eval_box.dim()));
        }
        match (&self.noise, self.noise_dim) {
            (None, 0) => {}
            (Some(m), w) => m.validate(n, w)?,
            (None, _) => return Err(Error::Invalid("noise_dim > 0 requires a noise model".into())),
        }
        match &self.initial {
            InitialCondition::Fixed(x) if x.len() != self.state_dim => {
                return Err(Error::dim("initial state", self.state_dim, x.len()))
            }
            InitialCondition::Gaussian { mean, factor }
                if mean.len() != self.state_dim || factor.nrows() != self.state_dim =>
            {
                return Err(Error::dim("initial mean", self.state_dim, mean.len()))
            }
            InitialCondition::Uniform { lower, upper }
                if lower.len() != self.state_dim || upper.len() != self.state_dim =>
            {
                return Err(Error::dim("initial bounds", self.state_dim, lower.len()))
            }
            _ => {}
        }
        Ok(())
    }

    /// True when expectations are needed (random noise or random initial state).
    pub fn is_stochastic(&self) -> bool {
        let noisy = self
            .noise
            .as_ref()
            .is_some_and(|m| !m.is_degenerate());
        noisy || !self.initial.is_fixed()
    }

    pub fn x0(&self) -> Vec<f64> {
        self.initial.nominal()
    }
}
