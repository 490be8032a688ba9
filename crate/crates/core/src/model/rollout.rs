use super::policy::{OpenLoop, Override, ParamPolicy, Policy, PolicyClass, PolicyParams};
use super::ControlProblem;
use crate::error::{Error, Result};
use crate::stochastic::ExpectationEngine;

/// States, inputs, noises and costs of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub noises: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub total_cost: f64,
}

/// Reusable buffers for a forward pass from stage `k0` and the matching adjoint sweep.
#[derive(Debug, Clone)]
pub struct Sweep {
    k0: usize,
    len: usize,
    nx: usize,
    nu: usize,
    nw: usize,
    /// States `x_{k0}..x_n`, flat.
    pub xs: Vec<f64>,
    /// Actions `u_{k0}..u_{n-1}`, flat.
    pub us: Vec<f64>,
    pub costs: Vec<f64>,
    pub terminal: f64,
    pub total: f64,
    /// Gradient of the total cost with respect to each stage action, flat.
    pub gu: Vec<f64>,
    /// Costate at `k0`, i.e. `∇_x` of the cost-to-go under the policy.
    pub lam0: Vec<f64>,
    jx: Vec<f64>,
    ju: Vec<f64>,
    cgx: Vec<f64>,
    cgu: Vec<f64>,
    dmu: Vec<f64>,
    lam: Vec<f64>,
    lam_next: Vec<f64>,
}

impl Sweep {
    pub fn new(p: &ControlProblem, k0: usize) -> Self {
        let (nx, nu, nw) = (p.state_dim, p.action_dim, p.noise_dim);
        let len = p.horizon - k0;
        Self {
            k0,
            len,
            nx,
            nu,
            nw,
            xs: vec![0.0; (len + 1) * nx],
            us: vec![0.0; len * nu],
            costs: vec![0.0; len],
            terminal: 0.0,
            total: 0.0,
            gu: vec![0.0; len * nu],
            lam0: vec![0.0; nx],
            jx: vec![0.0; nx * nx],
            ju: vec![0.0; nx * nu],
            cgx: vec![0.0; nx],
            cgu: vec![0.0; nu],
            dmu: vec![0.0; nu * nx],
            lam: vec![0.0; nx],
            lam_next: vec![0.0; nx],
        }
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.xs[i * self.nx..(i + 1) * self.nx]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.us[i * self.nu..(i + 1) * self.nu]
    }

    /// Runs stages `k0..n` from `x`; `noise` holds `(n-k0)·W` entries.
    pub fn forward(&mut self, p: &ControlProblem, policy: &dyn Policy, x: &[f64], noise: &[f64]) -> Result<f64> {
        let (nx, nu, nw) = (self.nx, self.nu, self.nw);
        self.xs[..nx].copy_from_slice(x);
        let mut total = 0.0;
        for i in 0..self.len {
            let k = self.k0 + i;
            let (head, tail) = self.xs.split_at_mut((i + 1) * nx);
            let xk = &head[i * nx..];
            let uk = &mut self.us[i * nu..(i + 1) * nu];
            policy.action(k, xk, uk)?;
            let w = &noise[i * nw..(i + 1) * nw];
            let c = p.stage_cost[k].value(&[xk, uk]);
            let next = &mut tail[..nx];
            p.dynamics[k].eval(&[xk, uk, w], next);
            if !c.is_finite() || next.iter().any(|v| !v.is_finite()) || uk.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage: k,
                    what: "stage cost or dynamics".into(),
                });
            }
            self.costs[i] = c;
            total += c;
        }
        let xn = &self.xs[self.len * nx..];
        self.terminal = p.terminal_cost.value(&[xn]);
        if !self.terminal.is_finite() {
            return Err(Error::NonFinite {
                stage: p.horizon,
                what: "terminal cost".into(),
            });
        }
        total += self.terminal;
        self.total = total;
        Ok(total)
    }

    /// Adjoint sweep over the last forward pass; fills `gu` and `lam0`.
    pub fn backward(&mut self, p: &ControlProblem, policy: &dyn Policy, noise: &[f64]) -> Result<()> {
        let (nx, nu, nw) = (self.nx, self.nu, self.nw);
        p.terminal_cost.jacobian(&[&self.xs[self.len * nx..]], 0, &mut self.lam);
        for i in (0..self.len).rev() {
            let k = self.k0 + i;
            let xk = &self.xs[i * nx..(i + 1) * nx];
            let uk = &self.us[i * nu..(i + 1) * nu];
            let w = &noise[i * nw..(i + 1) * nw];
            p.stage_cost[k].jacobian(&[xk, uk], 0, &mut self.cgx);
            p.stage_cost[k].jacobian(&[xk, uk], 1, &mut self.cgu);
            p.dynamics[k].jacobian(&[xk, uk, w], 0, &mut self.jx);
            p.dynamics[k].jacobian(&[xk, uk, w], 1, &mut self.ju);
            policy.action_jacobian(k, xk, &mut self.dmu)?;
            let gu = &mut self.gu[i * nu..(i + 1) * nu];
            for b in 0..nu {
                let mut s = self.cgu[b];
                for a in 0..nx {
                    s += self.ju[a * nu + b] * self.lam[a];
                }
                gu[b] = s;
            }
            for j in 0..nx {
                let mut s = self.cgx[j];
                for a in 0..nx {
                    s += self.jx[a * nx + j] * self.lam[a];
                }
                for b in 0..nu {
                    s += self.dmu[b * nx + j] * gu[b];
                }
                self.lam_next[j] = s;
            }
            std::mem::swap(&mut self.lam, &mut self.lam_next);
            if self.lam.iter().chain(gu.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    stage: k,
                    what: "adjoint".into(),
                });
            }
        }
        self.lam0.copy_from_slice(&self.lam);
        Ok(())
    }

    pub fn trajectory(&self, noise: &[f64]) -> Trajectory {
        let (nx, nu, nw) = (self.nx, self.nu, self.nw);
        Trajectory {
            states: self.xs.chunks(nx).map(<[f64]>::to_vec).collect(),
            inputs: if nu == 0 { vec![] } else { self.us.chunks(nu).map(<[f64]>::to_vec).collect() },
            noises: if nw == 0 {
                vec![]
            } else {
                noise.chunks(nw).map(<[f64]>::to_vec).collect()
            },
            stage_costs: self.costs.clone(),
            terminal_cost: self.terminal,
            total_cost: self.total,
        }
    }
}

impl ControlProblem {
    /// Noise used when no draw is supplied: the law's centre, or empty.
    pub fn nominal_noise(&self, k0: usize) -> Vec<f64> {
        match &self.noise {
            Some(m) if self.noise_dim > 0 => (k0..self.horizon).flat_map(|k| m.stages[k].center()).collect(),
            _ => vec![0.0; (self.horizon - k0) * self.noise_dim],
        }
    }

    fn resolve_noise(&self, k0: usize, draw: &[f64]) -> Result<Vec<f64>> {
        let need = (self.horizon - k0) * self.noise_dim;
        if self.noise_dim == 0 || draw.is_empty() {
            return Ok(self.nominal_noise(k0));
        }
        if draw.len() != need {
            return Err(Error::dim("noise draw", need, draw.len()));
        }
        Ok(draw.to_vec())
    }
}

/// Decision variables accepted by [`rollout`].
#[derive(Clone, Copy)]
pub enum Decision<'a> {
    Inputs(&'a [f64]),
    Params(&'a PolicyClass, &'a PolicyParams),
}

fn check_inputs(p: &ControlProblem, stages: usize, inputs: &[f64]) -> Result<()> {
    if inputs.len() != stages * p.action_dim {
        return Err(Error::dim("input sequence", stages * p.action_dim, inputs.len()));
    }
    Ok(())
}

fn check_params(p: &ControlProblem, class: &PolicyClass, params: &PolicyParams) -> Result<()> {
    if class.stages.len() != p.horizon {
        return Err(Error::dim("policy class stages", p.horizon, class.stages.len()));
    }
    for b in &class.stages {
        if b.action_dim() != p.action_dim {
            return Err(Error::dim("basis action dimension", p.action_dim, b.action_dim()));
        }
    }
    params.check(class, f64::INFINITY)
}

/// Rollout from the nominal initial state with a given decision and noise draw.
pub fn rollout(p: &ControlProblem, decision: Decision<'_>, noise: &[f64]) -> Result<Trajectory> {
    rollout_from(p, decision, &p.x0(), noise)
}

pub fn rollout_from(p: &ControlProblem, decision: Decision<'_>, x0: &[f64], noise: &[f64]) -> Result<Trajectory> {
    if x0.len() != p.state_dim {
        return Err(Error::dim("initial state", p.state_dim, x0.len()));
    }
    let noise = p.resolve_noise(0, noise)?;
    let mut sw = Sweep::new(p, 0);
    match decision {
        Decision::Inputs(u) => {
            check_inputs(p, p.horizon, u)?;
            let pol = OpenLoop { inputs: u, action_dim: p.action_dim };
            sw.forward(p, &pol, x0, &noise)?;
        }
        Decision::Params(class, params) => {
            check_params(p, class, params)?;
            sw.forward(p, &ParamPolicy { class, params }, x0, &noise)?;
        }
    }
    Ok(sw.trajectory(&noise))
}

/// Cost-to-go `C(x; u_k..u_{n-1})` on the nominal noise.
pub fn cost_to_go(p: &ControlProblem, x: &[f64], tail: &[f64]) -> Result<f64> {
    if tail.len() % p.action_dim != 0 || tail.len() / p.action_dim > p.horizon {
        return Err(Error::dim("input tail", p.action_dim, tail.len()));
    }
    let k = p.horizon - tail.len() / p.action_dim;
    let mut full = vec![0.0; p.horizon * p.action_dim];
    full[k * p.action_dim..].copy_from_slice(tail);
    let noise = p.nominal_noise(k);
    let mut sw = Sweep::new(p, k);
    sw.forward(p, &OpenLoop { inputs: &full, action_dim: p.action_dim }, x, &noise)
}

/// `Q^π_k(x, u)`; stochastic problems average over `w_k..w_{n-1}` through `engine`.
pub fn q_function(
    p: &ControlProblem,
    tail: &dyn Policy,
    k: usize,
    x: &[f64],
    u: &[f64],
    engine: Option<&ExpectationEngine>,
) -> Result<f64> {
    if k >= p.horizon {
        return Err(Error::Invalid(format!("stage {k} has no Q-function (horizon {})", p.horizon)));
    }
    if u.len() != p.action_dim {
        return Err(Error::dim("action", p.action_dim, u.len()));
    }
    if x.len() != p.state_dim {
        return Err(Error::dim("state", p.state_dim, x.len()));
    }
    let pol = Override { stage: k, action: u, inner: tail };
    expect_from(p, &pol, k, x, engine)
}

/// `Q^π_k(x, μ_θ(x))` for a stage parameter `θ`.
pub fn q_function_theta(
    p: &ControlProblem,
    class: &PolicyClass,
    params: &PolicyParams,
    k: usize,
    x: &[f64],
    theta: &[f64],
    engine: Option<&ExpectationEngine>,
) -> Result<f64> {
    let mut u = vec![0.0; p.action_dim];
    class.stages[k].action(theta, x, &mut u);
    q_function(p, &ParamPolicy { class, params }, k, x, &u, engine)
}

/// `J^π_k(x)`; `k = n` gives the terminal cost.
pub fn j_function(
    p: &ControlProblem,
    policy: &dyn Policy,
    k: usize,
    x: &[f64],
    engine: Option<&ExpectationEngine>,
) -> Result<f64> {
    if k > p.horizon {
        return Err(Error::Invalid(format!("stage {k} beyond horizon")));
    }
    if k == p.horizon {
        return Ok(p.terminal_cost.value(&[x]));
    }
    expect_from(p, policy, k, x, engine)
}

fn expect_from(
    p: &ControlProblem,
    policy: &dyn Policy,
    k: usize,
    x: &[f64],
    engine: Option<&ExpectationEngine>,
) -> Result<f64> {
    let noisy = p.noise.as_ref().is_some_and(|m| !m.is_degenerate_from(k));
    let mut sw = Sweep::new(p, k);
    if !noisy {
        return sw.forward(p, policy, x, &p.nominal_noise(k));
    }
    let engine = engine.ok_or(Error::MissingEngine)?;
    let sc = engine.noise_scenarios(p, k)?;
    let mut acc = 0.0;
    for i in 0..sc.len() {
        acc += sc.weights[i] * sw.forward(p, policy, x, sc.noise(i))?;
    }
    Ok(acc)
}
