use crate::error::{Error, Result};
use crate::feasible::{FeasibleSet, ProductSet};
use crate::smooth::Map;

/// State-feedback rule evaluated stage by stage.
pub trait Policy: Sync {
    fn action(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()>;
    /// Row-major `M × N` Jacobian of the action with respect to the state.
    fn action_jacobian(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Open-loop input sequence `u_0..u_{n-1}` (flat, stage-major).
#[derive(Debug, Clone, Copy)]
pub struct OpenLoop<'a> {
    pub inputs: &'a [f64],
    pub action_dim: usize,
}

impl Policy for OpenLoop<'_> {
    fn action(&self, k: usize, _x: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.action_dim;
        out.copy_from_slice(&self.inputs[k * m..(k + 1) * m]);
        Ok(())
    }
    fn action_jacobian(&self, _k: usize, _x: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

/// Replaces the action of one stage by a fixed value, deferring elsewhere.
pub struct Override<'a> {
    pub stage: usize,
    pub action: &'a [f64],
    pub inner: &'a dyn Policy,
}

impl Policy for Override<'_> {
    fn action(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        if k == self.stage {
            out.copy_from_slice(self.action);
            Ok(())
        } else {
            self.inner.action(k, x, out)
        }
    }
    fn action_jacobian(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        if k == self.stage {
            out.fill(0.0);
            Ok(())
        } else {
            self.inner.action_jacobian(k, x, out)
        }
    }
}

/// Shape of a basis `f_1..f_m : R^N → R^M`.
#[derive(Clone)]
pub enum BasisKind {
    /// `u = K x` with `θ = vec(K)` row-major.
    Linear { action_dim: usize, state_dim: usize },
    /// Scalar `u = a x + b` with `θ = (a, b)`.
    Affine1d,
    /// `u = θ` independent of the state.
    Constant { action_dim: usize },
    /// Each map takes `(x)` and returns an action-space vector.
    Custom {
        action_dim: usize,
        state_dim: usize,
        funcs: Vec<Map>,
    },
}

impl std::fmt::Debug for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisKind::Linear { action_dim, state_dim } => write!(f, "Linear({action_dim}x{state_dim})"),
            BasisKind::Affine1d => write!(f, "Affine1d"),
            BasisKind::Constant { action_dim } => write!(f, "Constant({action_dim})"),
            BasisKind::Custom { funcs, .. } => write!(f, "Custom(m={})", funcs.len()),
        }
    }
}

/// Linear-in-parameters policy class `μ_θ(x) = Σ θ_i f_i(x)` with parameter set Θ.
#[derive(Debug, Clone)]
pub struct PolicyBasis {
    pub kind: BasisKind,
    pub param_set: FeasibleSet,
}

impl PolicyBasis {
    pub fn new(kind: BasisKind, param_set: FeasibleSet) -> Result<Self> {
        let b = Self { kind, param_set };
        if b.param_set.dim() != b.count() {
            return Err(Error::dim("parameter set", b.count(), b.param_set.dim()));
        }
        if let BasisKind::Custom { action_dim, state_dim, funcs } = &b.kind {
            for f in funcs {
                if f.arg_dims() != [*state_dim] || f.out_dim() != *action_dim {
                    return Err(Error::Invalid("basis function signature mismatch".into()));
                }
            }
        }
        Ok(b)
    }

    /// Basis count m.
    pub fn count(&self) -> usize {
        match &self.kind {
            BasisKind::Linear { action_dim, state_dim } => action_dim * state_dim,
            BasisKind::Affine1d => 2,
            BasisKind::Constant { action_dim } => *action_dim,
            BasisKind::Custom { funcs, .. } => funcs.len(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match &self.kind {
            BasisKind::Linear { action_dim, .. } => *action_dim,
            BasisKind::Affine1d => 1,
            BasisKind::Constant { action_dim } => *action_dim,
            BasisKind::Custom { action_dim, .. } => *action_dim,
        }
    }

    /// Basis matrix `F(x) = [f_1(x) … f_m(x)]`, row-major `M × m`.
    pub fn matrix(&self, x: &[f64], out: &mut [f64]) {
        let m = self.count();
        out.fill(0.0);
        match &self.kind {
            BasisKind::Linear { action_dim, state_dim } => {
                for a in 0..*action_dim {
                    for j in 0..*state_dim {
                        out[a * m + a * state_dim + j] = x[j];
                    }
                }
            }
            BasisKind::Affine1d => {
                out[0] = x[0];
                out[1] = 1.0;
            }
            BasisKind::Constant { action_dim } => {
                for a in 0..*action_dim {
                    out[a * m + a] = 1.0;
                }
            }
            BasisKind::Custom { action_dim, funcs, .. } => {
                let mut v = vec![0.0; *action_dim];
                for (i, f) in funcs.iter().enumerate() {
                    f.eval(&[x], &mut v);
                    for a in 0..*action_dim {
                        out[a * m + i] = v[a];
                    }
                }
            }
        }
    }

    pub fn action(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        match &self.kind {
            BasisKind::Linear { action_dim, state_dim } => {
                for a in 0..*action_dim {
                    out[a] = (0..*state_dim).map(|j| theta[a * state_dim + j] * x[j]).sum();
                }
            }
            BasisKind::Affine1d => out[0] = theta[0] * x[0] + theta[1],
            BasisKind::Constant { .. } => out.copy_from_slice(theta),
            BasisKind::Custom { action_dim, .. } => {
                let m = self.count();
                let mut f = vec![0.0; action_dim * m];
                self.matrix(x, &mut f);
                for a in 0..*action_dim {
                    out[a] = (0..m).map(|i| f[a * m + i] * theta[i]).sum();
                }
            }
        }
    }

    /// `D^μ_x = Σ θ_i ∂f_i/∂x`, row-major `M × N`.
    pub fn state_jacobian(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match &self.kind {
            BasisKind::Linear { .. } => out.copy_from_slice(theta),
            BasisKind::Affine1d => out[0] = theta[0],
            BasisKind::Constant { .. } => {}
            BasisKind::Custom { action_dim, state_dim, funcs } => {
                let mut j = vec![0.0; action_dim * state_dim];
                for (i, f) in funcs.iter().enumerate() {
                    f.jacobian(&[x], 0, &mut j);
                    for (o, v) in out.iter_mut().zip(&j) {
                        *o += theta[i] * v;
                    }
                }
            }
        }
    }
}

/// Per-stage bases of a parameterized problem.
#[derive(Debug, Clone)]
pub struct PolicyClass {
    pub stages: Vec<PolicyBasis>,
}

impl PolicyClass {
    pub fn new(stages: Vec<PolicyBasis>) -> Self {
        Self { stages }
    }

    pub fn uniform(basis: PolicyBasis, horizon: usize) -> Self {
        Self {
            stages: vec![basis; horizon],
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        self.stages.iter().map(PolicyBasis::count).collect()
    }

    pub fn dim(&self) -> usize {
        self.counts().iter().sum()
    }

    pub fn param_set(&self) -> ProductSet {
        ProductSet::new(self.stages.iter().map(|b| b.param_set.clone()).collect())
    }

    pub fn split(&self, z: &[f64]) -> Result<PolicyParams> {
        if z.len() != self.dim() {
            return Err(Error::dim("parameter vector", self.dim(), z.len()));
        }
        let mut theta = Vec::with_capacity(self.stages.len());
        let mut off = 0;
        for c in self.counts() {
            theta.push(z[off..off + c].to_vec());
            off += c;
        }
        Ok(PolicyParams { theta })
    }
}

/// Per-stage coefficient vectors θ_0..θ_{n-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub theta: Vec<Vec<f64>>,
}

impl PolicyParams {
    pub fn flat(&self) -> Vec<f64> {
        self.theta.concat()
    }

    pub fn check(&self, class: &PolicyClass, tol: f64) -> Result<()> {
        if self.theta.len() != class.stages.len() {
            return Err(Error::dim("parameter stages", class.stages.len(), self.theta.len()));
        }
        for (t, b) in self.theta.iter().zip(&class.stages) {
            if t.len() != b.count() {
                return Err(Error::dim("stage parameters", b.count(), t.len()));
            }
            let v = b.param_set.violation(t);
            if v > tol {
                return Err(Error::Infeasible { violation: v });
            }
        }
        Ok(())
    }
}

/// A parameter vector bound to its policy class.
#[derive(Debug, Clone, Copy)]
pub struct ParamPolicy<'a> {
    pub class: &'a PolicyClass,
    pub params: &'a PolicyParams,
}

impl Policy for ParamPolicy<'_> {
    fn action(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.class.stages[k].action(&self.params.theta[k], x, out);
        Ok(())
    }
    fn action_jacobian(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.class.stages[k].state_jacobian(&self.params.theta[k], x, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_basis_matrix_times_theta_is_action() {
        let b = PolicyBasis::new(
            BasisKind::Linear { action_dim: 2, state_dim: 3 },
            FeasibleSet::Free { dim: 6 },
        )
        .unwrap();
        let theta = [1.0, 2.0, 3.0, -1.0, 0.5, 0.0];
        let x = [1.0, -2.0, 0.5];
        let mut f = vec![0.0; 12];
        b.matrix(&x, &mut f);
        let mut u = [0.0; 2];
        b.action(&theta, &x, &mut u);
        for a in 0..2 {
            let s: f64 = (0..6).map(|i| f[a * 6 + i] * theta[i]).sum();
            assert!((s - u[a]).abs() < 1e-15);
        }
        assert_eq!(u, [1.0 - 4.0 + 1.5, -1.0 - 1.0]);
    }

    #[test]
    fn affine_action() {
        let b = PolicyBasis::new(BasisKind::Affine1d, FeasibleSet::cube(2, -2.0, 2.0)).unwrap();
        let mut u = [0.0];
        b.action(&[0.5, 1.0], &[2.0], &mut u);
        assert_eq!(u[0], 2.0);
    }
}
