//! Adjoint and finite-difference derivatives, Hessians and stationarity tests.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::ProductSet;
use crate::objective::{Objective, OneShotObjective};
use crate::smooth::fd_step;

pub const TOL_STAT: f64 = 1e-7;
pub const PROBE_STEP: f64 = 1e-3;
pub const TOL_FEAS: f64 = 1e-9;
const FD_CHECK_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    Adjoint,
    Fd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub gradient: Vec<f64>,
    /// Per-stage blocks (`∇_{u_k}` or `∇_{θ_k}`).
    pub blocks: Vec<Vec<f64>>,
    pub fd_rel_error: Option<f64>,
    /// Scenario rollouts performed.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityVerdict {
    pub is_stationary: bool,
    pub projected_gradient_norm: f64,
    pub active_constraints: Vec<String>,
    pub tolerance: f64,
}

/// Central finite-difference gradient with step `1e-6·max(1,|z_i|)`.
pub fn fd_gradient(obj: &dyn Objective, z: &[f64]) -> Vec<f64> {
    let mut p = z.to_vec();
    (0..z.len())
        .map(|i| {
            let h = fd_step(z[i]);
            p[i] = z[i] + h;
            let fp = obj.value(&p);
            p[i] = z[i] - h;
            let fm = obj.value(&p);
            p[i] = z[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// Gradient of a one-shot objective by adjoint sweep or central differences.
pub fn oneshot_gradient(obj: &OneShotObjective<'_>, z: &[f64], mode: GradMode, cross_check: bool) -> Result<GradientReport> {
    let n_sc = obj.scenarios.len();
    let (gradient, mut evaluations) = match mode {
        GradMode::Adjoint => {
            let mut g = vec![0.0; z.len()];
            obj.eval_grad(z, &mut g)?;
            (g, 2 * n_sc)
        }
        GradMode::Fd => {
            obj.eval(z)?;
            (fd_gradient(obj, z), 2 * z.len() * n_sc)
        }
    };
    if gradient.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: 0, what: "gradient".into() });
    }
    let fd_rel_error = if cross_check {
        let other = match mode {
            GradMode::Adjoint => fd_gradient(obj, z),
            GradMode::Fd => {
                let mut g = vec![0.0; z.len()];
                obj.eval_grad(z, &mut g)?;
                g
            }
        };
        evaluations += 2 * z.len() * n_sc;
        let rel = relative_error(&gradient, &other);
        let scale = other.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if rel > FD_CHECK_LIMIT && scale > 1e-6 {
            return Err(Error::GradientCheck { rel });
        }
        Some(rel)
    } else {
        None
    };
    let mut blocks = Vec::new();
    let mut off = 0;
    for d in obj.block_dims() {
        blocks.push(gradient[off..off + d].to_vec());
        off += d;
    }
    Ok(GradientReport { gradient, blocks, fd_rel_error, evaluations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hessian {
    pub matrix: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// True when some row needed one-sided differences near the boundary.
    pub one_sided: bool,
}

pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Symmetrized Hessian from differences of the gradient, step `1e-4·max(1,|z_i|)` unless given.
pub fn fd_hessian(obj: &dyn Objective, z: &[f64], feasible: Option<&ProductSet>, step: Option<f64>) -> Hessian {
    let d = z.len();
    let mut h = DMatrix::zeros(d, d);
    let mut p = z.to_vec();
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut g0: Option<Vec<f64>> = None;
    let mut one_sided = false;
    let inside = |p: &[f64]| feasible.is_none_or(|s| s.violation(p) == 0.0);
    for i in 0..d {
        let hi = step.unwrap_or(1e-4) * z[i].abs().max(1.0);
        p[i] = z[i] + hi;
        let up = inside(&p);
        p[i] = z[i] - hi;
        let down = inside(&p);
        p[i] = z[i];
        let (a, b, denom) = match (up, down) {
            (true, true) | (false, false) => (z[i] + hi, Some(z[i] - hi), 2.0 * hi),
            (true, false) => (z[i] + hi, None, hi),
            (false, true) => (z[i], Some(z[i] - hi), hi),
        };
        if up != down {
            one_sided = true;
        }
        p[i] = a;
        if a == z[i] {
            let base = g0.get_or_insert_with(|| {
                let mut g = vec![0.0; d];
                obj.value_grad(z, &mut g);
                g
            });
            gp.copy_from_slice(base);
        } else {
            obj.value_grad(&p, &mut gp);
        }
        match b {
            Some(b) => {
                p[i] = b;
                obj.value_grad(&p, &mut gm);
            }
            None => {
                let base = g0.get_or_insert_with(|| {
                    let mut g = vec![0.0; d];
                    obj.value_grad(z, &mut g);
                    g
                });
                gm.copy_from_slice(base);
            }
        }
        p[i] = z[i];
        for j in 0..d {
            h[(i, j)] = (gp[j] - gm[j]) / denom;
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    let eigenvalues = sorted_eigenvalues(&sym);
    Hessian { matrix: sym, eigenvalues, one_sided }
}

/// Projected-gradient residual `‖P(z − ηg) − z‖/η`.
pub fn projected_gradient_norm(set: &ProductSet, z: &[f64], g: &[f64]) -> f64 {
    let probe: Vec<f64> = z.iter().zip(g).map(|(a, b)| a - PROBE_STEP * b).collect();
    let p = set.project(&probe);
    p.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / PROBE_STEP
}

/// Normal-cone stationarity via the projected-gradient residual.
pub fn stationarity_test(gradient: &[f64], point: &[f64], set: &ProductSet, tol_stat: f64) -> Result<StationarityVerdict> {
    if point.len() != set.dim() || gradient.len() != point.len() {
        return Err(Error::dim("stationarity point", set.dim(), point.len()));
    }
    let v = set.violation(point);
    if v > TOL_FEAS {
        return Err(Error::Infeasible { violation: v });
    }
    let r = projected_gradient_norm(set, point, gradient);
    Ok(StationarityVerdict {
        is_stationary: r <= tol_stat,
        projected_gradient_norm: r,
        active_constraints: set.active_constraints(point, 1e-9),
        tolerance: tol_stat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasible::FeasibleSet;
    use crate::objective::FnObjective;

    #[test]
    fn box_upper_bound_with_negative_gradient_is_stationary() {
        let set = ProductSet::single(FeasibleSet::cube(1, -10.0, 10.0));
        let v = stationarity_test(&[-3.0], &[10.0], &set, TOL_STAT).unwrap();
        assert!(v.is_stationary);
        assert_eq!(v.active_constraints, vec!["block0.upper[0]".to_string()]);
        let v = stationarity_test(&[3.0], &[10.0], &set, TOL_STAT).unwrap();
        assert!(!v.is_stationary);
    }

    #[test]
    fn interior_zero_gradient_is_stationary() {
        let set = ProductSet::single(FeasibleSet::cube(2, -1.0, 1.0));
        assert!(stationarity_test(&[0.0, 0.0], &[0.2, 0.1], &set, TOL_STAT).unwrap().is_stationary);
    }

    #[test]
    fn infeasible_point_rejected() {
        let set = ProductSet::single(FeasibleSet::cube(1, -1.0, 1.0));
        assert!(matches!(stationarity_test(&[0.0], &[2.0], &set, TOL_STAT), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn square_hessian_is_two() {
        let obj = FnObjective { dim: 1, f: |z: &[f64]| z[0] * z[0], g: |z: &[f64], g: &mut [f64]| g[0] = 2.0 * z[0] };
        let h = fd_hessian(&obj, &[0.7], None, None);
        assert!((h.matrix[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn one_sided_near_boundary() {
        let obj = FnObjective { dim: 1, f: |z: &[f64]| z[0].powi(3), g: |z: &[f64], g: &mut [f64]| g[0] = 3.0 * z[0] * z[0] };
        let set = ProductSet::single(FeasibleSet::cube(1, 0.0, 1.0));
        let h = fd_hessian(&obj, &[1.0], Some(&set), None);
        assert!(h.one_sided);
        assert!((h.matrix[(0, 0)] - 6.0).abs() < 1e-3);
    }
}
