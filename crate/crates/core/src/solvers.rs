//! Projected gradient descent with Armijo backtracking and Newton polishing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diff::{fd_hessian, projected_gradient_norm, TOL_STAT};
use crate::error::{Error, Result};
use crate::feasible::ProductSet;
use crate::objective::Objective;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient_norm: f64,
    pub history_len: usize,
    /// Objective values of accepted iterates, starting with the initial point.
    #[serde(skip)]
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentOptions {
    pub max_iter: usize,
    pub tol_stat: f64,
    pub armijo_c: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { max_iter: 100_000, tol_stat: TOL_STAT, armijo_c: 1e-4, initial_step: 1.0, max_backtracks: 80 }
    }
}

pub fn project(set: &ProductSet, z: &[f64]) -> Vec<f64> {
    set.project(z)
}

/// Projected gradient descent with Barzilai–Borwein trial steps and Armijo backtracking.
pub fn projected_descent(obj: &dyn Objective, start: &[f64], set: &ProductSet, opts: &DescentOptions) -> Result<SolveResult> {
    if start.len() != set.dim() {
        return Err(Error::dim("start point", set.dim(), start.len()));
    }
    let d = start.len();
    let mut z = set.project(start);
    let mut g = vec![0.0; d];
    let mut f = obj.value_grad(&z, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage: 0, what: "objective at start".into() });
    }
    let mut history = vec![f];
    let mut pg = projected_gradient_norm(set, &z, &g);
    let mut iterations = 0;
    let mut trial = vec![0.0; d];
    let mut bb_step = opts.initial_step;
    while pg > opts.tol_stat && iterations < opts.max_iter {
        let mut t = bb_step;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for i in 0..d {
                trial[i] = z[i] - t * g[i];
            }
            let cand = set.project(&trial);
            let decrease: f64 = g.iter().zip(cand.iter().zip(&z)).map(|(gi, (c, zi))| gi * (c - zi)).sum();
            if decrease >= 0.0 {
                t *= 0.5;
                continue;
            }
            let fc = obj.value(&cand);
            if fc.is_finite() && fc <= f + opts.armijo_c * decrease {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, _)) = accepted else { break };
        let mut gn = vec![0.0; d];
        let fnew = obj.value_grad(&cand, &mut gn);
        if !fnew.is_finite() || gn.iter().any(|v| !v.is_finite()) {
            break;
        }
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..d {
            let si = cand[i] - z[i];
            ss += si * si;
            sy += si * (gn[i] - g[i]);
        }
        bb_step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { opts.initial_step };
        z = cand;
        f = fnew;
        g = gn;
        history.push(f);
        iterations += 1;
        pg = projected_gradient_norm(set, &z, &g);
    }
    Ok(SolveResult {
        converged: pg <= opts.tol_stat,
        point: z,
        value: f,
        iterations,
        projected_gradient_norm: pg,
        history_len: history.len(),
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolishResult {
    pub point: Vec<f64>,
    pub converged: bool,
    pub gradient_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolishOptions {
    pub target: f64,
    pub max_iter: usize,
    pub max_move: f64,
}

impl Default for PolishOptions {
    fn default() -> Self {
        Self { target: 1e-10, max_iter: 200, max_move: 0.2 }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `(H + μI) d = −g`, raising `μ` from `1e-8` by doubling when `H` is singular.
fn damped_newton_step(h: &DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let d = g.len();
    let rhs = -DVector::from_column_slice(g);
    let scale = h.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut mu = 0.0;
    for _ in 0..200 {
        let m = h + DMatrix::identity(d, d) * mu;
        let lu = m.clone().lu();
        let diag = lu.u().diagonal();
        let pivot = diag.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        if pivot > 1e-13 * scale {
            if let Some(s) = lu.solve(&rhs) {
                if s.iter().all(|v| v.is_finite()) {
                    return Some(s.iter().copied().collect());
                }
            }
        }
        mu = if mu == 0.0 { 1e-8 * scale.max(1.0) } else { 2.0 * mu };
    }
    None
}

/// Newton iteration on the gradient for interior points; converges to minima, maxima and saddles alike.
pub fn newton_polish(obj: &dyn Objective, point: &[f64], set: &ProductSet, opts: &PolishOptions) -> PolishResult {
    let d = point.len();
    let mut g = vec![0.0; d];
    obj.value_grad(point, &mut g);
    let g_start = norm(&g);
    let unchanged = |gn: f64| PolishResult { point: point.to_vec(), converged: gn <= opts.target, gradient_norm: gn, iterations: 0 };
    if !g_start.is_finite() {
        return unchanged(f64::INFINITY);
    }
    if g_start <= opts.target {
        return unchanged(g_start);
    }
    if set.boundary_margin(point) <= 1e-9 {
        return unchanged(g_start);
    }
    let mut z = point.to_vec();
    let mut gn = g_start;
    let mut it = 0;
    let mut trial_g = vec![0.0; d];
    while it < opts.max_iter && gn > opts.target {
        it += 1;
        let h = fd_hessian(obj, &z, None, None);
        let Some(step) = damped_newton_step(&h.matrix, &g) else { break };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = z.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let dist = norm(&cand.iter().zip(point).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dist <= opts.max_move && set.violation(&cand) == 0.0 {
                obj.value_grad(&cand, &mut trial_g);
                let tn = norm(&trial_g);
                if tn.is_finite() && tn < gn {
                    z = cand;
                    g.copy_from_slice(&trial_g);
                    gn = tn;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if gn <= opts.target {
        PolishResult { point: z, converged: true, gradient_norm: gn, iterations: it }
    } else {
        PolishResult { iterations: it, ..unchanged(g_start) }
    }
}

/// Levenberg–Marquardt on `½‖∇f‖²`; its fixed points include saddles.
pub fn gradient_root_search(obj: &dyn Objective, start: &[f64], set: &ProductSet, tol: f64, max_iter: usize) -> Option<Vec<f64>> {
    let d = start.len();
    let mut z = set.project(start);
    let mut g = vec![0.0; d];
    if !obj.value_grad(&z, &mut g).is_finite() {
        return None;
    }
    let mut gn = norm(&g);
    let mut lambda = 1e-3;
    let mut trial_g = vec![0.0; d];
    for _ in 0..max_iter {
        if gn <= tol {
            return Some(z);
        }
        let h = fd_hessian(obj, &z, None, None).matrix;
        let jtj = h.transpose() * &h;
        let jtg = h.transpose() * DVector::from_column_slice(&g);
        let scale = jtj.diagonal().max().max(1e-300);
        let mut improved = false;
        for _ in 0..30 {
            let m = &jtj + DMatrix::identity(d, d) * (lambda * scale);
            let Some(step) = m.cholesky().map(|c| c.solve(&(-&jtg))) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = set.project(&z.iter().zip(step.iter()).map(|(a, s)| a + s).collect::<Vec<_>>());
            let fv = obj.value_grad(&cand, &mut trial_g);
            let tn = norm(&trial_g);
            if fv.is_finite() && tn < gn {
                z = cand;
                g.copy_from_slice(&trial_g);
                gn = tn;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (gn <= tol).then_some(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasible::FeasibleSet;
    use crate::objective::FnObjective;

    fn bowl() -> impl Objective {
        FnObjective {
            dim: 2,
            f: |z: &[f64]| z[0] * z[0] + 3.0 * z[1] * z[1],
            g: |z: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * z[0];
                g[1] = 6.0 * z[1];
            },
        }
    }

    #[test]
    fn convex_quadratic_converges_to_origin() {
        let set = ProductSet::single(FeasibleSet::cube(2, -5.0, 5.0));
        let r = projected_descent(&bowl(), &[4.0, -3.0], &set, &DescentOptions::default()).unwrap();
        assert!(r.converged);
        assert!(norm(&r.point) < 1e-7);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn polish_fixed_point_unchanged() {
        let set = ProductSet::single(FeasibleSet::cube(2, -5.0, 5.0));
        let r = newton_polish(&bowl(), &[0.0, 0.0], &set, &PolishOptions::default());
        assert_eq!(r.point, vec![0.0, 0.0]);
        assert!(r.converged);
    }

    #[test]
    fn saddle_found_by_root_search() {
        let obj = FnObjective {
            dim: 2,
            f: |z: &[f64]| z[0] * z[0] - z[1] * z[1],
            g: |z: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * z[0];
                g[1] = -2.0 * z[1];
            },
        };
        let set = ProductSet::single(FeasibleSet::cube(2, -1.0, 1.0));
        let z = gradient_root_search(&obj, &[0.3, -0.4], &set, 1e-10, 100).unwrap();
        assert!(norm(&z) < 1e-9);
    }
}
