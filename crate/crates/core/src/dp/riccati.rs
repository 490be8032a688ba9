use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted condition number of `R + BᵀPB`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    /// `P_0..P_n`.
    pub p: Vec<DMatrix<f64>>,
    /// `K_0..K_{n-1}` with `u_k = K_k x_k`.
    pub k: Vec<DMatrix<f64>>,
    /// Worst condition number of `R_k + B_kᵀP_{k+1}B_k` over the stages.
    pub max_condition: f64,
}

impl RiccatiSolution {
    /// `E[x0ᵀP_0x0]` for `x0` with the given mean and covariance.
    pub fn expected_cost(&self, mean: &[f64], cov: &DMatrix<f64>) -> f64 {
        let m = nalgebra::DVector::from_column_slice(mean);
        (&self.p[0] * (cov + &m * m.transpose())).trace()
    }
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let hi = sv.max();
    let lo = sv.min();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Backward Riccati recursion for `x_{k+1} = A_k x + B_k u`, cost `xᵀQ_kx + uᵀR_ku`, terminal `xᵀQ_nx`.
pub fn riccati_solve(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    q: &[DMatrix<f64>],
    r: &[DMatrix<f64>],
    q_n: &DMatrix<f64>,
    n: usize,
) -> Result<RiccatiSolution> {
    if a.len() < n || b.len() < n || q.len() < n || r.len() < n {
        return Err(Error::dim("riccati stage matrices", n, a.len().min(b.len()).min(q.len()).min(r.len())));
    }
    let nx = q_n.nrows();
    let mut p = vec![DMatrix::zeros(nx, nx); n + 1];
    let mut gains = Vec::with_capacity(n);
    p[n] = q_n.clone();
    let mut max_condition: f64 = 1.0;
    for k in (0..n).rev() {
        let next = &p[k + 1];
        let bt_p = b[k].transpose() * next;
        let g = &r[k] + &bt_p * &b[k];
        let f = &bt_p * &a[k];
        let cond = condition(&g);
        max_condition = max_condition.max(cond);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::IllConditioned { stage: k, cond });
        }
        let kk = -g
            .clone()
            .lu()
            .solve(&f)
            .ok_or(Error::IllConditioned { stage: k, cond: f64::INFINITY })?;
        let acl = &a[k] + &b[k] * &kk;
        let pk = &q[k] + kk.transpose() * &r[k] * &kk + acl.transpose() * next * &acl;
        p[k] = (&pk + pk.transpose()) * 0.5;
        gains.push(kk);
    }
    gains.reverse();
    Ok(RiccatiSolution { p, k: gains, max_condition })
}

/// Largest `‖(R+BᵀPB)K + BᵀPA‖_F / ‖BᵀPA‖_F` over the stages.
pub fn gain_residual(a: &[DMatrix<f64>], b: &[DMatrix<f64>], r: &[DMatrix<f64>], sol: &RiccatiSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..sol.k.len() {
        let bt_p = b[k].transpose() * &sol.p[k + 1];
        let g = &r[k] + &bt_p * &b[k];
        let f = &bt_p * &a[k];
        let res = (&g * &sol.k[k] + &f).norm();
        worst = worst.max(res / f.norm().max(f64::MIN_POSITIVE));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_one_step() {
        let sol = riccati_solve(&[s(1.0)], &[s(1.0)], &[s(1.0)], &[s(1.0)], &s(1.0), 1).unwrap();
        assert!((sol.k[0][(0, 0)] + 0.5).abs() < 1e-15);
        assert!((sol.p[0][(0, 0)] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn no_control_authority_gives_zero_gain() {
        let n = 4;
        let sol = riccati_solve(&vec![s(1.2); n], &vec![s(0.0); n], &vec![s(1.0); n], &vec![s(1.0); n], &s(1.0), n).unwrap();
        assert!(sol.k.iter().all(|k| k[(0, 0)] == 0.0));
    }

    #[test]
    fn singular_input_weight_is_reported() {
        let e = riccati_solve(&[s(1.0)], &[s(0.0)], &[s(1.0)], &[s(0.0)], &s(1.0), 1).unwrap_err();
        assert!(matches!(e, Error::IllConditioned { stage: 0, .. }));
    }
}
