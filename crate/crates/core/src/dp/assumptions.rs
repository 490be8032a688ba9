//! Numerical checks of the rank, coverage and basis-independence conditions.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::feasible::FeasibleSet;
use crate::model::{PolicyBasis, PolicyClass};

const RANK_REL: f64 = 1e-8;
const GRAM_REL: f64 = 1e-8;
const COVERAGE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub independent: bool,
    pub samples: usize,
    pub threshold: f64,
    pub warnings: Vec<String>,
}

fn basis_matrix(basis: &PolicyBasis, x: &[f64]) -> DMatrix<f64> {
    let (nu, m) = (basis.action_dim(), basis.count());
    let mut f = vec![0.0; nu * m];
    basis.matrix(x, &mut f);
    DMatrix::from_row_slice(nu, m, &f)
}

/// Sample-averaged Gram matrix `mean_x F(x)ᵀF(x)`.
pub fn check_basis_independence(basis: &PolicyBasis, states: &[Vec<f64>]) -> IndependenceReport {
    let m = basis.count();
    let mut warnings = Vec::new();
    if states.len() < 10 * m {
        warnings.push(format!("only {} sample states for {m} basis functions (want ≥ {})", states.len(), 10 * m));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for s in states {
        if !distinct.iter().any(|d| *d == s) {
            distinct.push(s);
        }
    }
    if distinct.len() < m.max(2) {
        warnings.push(format!("measure-zero sample: {} distinct states", distinct.len()));
    }
    let mut gram = DMatrix::zeros(m, m);
    for x in states {
        let f = basis_matrix(basis, x);
        gram += f.transpose() * f;
    }
    if !states.is_empty() {
        gram /= states.len() as f64;
    }
    let eig = gram.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let threshold = GRAM_REL * hi;
    IndependenceReport { min_eigenvalue: lo, max_eigenvalue: hi, independent: hi > 0.0 && lo > threshold, samples: states.len(), threshold, warnings }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAssumptions {
    pub stage: usize,
    pub state: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub full_row_rank: bool,
    /// Fraction of sampled actions with a feasible parameter preimage; `None` when the action set is unbounded.
    pub coverage: Option<f64>,
    pub worst_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub stages: Vec<StageAssumptions>,
    pub rank_holds: bool,
    pub coverage_holds: bool,
    pub rank_tolerance: f64,
    pub coverage_samples: usize,
}

/// Smallest `‖Fθ − a‖` over `θ ∈ Θ` by projected gradient.
fn preimage_residual(f: &DMatrix<f64>, set: &FeasibleSet, a: &DVector<f64>, start: &[f64]) -> f64 {
    let lip = (f.transpose() * f).symmetric_eigen().eigenvalues.max().max(1e-300);
    let mut th = set.project(start);
    let mut best = f64::INFINITY;
    for _ in 0..500 {
        let r = f * DVector::from_column_slice(&th) - a;
        let rn = r.norm();
        best = best.min(rn);
        if rn <= 1e-9 * (1.0 + a.norm()) {
            break;
        }
        let g = f.transpose() * r;
        let step: Vec<f64> = th.iter().zip(g.iter()).map(|(t, gi)| t - gi / lip).collect();
        let next = set.project(&step);
        if next.iter().zip(&th).all(|(x, y)| (x - y).abs() <= 1e-15) {
            break;
        }
        th = next;
    }
    best
}

/// Rank of `F_k(x_k*)` and coverage of the action set by `μ_Θ(x_k*)` along a reference trajectory.
pub fn check_assumptions(action_set: &FeasibleSet, class: &PolicyClass, trajectory: &[Vec<f64>], seed: u64) -> AssumptionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stages = Vec::new();
    for (k, (basis, x)) in class.stages.iter().zip(trajectory).enumerate() {
        let f = basis_matrix(basis, x);
        let sv: Vec<f64> = f.clone().singular_values().iter().copied().collect();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let rank = sv.iter().filter(|s| **s > RANK_REL * smax && **s > 0.0).count();
        let mut coverage = None;
        let mut worst: f64 = 0.0;
        if action_set.is_bounded() {
            let centre = basis.param_set.project(&vec![0.0; basis.count()]);
            let mut hit = 0;
            for _ in 0..COVERAGE_SAMPLES {
                let Some(a) = action_set.sample(&mut rng) else { break };
                let a = DVector::from_column_slice(&a);
                let res = preimage_residual(&f, &basis.param_set, &a, &centre);
                worst = worst.max(res);
                if res <= 1e-6 * (1.0 + a.norm()) {
                    hit += 1;
                }
            }
            coverage = Some(hit as f64 / COVERAGE_SAMPLES as f64);
        }
        stages.push(StageAssumptions { stage: k, state: x.clone(), singular_values: sv, rank, full_row_rank: rank == basis.action_dim(), coverage, worst_residual: worst });
    }
    AssumptionReport {
        rank_holds: stages.iter().all(|s| s.full_row_rank),
        coverage_holds: stages.iter().all(|s| s.coverage.is_none_or(|c| c >= 1.0)),
        stages,
        rank_tolerance: RANK_REL,
        coverage_samples: COVERAGE_SAMPLES,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BasisKind;

    fn custom(funcs: Vec<fn(f64) -> f64>) -> PolicyBasis {
        let maps = funcs
            .into_iter()
            .map(|f| crate::smooth::ClosureMap::new(vec![1], 1, move |a: &[&[f64]], o: &mut [f64]| o[0] = f(a[0][0])).into_map())
            .collect::<Vec<_>>();
        let m = maps.len();
        PolicyBasis::new(BasisKind::Custom { action_dim: 1, state_dim: 1, funcs: maps }, FeasibleSet::Free { dim: m }).unwrap()
    }

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![-2.0 + 4.0 * i as f64 / (n - 1) as f64]).collect()
    }

    #[test]
    fn affine_basis_is_independent() {
        let b = PolicyBasis::new(BasisKind::Affine1d, FeasibleSet::Free { dim: 2 }).unwrap();
        let r = check_basis_independence(&b, &line(41));
        assert!(r.independent);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn collinear_basis_is_dependent() {
        let r = check_basis_independence(&custom(vec![|x| x, |x| 2.0 * x]), &line(41));
        assert!(!r.independent);
        assert!(r.min_eigenvalue.abs() <= 1e-12 * r.max_eigenvalue);
    }

    #[test]
    fn single_point_sample_is_flagged() {
        let r = check_basis_independence(&custom(vec![|x| x, |x| x * x]), &vec![vec![0.0]; 30]);
        assert!(!r.independent);
        assert!(r.warnings.iter().any(|w| w.contains("measure-zero")));
    }

    #[test]
    fn rank_condition() {
        let aff = PolicyClass::new(vec![PolicyBasis::new(BasisKind::Affine1d, FeasibleSet::cube(2, -5.0, 5.0)).unwrap()]);
        let r = check_assumptions(&FeasibleSet::cube(1, -1.0, 1.0), &aff, &[vec![0.7]], 1);
        assert!(r.rank_holds);
        assert_eq!(r.stages[0].coverage, Some(1.0));
        let lin = PolicyClass::new(vec![PolicyBasis::new(BasisKind::Linear { action_dim: 1, state_dim: 1 }, FeasibleSet::Free { dim: 1 }).unwrap()]);
        let r = check_assumptions(&FeasibleSet::cube(1, -1.0, 1.0), &lin, &[vec![0.0]], 1);
        assert_eq!(r.stages[0].rank, 0);
        assert!(!r.rank_holds);
    }
}
