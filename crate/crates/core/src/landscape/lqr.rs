//! Random LQR instances, closed-form expected cost, and the DP / one-shot warm-start comparison.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{PROBE_STEP, TOL_STAT};
use crate::dp::riccati::{gain_residual, riccati_solve};
use crate::error::{Error, Result};
use crate::feasible::{matrix_from_row_major, row_major, FeasibleSet};

/// Singular-value floor on the last gain: `KᵀK ⪰ 100²·I`.
pub const GAIN_FLOOR: f64 = 100.0;
/// Relative Frobenius distance below which two gains correspond.
pub const TOL_CORR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LqrScenario {
    Unconstrained,
    Constrained,
}

impl LqrScenario {
    pub fn as_str(self) -> &'static str {
        match self {
            LqrScenario::Unconstrained => "unconstrained",
            LqrScenario::Constrained => "constrained",
        }
    }
}

/// Sizes and sampling ranges of a random instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrSpec {
    pub horizon: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub dynamics_range: f64,
    pub weight_range: f64,
    pub input_shift: f64,
    pub mean: f64,
    pub spread_range: f64,
}

impl Default for LqrSpec {
    fn default() -> Self {
        Self {
            horizon: 30,
            state_dim: 3,
            action_dim: 4,
            dynamics_range: 100.0,
            weight_range: 20.0,
            input_shift: 100.0,
            mean: 20.0,
            spread_range: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrInstance {
    pub seed: u64,
    pub scenario: LqrScenario,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    /// `Q_0..Q_n`.
    pub q: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub mean: Vec<f64>,
    /// `x0 = mean + V z`, so the covariance is `VVᵀ`.
    pub v: DMatrix<f64>,
}

pub type Gains = Vec<DMatrix<f64>>;

impl LqrInstance {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn name(&self) -> String {
        format!("lqr({}, {})", self.seed, self.scenario.as_str())
    }

    /// Second moment `VVᵀ + μμᵀ` of the initial state.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let m = DVector::from_column_slice(&self.mean);
        &self.v * self.v.transpose() + &m * m.transpose()
    }

    /// Parameter sets of `vec(K_k)` (row-major), with the floor on the last stage when constrained.
    pub fn param_sets(&self) -> Vec<FeasibleSet> {
        let (n, m, nx) = (self.horizon(), self.action_dim(), self.state_dim());
        (0..n)
            .map(|k| {
                if self.scenario == LqrScenario::Constrained && k == n - 1 {
                    FeasibleSet::SpectralFloor { rows: m, cols: nx, floor: GAIN_FLOOR }
                } else {
                    FeasibleSet::Free { dim: m * nx }
                }
            })
            .collect()
    }

    fn constrained_stage(&self, k: usize) -> bool {
        self.scenario == LqrScenario::Constrained && k + 1 == self.horizon()
    }

    pub fn project(&self, k: usize, gain: &DMatrix<f64>) -> DMatrix<f64> {
        if self.constrained_stage(k) {
            let set = FeasibleSet::SpectralFloor { rows: gain.nrows(), cols: gain.ncols(), floor: GAIN_FLOOR };
            matrix_from_row_major(gain.nrows(), gain.ncols(), &set.project(&row_major(gain)))
        } else {
            gain.clone()
        }
    }

    pub fn project_all(&self, gains: &[DMatrix<f64>]) -> Gains {
        gains.iter().enumerate().map(|(k, g)| self.project(k, g)).collect()
    }

    pub fn zero_gains(&self) -> Gains {
        vec![DMatrix::zeros(self.action_dim(), self.state_dim()); self.horizon()]
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-half..=half))
}

/// Instance with the default sizes (`n = 30`, `N = 3`, `M = 4`).
pub fn generate_lqr(seed: u64, scenario: LqrScenario) -> LqrInstance {
    generate_lqr_with(seed, scenario, &LqrSpec::default())
}

pub fn generate_lqr_with(seed: u64, scenario: LqrScenario, spec: &LqrSpec) -> LqrInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, nx, nu) = (spec.horizon, spec.state_dim, spec.action_dim);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        a.push(uniform_matrix(&mut rng, nx, nx, spec.dynamics_range));
        b.push(uniform_matrix(&mut rng, nx, nu, spec.dynamics_range));
    }
    let q = (0..=n)
        .map(|_| {
            let f = uniform_matrix(&mut rng, nx, nx, spec.weight_range);
            &f * f.transpose()
        })
        .collect();
    let r = (0..n)
        .map(|_| {
            let f = uniform_matrix(&mut rng, nu, nu, spec.weight_range);
            &f * f.transpose() + DMatrix::identity(nu, nu) * spec.input_shift
        })
        .collect();
    let v = uniform_matrix(&mut rng, nx, nx, spec.spread_range);
    LqrInstance { seed, scenario, a, b, q, r, mean: vec![spec.mean; nx], v }
}

/// Value matrices `P_0..P_n` of the closed loop under fixed gains.
pub fn value_matrices(inst: &LqrInstance, gains: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = inst.horizon();
    let mut p = vec![inst.q[n].clone(); n + 1];
    for k in (0..n).rev() {
        let acl = &inst.a[k] + &inst.b[k] * &gains[k];
        let pk = &inst.q[k] + gains[k].transpose() * &inst.r[k] * &gains[k] + acl.transpose() * &p[k + 1] * &acl;
        p[k] = (&pk + pk.transpose()) * 0.5;
    }
    p
}

/// Second moments `E[x_k x_kᵀ]` for `k = 0..n`.
pub fn state_moments(inst: &LqrInstance, gains: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = inst.horizon();
    let mut s = Vec::with_capacity(n + 1);
    s.push(inst.second_moment());
    for k in 0..n {
        let acl = &inst.a[k] + &inst.b[k] * &gains[k];
        let next = &acl * &s[k] * acl.transpose();
        s.push((&next + next.transpose()) * 0.5);
    }
    s
}

/// Expected cost `Σ tr((Q_k + K_kᵀR_kK_k)Σ_k) + tr(Q_nΣ_n)` by moment propagation.
pub fn lqr_cost(inst: &LqrInstance, gains: &[DMatrix<f64>]) -> f64 {
    let s = state_moments(inst, gains);
    let n = inst.horizon();
    let mut c = (&inst.q[n] * &s[n]).trace();
    for k in 0..n {
        c += ((&inst.q[k] + gains[k].transpose() * &inst.r[k] * &gains[k]) * &s[k]).trace();
    }
    c
}

/// Cost and per-stage gradients `2(G_kK_k + F_k)Σ_k`.
pub fn lqr_cost_grad(inst: &LqrInstance, gains: &[DMatrix<f64>]) -> (f64, Gains) {
    let p = value_matrices(inst, gains);
    let s = state_moments(inst, gains);
    let grads = (0..inst.horizon())
        .map(|k| {
            let (g, f) = stage_terms(inst, &p[k + 1], k);
            (g * &gains[k] + f) * &s[k] * 2.0
        })
        .collect();
    ((&p[0] * &s[0]).trace(), grads)
}

/// `(R_k + B_kᵀPB_k, B_kᵀPA_k)`.
fn stage_terms(inst: &LqrInstance, p_next: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let bt_p = inst.b[k].transpose() * p_next;
    (&inst.r[k] + &bt_p * &inst.b[k], &bt_p * &inst.a[k])
}

fn pinv_solve(g: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = g.clone().svd(true, true);
    let eps = 1e-14 * svd.singular_values.max();
    svd.solve(f, eps).unwrap_or_else(|_| DMatrix::zeros(g.ncols(), f.ncols()))
}

/// Scale-free stationarity: projected-gradient residual of `J/J(K)`.
pub fn oneshot_stationarity(inst: &LqrInstance, gains: &[DMatrix<f64>]) -> f64 {
    let (j, grads) = lqr_cost_grad(inst, gains);
    let mut acc = 0.0;
    for (k, (kk, g)) in gains.iter().zip(&grads).enumerate() {
        let probe = kk - g * (PROBE_STEP / j);
        let d = (inst.project(k, &probe) - kk).norm() / PROBE_STEP;
        acc += d * d;
    }
    acc.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrSolveOptions {
    pub tol_stat: f64,
    pub max_iter: usize,
    pub step_tol: f64,
    pub armijo_c: f64,
    pub floor_max_iter: usize,
    pub floor_tol: f64,
}

impl Default for LqrSolveOptions {
    fn default() -> Self {
        Self { tol_stat: TOL_STAT, max_iter: 500, step_tol: 1e-13, armijo_c: 1e-4, floor_max_iter: 200_000, floor_tol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolve {
    pub gains: Gains,
    pub iterations: usize,
    pub converged: bool,
    pub stationarity: f64,
    pub cost: f64,
}

/// One-shot solver: Gauss–Newton preconditioned projected descent on the expected cost.
pub fn lqr_oneshot(inst: &LqrInstance, start: &[DMatrix<f64>], opts: &LqrSolveOptions) -> Result<LqrSolve> {
    if start.len() != inst.horizon() {
        return Err(Error::dim("gain sequence", inst.horizon(), start.len()));
    }
    let n = inst.horizon();
    let mut k = inst.project_all(start);
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let pg = oneshot_stationarity(inst, &k);
        if pg <= opts.tol_stat {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let p = value_matrices(inst, &k);
        let (j, grads) = lqr_cost_grad(inst, &k);
        let dir: Gains = (0..n)
            .map(|s| {
                let (g, f) = stage_terms(inst, &p[s + 1], s);
                -(&k[s] + pinv_solve(&g, &f))
            })
            .collect();
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let cand: Gains = (0..n).map(|s| inst.project(s, &(&k[s] + &dir[s] * t))).collect();
            let jc = lqr_cost(inst, &cand);
            let dec: f64 = (0..n).map(|s| grads[s].dot(&(&k[s] - &cand[s]))).sum();
            if jc.is_finite() && jc <= j - opts.armijo_c * dec.max(0.0) {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(cand) = accepted else { break };
        let step = (0..n).map(|s| (&cand[s] - &k[s]).norm() / (1.0 + k[s].norm())).fold(0.0, f64::max);
        k = cand;
        iterations += 1;
        if step <= opts.step_tol {
            converged = oneshot_stationarity(inst, &k) <= opts.tol_stat || step == 0.0;
            break;
        }
    }
    let stationarity = oneshot_stationarity(inst, &k);
    Ok(LqrSolve { cost: lqr_cost(inst, &k), gains: k, iterations, converged, stationarity })
}

/// Projected accelerated descent on `tr(KᵀGK + 2KᵀF)` over the floor set.
fn floor_stage_search(inst: &LqrInstance, k: usize, g: &DMatrix<f64>, f: &DMatrix<f64>, start: DMatrix<f64>, opts: &LqrSolveOptions) -> (DMatrix<f64>, usize) {
    let lip = 2.0 * g.clone().symmetric_eigen().eigenvalues.max();
    let grad = |x: &DMatrix<f64>| (g * x + f) * 2.0;
    let mut x = inst.project(k, &start);
    let mut prev = x.clone();
    let mut momentum = 1.0_f64;
    for it in 0..opts.floor_max_iter {
        let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let y = &x + (&x - &prev) * ((momentum - 1.0) / next_m);
        let gy = grad(&y);
        let cand = inst.project(k, &(&y - &gy / lip));
        if gy.dot(&(&cand - &x)) > 0.0 {
            momentum = 1.0;
            prev = x.clone();
            continue;
        }
        prev = std::mem::replace(&mut x, cand);
        momentum = next_m;
        let res = (inst.project(k, &(&x - grad(&x) / lip)) - &x).norm();
        if res <= opts.floor_tol * (1.0 + x.norm()) {
            return (x, it + 1);
        }
    }
    (x, opts.floor_max_iter)
}

/// DP: Riccati gains on free stages; isotropic local search for the floor-constrained last stage.
pub fn lqr_dp(inst: &LqrInstance, warm: Option<&[DMatrix<f64>]>, opts: &LqrSolveOptions) -> Result<LqrSolve> {
    let n = inst.horizon();
    if let Some(w) = warm {
        if w.len() != n {
            return Err(Error::dim("warm-start gains", n, w.len()));
        }
    }
    let mut gains = vec![DMatrix::zeros(inst.action_dim(), inst.state_dim()); n];
    let mut p = inst.q[n].clone();
    let mut iterations = 0;
    for k in (0..n).rev() {
        let (g, f) = stage_terms(inst, &p, k);
        let free = -pinv_solve(&g, &f);
        let kk = if inst.constrained_stage(k) {
            let start = warm.map_or(free.clone(), |w| w[k].clone());
            let (kk, it) = floor_stage_search(inst, k, &g, &f, start, opts);
            iterations += it;
            kk
        } else {
            free
        };
        let acl = &inst.a[k] + &inst.b[k] * &kk;
        let pk = &inst.q[k] + kk.transpose() * &inst.r[k] * &kk + acl.transpose() * &p * &acl;
        p = (&pk + pk.transpose()) * 0.5;
        gains[k] = kk;
    }
    let stationarity = oneshot_stationarity(inst, &gains);
    Ok(LqrSolve { cost: lqr_cost(inst, &gains), gains, iterations, converged: true, stationarity })
}

/// Riccati gains of the unconstrained instance.
pub fn lqr_riccati(inst: &LqrInstance) -> Result<crate::dp::riccati::RiccatiSolution> {
    let n = inst.horizon();
    riccati_solve(&inst.a, &inst.b, &inst.q[..n], &inst.r, &inst.q[n], n)
}

pub fn lqr_riccati_residual(inst: &LqrInstance) -> Result<f64> {
    let sol = lqr_riccati(inst)?;
    Ok(gain_residual(&inst.a, &inst.b, &inst.r, &sol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    DpToOs,
    OsToDp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub direction: Direction,
    /// `‖K_src − K_dst‖_F / ‖K_src‖_F` per stage.
    pub distances: Vec<f64>,
    pub corresponds: Vec<bool>,
    /// Iterations of the destination solver after the warm start.
    pub iterations: usize,
    /// Destination accepted the source without moving.
    pub zero_update: bool,
    pub tol_corr: f64,
}

/// Warm-starts the destination solver at `source` and measures how far it moves.
pub fn correspondence_check(inst: &LqrInstance, source: &[DMatrix<f64>], direction: Direction, opts: &LqrSolveOptions) -> Result<CorrespondenceReport> {
    if source.len() != inst.horizon() || source.iter().any(|k| k.shape() != (inst.action_dim(), inst.state_dim())) {
        return Err(Error::Invalid("source gains do not match the instance dimensions".into()));
    }
    let dst = match direction {
        Direction::DpToOs => lqr_oneshot(inst, source, opts)?,
        Direction::OsToDp => lqr_dp(inst, Some(source), opts)?,
    };
    let distances: Vec<f64> = source
        .iter()
        .zip(&dst.gains)
        .map(|(s, d)| (s - d).norm() / s.norm().max(f64::MIN_POSITIVE))
        .collect();
    let zero_update = distances.iter().all(|d| *d == 0.0);
    let corresponds = distances
        .iter()
        .map(|d| *d <= TOL_CORR && (direction == Direction::OsToDp || dst.iterations == 0))
        .collect();
    Ok(CorrespondenceReport { direction, distances, corresponds, iterations: dst.iterations, zero_update, tol_corr: TOL_CORR })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrSeedReport {
    pub seed: u64,
    pub scenario: LqrScenario,
    pub dp_cost: f64,
    pub os_cost: f64,
    pub os_iterations: usize,
    pub os_converged: bool,
    pub dp_to_os: CorrespondenceReport,
    pub os_to_dp: CorrespondenceReport,
}

/// Mean distances for `K_0`, `K_1` and `K_{n-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDistances {
    pub k0: f64,
    pub k1: f64,
    pub k_last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrExperiment {
    pub scenario: LqrScenario,
    pub seeds: Vec<LqrSeedReport>,
    pub mean_dp_to_os: StageDistances,
    pub mean_os_to_dp: StageDistances,
}

pub fn run_lqr_seed(seed: u64, scenario: LqrScenario, opts: &LqrSolveOptions) -> Result<LqrSeedReport> {
    let inst = generate_lqr(seed, scenario);
    let dp = lqr_dp(&inst, None, opts)?;
    let os = lqr_oneshot(&inst, &inst.zero_gains(), opts)?;
    Ok(LqrSeedReport {
        seed,
        scenario,
        dp_cost: dp.cost,
        os_cost: os.cost,
        os_iterations: os.iterations,
        os_converged: os.converged,
        dp_to_os: correspondence_check(&inst, &dp.gains, Direction::DpToOs, opts)?,
        os_to_dp: correspondence_check(&inst, &os.gains, Direction::OsToDp, opts)?,
    })
}

fn mean_distances(reports: &[&CorrespondenceReport]) -> StageDistances {
    let m = reports.len().max(1) as f64;
    let pick = |f: &dyn Fn(&CorrespondenceReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / m;
    StageDistances {
        k0: pick(&|r| r.distances[0]),
        k1: pick(&|r| r.distances.get(1).copied().unwrap_or(0.0)),
        k_last: pick(&|r| *r.distances.last().unwrap_or(&0.0)),
    }
}

/// Seeds run independently; results are collected in seed order.
pub fn lqr_experiment(seeds: &[u64], scenario: LqrScenario, opts: &LqrSolveOptions) -> Result<LqrExperiment> {
    let seeds: Vec<LqrSeedReport> = seeds.par_iter().map(|s| run_lqr_seed(*s, scenario, opts)).collect::<Result<_>>()?;
    let dp_os: Vec<_> = seeds.iter().map(|s| &s.dp_to_os).collect();
    let os_dp: Vec<_> = seeds.iter().map(|s| &s.os_to_dp).collect();
    Ok(LqrExperiment { scenario, mean_dp_to_os: mean_distances(&dp_os), mean_os_to_dp: mean_distances(&os_dp), seeds })
}
