//! Noise models and expectations by tensor quadrature or common-random-number Monte Carlo.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlProblem, InitialCondition, ParamPolicy, Policy, PolicyClass, PolicyParams, Sweep};

pub const NODE_BUDGET: f64 = 1e7;
pub const DEFAULT_ORDER: usize = 16;

/// Law of one stage's noise vector.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseLaw {
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    /// `w = mean + factor · z`, `z ~ N(0, I)`.
    Gaussian { mean: Vec<f64>, factor: DMatrix<f64> },
}

impl NoiseLaw {
    pub fn uniform_symmetric(dim: usize, half_width: f64) -> Self {
        NoiseLaw::Uniform {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseLaw::Uniform { lower, .. } => lower.len(),
            NoiseLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            NoiseLaw::Uniform { lower, upper } => lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect(),
            NoiseLaw::Gaussian { mean, .. } => mean.clone(),
        }
    }

    /// Zero-width law: a point mass.
    pub fn is_degenerate(&self) -> bool {
        match self {
            NoiseLaw::Uniform { lower, upper } => lower == upper,
            NoiseLaw::Gaussian { factor, .. } => factor.iter().all(|v| *v == 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::Uniform { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::dim("uniform bounds", lower.len(), upper.len()));
                }
                if self.is_degenerate() {
                    return Ok(());
                }
                if lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                    return Err(Error::Invalid("uniform law needs a < b in every coordinate".into()));
                }
            }
            NoiseLaw::Gaussian { mean, factor } => {
                if factor.nrows() != mean.len() {
                    return Err(Error::dim("gaussian factor rows", mean.len(), factor.nrows()));
                }
                if self.is_degenerate() {
                    return Ok(());
                }
                let s = factor.clone().svd(false, false).singular_values;
                let smax = s.max();
                if s.len() < factor.ncols() || s.min() <= 1e-12 * smax {
                    return Err(Error::Invalid("gaussian factor must have full column rank".into()));
                }
            }
        }
        Ok(())
    }

    /// Quadrature points and normalized weights for this law.
    fn rule(&self, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        if self.is_degenerate() {
            return (vec![self.center()], vec![1.0]);
        }
        match self {
            NoiseLaw::Uniform { lower, upper } => {
                let (x, w) = gauss_legendre(order);
                let axes: Vec<(Vec<f64>, Vec<f64>)> = lower
                    .iter()
                    .zip(upper)
                    .map(|(a, b)| {
                        let mid = 0.5 * (a + b);
                        let half = 0.5 * (b - a);
                        (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| 0.5 * v).collect())
                    })
                    .collect();
                tensor(&axes)
            }
            NoiseLaw::Gaussian { mean, factor } => {
                let (z, w) = gauss_hermite(order);
                let axes: Vec<(Vec<f64>, Vec<f64>)> = (0..factor.ncols()).map(|_| (z.clone(), w.clone())).collect();
                let (pts, wts) = tensor(&axes);
                let pts = pts
                    .into_iter()
                    .map(|zz| (0..mean.len()).map(|i| mean[i] + (0..zz.len()).map(|j| factor[(i, j)] * zz[j]).sum::<f64>()).collect())
                    .collect();
                (pts, wts)
            }
        }
    }

    fn nodes_per_law(&self, order: usize) -> f64 {
        if self.is_degenerate() {
            return 1.0;
        }
        let d = match self {
            NoiseLaw::Uniform { lower, .. } => lower.len(),
            NoiseLaw::Gaussian { factor, .. } => factor.ncols(),
        };
        (order as f64).powi(d as i32)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            NoiseLaw::Uniform { lower, upper } => {
                for (a, b) in lower.iter().zip(upper) {
                    let u: f64 = rng.random();
                    out.push(a + (b - a) * u);
                }
            }
            NoiseLaw::Gaussian { mean, factor } => {
                let z: Vec<f64> = (0..factor.ncols()).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..mean.len() {
                    out.push(mean[i] + (0..z.len()).map(|j| factor[(i, j)] * z[j]).sum::<f64>());
                }
            }
        }
    }
}

/// Independent per-stage noise laws.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub stages: Vec<NoiseLaw>,
}

impl NoiseModel {
    pub fn iid(law: NoiseLaw, horizon: usize) -> Self {
        Self { stages: vec![law; horizon] }
    }

    pub fn validate(&self, horizon: usize, dim: usize) -> Result<()> {
        if self.stages.len() != horizon {
            return Err(Error::dim("noise stages", horizon, self.stages.len()));
        }
        for law in &self.stages {
            if law.dim() != dim {
                return Err(Error::dim("noise law", dim, law.dim()));
            }
            law.validate()?;
        }
        Ok(())
    }

    pub fn is_degenerate(&self) -> bool {
        self.is_degenerate_from(0)
    }

    pub fn is_degenerate_from(&self, k: usize) -> bool {
        self.stages[k..].iter().all(NoiseLaw::is_degenerate)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Probabilists' Gauss–Hermite rule, weights normalized to sum to one.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let jac = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { ((i.max(j)) as f64).sqrt() } else { 0.0 });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s: f64 = pairs.iter().map(|p| p.1).sum();
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / s).collect())
}

fn tensor(axes: &[(Vec<f64>, Vec<f64>)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pts = vec![vec![]];
    let mut wts = vec![1.0];
    for (x, w) in axes {
        let mut np = Vec::with_capacity(pts.len() * x.len());
        let mut nw = Vec::with_capacity(pts.len() * x.len());
        for (p, pw) in pts.iter().zip(&wts) {
            for (xi, wi) in x.iter().zip(w) {
                let mut q = p.clone();
                q.push(*xi);
                np.push(q);
                nw.push(pw * wi);
            }
        }
        pts = np;
        wts = nw;
    }
    (pts, wts)
}

/// Frozen Monte Carlo draws: one row per sample, `n·W` columns (stage-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBank {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SampleBank {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Draws a common-random-number bank for stages `0..n`.
pub fn crn_sample_bank(model: Option<&NoiseModel>, horizon: usize, count: usize, seed: u64) -> SampleBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Some(model) = model else {
        return SampleBank { rows: count, cols: 0, data: vec![] };
    };
    let cols: usize = model.stages[..horizon].iter().map(NoiseLaw::dim).sum();
    let mut data = Vec::with_capacity(count * cols);
    for _ in 0..count {
        for law in &model.stages[..horizon] {
            law.draw(&mut rng, &mut data);
        }
    }
    SampleBank { rows: count, cols, data }
}

/// Weighted scenarios `(x0, w_{k0}..w_{n-1})` approximating an expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub k0: usize,
    pub weights: Vec<f64>,
    x0s: Vec<f64>,
    noises: Vec<f64>,
    nx: usize,
    stride: usize,
    /// Standard errors are meaningful only for Monte Carlo sets.
    pub monte_carlo: bool,
}

impl ScenarioSet {
    pub fn single(p: &ControlProblem, k0: usize, x0: Vec<f64>) -> Self {
        let noise = p.nominal_noise(k0);
        Self {
            k0,
            weights: vec![1.0],
            stride: noise.len(),
            nx: x0.len(),
            x0s: x0,
            noises: noise,
            monte_carlo: false,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn noise(&self, i: usize) -> &[f64] {
        &self.noises[i * self.stride..(i + 1) * self.stride]
    }

    /// Initial state of scenario `i` (empty for noise-only sets).
    pub fn x0(&self, i: usize) -> &[f64] {
        if self.x0s.is_empty() {
            &[]
        } else {
            &self.x0s[i * self.nx..(i + 1) * self.nx]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExpectationMode {
    Quadrature { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// Expectation settings plus a cache of frozen scenario sets.
#[derive(Debug)]
pub struct ExpectationEngine {
    pub mode: ExpectationMode,
    cache: Mutex<HashMap<(String, usize, bool), Arc<ScenarioSet>>>,
}

impl Clone for ExpectationEngine {
    fn clone(&self) -> Self {
        Self::new(self.mode)
    }
}

impl ExpectationEngine {
    pub fn new(mode: ExpectationMode) -> Self {
        Self { mode, cache: Mutex::new(HashMap::new()) }
    }

    pub fn quadrature(order: usize) -> Self {
        Self::new(ExpectationMode::Quadrature { order })
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self::new(ExpectationMode::MonteCarlo { samples, seed })
    }

    /// Scenarios over `w_k..w_{n-1}` for a fixed state at stage `k`.
    pub fn noise_scenarios(&self, p: &ControlProblem, k: usize) -> Result<Arc<ScenarioSet>> {
        self.cached(p, k, false)
    }

    /// Scenarios over `x_0, w_0..w_{n-1}` for the full objective.
    pub fn objective_scenarios(&self, p: &ControlProblem) -> Result<Arc<ScenarioSet>> {
        self.cached(p, 0, true)
    }

    fn cached(&self, p: &ControlProblem, k: usize, with_x0: bool) -> Result<Arc<ScenarioSet>> {
        let key = (p.name.clone(), k, with_x0);
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(self.build(p, k, with_x0)?);
        self.cache.lock().unwrap().insert(key, s.clone());
        Ok(s)
    }

    fn build(&self, p: &ControlProblem, k0: usize, with_x0: bool) -> Result<ScenarioSet> {
        let nx = p.state_dim;
        let x0_law = if with_x0 {
            match &p.initial {
                InitialCondition::Fixed(_) => None,
                InitialCondition::Gaussian { mean, factor } => Some(NoiseLaw::Gaussian { mean: mean.clone(), factor: factor.clone() }),
                InitialCondition::Uniform { lower, upper } => Some(NoiseLaw::Uniform { lower: lower.clone(), upper: upper.clone() }),
            }
        } else {
            None
        };
        let noise_laws: Vec<&NoiseLaw> = match &p.noise {
            Some(m) if p.noise_dim > 0 => m.stages[k0..].iter().collect(),
            _ => vec![],
        };
        let fixed_x0 = if with_x0 { p.x0() } else { vec![] };
        match self.mode {
            ExpectationMode::Quadrature { order } => {
                if order == 0 {
                    return Err(Error::Invalid("quadrature order must be positive".into()));
                }
                let nodes: f64 = x0_law.iter().chain(noise_laws.iter().copied()).map(|l| l.nodes_per_law(order)).product();
                if nodes > NODE_BUDGET {
                    return Err(Error::NodeBudget { nodes, budget: NODE_BUDGET });
                }
                let x0_rule = x0_law.as_ref().map(|l| l.rule(order));
                let stage_rules: Vec<_> = noise_laws.iter().map(|l| l.rule(order)).collect();
                let mut weights = vec![1.0];
                let mut rows: Vec<(Vec<f64>, Vec<f64>)> = vec![(fixed_x0.clone(), vec![])];
                if let Some((pts, wts)) = x0_rule {
                    rows = pts.into_iter().map(|x| (x, vec![])).collect();
                    weights = wts;
                }
                for (pts, wts) in &stage_rules {
                    let mut nr = Vec::with_capacity(rows.len() * pts.len());
                    let mut nw = Vec::with_capacity(rows.len() * pts.len());
                    for ((x, w), rw) in rows.iter().zip(&weights) {
                        for (pt, pw) in pts.iter().zip(wts) {
                            let mut ww = w.clone();
                            ww.extend_from_slice(pt);
                            nr.push((x.clone(), ww));
                            nw.push(rw * pw);
                        }
                    }
                    rows = nr;
                    weights = nw;
                }
                let stride = (p.horizon - k0) * p.noise_dim;
                let mut x0s = Vec::new();
                let mut noises = Vec::with_capacity(rows.len() * stride);
                for (x, w) in rows {
                    x0s.extend(x);
                    if w.is_empty() {
                        noises.extend(p.nominal_noise(k0));
                    } else {
                        noises.extend(w);
                    }
                }
                Ok(ScenarioSet { k0, weights, x0s, noises, nx, stride, monte_carlo: false })
            }
            ExpectationMode::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(Error::Invalid("Monte Carlo sample count must be positive".into()));
                }
                let bank = crn_sample_bank(p.noise.as_ref().filter(|_| p.noise_dim > 0), p.horizon, samples, seed);
                let mut x_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
                let stride = (p.horizon - k0) * p.noise_dim;
                let skip = k0 * p.noise_dim;
                let mut x0s = Vec::new();
                let mut noises = Vec::with_capacity(samples * stride);
                for i in 0..samples {
                    match &x0_law {
                        Some(l) => l.draw(&mut x_rng, &mut x0s),
                        None => x0s.extend_from_slice(&fixed_x0),
                    }
                    if bank.cols == 0 {
                        noises.extend(p.nominal_noise(k0));
                    } else {
                        noises.extend_from_slice(&bank.row(i)[skip..]);
                    }
                }
                let w = 1.0 / samples as f64;
                Ok(ScenarioSet { k0, weights: vec![w; samples], x0s, noises, nx, stride, monte_carlo: true })
            }
        }
    }
}

/// Scenario set for the full objective: a single nominal scenario for deterministic problems.
pub fn objective_scenarios(p: &ControlProblem, engine: Option<&ExpectationEngine>) -> Result<Arc<ScenarioSet>> {
    if !p.is_stochastic() {
        return Ok(Arc::new(ScenarioSet::single(p, 0, p.x0())));
    }
    engine.ok_or(Error::MissingEngine)?.objective_scenarios(p)
}

/// Mean and standard error of a weighted scenario average.
pub fn scenario_mean(p: &ControlProblem, policy: &dyn Policy, sc: &ScenarioSet) -> Result<(f64, f64)> {
    let mut sw = Sweep::new(p, 0);
    let mut acc = 0.0;
    let mut sq = 0.0;
    for i in 0..sc.len() {
        let v = sw.forward(p, policy, sc.x0(i), sc.noise(i))?;
        acc += sc.weights[i] * v;
        sq += sc.weights[i] * v * v;
    }
    let se = if sc.monte_carlo && sc.len() > 1 {
        ((sq - acc * acc).max(0.0) / (sc.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok((acc, se))
}

/// `E[Σ c_k + c_n]` under a parameterized policy.
pub fn expected_objective(
    p: &ControlProblem,
    class: &PolicyClass,
    params: &PolicyParams,
    engine: &ExpectationEngine,
) -> Result<f64> {
    params.check(class, f64::INFINITY)?;
    let sc = objective_scenarios(p, Some(engine))?;
    Ok(scenario_mean(p, &ParamPolicy { class, params }, &sc)?.0)
}

/// `Q^π_k(x, μ_θ(x))` averaged over `w_k..w_{n-1}`.
pub fn expected_q(
    p: &ControlProblem,
    class: &PolicyClass,
    params: &PolicyParams,
    k: usize,
    x: &[f64],
    theta: &[f64],
    engine: &ExpectationEngine,
) -> Result<f64> {
    crate::model::q_function_theta(p, class, params, k, x, theta, Some(engine))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_weights_and_symmetry() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "order {n}");
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(10);
        let m2: f64 = x.iter().zip(&w).map(|(a, b)| a * a * b).sum();
        let m4: f64 = x.iter().zip(&w).map(|(a, b)| a.powi(4) * b).sum();
        assert!((m2 - 1.0).abs() < 1e-12 && (m4 - 3.0).abs() < 1e-11);
    }

    #[test]
    fn uniform_moments() {
        let a = (5.0f64 / 3.0).sqrt();
        let law = NoiseLaw::uniform_symmetric(1, a);
        let (pts, w) = law.rule(16);
        let m2: f64 = pts.iter().zip(&w).map(|(p, w)| p[0].powi(2) * w).sum();
        let m4: f64 = pts.iter().zip(&w).map(|(p, w)| p[0].powi(4) * w).sum();
        assert!((m2 - 5.0 / 9.0).abs() < 1e-14);
        assert!((m4 - 5.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn bank_is_deterministic() {
        let m = NoiseModel::iid(NoiseLaw::uniform_symmetric(1, 1.0), 2);
        assert_eq!(crn_sample_bank(Some(&m), 2, 50, 7), crn_sample_bank(Some(&m), 2, 50, 7));
        assert_ne!(crn_sample_bank(Some(&m), 2, 50, 7), crn_sample_bank(Some(&m), 2, 50, 8));
        assert!(crn_sample_bank(None, 2, 5, 7).data.is_empty());
    }

    #[test]
    fn degenerate_law_is_point_mass() {
        let law = NoiseLaw::Uniform { lower: vec![0.0], upper: vec![0.0] };
        assert!(law.validate().is_ok());
        assert_eq!(law.rule(16), (vec![vec![0.0]], vec![1.0]));
        assert!(NoiseLaw::Uniform { lower: vec![1.0], upper: vec![0.0] }.validate().is_err());
    }
}
