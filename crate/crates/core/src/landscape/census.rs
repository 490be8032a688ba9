use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classify::{classify_point, ClassifyOptions, PointClass, ProbeSummary};
use crate::diff::{stationarity_test, TOL_STAT};
use crate::error::{Error, Result};
use crate::feasible::ProductSet;
use crate::objective::Objective;
use crate::solvers::{gradient_root_search, newton_polish, projected_descent, DescentOptions, PolishOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPointRecord {
    pub point: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub eigenvalues: Vec<f64>,
    pub class: PointClass,
    pub basin_count: usize,
    pub interior: bool,
    /// Value above the census-best local minimum by more than `1e-8`.
    pub spurious: bool,
    pub found_by_descent: bool,
    pub found_by_root_search: bool,
    pub probe: Option<ProbeSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensusOptions {
    pub lattice_per_axis: usize,
    pub random_starts: usize,
    pub seed: u64,
    pub tol_stat: f64,
    /// Descent only has to reach a basin; polish and the stationarity filter use `tol_stat`.
    pub descent: DescentOptions,
    pub saddle_pass: bool,
    pub root_max_iter: usize,
    pub dedup_tol: f64,
    pub classify: ClassifyOptions,
}

impl Default for CensusOptions {
    fn default() -> Self {
        Self {
            lattice_per_axis: 21,
            random_starts: 200,
            seed: 0,
            tol_stat: TOL_STAT,
            descent: DescentOptions { max_iter: 20_000, tol_stat: 1e-5, ..DescentOptions::default() },
            saddle_pass: true,
            root_max_iter: 200,
            dedup_tol: 1e-3,
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub records: Vec<StationaryPointRecord>,
    pub starts: usize,
    pub failed_starts: usize,
    /// New points were still being discovered in the final fifth of the starts.
    pub incomplete: bool,
    pub best_value: Option<f64>,
}

impl Census {
    pub fn minima(&self) -> impl Iterator<Item = &StationaryPointRecord> {
        self.records.iter().filter(|r| r.class.is_local_min())
    }

    pub fn strict_minima(&self) -> impl Iterator<Item = &StationaryPointRecord> {
        self.records.iter().filter(|r| r.class == PointClass::StrictLocalMin)
    }

    pub fn best(&self) -> Option<&StationaryPointRecord> {
        self.minima().min_by(|a, b| a.value.total_cmp(&b.value))
    }
}

/// Lattice over the bounding box (projected onto the set) followed by uniform random feasible points.
pub fn start_points(set: &ProductSet, per_axis: usize, random: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = set
        .bounds()
        .ok_or_else(|| Error::Invalid("census needs a bounded feasible set".into()))?;
    let d = lo.len();
    let mut out = Vec::new();
    if per_axis > 0 {
        let total = per_axis.checked_pow(d as u32).filter(|t| *t <= 10_000_000).ok_or_else(|| {
            Error::Invalid(format!("lattice of {per_axis}^{d} points is too large"))
        })?;
        for idx in 0..total {
            let mut rem = idx;
            let mut z = vec![0.0; d];
            for i in (0..d).rev() {
                let j = rem % per_axis;
                rem /= per_axis;
                z[i] = if per_axis == 1 {
                    0.5 * (lo[i] + hi[i])
                } else {
                    lo[i] + (hi[i] - lo[i]) * j as f64 / (per_axis - 1) as f64
                };
            }
            out.push(set.project(&z));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        match set.sample(&mut rng) {
            Some(z) => out.push(z),
            None => return Err(Error::Numerical("could not sample a feasible start".into())),
        }
    }
    Ok(out)
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Candidate {
    point: Vec<f64>,
    gnorm: f64,
    basin: usize,
    descent: bool,
    root: bool,
}

const POLISH_ITERS: usize = 40;

/// Tight Newton polish first so that degenerate roots collapse, then the default target.
pub fn polish_point(obj: &dyn Objective, z: &[f64], set: &ProductSet) -> Vec<f64> {
    let tight = newton_polish(obj, z, set, &PolishOptions { target: 1e-14, max_iter: POLISH_ITERS, ..PolishOptions::default() });
    if tight.converged {
        return tight.point;
    }
    let loose = newton_polish(obj, z, set, &PolishOptions { max_iter: POLISH_ITERS, ..PolishOptions::default() });
    loose.point
}

fn grad_norm(obj: &dyn Objective, z: &[f64]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; z.len()];
    let f = obj.value_grad(z, &mut g);
    (f, g)
}

/// Multistart census of stationary points with descent and gradient-root passes.
pub fn enumerate_stationary(obj: &dyn Objective, set: &ProductSet, opts: &CensusOptions) -> Result<Census> {
    if opts.lattice_per_axis == 0 && opts.random_starts == 0 {
        return Err(Error::Invalid("census budget is zero".into()));
    }
    if obj.dim() != set.dim() {
        return Err(Error::dim("census objective", set.dim(), obj.dim()));
    }
    let starts = start_points(set, opts.lattice_per_axis, opts.random_starts, opts.seed)?;
    let mut cands: Vec<Candidate> = Vec::new();
    let mut failed = 0;
    let mut last_new = 0;
    for (si, s) in starts.iter().enumerate() {
        let mut found = Vec::new();
        match projected_descent(obj, s, set, &opts.descent) {
            Ok(r) => found.push((r.point, true)),
            Err(_) => failed += 1,
        }
        if opts.saddle_pass {
            if let Some(z) = gradient_root_search(obj, s, set, opts.tol_stat, opts.root_max_iter) {
                found.push((z, false));
            }
        }
        for (z, by_descent) in found {
            if let Some(c) = cands.iter_mut().find(|c| dist_inf(&c.point, &z) <= opts.dedup_tol) {
                c.basin += 1;
                c.descent |= by_descent;
                c.root |= !by_descent;
                continue;
            }
            let z = polish_point(obj, &z, set);
            let (f, g) = grad_norm(obj, &z);
            if !f.is_finite() {
                continue;
            }
            let Ok(st) = stationarity_test(&g, &z, set, opts.tol_stat) else { continue };
            if !st.is_stationary {
                continue;
            }
            if let Some(c) = cands.iter_mut().find(|c| dist_inf(&c.point, &z) <= opts.dedup_tol) {
                c.basin += 1;
                c.descent |= by_descent;
                c.root |= !by_descent;
                if st.projected_gradient_norm < c.gnorm {
                    c.point = z;
                    c.gnorm = st.projected_gradient_norm;
                }
                continue;
            }
            cands.push(Candidate { point: z, gnorm: st.projected_gradient_norm, basin: 1, descent: by_descent, root: !by_descent });
            last_new = si;
        }
    }
    let mut records = Vec::with_capacity(cands.len());
    for c in cands {
        let Ok(cl) = classify_point(obj, &c.point, set, &opts.classify) else { continue };
        let (f, g) = grad_norm(obj, &c.point);
        records.push(StationaryPointRecord {
            value: f,
            gradient_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
            eigenvalues: cl.eigenvalues,
            class: cl.class,
            basin_count: c.basin,
            interior: cl.interior,
            spurious: false,
            found_by_descent: c.descent,
            found_by_root_search: c.root,
            probe: cl.probe,
            point: c.point,
        });
    }
    records.sort_by(|a, b| a.value.total_cmp(&b.value).then_with(|| a.point.partial_cmp(&b.point).unwrap_or(std::cmp::Ordering::Equal)));
    let best_value = records.iter().filter(|r| r.class.is_local_min()).map(|r| r.value).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    if let Some(b) = best_value {
        for r in &mut records {
            r.spurious = r.class.is_local_min() && r.value > b + 1e-8;
        }
    }
    let incomplete = !starts.is_empty() && last_new * 5 >= starts.len() * 4 && starts.len() >= 5;
    Ok(Census { records, starts: starts.len(), failed_starts: failed, incomplete, best_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasible::FeasibleSet;
    use crate::objective::FnObjective;

    #[test]
    fn convex_quadratic_has_single_strict_minimum() {
        let obj = FnObjective {
            dim: 2,
            f: |z: &[f64]| (z[0] - 0.3).powi(2) + 2.0 * (z[1] + 0.4).powi(2),
            g: |z: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * (z[0] - 0.3);
                g[1] = 4.0 * (z[1] + 0.4);
            },
        };
        let set = ProductSet::single(FeasibleSet::cube(2, -1.0, 1.0));
        let opts = CensusOptions { lattice_per_axis: 5, random_starts: 10, ..CensusOptions::default() };
        let c = enumerate_stationary(&obj, &set, &opts).unwrap();
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.records[0].class, PointClass::StrictLocalMin);
        assert!(dist_inf(&c.records[0].point, &[0.3, -0.4]) < 1e-8);
    }

    #[test]
    fn zero_budget_is_rejected() {
        let obj = FnObjective { dim: 1, f: |z: &[f64]| z[0] * z[0], g: |z: &[f64], g: &mut [f64]| g[0] = 2.0 * z[0] };
        let set = ProductSet::single(FeasibleSet::cube(1, -1.0, 1.0));
        let opts = CensusOptions { lattice_per_axis: 0, random_starts: 0, ..CensusOptions::default() };
        let e = enumerate_stationary(&obj, &set, &opts).unwrap_err();
        assert!(e.is_validation());
    }
}
