use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diff::{fd_hessian, stationarity_test, PROBE_STEP, TOL_STAT};
use crate::error::{Error, Result};
use crate::feasible::ProductSet;
use crate::objective::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointClass {
    StrictLocalMin,
    LocalMin,
    Saddle,
    LocalMax,
    Degenerate,
}

impl PointClass {
    /// True for classes with no strictly lower neighbour in the probed ball.
    pub fn is_local_min(self) -> bool {
        matches!(self, PointClass::StrictLocalMin | PointClass::LocalMin | PointClass::Degenerate)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PointClass::StrictLocalMin => "strict-local-min",
            PointClass::LocalMin => "local-min",
            PointClass::Saddle => "saddle",
            PointClass::LocalMax => "local-max",
            PointClass::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub tol_stat: f64,
    pub eigen_floor: f64,
    pub radius: f64,
    pub probes: usize,
    pub seed: u64,
    /// Probe values within `equal_rel·max(1,|f*|)` of `f*` count as equal.
    pub equal_rel: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            tol_stat: TOL_STAT,
            eigen_floor: 1e-6,
            radius: PROBE_STEP,
            probes: 1000,
            seed: 0x5eed_cafe,
            equal_rel: 8.0 * f64::EPSILON,
        }
    }
}

/// Outcome counts of neighbourhood probing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub lower: usize,
    pub higher: usize,
    pub equal: usize,
    /// Probes that collapsed onto the point after projection.
    pub skipped: usize,
    pub min_delta: f64,
    /// Direction of the most negative probe, if any.
    pub lowest_direction: Option<Vec<f64>>,
}

impl ProbeSummary {
    pub fn class(&self) -> PointClass {
        match (self.lower > 0, self.higher > 0, self.equal > 0) {
            (true, true, _) => PointClass::Saddle,
            (true, false, _) => PointClass::LocalMax,
            (false, true, false) => PointClass::StrictLocalMin,
            (false, true, true) => PointClass::LocalMin,
            (false, false, _) => PointClass::Degenerate,
        }
    }
}

/// Unit directions: axes, pairwise diagonals, then Gaussian draws, `count` in total.
pub fn probe_directions(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = s;
            out.push(v);
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                let mut v = vec![0.0; d];
                v[i] = si * h;
                v[j] = sj * h;
                out.push(v);
            }
        }
    }
    out.truncate(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Compares `f` on the sphere of radius `radius` (projected onto `set`) with `f(point)`.
pub fn neighborhood_probe(
    obj: &dyn Objective,
    point: &[f64],
    set: &ProductSet,
    radius: f64,
    probes: usize,
    seed: u64,
    equal_rel: f64,
) -> ProbeSummary {
    let f0 = obj.value(point);
    let tol = equal_rel * f0.abs().max(1.0);
    let mut s = ProbeSummary { lower: 0, higher: 0, equal: 0, skipped: 0, min_delta: f64::INFINITY, lowest_direction: None };
    for dir in probe_directions(point.len(), probes, seed) {
        let raw: Vec<f64> = point.iter().zip(&dir).map(|(a, b)| a + radius * b).collect();
        let p = set.project(&raw);
        let moved = p.iter().zip(point).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if moved < 0.1 * radius {
            s.skipped += 1;
            continue;
        }
        let delta = obj.value(&p) - f0;
        if delta.is_nan() {
            s.skipped += 1;
            continue;
        }
        if delta < s.min_delta {
            s.min_delta = delta;
            if delta < -tol {
                s.lowest_direction = Some(dir.clone());
            }
        }
        if delta < -tol {
            s.lower += 1;
        } else if delta > tol {
            s.higher += 1;
        } else {
            s.equal += 1;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: PointClass,
    /// Ascending Hessian eigenvalues; empty for boundary points.
    pub eigenvalues: Vec<f64>,
    pub interior: bool,
    pub probe: Option<ProbeSummary>,
    pub projected_gradient_norm: f64,
}

fn hessian_margin(point: &[f64]) -> f64 {
    2e-4 * point.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Local-min / saddle / max classification of a stationary point.
pub fn classify_point(obj: &dyn Objective, point: &[f64], set: &ProductSet, opts: &ClassifyOptions) -> Result<Classification> {
    let mut g = vec![0.0; point.len()];
    let f = obj.value_grad(point, &mut g);
    if !f.is_finite() {
        return Err(Error::NonFinite { stage: 0, what: "objective at classified point".into() });
    }
    let st = stationarity_test(&g, point, set, opts.tol_stat)?;
    if !st.is_stationary {
        return Err(Error::Invalid(format!(
            "point is not stationary (projected gradient {:.3e})",
            st.projected_gradient_norm
        )));
    }
    let interior = set.boundary_margin(point) > hessian_margin(point);
    let probe = || neighborhood_probe(obj, point, set, opts.radius, opts.probes, opts.seed, opts.equal_rel);
    if !interior {
        let p = probe();
        return Ok(Classification { class: p.class(), eigenvalues: vec![], interior, probe: Some(p), projected_gradient_norm: st.projected_gradient_norm });
    }
    let h = fd_hessian(obj, point, None, None);
    let lo = h.eigenvalues.first().copied().unwrap_or(0.0);
    let hi = h.eigenvalues.last().copied().unwrap_or(0.0);
    let fl = opts.eigen_floor;
    let by_spectrum = if lo > fl {
        Some(PointClass::StrictLocalMin)
    } else if lo < -fl && hi > fl {
        Some(PointClass::Saddle)
    } else if hi < -fl {
        Some(PointClass::LocalMax)
    } else {
        None
    };
    let (class, probe) = match by_spectrum {
        Some(c) => (c, None),
        None => {
            let p = probe();
            (p.class(), Some(p))
        }
    };
    Ok(Classification { class, eigenvalues: h.eigenvalues, interior, probe, projected_gradient_norm: st.projected_gradient_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasible::FeasibleSet;
    use crate::objective::FnObjective;

    fn free(d: usize) -> ProductSet {
        ProductSet::single(FeasibleSet::cube(d, -10.0, 10.0))
    }

    #[test]
    fn negative_bowl_is_local_max() {
        let obj = FnObjective {
            dim: 2,
            f: |z: &[f64]| -(z[0] * z[0] + z[1] * z[1]),
            g: |z: &[f64], g: &mut [f64]| {
                g[0] = -2.0 * z[0];
                g[1] = -2.0 * z[1];
            },
        };
        let c = classify_point(&obj, &[0.0, 0.0], &free(2), &ClassifyOptions::default()).unwrap();
        assert_eq!(c.class, PointClass::LocalMax);
    }

    #[test]
    fn monkey_saddle_found_by_sampling() {
        let obj = FnObjective {
            dim: 2,
            f: |z: &[f64]| z[0].powi(3) - 3.0 * z[0] * z[1] * z[1],
            g: |z: &[f64], g: &mut [f64]| {
                g[0] = 3.0 * z[0] * z[0] - 3.0 * z[1] * z[1];
                g[1] = -6.0 * z[0] * z[1];
            },
        };
        let c = classify_point(&obj, &[0.0, 0.0], &free(2), &ClassifyOptions::default()).unwrap();
        assert_eq!(c.class, PointClass::Saddle);
        assert!(c.probe.is_some());
    }

    #[test]
    fn non_stationary_point_rejected() {
        let obj = FnObjective { dim: 1, f: |z: &[f64]| z[0], g: |_: &[f64], g: &mut [f64]| g[0] = 1.0 };
        assert!(classify_point(&obj, &[0.0], &free(1), &ClassifyOptions::default()).is_err());
    }

    #[test]
    fn vertex_minimum_classified_by_sampling() {
        let obj = FnObjective { dim: 2, f: |z: &[f64]| z[0] + z[1], g: |_: &[f64], g: &mut [f64]| g.fill(1.0) };
        let set = ProductSet::single(FeasibleSet::cube(2, 0.0, 1.0));
        let c = classify_point(&obj, &[0.0, 0.0], &set, &ClassifyOptions::default()).unwrap();
        assert!(!c.interior);
        assert_eq!(c.class, PointClass::StrictLocalMin);
    }
}
