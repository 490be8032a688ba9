//! Feasible sets for actions and policy parameters, with Euclidean projections.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const POLY_MAX_ROWS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `{z : a_i · z ≤ b_i}` with a certified strictly interior point.
    Polytope {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        interior: Vec<f64>,
    },
    /// Row-major `rows × cols` matrices whose singular values are all ≥ `floor`.
    SpectralFloor { rows: usize, cols: usize, floor: f64 },
    /// All of `R^dim`.
    Free { dim: usize },
}

impl FeasibleSet {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("box bounds", lower.len(), upper.len()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Invalid("box lower bound exceeds upper bound".into()));
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        FeasibleSet::Box {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>, interior: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::dim("polytope rows", a.len(), b.len()));
        }
        if a.len() > POLY_MAX_ROWS {
            return Err(Error::Invalid(format!("polytope has more than {POLY_MAX_ROWS} rows")));
        }
        for row in &a {
            if row.len() != interior.len() {
                return Err(Error::dim("polytope row", interior.len(), row.len()));
            }
        }
        for (row, bi) in a.iter().zip(&b) {
            if dot(row, &interior) >= *bi {
                return Err(Error::Invalid("polytope interior point is not strictly interior".into()));
            }
        }
        Ok(FeasibleSet::Polytope { a, b, interior })
    }

    pub fn spectral_floor(rows: usize, cols: usize, floor: f64) -> Result<Self> {
        if !(floor > 0.0) {
            return Err(Error::Invalid("spectral floor must be positive".into()));
        }
        Ok(FeasibleSet::SpectralFloor { rows, cols, floor })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Polytope { interior, .. } => interior.len(),
            FeasibleSet::SpectralFloor { rows, cols, .. } => rows * cols,
            FeasibleSet::Free { dim } => *dim,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, FeasibleSet::Box { .. } | FeasibleSet::Polytope { .. })
    }

    /// Largest constraint violation (0 when feasible).
    pub fn violation(&self, z: &[f64]) -> f64 {
        match self {
            FeasibleSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            FeasibleSet::Polytope { a, b, .. } => a
                .iter()
                .zip(b)
                .map(|(row, bi)| (dot(row, z) - bi).max(0.0))
                .fold(0.0, f64::max),
            FeasibleSet::SpectralFloor { rows, cols, floor } => {
                let s = singular_values(*rows, *cols, z);
                s.iter().map(|si| (floor - si).max(0.0)).fold(0.0, f64::max)
            }
            FeasibleSet::Free { .. } => 0.0,
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.len() == self.dim() && self.violation(z) <= tol
    }

    /// Euclidean projection (a local retraction for `SpectralFloor`).
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        match self {
            FeasibleSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| v.max(*l).min(*u))
                .collect(),
            FeasibleSet::Polytope { a, b, .. } => project_polytope(a, b, z),
            FeasibleSet::SpectralFloor { rows, cols, floor } => {
                project_spectral(*rows, *cols, *floor, z)
            }
            FeasibleSet::Free { .. } => z.to_vec(),
        }
    }

    /// Distance from `z` to the boundary, or `f64::INFINITY` for `Free`.
    pub fn boundary_margin(&self, z: &[f64]) -> f64 {
        match self {
            FeasibleSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| (v - l).min(u - v))
                .fold(f64::INFINITY, f64::min),
            FeasibleSet::Polytope { a, b, .. } => a
                .iter()
                .zip(b)
                .map(|(row, bi)| (bi - dot(row, z)) / norm(row))
                .fold(f64::INFINITY, f64::min),
            FeasibleSet::SpectralFloor { rows, cols, floor } => {
                let s = singular_values(*rows, *cols, z);
                s.iter().map(|si| si - floor).fold(f64::INFINITY, f64::min)
            }
            FeasibleSet::Free { .. } => f64::INFINITY,
        }
    }

    /// Human-readable labels of constraints active at `z`.
    pub fn active_constraints(&self, z: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            FeasibleSet::Box { lower, upper } => {
                for (i, v) in z.iter().enumerate() {
                    if (v - lower[i]).abs() <= tol {
                        out.push(format!("lower[{i}]"));
                    }
                    if (upper[i] - v).abs() <= tol {
                        out.push(format!("upper[{i}]"));
                    }
                }
            }
            FeasibleSet::Polytope { a, b, .. } => {
                for (i, (row, bi)) in a.iter().zip(b).enumerate() {
                    if (bi - dot(row, z)).abs() <= tol * (1.0 + bi.abs()) {
                        out.push(format!("row[{i}]"));
                    }
                }
            }
            FeasibleSet::SpectralFloor { rows, cols, floor } => {
                for (i, s) in singular_values(*rows, *cols, z).iter().enumerate() {
                    if (s - floor).abs() <= tol * floor.max(1.0) {
                        out.push(format!("sigma[{i}]"));
                    }
                }
            }
            FeasibleSet::Free { .. } => {}
        }
        out
    }

    /// Axis-aligned bounding box, if the set is bounded.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            FeasibleSet::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            FeasibleSet::Polytope { a, b, interior } => {
                let verts = polytope_vertices(a, b, interior.len());
                if verts.is_empty() {
                    return None;
                }
                let d = interior.len();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for v in &verts {
                    for i in 0..d {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                Some((lo, hi))
            }
            _ => None,
        }
    }

    /// Uniform sample (rejection from the bounding box for polytopes).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        let (lo, hi) = self.bounds()?;
        for _ in 0..10_000 {
            let z: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| if h > l { rng.random_range(*l..=*h) } else { *l })
                .collect();
            if self.violation(&z) == 0.0 {
                return Some(z);
            }
        }
        None
    }
}

/// Cartesian product of feasible sets, one block per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSet {
    pub blocks: Vec<FeasibleSet>,
}

impl ProductSet {
    pub fn new(blocks: Vec<FeasibleSet>) -> Self {
        Self { blocks }
    }

    pub fn single(set: FeasibleSet) -> Self {
        Self { blocks: vec![set] }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(FeasibleSet::dim).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len() + 1);
        let mut s = 0;
        off.push(0);
        for b in &self.blocks {
            s += b.dim();
            off.push(s);
        }
        off
    }

    fn split<'a>(&self, z: &'a [f64]) -> impl Iterator<Item = (&FeasibleSet, &'a [f64])> {
        let off = self.offsets();
        self.blocks
            .iter()
            .enumerate()
            .map(move |(i, b)| (b, &z[off[i]..off[i + 1]]))
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(z.len());
        for (b, zb) in self.split(z) {
            out.extend(b.project(zb));
        }
        out
    }

    pub fn violation(&self, z: &[f64]) -> f64 {
        self.split(z).map(|(b, zb)| b.violation(zb)).fold(0.0, f64::max)
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.len() == self.dim() && self.violation(z) <= tol
    }

    pub fn boundary_margin(&self, z: &[f64]) -> f64 {
        self.split(z)
            .map(|(b, zb)| b.boundary_margin(zb))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn active_constraints(&self, z: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (k, (b, zb)) in self.split(z).enumerate() {
            for c in b.active_constraints(zb, tol) {
                out.push(format!("block{k}.{c}"));
            }
        }
        out
    }

    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for b in &self.blocks {
            let (l, h) = b.bounds()?;
            lo.extend(l);
            hi.extend(h);
        }
        Some((lo, hi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.sample(rng)?);
        }
        Some(out)
    }
}

impl From<FeasibleSet> for ProductSet {
    fn from(s: FeasibleSet) -> Self {
        ProductSet::single(s)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Iterate over all subsets of `0..m` with at most `max_size` elements, smallest first.
fn subsets(m: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (0u32..(1u32 << m))
        .map(|mask| (0..m).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| s.len() <= max_size)
        .collect();
    all.sort_by_key(|s| s.len());
    all
}

/// Projection onto the affine set `{a_i · y = b_i, i ∈ S}` and the multipliers.
fn affine_projection(a: &[Vec<f64>], b: &[f64], s: &[usize], z: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    if s.is_empty() {
        return Some((z.to_vec(), vec![]));
    }
    let d = z.len();
    let k = s.len();
    let as_ = DMatrix::from_fn(k, d, |i, j| a[s[i]][j]);
    let gram = &as_ * as_.transpose();
    let resid = DVector::from_fn(k, |i, _| dot(&a[s[i]], z) - b[s[i]]);
    let chol = gram.clone().cholesky()?;
    let scale = gram.diagonal().max();
    if chol.l().diagonal().min().powi(2) <= 1e-12 * scale {
        return None;
    }
    let lambda = chol.solve(&resid);
    let shift = as_.transpose() * &lambda;
    let y: Vec<f64> = (0..d).map(|j| z[j] - shift[j]).collect();
    Some((y, lambda.iter().copied().collect()))
}

fn project_polytope(a: &[Vec<f64>], b: &[f64], z: &[f64]) -> Vec<f64> {
    let feas_tol = |bi: f64| 1e-12 * (1.0 + bi.abs());
    if a.iter().zip(b).all(|(row, bi)| dot(row, z) - bi <= feas_tol(*bi)) {
        return z.to_vec();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in subsets(a.len(), z.len()).into_iter().skip(1) {
        let Some((y, lambda)) = affine_projection(a, b, &s, z) else {
            continue;
        };
        if lambda.iter().any(|l| *l < -1e-12) {
            continue;
        }
        if a.iter().zip(b).any(|(row, bi)| dot(row, &y) - bi > 1e-9 * (1.0 + bi.abs())) {
            continue;
        }
        let dist: f64 = y.iter().zip(z).map(|(p, q)| (p - q).powi(2)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, y));
        }
    }
    best.map(|(_, y)| y).unwrap_or_else(|| z.to_vec())
}

/// Vertices of a bounded polytope by enumerating `dim`-row active sets.
pub fn polytope_vertices(a: &[Vec<f64>], b: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for s in subsets(a.len(), dim).into_iter().filter(|s| s.len() == dim) {
        let m = DMatrix::from_fn(dim, dim, |i, j| a[s[i]][j]);
        let rhs = DVector::from_fn(dim, |i, _| b[s[i]]);
        let Some(v) = m.lu().solve(&rhs) else { continue };
        let v: Vec<f64> = v.iter().copied().collect();
        if v.iter().any(|x| !x.is_finite()) {
            continue;
        }
        if a.iter().zip(b).all(|(row, bi)| dot(row, &v) - bi <= 1e-9 * (1.0 + bi.abs()))
            && !out.iter().any(|w| w.iter().zip(&v).all(|(p, q)| (p - q).abs() < 1e-12))
        {
            out.push(v);
        }
    }
    out
}

pub fn matrix_from_row_major(rows: usize, cols: usize, z: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, z)
}

pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn singular_values(rows: usize, cols: usize, z: &[f64]) -> Vec<f64> {
    matrix_from_row_major(rows, cols, z)
        .singular_values()
        .iter()
        .copied()
        .collect()
}

fn project_spectral(rows: usize, cols: usize, floor: f64, z: &[f64]) -> Vec<f64> {
    let m = matrix_from_row_major(rows, cols, z);
    let mut svd = m.svd(true, true);
    if svd.singular_values.iter().all(|s| *s >= floor * (1.0 - 1e-12)) {
        return z.to_vec();
    }
    for s in svd.singular_values.iter_mut() {
        if *s < floor {
            *s = floor;
        }
    }
    match svd.recompose() {
        Ok(k) => row_major(&k),
        Err(_) => z.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn detparam_theta() -> FeasibleSet {
        FeasibleSet::polytope(
            vec![vec![-2.0, 1.0], vec![2.0, -1.0], vec![-2.0, -1.0], vec![2.0, 1.0]],
            vec![-1.0, 3.0, -1.0, 3.0],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn box_clamp() {
        let s = FeasibleSet::cube(1, -10.0, 10.0);
        assert_eq!(s.project(&[12.0]), vec![10.0]);
    }

    #[test]
    fn polytope_origin_projects_to_lower_vertex() {
        let p = detparam_theta().project(&[0.0, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-14 && p[1].abs() < 1e-14, "{p:?}");
    }

    #[test]
    fn polytope_vertices_and_bounds() {
        let (lo, hi) = detparam_theta().bounds().unwrap();
        assert!((lo[0] - 0.5).abs() < 1e-12 && (hi[0] - 1.5).abs() < 1e-12);
        assert!((lo[1] + 1.0).abs() < 1e-12 && (hi[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_clamp_keeps_vectors() {
        let u = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 0.7).into_inner();
        let v = nalgebra::Rotation3::from_euler_angles(-0.5, 0.1, 0.4).into_inner();
        let sig = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(150.0, 80.0, 120.0));
        let k = u * sig * v.transpose();
        let kd = DMatrix::from_iterator(3, 3, k.iter().copied());
        let set = FeasibleSet::spectral_floor(3, 3, 100.0).unwrap();
        let p = set.project(&row_major(&kd));
        let pm = matrix_from_row_major(3, 3, &p);
        let expect = u * nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(150.0, 100.0, 120.0)) * v.transpose();
        let em = DMatrix::from_iterator(3, 3, expect.iter().copied());
        assert!((pm - em).norm() < 1e-9);
        let mut s: Vec<f64> = singular_values(3, 3, &p);
        s.sort_by(f64::total_cmp);
        assert!((s[0] - 100.0).abs() < 1e-9 && (s[2] - 150.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(FeasibleSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(FeasibleSet::spectral_floor(2, 2, 0.0).is_err());
        assert!(FeasibleSet::polytope(vec![vec![1.0]], vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn active_constraints_listed() {
        let s = FeasibleSet::cube(2, -1.0, 1.0);
        assert_eq!(s.active_constraints(&[1.0, 0.0], 1e-9), vec!["upper[0]".to_string()]);
    }
}
