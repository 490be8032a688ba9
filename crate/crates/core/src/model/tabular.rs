use super::policy::Policy;
use crate::error::{Error, Result};

/// Uniform tensor grid over a box in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || d > 2 || upper.len() != d || counts.len() != d {
            return Err(Error::Invalid("grid must be 1-D or 2-D with matching bounds".into()));
        }
        if counts.iter().any(|c| *c < 2) || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid("grid needs ≥ 2 nodes per axis and lower < upper".into()));
        }
        Ok(Self { lower, upper, counts })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.counts[axis] - 1) as f64
    }

    /// Node coordinates; the first axis varies slowest.
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut rem = idx;
        for axis in (0..self.dim()).rev() {
            let i = rem % self.counts[axis];
            rem /= self.counts[axis];
            out[axis] = self.coord(axis, i);
        }
        out
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.spacing(axis)
        }
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, c)| acc * c + i)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l - 1e-12 && *v <= *u + 1e-12)
    }

    /// Cell index and local coordinate per axis.
    fn locate(&self, x: &[f64]) -> Vec<(usize, f64)> {
        (0..self.dim())
            .map(|a| {
                let h = self.spacing(a);
                let t = ((x[a] - self.lower[a]) / h).max(0.0);
                let i = (t.floor() as usize).min(self.counts[a] - 2);
                let s = ((x[a] - self.coord(a, i)) / h).clamp(0.0, 1.0);
                (i, s)
            })
            .collect()
    }

    /// Multilinear interpolation weights: `(node, weight, d weight / d x_axis)`.
    pub fn stencil(&self, x: &[f64]) -> Vec<(usize, f64, Vec<f64>)> {
        let loc = self.locate(x);
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut idx = vec![0; d];
            let mut w = 1.0;
            let mut dw = vec![1.0; d];
            for a in 0..d {
                let hi = corner & (1 << a) != 0;
                let (i, s) = loc[a];
                idx[a] = if hi { i + 1 } else { i };
                let (wa, da) = if hi { (s, 1.0) } else { (1.0 - s, -1.0) };
                let da = da / self.spacing(a);
                for (b, g) in dw.iter_mut().enumerate() {
                    *g *= if b == a { da } else { wa };
                }
                w *= wa;
            }
            out.push((self.flat(&idx), w, dw));
        }
        out
    }
}

/// All distinct local minimizers found at a node, with the selected branch.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeActions {
    pub minimizers: Vec<Vec<f64>>,
    pub q_values: Vec<f64>,
    pub selected: Option<usize>,
}

impl NodeActions {
    pub fn selected_action(&self) -> Option<&[f64]> {
        self.selected.map(|i| self.minimizers[i].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularStage {
    pub grid: Grid,
    pub nodes: Vec<NodeActions>,
    /// `J^π_k` at each node under the selected branch.
    pub j_values: Vec<f64>,
}

impl TabularStage {
    pub fn interpolate_j(&self, x: &[f64]) -> Option<f64> {
        if !self.grid.contains(x) {
            return None;
        }
        Some(self.grid.stencil(x).iter().map(|(i, w, _)| w * self.j_values[*i]).sum())
    }
}

/// Piecewise-linear policy over per-stage grids; stages are indexed `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub action_dim: usize,
    pub stages: Vec<Option<TabularStage>>,
}

impl TabularPolicy {
    pub fn new(action_dim: usize, horizon: usize) -> Self {
        Self {
            action_dim,
            stages: vec![None; horizon],
        }
    }

    fn stage(&self, k: usize, x: &[f64]) -> Result<&TabularStage> {
        let st = self
            .stages
            .get(k)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Invalid(format!("tabular policy has no stage {k}")))?;
        if !st.grid.contains(x) {
            return Err(Error::OutsideGrid { stage: k, state: x.to_vec() });
        }
        Ok(st)
    }

    fn node_action(st: &TabularStage, k: usize, i: usize) -> Result<&[f64]> {
        st.nodes[i].selected_action().ok_or_else(|| Error::Numerical(format!(
            "stage {k} node {i} has no local minimizer"
        )))
    }
}

impl Policy for TabularPolicy {
    fn action(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let st = self.stage(k, x)?;
        out.fill(0.0);
        for (i, w, _) in st.grid.stencil(x) {
            if w == 0.0 {
                continue;
            }
            let a = Self::node_action(st, k, i)?;
            for (o, v) in out.iter_mut().zip(a) {
                *o += w * v;
            }
        }
        Ok(())
    }

    fn action_jacobian(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let st = self.stage(k, x)?;
        let nx = st.grid.dim();
        out.fill(0.0);
        for (i, _, dw) in st.grid.stencil(x) {
            let a = Self::node_action(st, k, i)?;
            for (b, v) in a.iter().enumerate() {
                for j in 0..nx {
                    out[b * nx + j] += dw[j] * v;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_stage(f: impl Fn(f64) -> f64) -> TabularStage {
        let grid = Grid::new(vec![-1.0], vec![1.0], vec![5]).unwrap();
        let nodes = (0..5)
            .map(|i| {
                let x = grid.node(i)[0];
                NodeActions { minimizers: vec![vec![f(x)]], q_values: vec![0.0], selected: Some(0) }
            })
            .collect();
        TabularStage { grid, nodes, j_values: vec![0.0; 5] }
    }

    #[test]
    fn interpolation_reproduces_linear_policy() {
        let pol = TabularPolicy { action_dim: 1, stages: vec![Some(linear_stage(|x| 2.0 * x + 1.0))] };
        let mut u = [0.0];
        let mut d = [0.0];
        for x in [-1.0, -0.3, 0.0, 0.77, 1.0] {
            pol.action(0, &[x], &mut u).unwrap();
            pol.action_jacobian(0, &[x], &mut d).unwrap();
            assert!((u[0] - (2.0 * x + 1.0)).abs() < 1e-14);
            assert!((d[0] - 2.0).abs() < 1e-12);
        }
        assert!(matches!(pol.action(0, &[1.5], &mut u), Err(Error::OutsideGrid { .. })));
    }

    #[test]
    fn bilinear_weights_sum_to_one() {
        let g = Grid::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![3, 5]).unwrap();
        let st = g.stencil(&[0.3, 1.1]);
        let s: f64 = st.iter().map(|(_, w, _)| w).sum();
        assert!((s - 1.0).abs() < 1e-15);
        let x: f64 = st.iter().map(|(i, w, _)| w * g.node(*i)[1]).sum();
        assert!((x - 1.1).abs() < 1e-14);
    }
}
