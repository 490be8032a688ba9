//! Grid DP over one- or two-dimensional states with multistart local search per node.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stage_scenarios, StageQ};
use crate::diff::{stationarity_test, TOL_STAT};
use crate::error::{Error, Result};
use crate::feasible::{FeasibleSet, ProductSet};
use crate::landscape::census::{polish_point, start_points};
use crate::landscape::classify::{classify_point, ClassifyOptions};
use crate::model::{ControlProblem, Grid, NodeActions, Override, Policy, Sweep, TabularPolicy, TabularStage};
use crate::objective::Objective;
use crate::solvers::{projected_descent, DescentOptions};

/// Reference (state, action) a branch is continued from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchStrategy {
    /// Lowest Q-value at every node.
    Global,
    /// Per-stage anchors followed by nearest-neighbour continuation across the grid; `None` falls back to `Global`.
    Continuation(Vec<Option<Anchor>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TabularOptions {
    /// Lattice starts per action axis.
    pub starts_per_axis: usize,
    pub descent: DescentOptions,
    pub dedup_tol: f64,
    pub tol_stat: f64,
    pub classify: ClassifyOptions,
}

impl Default for TabularOptions {
    fn default() -> Self {
        Self {
            starts_per_axis: 41,
            descent: DescentOptions { max_iter: 5_000, ..DescentOptions::default() },
            dedup_tol: 1e-4,
            tol_stat: TOL_STAT,
            classify: ClassifyOptions { probes: 200, ..ClassifyOptions::default() },
        }
    }
}

/// Input sequence induced from `x0` by one stage-0 local minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedInput {
    pub inputs: Vec<Vec<f64>>,
    pub value: f64,
    /// Matches the branch selected at the grid node nearest `x0`.
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct TabularDpRun {
    pub policy: TabularPolicy,
    /// Starts per stage that left the grid or failed to evaluate.
    pub grid_exits: Vec<usize>,
    pub induced: Vec<InducedInput>,
    pub warnings: Vec<String>,
    pub options: TabularOptions,
    pub strategy: BranchStrategy,
}

impl TabularDpRun {
    pub fn stage(&self, k: usize) -> &TabularStage {
        self.policy.stages[k].as_ref().expect("every stage is filled")
    }
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// All distinct local minimizers of `u ↦ Q_k(x, u)` from a lattice of starts.
fn node_minimizers(q: &StageQ<'_>, set: &ProductSet, starts: &[Vec<f64>], opts: &TabularOptions) -> (NodeActions, usize) {
    let mut mins: Vec<Vec<f64>> = Vec::new();
    let mut vals = Vec::new();
    let mut exits = 0;
    for s in starts {
        let r = match projected_descent(q, s, set, &opts.descent) {
            Ok(r) => r,
            Err(_) => {
                exits += 1;
                continue;
            }
        };
        if mins.iter().any(|m| dist_inf(m, &r.point) <= opts.dedup_tol) {
            continue;
        }
        let z = polish_point(q, &r.point, set);
        let mut g = vec![0.0; z.len()];
        let f = q.value_grad(&z, &mut g);
        if !f.is_finite() {
            continue;
        }
        let Ok(st) = stationarity_test(&g, &z, set, opts.tol_stat) else { continue };
        if !st.is_stationary || mins.iter().any(|m| dist_inf(m, &z) <= opts.dedup_tol) {
            continue;
        }
        let Ok(cl) = classify_point(q, &z, set, &opts.classify) else { continue };
        if cl.class.is_local_min() {
            mins.push(z);
            vals.push(f);
        }
    }
    let mut order: Vec<usize> = (0..mins.len()).collect();
    order.sort_by(|a, b| mins[*a].partial_cmp(&mins[*b]).unwrap_or(std::cmp::Ordering::Equal));
    let minimizers = order.iter().map(|i| mins[*i].clone()).collect();
    let q_values = order.iter().map(|i| vals[*i]).collect();
    (NodeActions { minimizers, q_values, selected: None }, exits)
}

fn argmin(v: &[f64]) -> Option<usize> {
    v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
}

fn nearest(mins: &[Vec<f64>], target: &[f64]) -> Option<usize> {
    mins.iter()
        .enumerate()
        .min_by(|a, b| dist_inf(a.1, target).total_cmp(&dist_inf(b.1, target)))
        .map(|(i, _)| i)
}

fn neighbours(grid: &Grid, idx: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if grid.dim() == 1 {
        if idx > 0 {
            out.push(idx - 1);
        }
        if idx + 1 < grid.counts[0] {
            out.push(idx + 1);
        }
    } else {
        let (c0, c1) = (grid.counts[0], grid.counts[1]);
        let (i, j) = (idx / c1, idx % c1);
        if i > 0 {
            out.push(idx - c1);
        }
        if i + 1 < c0 {
            out.push(idx + c1);
        }
        if j > 0 {
            out.push(idx - 1);
        }
        if j + 1 < c1 {
            out.push(idx + 1);
        }
    }
    out
}

fn nearest_node(grid: &Grid, x: &[f64]) -> usize {
    (0..grid.len())
        .min_by(|a, b| dist_inf(&grid.node(*a), x).total_cmp(&dist_inf(&grid.node(*b), x)))
        .unwrap_or(0)
}

/// Breadth-first continuation from the anchor node; unreachable or empty nodes stay unselected.
fn select_continuation(grid: &Grid, nodes: &mut [NodeActions], anchor: &Anchor) {
    let start = nearest_node(grid, &anchor.state);
    let mut queue = std::collections::VecDeque::new();
    if let Some(i) = nearest(&nodes[start].minimizers, &anchor.action) {
        nodes[start].selected = Some(i);
        queue.push_back(start);
    }
    while let Some(cur) = queue.pop_front() {
        let reference = nodes[cur].minimizers[nodes[cur].selected.expect("queued nodes are selected")].clone();
        for nb in neighbours(grid, cur) {
            if nodes[nb].selected.is_some() {
                continue;
            }
            if let Some(i) = nearest(&nodes[nb].minimizers, &reference) {
                nodes[nb].selected = Some(i);
                queue.push_back(nb);
            }
        }
    }
}

/// Backward grid DP `n-1 → 0`; every stored action is a verified local minimizer of its Q-function.
pub fn dp_tabular(p: &ControlProblem, grid: &Grid, strategy: &BranchStrategy, opts: &TabularOptions) -> Result<TabularDpRun> {
    if p.is_stochastic() {
        return Err(Error::Invalid("grid DP requires a deterministic problem".into()));
    }
    if grid.dim() != p.state_dim {
        return Err(Error::dim("grid dimension", p.state_dim, grid.dim()));
    }
    if !matches!(p.action_set, FeasibleSet::Box { .. }) {
        return Err(Error::Invalid("grid DP requires a box action set".into()));
    }
    if let BranchStrategy::Continuation(a) = strategy {
        if a.len() != p.horizon {
            return Err(Error::dim("continuation anchors", p.horizon, a.len()));
        }
    }
    if opts.starts_per_axis == 0 {
        return Err(Error::Invalid("grid DP needs at least one start per axis".into()));
    }
    let set = ProductSet::single(p.action_set.clone());
    let starts = start_points(&set, opts.starts_per_axis, 0, 0)?;
    let mut policy = TabularPolicy::new(p.action_dim, p.horizon);
    let mut grid_exits = vec![0; p.horizon];
    let mut warnings = Vec::new();
    for k in (0..p.horizon).rev() {
        let sc = stage_scenarios(p, k, None)?;
        let tail = &policy;
        let results: Vec<(NodeActions, usize)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                let q = StageQ { problem: p, tail, stage: k, state: &x, scenarios: sc.clone() };
                node_minimizers(&q, &set, &starts, opts)
            })
            .collect();
        grid_exits[k] = results.iter().map(|r| r.1).sum();
        let mut nodes: Vec<NodeActions> = results.into_iter().map(|r| r.0).collect();
        let anchor = match strategy {
            BranchStrategy::Global => None,
            BranchStrategy::Continuation(a) => a[k].as_ref(),
        };
        match anchor {
            Some(a) => select_continuation(grid, &mut nodes, a),
            None => {
                for n in &mut nodes {
                    n.selected = argmin(&n.q_values);
                }
            }
        }
        let empty = nodes.iter().filter(|n| n.selected.is_none()).count();
        if empty > 0 {
            warnings.push(format!("stage {k}: {empty} grid nodes have no selected local minimizer"));
        }
        let j_values = nodes.iter().map(|n| n.selected.map_or(f64::NAN, |i| n.q_values[i])).collect();
        policy.stages[k] = Some(TabularStage { grid: grid.clone(), nodes, j_values });
    }
    let induced = induced_inputs(p, &policy, &set, &starts, opts, &mut warnings)?;
    Ok(TabularDpRun { policy, grid_exits, induced, warnings, options: *opts, strategy: strategy.clone() })
}

/// Re-solves stage 0 at `x0` and rolls each local minimizer forward under the tabular tail.
fn induced_inputs(
    p: &ControlProblem,
    policy: &TabularPolicy,
    set: &ProductSet,
    starts: &[Vec<f64>],
    opts: &TabularOptions,
    warnings: &mut Vec<String>,
) -> Result<Vec<InducedInput>> {
    if !p.initial.is_fixed() {
        return Ok(Vec::new());
    }
    let x0 = p.x0();
    let sc = stage_scenarios(p, 0, None)?;
    let q = StageQ { problem: p, tail: policy, stage: 0, state: &x0, scenarios: sc };
    let (node, _) = node_minimizers(&q, set, starts, opts);
    let stage0 = policy.stages[0].as_ref().expect("stage 0 filled");
    let chosen = stage0.grid.contains(&x0).then(|| {
        let n = &stage0.nodes[nearest_node(&stage0.grid, &x0)];
        n.selected_action().map(<[f64]>::to_vec)
    });
    let noise = p.nominal_noise(0);
    let mut out = Vec::new();
    for u0 in &node.minimizers {
        let pol = Override { stage: 0, action: u0, inner: policy };
        let mut sw = Sweep::new(p, 0);
        match sw.forward(p, &pol, &x0, &noise) {
            Ok(v) => {
                let inputs: Vec<Vec<f64>> = (0..p.horizon).map(|i| sw.action(i).to_vec()).collect();
                let selected = chosen
                    .clone()
                    .flatten()
                    .is_some_and(|c| node.minimizers.iter().enumerate().min_by(|a, b| dist_inf(a.1, &c).total_cmp(&dist_inf(b.1, &c))).map(|(_, m)| m) == Some(u0));
                out.push(InducedInput { inputs, value: v, selected });
            }
            Err(e) => warnings.push(format!("induced rollout from u0 = {u0:?} failed: {e}")),
        }
    }
    Ok(out)
}

impl Policy for TabularDpRun {
    fn action(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.policy.action(k, x, out)
    }
    fn action_jacobian(&self, k: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.policy.action_jacobian(k, x, out)
    }
}
