//! Smooth maps with grouped arguments, e.g. `(x, u, w)` for dynamics.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

/// Central-difference step for first derivatives.
pub fn fd_step(z: f64) -> f64 {
    1e-6 * z.abs().max(1.0)
}

/// A C² map from argument groups to `R^out_dim`.
pub trait SmoothMap: Send + Sync {
    fn arg_dims(&self) -> &[usize];
    fn out_dim(&self) -> usize;
    fn eval(&self, args: &[&[f64]], out: &mut [f64]);

    /// Row-major `out_dim × arg_dims[wrt]` Jacobian.
    fn jacobian(&self, args: &[&[f64]], wrt: usize, out: &mut [f64]) {
        fd_jacobian(self, args, wrt, out);
    }

    fn analytic(&self) -> bool {
        false
    }

    fn value(&self, args: &[&[f64]]) -> f64 {
        let mut o = [0.0];
        self.eval(args, &mut o);
        o[0]
    }
}

/// Central finite-difference Jacobian with respect to one argument group.
pub fn fd_jacobian<M: SmoothMap + ?Sized>(map: &M, args: &[&[f64]], wrt: usize, out: &mut [f64]) {
    let n_out = map.out_dim();
    let n_in = args[wrt].len();
    let mut pert = args[wrt].to_vec();
    let mut plus = vec![0.0; n_out];
    let mut minus = vec![0.0; n_out];
    for j in 0..n_in {
        let z = pert[j];
        let h = fd_step(z);
        pert[j] = z + h;
        eval_with(map, args, wrt, &pert, &mut plus);
        pert[j] = z - h;
        eval_with(map, args, wrt, &pert, &mut minus);
        pert[j] = z;
        for i in 0..n_out {
            out[i * n_in + j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
}

fn eval_with<M: SmoothMap + ?Sized>(map: &M, args: &[&[f64]], wrt: usize, sub: &[f64], out: &mut [f64]) {
    let mut local: Vec<&[f64]> = args.to_vec();
    local[wrt] = sub;
    map.eval(&local, out);
}

pub type Map = Arc<dyn SmoothMap>;

type EvalFn = dyn Fn(&[&[f64]], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(&[&[f64]], usize, &mut [f64]) + Send + Sync;

/// Map backed by closures; without a Jacobian closure it falls back to finite differences.
pub struct ClosureMap {
    dims: Vec<usize>,
    out: usize,
    f: Box<EvalFn>,
    jac: Option<Box<JacFn>>,
}

impl ClosureMap {
    pub fn new(
        dims: Vec<usize>,
        out: usize,
        f: impl Fn(&[&[f64]], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dims,
            out,
            f: Box::new(f),
            jac: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[&[f64]], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }

    pub fn into_map(self) -> Map {
        Arc::new(self)
    }
}

impl fmt::Debug for ClosureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosureMap")
            .field("dims", &self.dims)
            .field("out", &self.out)
            .field("analytic", &self.jac.is_some())
            .finish()
    }
}

impl SmoothMap for ClosureMap {
    fn arg_dims(&self) -> &[usize] {
        &self.dims
    }
    fn out_dim(&self) -> usize {
        self.out
    }
    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        (self.f)(args, out)
    }
    fn jacobian(&self, args: &[&[f64]], wrt: usize, out: &mut [f64]) {
        match &self.jac {
            Some(j) => j(args, wrt, out),
            None => fd_jacobian(self, args, wrt, out),
        }
    }
    fn analytic(&self) -> bool {
        self.jac.is_some()
    }
}

/// `f(x, u, w) = A x + B u + G w`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: Option<DMatrix<f64>>,
    dims: [usize; 3],
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, g: Option<DMatrix<f64>>) -> Self {
        let w = g.as_ref().map_or(0, |g| g.ncols());
        let dims = [a.ncols(), b.ncols(), w];
        Self { a, b, g, dims }
    }
}

fn copy_row_major(m: &DMatrix<f64>, out: &mut [f64]) {
    let c = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..c {
            out[i * c + j] = m[(i, j)];
        }
    }
}

impl SmoothMap for LinearDynamics {
    fn arg_dims(&self) -> &[usize] {
        &self.dims
    }
    fn out_dim(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        let (x, u) = (args[0], args[1]);
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, xj) in x.iter().enumerate() {
                s += self.a[(i, j)] * xj;
            }
            for (j, uj) in u.iter().enumerate() {
                s += self.b[(i, j)] * uj;
            }
            if let Some(g) = &self.g {
                for (j, wj) in args[2].iter().enumerate() {
                    s += g[(i, j)] * wj;
                }
            }
            *o = s;
        }
    }
    fn jacobian(&self, _args: &[&[f64]], wrt: usize, out: &mut [f64]) {
        match wrt {
            0 => copy_row_major(&self.a, out),
            1 => copy_row_major(&self.b, out),
            _ => {
                if let Some(g) = &self.g {
                    copy_row_major(g, out)
                }
            }
        }
    }
    fn analytic(&self) -> bool {
        true
    }
}

/// `c(x, u) = xᵀQx + uᵀRu`; with `r = None` it is a terminal cost of `x` only.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub r: Option<DMatrix<f64>>,
    dims: Vec<usize>,
}

impl QuadraticCost {
    pub fn stage(q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        let dims = vec![q.nrows(), r.nrows()];
        Self { q, r: Some(r), dims }
    }

    pub fn terminal(q: DMatrix<f64>) -> Self {
        let dims = vec![q.nrows()];
        Self { q, r: None, dims }
    }
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            s += v[i] * m[(i, j)] * v[j];
        }
    }
    s
}

fn sym_grad(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for j in 0..v.len() {
            s += (m[(i, j)] + m[(j, i)]) * v[j];
        }
        *o = s;
    }
}

impl SmoothMap for QuadraticCost {
    fn arg_dims(&self) -> &[usize] {
        &self.dims
    }
    fn out_dim(&self) -> usize {
        1
    }
    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        let mut v = quad_form(&self.q, args[0]);
        if let Some(r) = &self.r {
            v += quad_form(r, args[1]);
        }
        out[0] = v;
    }
    fn jacobian(&self, args: &[&[f64]], wrt: usize, out: &mut [f64]) {
        match (wrt, &self.r) {
            (0, _) => sym_grad(&self.q, args[0], out),
            (1, Some(r)) => sym_grad(r, args[1], out),
            _ => {}
        }
    }
    fn analytic(&self) -> bool {
        true
    }
}
