//! Maximum-entropy-rate (Ruelle–Bowens) random walk built from the Perron
//! eigenpair of `B_ij = exp(-c(i, j) / alpha)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::{CostModel, EdgeCostTable};

const PERRON_TOL: f64 = 1e-12;
const PERRON_MAX_ITER: usize = 100_000;
const MAX_SQUARINGS: usize = 40;

/// Checks strong connectivity of the digraph `{(i, j) : edge(i, j)}` by a
/// forward and a backward search from node 0.
pub fn check_strongly_connected(n: usize, edge: impl Fn(usize, usize) -> bool) -> Result<()> {
    for (forward, direction) in [(true, "from node 1"), (false, "to node 1")] {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for w in 0..n {
                let linked = if forward { edge(u, w) } else { edge(w, u) };
                if linked && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(Error::NotStronglyConnected { node: node + 1, direction });
        }
    }
    Ok(())
}

fn markov_table(model: &CostModel) -> Result<&EdgeCostTable> {
    model.table().ok_or(Error::ModeMismatch { expected: "markov" })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must be positive and finite, got {alpha}")))
    }
}

/// `B_ij = exp(-c(i, j) / alpha)` on edges, zero elsewhere.
pub fn build_b(model: &CostModel, alpha: f64) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    let table = markov_table(model)?;
    shifted_kernel(table, alpha, 0.0)
}

fn shifted_kernel(table: &EdgeCostTable, alpha: f64, shift: f64) -> Result<DMatrix<f64>> {
    let n = table.n();
    check_strongly_connected(n, |i, j| table.get(i, j).is_some())?;
    let mut b = DMatrix::zeros(n, n);
    for (i, j, c) in table.entries() {
        let w = (-(c - shift) / alpha).exp();
        if w == 0.0 {
            return Err(Error::Domain(format!(
                "exp(-c/alpha) underflows on edge ({}, {}); alpha {alpha} is too small for the transition-matrix route",
                i + 1,
                j + 1
            )));
        }
        b[(i, j)] = w;
    }
    Ok(b)
}

#[derive(Debug, Clone)]
pub struct PerronPair {
    pub lambda: f64,
    /// Left eigenvector, `B^T u = lambda u`.
    pub u: DVector<f64>,
    /// Right eigenvector, `B v = lambda v`, with `sum(v) = 1`.
    pub v: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Perron root and positive eigenvectors of an irreducible nonnegative matrix,
/// scaled so that `u . v = 1` and `|v|_1 = 1`.
pub fn perron(b: &DMatrix<f64>) -> Result<PerronPair> {
    let n = b.nrows();
    if n == 0 || b.ncols() != n {
        return Err(Error::ShapeMismatch(format!("perron needs a square matrix, got {}x{}", n, b.ncols())));
    }
    if b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Domain("perron needs a finite nonnegative matrix".into()));
    }
    check_strongly_connected(n, |i, j| b[(i, j)] > 0.0)?;
    if b.iter().all(|x| *x == 0.0) {
        return Err(Error::Domain("perron needs a matrix with a positive entry".into()));
    }

    let (lambda, v, res_v, it_v) = dominant_vector(b)?;
    let bt = b.transpose();
    let (_, u, res_u, it_u) = dominant_vector(&bt)?;

    let v = &v / v.sum();
    let scale = u.dot(&v);
    let u = &u / scale;
    Ok(PerronPair { lambda, u, v, residual: res_v.max(res_u), iterations: it_v + it_u })
}

fn eigen_residual(b: &DMatrix<f64>, v: &DVector<f64>) -> (f64, f64) {
    let bv = b * v;
    let lambda = bv.sum() / v.sum();
    let res = (&bv - v * lambda).amax() / (lambda * v.amax());
    (lambda, res)
}

/// Shifted power iteration on `B + sI`, accelerated by repeated squaring and
/// polished with plain iterations on the original matrix.
fn dominant_vector(b: &DMatrix<f64>) -> Result<(f64, DVector<f64>, f64, usize)> {
    let n = b.nrows();
    let shift = b.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let a = b + DMatrix::identity(n, n) * shift;

    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let (mut lambda, mut res) = eigen_residual(b, &v);
    let mut iterations = 0;

    let mut w = &a / a.max();
    for _ in 0..MAX_SQUARINGS {
        if res < PERRON_TOL {
            break;
        }
        w = &w * &w;
        let m = w.max();
        if !(m.is_finite() && m > 0.0) {
            break;
        }
        w /= m;
        let candidate = &w * DVector::from_element(n, 1.0);
        if candidate.iter().any(|x| *x <= 0.0) {
            continue;
        }
        let candidate = &candidate / candidate.sum();
        let (l, r) = eigen_residual(b, &candidate);
        iterations += 1;
        if r < res {
            v = candidate;
            lambda = l;
            res = r;
        }
    }

    while res >= PERRON_TOL && iterations < PERRON_MAX_ITER {
        let next = &a * &v;
        v = &next / next.sum();
        (lambda, res) = eigen_residual(b, &v);
        iterations += 1;
    }
    if res >= PERRON_TOL || v.iter().any(|x| *x <= 0.0) {
        return Err(Error::Convergence { method: "perron power iteration", iterations, residual: res, history: vec![res] });
    }
    Ok((lambda, v, res, iterations))
}

/// `R = lambda^-1 diag(v)^-1 B diag(v)`.
pub fn rb_walk(b: &DMatrix<f64>, lambda: f64, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    if v.len() != n || b.ncols() != n {
        return Err(Error::ShapeMismatch("rb_walk: B and v disagree in size".into()));
    }
    if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::Positivity(format!("right Perron vector entry {} is not positive", i + 1)));
    }
    if !(lambda > 0.0) {
        return Err(Error::Positivity(format!("Perron root {lambda} is not positive")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| b[(i, j)] * v[j] / (lambda * v[i])))
}

/// The Ruelle–Bowens random walk for a Markov cost table.
///
/// The Perron problem is solved on `exp(-(c - c_min) / alpha)`; the eigen-
/// vectors and `R` are unaffected by the shift and `lambda_B` is rescaled.
#[derive(Debug, Clone)]
pub struct RbPrior {
    pub alpha: f64,
    pub costs: EdgeCostTable,
    /// `exp(-(c - cost_shift) / alpha)` on edges.
    pub kernel: DMatrix<f64>,
    pub cost_shift: f64,
    pub lambda: f64,
    pub log_lambda: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub v_rb: DVector<f64>,
    pub r: DMatrix<f64>,
}

impl RbPrior {
    pub fn build(model: &CostModel, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let table = markov_table(model)?;
        let shift = table.entries().map(|(_, _, c)| c).fold(f64::INFINITY, f64::min);
        let shift = if shift.is_finite() { shift } else { 0.0 };
        let kernel = shifted_kernel(table, alpha, shift)?;
        let pair = perron(&kernel)?;
        let r = rb_walk(&kernel, pair.lambda, &pair.v)?;
        let v_rb = pair.u.component_mul(&pair.v);
        let log_lambda = pair.lambda.ln() - shift / alpha;
        Ok(RbPrior {
            alpha,
            costs: table.clone(),
            kernel,
            cost_shift: shift,
            lambda: log_lambda.exp(),
            log_lambda,
            u: pair.u,
            v: pair.v,
            v_rb,
            r,
        })
    }

    /// The unshifted matrix `B`.
    pub fn b(&self) -> DMatrix<f64> {
        &self.kernel * (-self.cost_shift / self.alpha).exp()
    }

    pub fn n(&self) -> usize {
        self.r.nrows()
    }
}

/// `v_RB(x_0) prod_t R(x_t, x_{t+1})`.
pub fn rb_path_density(prior: &RbPrior, path: &[usize]) -> f64 {
    path.windows(2).fold(prior.v_rb[path[0]], |acc, w| acc * prior.r[(w[0], w[1])])
}

/// The same density through `u_{x_0} v_{x_T} lambda^-T exp(-C(x) / alpha)`.
pub fn rb_path_density_closed(prior: &RbPrior, path: &[usize]) -> f64 {
    let Some(cost) = prior.costs.path_cost(path) else {
        return 0.0;
    };
    let steps = (path.len() - 1) as f64;
    let last = path[path.len() - 1];
    prior.u[path[0]] * prior.v[last] * (-steps * prior.log_lambda - cost / prior.alpha).exp()
}
