//! Markov approximation of a path prior by least squares in log space:
//!
//! `min sum_x (log M(x) - m0(x0) - sum_t m(x_t, x_{t+1}))^2`
//!
//! over the paths with positive weight. The design matrix is rank deficient
//! (a constant moved from every `m` into `m0` changes nothing), so the
//! minimum-norm solution is returned.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::bridge::{kl_against_log, sinkhorn_markov, MarkovPrior, PathPrior};
use crate::error::{Error, Result};
use crate::imitation::{IotProblem, ObjectiveTerms, Route, TransportPlan};

/// Relative eigenvalue cutoff for the pseudoinverse of the normal matrix.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovFit {
    pub horizon: usize,
    /// Log initial weights; `-inf` on nodes where no positive path starts.
    pub m0_tilde: Vec<f64>,
    /// Log transition weights; `-inf` for transitions never observed.
    pub m_tilde: DMatrix<f64>,
    pub residual: f64,
    /// Filled in by [`markov_plan_from_fit`] relative to the exact solve.
    pub relative_objective_error: Option<f64>,
}

/// Column layout of the least-squares design.
#[derive(Debug, Clone)]
pub struct Design {
    pub starts: Vec<usize>,
    pub transitions: Vec<(usize, usize)>,
    pub rows: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl Design {
    pub fn columns(&self) -> usize {
        self.starts.len() + self.transitions.len()
    }

    /// Basis of the gauge direction `m += a, m0 -= T a`.
    pub fn gauge_direction(&self, horizon: usize) -> DVector<f64> {
        let mut g = DVector::zeros(self.columns());
        for k in 0..self.starts.len() {
            g[k] = -(horizon as f64);
        }
        for k in self.starts.len()..self.columns() {
            g[k] = 1.0;
        }
        g
    }
}

/// Builds the design matrix over the positive-weight paths of `prior`.
pub fn design(prior: &PathPrior) -> Result<Design> {
    let space = prior.space();
    let rows: Vec<usize> = (0..space.len()).filter(|&k| prior.log_weights()[k] > f64::NEG_INFINITY).collect();
    if rows.is_empty() {
        return Err(Error::Validation("prior has no positive-weight path to fit".into()));
    }
    let mut start_col = BTreeMap::new();
    let mut trans_col = BTreeMap::new();
    for &k in &rows {
        let p = space.path(k);
        start_col.entry(p[0]).or_insert(0);
        for w in p.windows(2) {
            trans_col.entry((w[0], w[1])).or_insert(0);
        }
    }
    let starts: Vec<usize> = start_col.keys().copied().collect();
    let transitions: Vec<(usize, usize)> = trans_col.keys().copied().collect();
    for (c, v) in start_col.values_mut().enumerate() {
        *v = c;
    }
    for (c, v) in trans_col.values_mut().enumerate() {
        *v = starts.len() + c;
    }
    let mut matrix = DMatrix::zeros(rows.len(), starts.len() + transitions.len());
    let mut rhs = DVector::zeros(rows.len());
    for (r, &k) in rows.iter().enumerate() {
        let p = space.path(k);
        matrix[(r, start_col[&p[0]])] = 1.0;
        for w in p.windows(2) {
            matrix[(r, trans_col[&(w[0], w[1])])] += 1.0;
        }
        rhs[r] = prior.log_weights()[k];
    }
    Ok(Design { starts, transitions, rows, matrix, rhs })
}

/// Minimum-norm least-squares solution via the eigendecomposition of `A^T A`.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    let eig = SymmetricEigen::new(ata);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cutoff = top * RANK_TOL;
    let mut x = DVector::zeros(a.ncols());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let q = eig.eigenvectors.column(k);
            x += q * (q.dot(&atb) / lambda);
        }
    }
    x
}

pub fn fit_markov(prior: &PathPrior) -> Result<MarkovFit> {
    let d = design(prior)?;
    let x = min_norm_solve(&d.matrix, &d.rhs);
    let n = prior.space().node_count();
    let mut m0_tilde = vec![f64::NEG_INFINITY; n];
    let mut m_tilde = DMatrix::from_element(n, n, f64::NEG_INFINITY);
    for (c, &i) in d.starts.iter().enumerate() {
        m0_tilde[i] = x[c];
    }
    for (c, &(i, j)) in d.transitions.iter().enumerate() {
        m_tilde[(i, j)] = x[d.starts.len() + c];
    }
    let residual = (&d.matrix * &x - &d.rhs).norm_squared();
    Ok(MarkovFit { horizon: prior.space().horizon(), m0_tilde, m_tilde, residual, relative_objective_error: None })
}

impl MarkovFit {
    /// `m0(x0) + sum_t m(x_t, x_{t+1})`.
    pub fn log_weight(&self, path: &[usize]) -> f64 {
        path.windows(2).fold(self.m0_tilde[path[0]], |acc, w| acc + self.m_tilde[(w[0], w[1])])
    }

    /// The fitted weights on the same path space, as a new prior.
    pub fn reconstruct(&self, prior: &PathPrior) -> Result<PathPrior> {
        let logs = prior.space().paths().iter().map(|p| self.log_weight(p)).collect();
        PathPrior::from_log_weights(prior.space().clone(), logs)
    }

    /// `exp(m0), exp(m)` as a Markov prior. A common constant is removed from
    /// the transition logs first; it rescales every path alike.
    pub fn markov_prior(&self) -> Result<MarkovPrior> {
        let top = self.m_tilde.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let m = self.m_tilde.map(|x| (x - top).exp());
        let top0 = self.m0_tilde.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mu: Vec<f64> = self.m0_tilde.iter().map(|x| (x - top0).exp()).collect();
        let total: f64 = mu.iter().sum();
        MarkovPrior::new(DVector::from_iterator(mu.len(), mu.iter().map(|x| x / total)), m)
    }
}

/// Solves the bridge against the fitted Markov prior and records the
/// relative error of its objective against `exact`, the plan of the
/// unapproximated problem.
pub fn markov_plan_from_fit(
    fit: &mut MarkovFit,
    problem: &IotProblem,
    exact: Option<&TransportPlan>,
) -> Result<TransportPlan> {
    if fit.horizon != problem.horizon() {
        return Err(Error::ShapeMismatch(format!(
            "fit has horizon {} but the problem has {}",
            fit.horizon,
            problem.horizon()
        )));
    }
    let prior = fit.markov_prior()?;
    let sol = sinkhorn_markov(&prior, &problem.nu0, &problem.nut, fit.horizon, &problem.options)?;
    let law = sol.law_on(&problem.space)?;
    // The fitted chain may leave the support of Q; the divergence is then
    // infinite and so is the reported error.
    let kl = kl_against_log(&law, &problem.log_q()?).value;
    let cost = law.iter().zip(&problem.costs).map(|(p, c)| p * c).sum();
    let objective = ObjectiveTerms::new(cost, kl, problem.alpha);
    if let Some(exact) = exact {
        fit.relative_objective_error =
            Some(((objective.total - exact.objective.total) / exact.objective.total).abs());
    }
    Ok(TransportPlan {
        space: problem.space.clone(),
        path_law: law,
        transition_matrices: sol.transitions().map(<[_]>::to_vec),
        objective,
        route: Route::Transitions,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}
