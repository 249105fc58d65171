//! Discrete Schrödinger bridges solved by Sinkhorn iteration.
//!
//! Both the transition-matrix form (prior `mu0(x0) M(x0,x1) ... M(x_{T-1},x_T)`)
//! and the general path form (arbitrary unnormalized path weights) reduce to
//! a Sinkhorn problem on an endpoint kernel: `M^T` in the first case and the
//! marginal `M0T(x0, xT) = sum of prior weights over the interior nodes` in
//! the second. The kernel iteration runs on logarithms of the potentials so
//! that kernels spanning many orders of magnitude (small `alpha`) stay finite.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::PathSpace;
use crate::numeric::{check_distribution, ln_matrix, log_matmul, logsumexp, transport_feasible};

const MARGINAL_TOL: f64 = 1e-9;
/// A stalled iteration gets a Newton polish of the dual every this many sweeps.
const POLISH_EVERY: usize = 100;
const NEWTON_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOptions {
    /// Stop once the largest change of `log phi0` on the support drops to `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting `phi0`; all ones when absent.
    pub init_phi0: Option<Vec<f64>>,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions { tol: 1e-10, max_iter: 100_000, init_phi0: None }
    }
}

impl SinkhornOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        SinkhornOptions { tol, max_iter, init_phi0: None }
    }
}

/// Markov prior `mu0(x0) M(0)_{x0,x1} ... M(T-1)_{x_{T-1},x_T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPrior {
    pub mu0: DVector<f64>,
    pub m: DMatrix<f64>,
    /// Per-step matrices `M(0..T)`; overrides `m` when present.
    pub time_varying: Option<Vec<DMatrix<f64>>>,
}

impl MarkovPrior {
    pub fn new(mu0: DVector<f64>, m: DMatrix<f64>) -> Result<Self> {
        let n = mu0.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::ShapeMismatch(format!("mu0 has {n} entries but M is {}x{}", m.nrows(), m.ncols())));
        }
        check_nonnegative("M", &m)?;
        check_distribution("mu0", mu0.as_slice(), 1e-12)?;
        Ok(MarkovPrior { mu0, m, time_varying: None })
    }

    pub fn time_varying(mu0: DVector<f64>, steps: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = steps
            .first()
            .cloned()
            .ok_or_else(|| Error::Validation("time-varying prior needs at least one matrix".into()))?;
        let prior = Self::new(mu0, first)?;
        for (t, m) in steps.iter().enumerate() {
            if m.shape() != prior.m.shape() {
                return Err(Error::ShapeMismatch(format!("M({t}) has shape {:?}", m.shape())));
            }
            check_nonnegative("M(t)", m)?;
        }
        Ok(MarkovPrior { time_varying: Some(steps), ..prior })
    }

    pub fn n(&self) -> usize {
        self.mu0.len()
    }

    pub fn step(&self, t: usize) -> &DMatrix<f64> {
        match &self.time_varying {
            Some(steps) => &steps[t],
            None => &self.m,
        }
    }

    /// Whether the support graph of `M` is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        crate::spectral::check_strongly_connected(self.n(), |i, j| self.m[(i, j)] > 0.0).is_ok()
    }

    pub fn path_weight(&self, path: &[usize]) -> f64 {
        path.windows(2)
            .enumerate()
            .fold(self.mu0[path[0]], |acc, (t, w)| acc * self.step(t)[(w[0], w[1])])
    }

    fn check_horizon(&self, horizon: usize) -> Result<()> {
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if let Some(steps) = &self.time_varying {
            if steps.len() != horizon {
                return Err(Error::ShapeMismatch(format!(
                    "time-varying prior has {} matrices for horizon {horizon}",
                    steps.len()
                )));
            }
        }
        Ok(())
    }
}

fn check_nonnegative(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation(format!("{name} must be finite and nonnegative")));
    }
    Ok(())
}

/// Unnormalized prior mass on an explicit path space, stored as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPrior {
    space: Arc<PathSpace>,
    log_weights: Vec<f64>,
}

impl PathPrior {
    pub fn new(space: Arc<PathSpace>, weights: &[f64]) -> Result<Self> {
        if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Validation(format!("path weight {bad} is not a finite nonnegative number")));
        }
        let log_weights = weights.iter().map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
        Self::from_log_weights(space, log_weights)
    }

    pub fn from_log_weights(space: Arc<PathSpace>, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() != space.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} paths",
                log_weights.len(),
                space.len()
            )));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Validation("log weights must be finite or -inf".into()));
        }
        if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
            return Err(Error::Validation("path prior has no positive weight".into()));
        }
        Ok(PathPrior { space, log_weights })
    }

    /// Expands a Markov prior onto the paths of `space`.
    pub fn from_markov(prior: &MarkovPrior, space: Arc<PathSpace>) -> Result<Self> {
        let logs = space
            .paths()
            .iter()
            .map(|p| {
                let w = prior.path_weight(p);
                if w > 0.0 { w.ln() } else { f64::NEG_INFINITY }
            })
            .collect();
        Self::from_log_weights(space, logs)
    }

    pub fn space(&self) -> &Arc<PathSpace> {
        &self.space
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn log_total_mass(&self) -> f64 {
        logsumexp(self.log_weights.iter().copied())
    }
}

/// Potentials and couplings of a solved bridge.
#[derive(Debug, Clone)]
pub struct BridgeSolution {
    pub horizon: usize,
    pub nu0: Vec<f64>,
    pub nut: Vec<f64>,
    /// `log phi(t)`: one vector per time step in the Markov case, the two
    /// endpoint vectors in the path case.
    pub log_phi: Vec<Vec<f64>>,
    pub log_phihat: Vec<Vec<f64>>,
    pub coupling: Coupling,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Coupling {
    /// `Pi(t) = diag(phi(t))^-1 M(t) diag(phi(t+1))`.
    Transitions(Vec<DMatrix<f64>>),
    /// `Pi(x0, xT)` and the resulting law on the prior's paths.
    Endpoint { pi: DMatrix<f64>, law: Vec<f64> },
}

fn exp_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.exp()).collect()
}

impl BridgeSolution {
    pub fn phi0(&self) -> Vec<f64> {
        exp_vec(&self.log_phi[0])
    }

    pub fn phi_end(&self) -> Vec<f64> {
        exp_vec(self.log_phi.last().expect("potentials"))
    }

    pub fn phihat0(&self) -> Vec<f64> {
        exp_vec(&self.log_phihat[0])
    }

    pub fn phihat_end(&self) -> Vec<f64> {
        exp_vec(self.log_phihat.last().expect("potentials"))
    }

    pub fn transitions(&self) -> Option<&[DMatrix<f64>]> {
        match &self.coupling {
            Coupling::Transitions(pi) => Some(pi),
            Coupling::Endpoint { .. } => None,
        }
    }

    /// Probability of a path under the solved law (Markov case).
    pub fn path_probability(&self, path: &[usize]) -> Option<f64> {
        let pi = self.transitions()?;
        Some(
            path.windows(2)
                .enumerate()
                .fold(self.nu0[path[0]], |acc, (t, w)| acc * pi[t][(w[0], w[1])]),
        )
    }

    /// Law of the solution over the paths of `space`.
    pub fn law_on(&self, space: &PathSpace) -> Result<Vec<f64>> {
        match &self.coupling {
            Coupling::Transitions(_) => Ok(space
                .paths()
                .iter()
                .map(|p| self.path_probability(p).expect("transition coupling"))
                .collect()),
            Coupling::Endpoint { law, .. } => {
                if law.len() != space.len() {
                    return Err(Error::ShapeMismatch("law was solved on a different path space".into()));
                }
                Ok(law.clone())
            }
        }
    }
}

/// Log potentials of the endpoint kernel problem.
#[derive(Debug, Clone)]
struct KernelPotentials {
    log_phi0: Vec<f64>,
    log_phihat0: Vec<f64>,
    log_phi_end: Vec<f64>,
    log_phihat_end: Vec<f64>,
    iterations: usize,
    residual: f64,
    history: Vec<f64>,
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }
}

fn validate_marginals(n: usize, nu0: &[f64], nut: &[f64]) -> Result<()> {
    if nu0.len() != n || nut.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "marginals have {} and {} entries, expected {n}",
            nu0.len(),
            nut.len()
        )));
    }
    check_distribution("nu0", nu0, MARGINAL_TOL)?;
    check_distribution("nuT", nut, MARGINAL_TOL)
}

/// Sinkhorn on the endpoint kernel `K = exp(log_k)`:
/// `phi0 = K phiT`, `phihatT = K^T phihat0`, `phi0 phihat0 = nu0`, `phiT phihatT = nuT`.
fn sinkhorn_kernel(log_k: &DMatrix<f64>, nu0: &[f64], nut: &[f64], opts: &SinkhornOptions) -> Result<KernelPotentials> {
    let n = nu0.len();
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| nu0[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| nut[j] > 0.0).collect();
    if !transport_feasible(nu0, nut, |i, j| log_k[(i, j)] > f64::NEG_INFINITY) {
        return Err(Error::Infeasible(
            "no coupling of the marginals is supported by the prior (endpoint kernel pattern fails the flow test)".into(),
        ));
    }
    let log_nu0: Vec<f64> = nu0.iter().map(|&x| ln_or_neg_inf(x)).collect();
    let log_nut: Vec<f64> = nut.iter().map(|&x| ln_or_neg_inf(x)).collect();

    let mut log_phi0 = match &opts.init_phi0 {
        None => vec![0.0; n],
        Some(init) => {
            if init.len() != n {
                return Err(Error::ShapeMismatch("initial phi0 has the wrong length".into()));
            }
            if rows.iter().any(|&i| !(init[i] > 0.0 && init[i].is_finite())) {
                return Err(Error::Domain("initial phi0 must be positive on the support of nu0".into()));
            }
            init.iter().map(|&x| ln_or_neg_inf(x)).collect()
        }
    };
    let mut log_phihat0 = vec![f64::NEG_INFINITY; n];
    let mut log_phihat_end = vec![f64::NEG_INFINITY; n];
    let mut log_phi_end = vec![f64::NEG_INFINITY; n];
    let mut history = Vec::new();

    for iteration in 1..=opts.max_iter {
        for &i in &rows {
            log_phihat0[i] = log_nu0[i] - log_phi0[i];
        }
        for &j in &cols {
            let v = logsumexp(rows.iter().map(|&i| log_k[(i, j)] + log_phihat0[i]));
            if v == f64::NEG_INFINITY {
                return Err(Error::Infeasible(format!("terminal node {} receives no prior mass", j + 1)));
            }
            log_phihat_end[j] = v;
            log_phi_end[j] = log_nut[j] - v;
        }
        let mut residual: f64 = 0.0;
        for &i in &rows {
            let new = logsumexp(cols.iter().map(|&j| log_k[(i, j)] + log_phi_end[j]));
            if new == f64::NEG_INFINITY {
                return Err(Error::Infeasible(format!("initial node {} reaches no terminal node", i + 1)));
            }
            residual = residual.max((new - log_phi0[i]).abs());
            log_phi0[i] = new;
        }
        history.push(residual);
        if residual > opts.tol && iteration % POLISH_EVERY == 0 {
            let f: Vec<f64> = (0..n).map(|i| log_nu0[i] - log_phi0[i]).collect();
            if let Some(f) = newton_polish(log_k, &rows, &cols, nu0, nut, f) {
                for &i in &rows {
                    log_phi0[i] = log_nu0[i] - f[i];
                }
            }
        }
        if residual <= opts.tol {
            for &i in &rows {
                log_phihat0[i] = log_nu0[i] - log_phi0[i];
            }
            // Potentials off the support follow the same transition relation.
            for i in 0..n {
                if nu0[i] == 0.0 {
                    log_phi0[i] = logsumexp(cols.iter().map(|&j| log_k[(i, j)] + log_phi_end[j]));
                }
            }
            for j in 0..n {
                log_phihat_end[j] = logsumexp(rows.iter().map(|&i| log_k[(i, j)] + log_phihat0[i]));
            }
            return Ok(KernelPotentials {
                log_phi0,
                log_phihat0,
                log_phi_end,
                log_phihat_end,
                iterations: iteration,
                residual,
                history,
            });
        }
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::Convergence { method: "sinkhorn", iterations: opts.max_iter, residual, history })
}

/// Newton ascent on the dual `sum nu0 f + sum nuT g - sum exp(f_i + L_ij + g_j)`
/// started from `f = log phihat0`. Sinkhorn's linear rate collapses when the
/// coupling is close to splitting into blocks; a few Newton steps get past that.
/// Returns the new `f` only if it reduces the marginal gap.
fn newton_polish(
    log_k: &DMatrix<f64>,
    rows: &[usize],
    cols: &[usize],
    nu0: &[f64],
    nut: &[f64],
    mut f: Vec<f64>,
) -> Option<Vec<f64>> {
    let (r, c) = (rows.len(), cols.len());
    if r == 0 || c == 0 {
        return None;
    }
    let mut g = vec![0.0; log_k.ncols()];
    for &j in cols {
        g[j] = nut[j].ln() - logsumexp(rows.iter().map(|&i| log_k[(i, j)] + f[i]));
    }
    // Coupling entries, marginal gaps and dual value at (f, g).
    let eval = |f: &[f64], g: &[f64]| {
        let p = DMatrix::from_fn(r, c, |a, b| (f[rows[a]] + log_k[(rows[a], cols[b])] + g[cols[b]]).exp());
        let grad_f: Vec<f64> = (0..r).map(|a| nu0[rows[a]] - p.row(a).sum()).collect();
        let grad_g: Vec<f64> = (0..c).map(|b| nut[cols[b]] - p.column(b).sum()).collect();
        let value = rows.iter().map(|&i| nu0[i] * f[i]).sum::<f64>() + cols.iter().map(|&j| nut[j] * g[j]).sum::<f64>()
            - p.sum();
        let gap = grad_f.iter().chain(&grad_g).fold(0.0, |m: f64, x| m.max(x.abs()));
        (p, grad_f, grad_g, value, gap)
    };
    let (mut p, mut grad_f, mut grad_g, mut value, start_gap) = eval(&f, &g);
    let mut gap = start_gap;
    // The last g is pinned to remove the constant shift (f + s, g - s).
    let dim = r + c - 1;
    for _ in 0..NEWTON_STEPS {
        if !gap.is_finite() || gap < 1e-15 {
            break;
        }
        let mut h = DMatrix::zeros(dim, dim);
        let mut grad = DVector::zeros(dim);
        for a in 0..r {
            h[(a, a)] = p.row(a).sum();
            grad[a] = grad_f[a];
        }
        for b in 0..c - 1 {
            h[(r + b, r + b)] = p.column(b).sum();
            grad[r + b] = grad_g[b];
            for a in 0..r {
                h[(a, r + b)] = p[(a, b)];
                h[(r + b, a)] = p[(a, b)];
            }
        }
        let step = h.cholesky()?.solve(&grad);
        let mut t = 1.0;
        loop {
            let mut f_new = f.clone();
            let mut g_new = g.clone();
            for a in 0..r {
                f_new[rows[a]] += t * step[a];
            }
            for b in 0..c - 1 {
                g_new[cols[b]] += t * step[r + b];
            }
            let trial = eval(&f_new, &g_new);
            if trial.3.is_finite() && trial.3 >= value + 1e-4 * t * grad.dot(&step) {
                (f, g) = (f_new, g_new);
                (p, grad_f, grad_g, value, gap) = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return (gap < start_gap).then_some(f);
            }
        }
    }
    (gap < start_gap).then_some(f)
}

/// Solves the bridge for a Markov prior over `horizon` steps.
pub fn sinkhorn_markov(
    prior: &MarkovPrior,
    nu0: &[f64],
    nut: &[f64],
    horizon: usize,
    opts: &SinkhornOptions,
) -> Result<BridgeSolution> {
    let n = prior.n();
    validate_marginals(n, nu0, nut)?;
    prior.check_horizon(horizon)?;
    if let Some(i) = (0..n).find(|&i| nu0[i] > 0.0 && prior.mu0[i] == 0.0) {
        return Err(Error::Infeasible(format!("prior puts no initial mass on node {}", i + 1)));
    }

    let log_steps: Vec<DMatrix<f64>> = (0..horizon).map(|t| ln_matrix(prior.step(t))).collect();
    let log_k = log_steps[1..].iter().fold(log_steps[0].clone(), |acc, m| log_matmul(&acc, m));
    let pot = sinkhorn_kernel(&log_k, nu0, nut, opts)?;

    // phi(t) = M(t) phi(t+1) backwards from phi(T); phihat forwards.
    let mut log_phi = vec![vec![f64::NEG_INFINITY; n]; horizon + 1];
    log_phi[horizon] = pot.log_phi_end.clone();
    for t in (0..horizon).rev() {
        log_phi[t] = (0..n)
            .map(|i| logsumexp((0..n).map(|j| log_steps[t][(i, j)] + log_phi[t + 1][j])))
            .collect();
    }
    if let Some(i) = (0..n).find(|&i| nu0[i] > 0.0 && log_phi[0][i] == f64::NEG_INFINITY) {
        return Err(Error::Infeasible(format!("phi(0) vanishes on initial node {}", i + 1)));
    }
    let mut log_phihat = vec![vec![f64::NEG_INFINITY; n]; horizon + 1];
    log_phihat[0] = (0..n)
        .map(|i| if nu0[i] > 0.0 { nu0[i].ln() - log_phi[0][i] } else { f64::NEG_INFINITY })
        .collect();
    for t in 0..horizon {
        log_phihat[t + 1] = (0..n)
            .map(|j| logsumexp((0..n).map(|i| log_steps[t][(i, j)] + log_phihat[t][i])))
            .collect();
    }

    let transitions = (0..horizon)
        .map(|t| {
            DMatrix::from_fn(n, n, |i, j| {
                if log_phi[t][i] == f64::NEG_INFINITY {
                    0.0
                } else {
                    (log_steps[t][(i, j)] + log_phi[t + 1][j] - log_phi[t][i]).exp()
                }
            })
        })
        .collect();

    Ok(BridgeSolution {
        horizon,
        nu0: nu0.to_vec(),
        nut: nut.to_vec(),
        log_phi,
        log_phihat,
        coupling: Coupling::Transitions(transitions),
        iterations: pot.iterations,
        residual: pot.residual,
        residual_history: pot.history,
    })
}

/// Per-endpoint-pair grouping of a path prior, from which the conditional
/// law of the interior nodes is evaluated on request.
#[derive(Debug, Clone)]
pub struct ConditionalCache<'a> {
    prior: &'a PathPrior,
    log_m0t: DMatrix<f64>,
    groups: BTreeMap<(usize, usize), Vec<usize>>,
}

impl ConditionalCache<'_> {
    /// Paths joining `(x0, xT)` with their conditional prior probability.
    pub fn conditional(&self, x0: usize, xt: usize) -> Vec<(usize, f64)> {
        let Some(group) = self.groups.get(&(x0, xt)) else {
            return Vec::new();
        };
        let norm = self.log_m0t[(x0, xt)];
        if norm == f64::NEG_INFINITY {
            return Vec::new();
        }
        group
            .iter()
            .map(|&k| (k, (self.prior.log_weights[k] - norm).exp()))
            .collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.groups.keys()
    }
}

fn log_marginal(prior: &PathPrior) -> (DMatrix<f64>, BTreeMap<(usize, usize), Vec<usize>>) {
    let space = prior.space();
    let n = space.node_count();
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for k in 0..space.len() {
        groups.entry((space.start(k), space.end(k))).or_default().push(k);
    }
    let mut log_m0t = DMatrix::from_element(n, n, f64::NEG_INFINITY);
    for (&(a, b), members) in &groups {
        log_m0t[(a, b)] = logsumexp(members.iter().map(|&k| prior.log_weights[k]));
    }
    (log_m0t, groups)
}

/// Endpoint marginal `M0T(x0, xT)` of a path prior and the conditional cache.
pub fn marginalize_prior(prior: &PathPrior) -> (DMatrix<f64>, ConditionalCache<'_>) {
    let (log_m0t, groups) = log_marginal(prior);
    (log_m0t.map(f64::exp), ConditionalCache { prior, log_m0t, groups })
}

/// Solves the bridge for an arbitrary path prior through its endpoint marginal.
pub fn sinkhorn_path(prior: &PathPrior, nu0: &[f64], nut: &[f64], opts: &SinkhornOptions) -> Result<BridgeSolution> {
    let space = prior.space();
    let n = space.node_count();
    validate_marginals(n, nu0, nut)?;
    let (log_m0t, _) = log_marginal(prior);
    let pot = sinkhorn_kernel(&log_m0t, nu0, nut, opts)?;

    let law = (0..space.len())
        .map(|k| {
            let (a, b) = (space.start(k), space.end(k));
            if nu0[a] == 0.0 || nut[b] == 0.0 {
                0.0
            } else {
                (pot.log_phihat0[a] + prior.log_weights[k] + pot.log_phi_end[b]).exp()
            }
        })
        .collect();
    let pi = DMatrix::from_fn(n, n, |a, b| {
        if nu0[a] == 0.0 || nut[b] == 0.0 {
            0.0
        } else {
            (pot.log_phihat0[a] + log_m0t[(a, b)] + pot.log_phi_end[b]).exp()
        }
    });

    Ok(BridgeSolution {
        horizon: space.horizon(),
        nu0: nu0.to_vec(),
        nut: nut.to_vec(),
        log_phi: vec![pot.log_phi0, pot.log_phi_end],
        log_phihat: vec![pot.log_phihat0, pot.log_phihat_end],
        coupling: Coupling::Endpoint { pi, law },
        iterations: pot.iterations,
        residual: pot.residual,
        residual_history: pot.history,
    })
}

/// A KL value together with the paths that break absolute continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub value: f64,
    pub offending: Vec<usize>,
}

/// `sum_x P(x) log(P(x) / weight(x))` with `0 log 0 = 0`, against log weights.
pub fn kl_against_log(p: &[f64], log_w: &[f64]) -> Divergence {
    let mut value = 0.0;
    let mut offending = Vec::new();
    for (k, (&pk, &lw)) in p.iter().zip(log_w).enumerate() {
        if pk <= 0.0 {
            continue;
        }
        if lw == f64::NEG_INFINITY {
            offending.push(k);
        } else {
            value += pk * (pk.ln() - lw);
        }
    }
    if !offending.is_empty() {
        value = f64::INFINITY;
    }
    Divergence { value, offending }
}

/// KL divergence of a path law from an (unnormalized) path prior.
pub fn bridge_kl(p: &[f64], prior: &PathPrior) -> Result<Divergence> {
    if p.len() != prior.space().len() {
        return Err(Error::ShapeMismatch(format!("{} probabilities for {} paths", p.len(), prior.space().len())));
    }
    Ok(kl_against_log(p, prior.log_weights()))
}
