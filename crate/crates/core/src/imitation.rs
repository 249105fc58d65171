//! Imitation-regularized transport: `min_P sum C P + alpha KL(P || Q)` with
//! fixed endpoint marginals.
//!
//! The objective equals `alpha KL(P || M_Q)` up to a constant on the feasible
//! set, where `M_Q(x) = u(x0) v(xT) exp(-C(x) / alpha) Q(x)`, so the problem is
//! a Schrödinger bridge against `M_Q`. When both `C` and `Q` are Markov the
//! prior factorizes as `M_Q = R ⊙ R_Q` with the Ruelle–Bowens walk `R` and the
//! bridge is solved on transition matrices; otherwise it is solved on the
//! endpoint marginal of the path prior.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bridge::{kl_against_log, sinkhorn_markov, sinkhorn_path, MarkovPrior, PathPrior, SinkhornOptions};
use crate::error::{Error, Result};
use crate::network::{enumerate_paths, support, CostModel, Network, PathSpace};
use crate::numeric::{check_distribution, logsumexp};
use crate::spectral::RbPrior;

/// Markov imitation target `Q(x) = nu_Q0(x0) prod_t R_Q(x_t, x_{t+1})`.
///
/// `R_Q` may be any nonnegative weight matrix; row scaling is absorbed by the
/// bridge potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTarget {
    pub nu_q0: DVector<f64>,
    pub r_q: DMatrix<f64>,
}

impl MarkovTarget {
    pub fn new(nu_q0: DVector<f64>, r_q: DMatrix<f64>) -> Result<Self> {
        let n = nu_q0.len();
        if r_q.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!("nu_Q0 has {n} entries but R_Q is {:?}", r_q.shape())));
        }
        if nu_q0.iter().chain(r_q.iter()).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Validation("Markov target entries must be finite and nonnegative".into()));
        }
        Ok(MarkovTarget { nu_q0, r_q })
    }

    /// Uniform initial law with unit weight on every edge of `model`.
    pub fn uniform(model: &CostModel, network: &Network) -> Self {
        let n = network.node_count();
        MarkovTarget {
            nu_q0: DVector::from_element(n, 1.0 / n as f64),
            r_q: DMatrix::from_fn(n, n, |i, j| if model.admits(network, i, j) { 1.0 } else { 0.0 }),
        }
    }

    /// Scales each nonzero row of `R_Q` to sum to one.
    pub fn row_normalized(&self) -> Self {
        let mut r_q = self.r_q.clone();
        for mut row in r_q.row_iter_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        MarkovTarget { nu_q0: self.nu_q0.clone(), r_q }
    }

    pub fn log_weight(&self, path: &[usize]) -> f64 {
        path.windows(2).fold(ln0(self.nu_q0[path[0]]), |acc, w| acc + ln0(self.r_q[(w[0], w[1])]))
    }
}

fn ln0(x: f64) -> f64 {
    if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }
}

/// What the plan should imitate.
#[derive(Debug, Clone, PartialEq)]
pub enum ImitationTarget {
    Markov(MarkovTarget),
    /// A distribution over the problem's path space, blended with the uniform
    /// law by `beta`.
    Path { q_star: Vec<f64>, beta: f64 },
    /// `Q` uniform on the path space: maximum-entropy transport.
    Uniform,
}

/// `(1 - beta) Q_star + beta / N_X`.
pub fn blend_target(q_star: &[f64], beta: f64, n_x: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    if q_star.len() != n_x || n_x == 0 {
        return Err(Error::ShapeMismatch(format!("Q_star has {} entries for {n_x} paths", q_star.len())));
    }
    check_distribution("Q_star", q_star, 1e-9)?;
    let floor = beta / n_x as f64;
    Ok(q_star.iter().map(|q| (1.0 - beta) * q + floor).collect())
}

/// `M_Q = R ⊙ R_Q` with initial weight `v_RB ⊙ nu_Q0`.
pub fn build_mq_markov(rb: &RbPrior, target: &MarkovTarget) -> Result<MarkovPrior> {
    let n = rb.n();
    if target.nu_q0.len() != n {
        return Err(Error::ShapeMismatch(format!("target is on {} nodes, walk on {n}", target.nu_q0.len())));
    }
    let m = rb.r.component_mul(&target.r_q);
    let mu = rb.v_rb.component_mul(&target.nu_q0);
    let total = mu.sum();
    if !(total > 0.0) {
        return Err(Error::Infeasible("initial weight v_RB * nu_Q0 vanishes everywhere".into()));
    }
    MarkovPrior::new(mu / total, m)
}

/// `M_Q(x) = u(x0) v(xT) exp(-C(x) / alpha) Q(x)` on the paths of `space`,
/// with `u = v = 1` when `gauge` is absent.
pub fn build_mq_path(
    space: &Arc<PathSpace>,
    costs: &[f64],
    log_q: &[f64],
    alpha: f64,
    gauge: Option<(&[f64], &[f64])>,
) -> Result<PathPrior> {
    check_alpha(alpha)?;
    if costs.len() != space.len() || log_q.len() != space.len() {
        return Err(Error::ShapeMismatch("costs and Q must cover the path space".into()));
    }
    if let Some((u, v)) = gauge {
        if u.len() != space.node_count() || v.len() != space.node_count() {
            return Err(Error::ShapeMismatch("gauge vectors must have one entry per node".into()));
        }
        if u.iter().chain(v).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Validation("gauge vectors must be finite and nonnegative".into()));
        }
    }
    let logs = (0..space.len())
        .map(|k| {
            let ends = gauge.map_or(0.0, |(u, v)| ln0(u[space.start(k)]) + ln0(v[space.end(k)]));
            ends + log_q[k] - costs[k] / alpha
        })
        .collect();
    PathPrior::from_log_weights(space.clone(), logs)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must be positive and finite, got {alpha}")))
    }
}

/// A fully specified imitation-regularized transport problem.
#[derive(Debug, Clone)]
pub struct IotProblem {
    pub network: Network,
    pub cost: CostModel,
    pub space: Arc<PathSpace>,
    pub costs: Vec<f64>,
    pub nu0: Vec<f64>,
    pub nut: Vec<f64>,
    pub alpha: f64,
    pub target: ImitationTarget,
    /// Skip the transition-matrix route even when it applies.
    pub force_path: bool,
    pub options: SinkhornOptions,
}

impl IotProblem {
    /// Enumerates the path space joining the supports of `nu0` and `nut`.
    pub fn new(
        network: Network,
        cost: CostModel,
        horizon: usize,
        nu0: Vec<f64>,
        nut: Vec<f64>,
        alpha: f64,
        target: ImitationTarget,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let n = network.node_count();
        if nu0.len() != n || nut.len() != n {
            return Err(Error::ShapeMismatch(format!("marginals must have {n} entries")));
        }
        check_distribution("nu0", &nu0, 1e-9)?;
        check_distribution("nuT", &nut, 1e-9)?;
        let space = Arc::new(enumerate_paths(&network, horizon, &support(&nu0), &support(&nut), &cost)?);
        let costs = space.costs(&cost, &network)?;
        let problem = IotProblem {
            network,
            cost,
            space,
            costs,
            nu0,
            nut,
            alpha,
            target,
            force_path: false,
            options: SinkhornOptions::default(),
        };
        problem.log_q()?;
        Ok(problem)
    }

    pub fn with_options(mut self, options: SinkhornOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(self)
    }

    pub fn forcing_path(mut self, force: bool) -> Self {
        self.force_path = force;
        self
    }

    pub fn horizon(&self) -> usize {
        self.space.horizon()
    }

    /// `log Q` on the path space, normalized to a probability distribution.
    pub fn log_q(&self) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match &self.target {
            ImitationTarget::Uniform => vec![0.0; self.space.len()],
            ImitationTarget::Markov(t) => {
                if t.nu_q0.len() != self.network.node_count() {
                    return Err(Error::ShapeMismatch("Markov target size differs from the network".into()));
                }
                self.space.paths().iter().map(|p| t.log_weight(p)).collect()
            }
            ImitationTarget::Path { q_star, beta } => blend_target(q_star, *beta, self.space.len())?
                .into_iter()
                .map(ln0)
                .collect(),
        };
        let norm = logsumexp(raw.iter().copied());
        if norm == f64::NEG_INFINITY {
            return Err(Error::Infeasible("imitation target puts no mass on any admissible path".into()));
        }
        Ok(raw.into_iter().map(|w| w - norm).collect())
    }

    pub fn q(&self) -> Result<Vec<f64>> {
        Ok(self.log_q()?.into_iter().map(f64::exp).collect())
    }

    fn markov_target(&self) -> Option<MarkovTarget> {
        match &self.target {
            ImitationTarget::Markov(t) => Some(t.clone()),
            ImitationTarget::Uniform => Some(MarkovTarget::uniform(&self.cost, &self.network)),
            ImitationTarget::Path { .. } => None,
        }
    }

    /// The transition-matrix form of `M_Q`, when `C` and `Q` are both Markov
    /// and the Ruelle–Bowens walk exists at this `alpha`.
    pub fn markov_prior(&self) -> Option<MarkovPrior> {
        if !self.cost.is_markov() {
            return None;
        }
        let target = self.markov_target()?;
        let rb = RbPrior::build(&self.cost, self.alpha).ok()?;
        build_mq_markov(&rb, &target).ok()
    }

    /// `M_Q` on the path space in the form used by the path route.
    pub fn path_prior(&self) -> Result<PathPrior> {
        build_mq_path(&self.space, &self.costs, &self.log_q()?, self.alpha, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Transitions,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub expected_cost: f64,
    pub kl_to_q: f64,
    pub alpha: f64,
    pub total: f64,
}

impl ObjectiveTerms {
    pub fn new(expected_cost: f64, kl_to_q: f64, alpha: f64) -> Self {
        ObjectiveTerms { expected_cost, kl_to_q, alpha, total: expected_cost + alpha * kl_to_q }
    }
}

/// A solved transport plan over the problem's path space.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub space: Arc<PathSpace>,
    pub path_law: Vec<f64>,
    pub transition_matrices: Option<Vec<DMatrix<f64>>>,
    pub objective: ObjectiveTerms,
    pub route: Route,
    pub iterations: usize,
    pub residual: f64,
}

impl TransportPlan {
    pub fn probability(&self, path: &[usize]) -> f64 {
        self.space.index_of(path).map_or(0.0, |k| self.path_law[k])
    }

    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        self.space.endpoint_marginals(&self.path_law)
    }
}

/// `(sum C P, KL(P || Q), total)` for a law on the problem's path space.
pub fn objective_terms(problem: &IotProblem, law: &[f64]) -> Result<ObjectiveTerms> {
    let log_q = problem.log_q()?;
    let kl = kl_against_log(law, &log_q);
    if !kl.offending.is_empty() {
        return Err(Error::support(kl.offending));
    }
    let cost = law.iter().zip(&problem.costs).map(|(p, c)| p * c).sum();
    Ok(ObjectiveTerms::new(cost, kl.value, problem.alpha))
}

/// Solves the problem on the transition-matrix route when it applies and on
/// the marginalized path route otherwise.
pub fn solve_iot(problem: &IotProblem) -> Result<TransportPlan> {
    let markov = if problem.force_path { None } else { problem.markov_prior() };
    let (law, transitions, route, sol) = match markov {
        Some(prior) => {
            let sol = sinkhorn_markov(&prior, &problem.nu0, &problem.nut, problem.horizon(), &problem.options)?;
            let law = sol.law_on(&problem.space)?;
            (law, sol.transitions().map(<[_]>::to_vec), Route::Transitions, sol)
        }
        None => {
            let prior = problem.path_prior()?;
            let sol = sinkhorn_path(&prior, &problem.nu0, &problem.nut, &problem.options)?;
            (sol.law_on(&problem.space)?, None, Route::Marginal, sol)
        }
    };
    Ok(TransportPlan {
        space: problem.space.clone(),
        objective: objective_terms(problem, &law)?,
        path_law: law,
        transition_matrices: transitions,
        route,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// The maximum-entropy transport plan: the bridge against the Ruelle–Bowens walk.
pub fn solve_maxent(problem: &IotProblem) -> Result<TransportPlan> {
    let rb = RbPrior::build(&problem.cost, problem.alpha)?;
    let prior = MarkovPrior::new(rb.v_rb.clone(), rb.r.clone())?;
    let sol = sinkhorn_markov(&prior, &problem.nu0, &problem.nut, problem.horizon(), &problem.options)?;
    let law = sol.law_on(&problem.space)?;
    let cost = law.iter().zip(&problem.costs).map(|(p, c)| p * c).sum();
    let kl = kl_against_log(&law, &vec![-(problem.space.len() as f64).ln(); law.len()]).value;
    Ok(TransportPlan {
        space: problem.space.clone(),
        path_law: law,
        transition_matrices: sol.transitions().map(<[_]>::to_vec),
        objective: ObjectiveTerms::new(cost, kl, problem.alpha),
        route: Route::Transitions,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Mass carried by each edge `(i, j)` at each step `t`, keyed `(t, i, j)`.
pub fn edge_usage(plan: &TransportPlan) -> BTreeMap<(usize, usize, usize), f64> {
    let mut usage = BTreeMap::new();
    for (path, &p) in plan.space.paths().iter().zip(&plan.path_law) {
        if p == 0.0 {
            continue;
        }
        for (t, w) in path.windows(2).enumerate() {
            *usage.entry((t, w[0], w[1])).or_insert(0.0) += p;
        }
    }
    usage
}
