//! Worst-case cost over the entropic uncertainty set
//! `{C~ : alpha log sum_x Q(x) exp((C~(x) - C(x)) / alpha) <= eps}`.
//!
//! The inner maximum over this set has the closed form
//! `sum P C + alpha KL(P || Q) + eps`, attained at
//! `C~*(x) = C(x) - alpha log(Q(x) / P(x)) + eps`, so the robust problem has
//! the same minimizer as the imitation problem for every `eps`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imitation::{solve_iot, IotProblem};
use crate::numeric::logsumexp;
use crate::oracle::random_feasible_plans;

/// Slack allowed on the membership boundary for rounding.
const BOUNDARY_TOL: f64 = 1e-12;

/// `alpha log sum_x Q(x) exp((C~(x) - C(x)) / alpha)`, evaluated with a max shift.
pub fn robust_deviation(c_tilde: &[f64], c: &[f64], q: &[f64], alpha: f64) -> f64 {
    let terms = (0..q.len())
        .filter(|&k| q[k] > 0.0)
        .map(|k| q[k].ln() + (c_tilde[k] - c[k]) / alpha);
    alpha * logsumexp(terms.collect::<Vec<_>>())
}

pub fn robust_membership(c_tilde: &[f64], c: &[f64], q: &[f64], alpha: f64, epsilon: f64) -> bool {
    robust_deviation(c_tilde, c, q, alpha) <= epsilon + BOUNDARY_TOL * (1.0 + epsilon.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustCertificate {
    pub epsilon: f64,
    pub alpha: f64,
    pub nominal_cost: f64,
    pub kl_term: f64,
    pub worst_case_cost: f64,
    /// `C~*`; paths with `P = 0` get `-inf` (any cost there is irrelevant)
    /// unless `Q = 0` too, where `C` is kept.
    pub maximizer: Vec<f64>,
}

pub fn worst_case_certificate(p: &[f64], c: &[f64], q: &[f64], alpha: f64, epsilon: f64) -> Result<RobustCertificate> {
    if p.len() != c.len() || p.len() != q.len() {
        return Err(Error::ShapeMismatch("P, C and Q must cover the same paths".into()));
    }
    if !(alpha > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("need alpha > 0 and eps >= 0, got {alpha} and {epsilon}")));
    }
    let offending: Vec<usize> = (0..p.len()).filter(|&k| p[k] > 0.0 && q[k] <= 0.0).collect();
    if !offending.is_empty() {
        return Err(Error::support(offending));
    }
    let mut nominal = 0.0;
    let mut kl = 0.0;
    let mut maximizer = Vec::with_capacity(p.len());
    for k in 0..p.len() {
        if p[k] > 0.0 {
            let log_ratio = (p[k] / q[k]).ln();
            nominal += p[k] * c[k];
            kl += p[k] * log_ratio;
            maximizer.push(c[k] + alpha * log_ratio + epsilon);
        } else if q[k] > 0.0 {
            maximizer.push(f64::NEG_INFINITY);
        } else {
            maximizer.push(c[k]);
        }
    }
    Ok(RobustCertificate {
        epsilon,
        alpha,
        nominal_cost: nominal,
        kl_term: kl,
        worst_case_cost: nominal + alpha * kl + epsilon,
        maximizer,
    })
}

/// `sum P C~`, skipping paths without mass.
pub fn realized_cost(p: &[f64], c_tilde: &[f64]) -> f64 {
    p.iter().zip(c_tilde).filter(|(pk, _)| **pk > 0.0).map(|(pk, ck)| pk * ck).sum()
}

/// Draws members of the uncertainty set by rejection: random perturbations
/// with a random offset, kept when they pass [`robust_membership`].
pub fn sample_members(
    c: &[f64],
    q: &[f64],
    alpha: f64,
    epsilon: f64,
    count: usize,
    scale: f64,
    rng: &mut impl Rng,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let offset = rng.gen_range(-(2.0 * scale + epsilon)..=epsilon);
        let c_tilde: Vec<f64> = c.iter().map(|ck| ck + offset + scale * rng.gen_range(-1.0..1.0)).collect();
        if robust_membership(&c_tilde, c, q, alpha, epsilon) {
            out.push(c_tilde);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub epsilon: f64,
    pub horizon: usize,
    /// Optimal imitation objective `sum C P* + alpha KL(P* || Q)`.
    pub iot_objective: f64,
    pub worst_case_at_optimum: f64,
    /// `worst_case_at_optimum - iot_objective`; the closed form gives `eps`.
    pub offset: f64,
    /// `T eps`, the gap stated in the informal remark, kept for comparison.
    pub horizon_scaled_offset: f64,
    pub alternatives: usize,
    /// Smallest `worst_case(P) - worst_case(P*)` over the alternatives.
    pub min_margin: f64,
    pub passed: bool,
}

/// Checks that the imitation minimizer also minimizes the worst-case cost
/// against `alternatives` random feasible plans on the support of `Q`.
pub fn robust_equivalence_check(
    problem: &IotProblem,
    epsilon: f64,
    alternatives: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let plan = solve_iot(problem)?;
    let q = problem.q()?;
    let star = worst_case_certificate(&plan.path_law, &problem.costs, &q, problem.alpha, epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let allowed: Vec<bool> = q.iter().map(|&x| x > 0.0).collect();
    let others = random_feasible_plans(&problem.space, &allowed, &problem.nu0, &problem.nut, alternatives, 2.0, &mut rng)?;
    let mut min_margin = f64::INFINITY;
    for (idx, other) in others.iter().enumerate() {
        // Half of the alternatives are local: mixtures close to P*.
        let candidate: Vec<f64> = if idx % 2 == 0 {
            other.clone()
        } else {
            let t = rng.gen_range(1e-3..0.1);
            plan.path_law.iter().zip(other).map(|(a, b)| (1.0 - t) * a + t * b).collect()
        };
        let cert = worst_case_certificate(&candidate, &problem.costs, &q, problem.alpha, epsilon)?;
        min_margin = min_margin.min(cert.worst_case_cost - star.worst_case_cost);
    }
    let iot = plan.objective.total;
    Ok(EquivalenceReport {
        epsilon,
        horizon: problem.horizon(),
        iot_objective: iot,
        worst_case_at_optimum: star.worst_case_cost,
        offset: star.worst_case_cost - iot,
        horizon_scaled_offset: problem.horizon() as f64 * epsilon,
        alternatives,
        min_margin,
        passed: min_margin >= -1e-9,
    })
}
