//! Brute-force references that work on the flat vector of path masses:
//! an exact simplex for the unregularized transport LP, iterative
//! proportional fitting for the bridge, and direct objective summation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::network::PathSpace;
use crate::numeric::{check_distribution, logsumexp};

const PIVOT_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

/// A distribution over the paths of a path space and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCoupling {
    pub probabilities: Vec<f64>,
    pub objective: f64,
}

/// Row constraints `sum_{x: x0 = i} P(x) = nu0(i)` and `sum_{x: xT = j} P(x) = nuT(j)`
/// over the nodes in each support.
fn marginal_rows(space: &PathSpace, nu0: &[f64], nut: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = space.node_count();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in (0..n).filter(|&i| nu0[i] > 0.0) {
        rows.push((0..space.len()).map(|k| if space.start(k) == i { 1.0 } else { 0.0 }).collect());
        rhs.push(nu0[i]);
    }
    for j in (0..n).filter(|&j| nut[j] > 0.0) {
        rows.push((0..space.len()).map(|k| if space.end(k) == j { 1.0 } else { 0.0 }).collect());
        rhs.push(nut[j]);
    }
    (rows, rhs)
}

fn check_inputs(space: &PathSpace, nu0: &[f64], nut: &[f64]) -> Result<()> {
    let n = space.node_count();
    if nu0.len() != n || nut.len() != n {
        return Err(Error::ShapeMismatch(format!("marginals must have {n} entries")));
    }
    check_distribution("nu0", nu0, FEAS_TOL)?;
    check_distribution("nuT", nut, FEAS_TOL)
}

/// Dense simplex tableau in standard form `min c x, A x = b, x >= 0`.
struct Tableau {
    m: usize,
    cols: usize,
    /// `m` constraint rows of `cols + 1` entries, the last being the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs for cost vector `cost`; entries outside `allowed` are skipped.
    fn reduced(&self, cost: &[f64], c: usize) -> f64 {
        let mut d = cost[c];
        for (i, &b) in self.basis.iter().enumerate() {
            d -= cost[b] * self.t[i][c];
        }
        d
    }

    /// Runs Bland's rule until optimal. Columns with `allowed[c] == false` never enter.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<usize> {
        let mut pivots = 0;
        loop {
            let entering = (0..self.cols).find(|&c| allowed[c] && !self.basis.contains(&c) && self.reduced(cost, c) < -PIVOT_TOL);
            let Some(c) = entering else {
                return Ok(pivots);
            };
            let mut best: Option<(f64, usize)> = None;
            for r in 0..self.m {
                let a = self.t[r][c];
                if a > PIVOT_TOL {
                    let ratio = self.t[r][self.cols] / a;
                    best = match best {
                        None => Some((ratio, r)),
                        Some((br, bi)) => {
                            if ratio < br - PIVOT_TOL || (ratio <= br + PIVOT_TOL && self.basis[r] < self.basis[bi]) {
                                Some((ratio, r))
                            } else {
                                Some((br, bi))
                            }
                        }
                    };
                }
            }
            let Some((_, r)) = best else {
                return Err(Error::Domain("transport LP is unbounded".into()));
            };
            self.pivot(r, c);
            pivots += 1;
        }
    }

    fn value(&self, c: usize) -> f64 {
        self.basis.iter().position(|&b| b == c).map_or(0.0, |r| self.t[r][self.cols])
    }
}

/// Exact minimizer of `sum C P` under the endpoint marginals, by a two-phase
/// primal simplex with Bland's rule on the path formulation.
pub fn lp_ot(space: &PathSpace, costs: &[f64], nu0: &[f64], nut: &[f64]) -> Result<DenseCoupling> {
    check_inputs(space, nu0, nut)?;
    if costs.len() != space.len() {
        return Err(Error::ShapeMismatch("one cost per path required".into()));
    }
    // Paths leaving either support must carry no mass; they are not variables.
    let vars: Vec<usize> = (0..space.len())
        .filter(|&k| nu0[space.start(k)] > 0.0 && nut[space.end(k)] > 0.0)
        .collect();
    let (full_rows, rhs) = marginal_rows(space, nu0, nut);
    let rows: Vec<Vec<f64>> = full_rows.iter().map(|r| vars.iter().map(|&k| r[k]).collect()).collect();
    let costs: Vec<f64> = vars.iter().map(|&k| costs[k]).collect();
    let nx = vars.len();
    let m = rows.len();
    let cols = nx + m;
    let t = rows
        .iter()
        .zip(&rhs)
        .enumerate()
        .map(|(i, (row, &b))| {
            let mut r = row.clone();
            r.extend((0..m).map(|a| if a == i { 1.0 } else { 0.0 }));
            r.push(b);
            r
        })
        .collect();
    let mut tab = Tableau { m, cols, t, basis: (nx..cols).collect() };

    // Phase I: minimize the sum of artificials.
    let phase1: Vec<f64> = (0..cols).map(|c| if c >= nx { 1.0 } else { 0.0 }).collect();
    tab.optimize(&phase1, &vec![true; cols])?;
    let infeasibility: f64 = (nx..cols).map(|c| tab.value(c)).sum();
    if infeasibility > FEAS_TOL {
        return Err(Error::Infeasible(format!(
            "no path distribution meets both marginals; phase-one minimum of the artificial mass is {infeasibility:e}"
        )));
    }
    // Drive degenerate artificials out of the basis; rows that cannot be
    // pivoted are redundant and dropped.
    let mut r = 0;
    while r < tab.m {
        if tab.basis[r] >= nx {
            match (0..nx).find(|&c| tab.t[r][c].abs() > PIVOT_TOL) {
                Some(c) => tab.pivot(r, c),
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                    tab.m -= 1;
                    continue;
                }
            }
        }
        r += 1;
    }

    let mut cost2 = costs.clone();
    cost2.extend(std::iter::repeat(0.0).take(m));
    let allowed: Vec<bool> = (0..cols).map(|c| c < nx).collect();
    tab.optimize(&cost2, &allowed)?;
    let mut probabilities = vec![0.0; space.len()];
    for (c, &k) in vars.iter().enumerate() {
        probabilities[k] = tab.value(c).max(0.0);
    }
    let objective = (0..nx).map(|c| tab.value(c).max(0.0) * costs[c]).sum();
    Ok(DenseCoupling { probabilities, objective })
}

/// Group-wise log masses `log sum_{x in group} exp(l(x))`.
fn group_lse(log_p: &[f64], key: impl Fn(usize) -> usize, n: usize) -> Vec<f64> {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (k, &l) in log_p.iter().enumerate() {
        groups[key(k)].push(l);
    }
    groups.into_iter().map(|g| logsumexp(g)).collect()
}

fn marginal_gap(log_p: &[f64], space: &PathSpace, nu0: &[f64], nut: &[f64]) -> f64 {
    let n = space.node_count();
    let a = group_lse(log_p, |k| space.start(k), n);
    let b = group_lse(log_p, |k| space.end(k), n);
    (0..n)
        .map(|i| (a[i].exp() - nu0[i]).abs().max((b[i].exp() - nut[i]).abs()))
        .fold(0.0, f64::max)
}

/// Iterative proportional fitting on the explicit path vector, in log space:
/// alternately rescale every path so the start marginal matches `nu0`, then
/// the end marginal matches `nuT`, until both gaps are below `tol`.
pub fn dense_ipf(
    space: &PathSpace,
    log_weights: &[f64],
    nu0: &[f64],
    nut: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<DenseCoupling> {
    check_inputs(space, nu0, nut)?;
    if log_weights.len() != space.len() {
        return Err(Error::ShapeMismatch("one weight per path required".into()));
    }
    let n = space.node_count();
    let mut log_p = log_weights.to_vec();
    for (k, l) in log_p.iter_mut().enumerate() {
        if nu0[space.start(k)] == 0.0 || nut[space.end(k)] == 0.0 {
            *l = f64::NEG_INFINITY;
        }
    }
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let gap = marginal_gap(&log_p, space, nu0, nut);
        history.push(gap);
        if gap < tol {
            let probabilities: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
            let objective = probabilities
                .iter()
                .zip(log_weights)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, w)| p * (p.ln() - w))
                .sum();
            return Ok(DenseCoupling { probabilities, objective });
        }
        for (side, target) in [(0usize, nu0), (1, nut)] {
            let key = |k: usize| if side == 0 { space.start(k) } else { space.end(k) };
            let mass = group_lse(&log_p, key, n);
            for (k, l) in log_p.iter_mut().enumerate() {
                let g = key(k);
                if target[g] > 0.0 {
                    if mass[g] == f64::NEG_INFINITY {
                        return Err(Error::Infeasible(format!("node {} cannot carry its marginal mass", g + 1)));
                    }
                    *l += target[g].ln() - mass[g];
                }
            }
        }
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::Convergence { method: "dense IPF", iterations: max_iter, residual, history })
}

/// Direct evaluation of `(sum C P, KL(P || Q), sum C P + alpha KL)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub cost: f64,
    pub kl: f64,
    pub total: f64,
    /// Paths with `P > 0 = Q`, which make the divergence infinite.
    pub offending: Vec<usize>,
}

pub fn objective_eval(p: &[f64], costs: &[f64], q: &[f64], alpha: f64) -> ObjectiveEval {
    let mut cost = 0.0;
    let mut kl = 0.0;
    let mut offending = Vec::new();
    for k in 0..p.len() {
        if p[k] > 0.0 {
            cost += p[k] * costs[k];
            if q[k] > 0.0 {
                kl += p[k] * (p[k] / q[k]).ln();
            } else {
                offending.push(k);
            }
        }
    }
    if !offending.is_empty() {
        kl = f64::INFINITY;
    }
    ObjectiveEval { cost, kl, total: cost + alpha * kl, offending }
}

/// Random feasible plans supported on `allowed` paths: IPF from random
/// positive weights. `spread` controls how far the weights vary (in log units).
pub fn random_feasible_plans(
    space: &PathSpace,
    allowed: &[bool],
    nu0: &[f64],
    nut: &[f64],
    count: usize,
    spread: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>> {
    (0..count)
        .map(|_| {
            let logs: Vec<f64> = allowed
                .iter()
                .map(|&a| if a { spread * rng.gen_range(-1.0..1.0) } else { f64::NEG_INFINITY })
                .collect();
            dense_ipf(space, &logs, nu0, nut, 1e-13, 1_000_000).map(|c| c.probabilities)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_single_path_is_point_mass() {
        let space = PathSpace::from_paths(3, 2, vec![vec![0, 1, 2]]).unwrap();
        let c = lp_ot(&space, &[7.5], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(c.probabilities, vec![1.0]);
        assert_eq!(c.objective, 7.5);
    }

    #[test]
    fn lp_prefers_cheaper_parallel_path() {
        let space = PathSpace::from_paths(3, 2, vec![vec![0, 1, 2], vec![0, 2, 2]]).unwrap();
        let c = lp_ot(&space, &[1.0, 2.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(c.probabilities, vec![1.0, 0.0]);
    }

    #[test]
    fn lp_reports_infeasibility() {
        let space = PathSpace::from_paths(2, 1, vec![vec![0, 0], vec![1, 1]]).unwrap();
        let err = lp_ot(&space, &[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    #[test]
    fn ipf_keeps_feasible_weights() {
        let space = PathSpace::enumerate(2, 1, &[0, 1], &[0, 1], |_, _| true).unwrap();
        let w = [0.1f64, 0.4, 0.2, 0.3];
        let logs: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        let c = dense_ipf(&space, &logs, &[0.5, 0.5], &[0.3, 0.7], 1e-14, 10).unwrap();
        for (a, b) in c.probabilities.iter().zip(w) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn objective_of_point_mass_against_uniform() {
        let e = objective_eval(&[1.0, 0.0, 0.0, 0.0], &[3.0, 1.0, 1.0, 1.0], &[0.25; 4], 2.0);
        assert_eq!(e.cost, 3.0);
        assert!((e.kl - 4f64.ln()).abs() < 1e-15);
        assert!((e.total - (3.0 + 2.0 * 4f64.ln())).abs() < 1e-14);
        let bad = objective_eval(&[0.5, 0.5], &[0.0, 0.0], &[1.0, 0.0], 1.0);
        assert_eq!(bad.kl, f64::INFINITY);
        assert_eq!(bad.offending, vec![1]);
    }
}
