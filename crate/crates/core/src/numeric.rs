//! Small numeric helpers shared by the solvers.

use std::collections::VecDeque;

use nalgebra::DMatrix;

/// `log(sum(exp(x)))` with max-shift; `-inf` for an empty or all `-inf` input.
pub fn logsumexp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Natural log applied entrywise, mapping zeros to `-inf`.
pub fn ln_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
}

/// Log-domain matrix product: `log(exp(a) * exp(b))`.
pub fn log_matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        logsumexp((0..a.ncols()).map(|k| a[(i, k)] + b[(k, j)]))
    })
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn max_abs_diff(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Checks that a probability vector is nonnegative, finite, and sums to one.
pub fn check_distribution(name: &str, dist: &[f64], tol: f64) -> crate::Result<()> {
    if let Some(bad) = dist.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(crate::Error::Validation(format!("{name} has invalid entry {bad}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(crate::Error::Validation(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}

/// Whether the transport polytope `{P >= 0 : P 1 = a, P^T 1 = b, P_ij = 0 where !allowed(i, j)}`
/// is nonempty, decided by a max-flow on the bipartite support graph.
pub fn transport_feasible(a: &[f64], b: &[f64], allowed: impl Fn(usize, usize) -> bool) -> bool {
    let (na, nb) = (a.len(), b.len());
    let source = na + nb;
    let sink = source + 1;
    let size = sink + 1;
    let mut cap = vec![vec![0.0f64; size]; size];
    for i in 0..na {
        cap[source][i] = a[i];
    }
    for j in 0..nb {
        cap[na + j][sink] = b[j];
    }
    for i in 0..na {
        for j in 0..nb {
            if a[i] > 0.0 && b[j] > 0.0 && allowed(i, j) {
                cap[i][na + j] = f64::INFINITY;
            }
        }
    }
    let demand: f64 = b.iter().sum();
    let flow = edmonds_karp(&mut cap, source, sink);
    flow >= demand - 1e-9 * demand.max(1.0)
}

fn edmonds_karp(cap: &mut [Vec<f64>], source: usize, sink: usize) -> f64 {
    let size = cap.len();
    let mut total = 0.0;
    loop {
        let mut prev = vec![usize::MAX; size];
        prev[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..size {
                if prev[v] == usize::MAX && cap[u][v] > 1e-15 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[sink] == usize::MAX {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let u = prev[v];
            push = push.min(cap[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = prev[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push;
    }
}
