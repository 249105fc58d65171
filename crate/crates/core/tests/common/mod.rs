#![allow(dead_code)]

use iot_core::network::{CostModel, Network};

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Every node sequence of `horizon` steps, generated by counting in base n
/// and filtered afterwards. Slow but shares nothing with the solver's DFS.
pub fn brute_force_paths(
    network: &Network,
    model: &CostModel,
    horizon: usize,
    starts: &[usize],
    ends: &[usize],
) -> Vec<Vec<usize>> {
    let n = network.node_count();
    let total = n.pow(horizon as u32 + 1);
    let mut out = Vec::new();
    for code in 0..total {
        let mut path = Vec::with_capacity(horizon + 1);
        let mut c = code;
        for _ in 0..=horizon {
            path.push(c % n);
            c /= n;
        }
        path.reverse();
        if starts.contains(&path[0])
            && ends.contains(&path[horizon])
            && path.windows(2).all(|w| model.admits(network, w[0], w[1]))
        {
            out.push(path);
        }
    }
    out
}

pub fn marginals(paths: &[Vec<usize>], law: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for (p, m) in paths.iter().zip(law) {
        a[p[0]] += m;
        b[*p.last().unwrap()] += m;
    }
    (a, b)
}

pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
