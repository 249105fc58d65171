mod common;

use std::collections::HashSet;

use iot_core::fixtures;
use iot_core::network::{
    build_network, enumerate_paths, markov_edge_cost, ruled_path_cost, support, CostModel, CostRules, EdgeCostTable,
    EdgeSpec, Node,
};
use proptest::prelude::*;

#[test]
fn synthetic_path_count_matches_brute_force() {
    let f = fixtures::synthetic30(3);
    let starts = support(&f.nu0);
    let ends = support(&f.nut);
    let space = enumerate_paths(&f.network, f.horizon, &starts, &ends, &f.cost).unwrap();
    let oracle = common::brute_force_paths(&f.network, &f.cost, f.horizon, &starts, &ends);
    assert_eq!(space.len(), oracle.len());
    assert_eq!(space.len(), 3165);
    let listed: HashSet<&Vec<usize>> = space.paths().iter().collect();
    assert!(oracle.iter().all(|p| listed.contains(p)));
}

#[test]
fn absent_pair_is_infinite() {
    let table = EdgeCostTable::from_entries(3, [(0, 1, 5.0)]).unwrap();
    let model = CostModel::Markov(table);
    assert_eq!(markov_edge_cost(&model, 0, 1).unwrap(), Some(5.0));
    assert_eq!(markov_edge_cost(&model, 1, 0).unwrap(), None);
    assert_eq!(markov_edge_cost(&model, 2, 2).unwrap(), None);
}

fn relabeled(perm: &[usize]) -> (iot_core::network::Network, iot_core::network::Network) {
    let f = fixtures::synthetic30(1);
    let original = f.network.clone();
    let nodes: Vec<Node> = original
        .nodes()
        .iter()
        .map(|nd| Node { id: perm[nd.id - 1] + 1, ..nd.clone() })
        .collect();
    let edges: Vec<EdgeSpec> = original
        .edge_specs()
        .into_iter()
        .map(|e| EdgeSpec { from: perm[e.from - 1] + 1, to: perm[e.to - 1] + 1, ..e })
        .collect();
    (original, build_network(nodes, edges).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn markov_path_cost_is_sum_of_edges(seed in 0u64..500, n in 3usize..7, horizon in 1usize..4) {
        let f = fixtures::random_markov(seed, n, horizon);
        let starts = support(&f.nu0);
        let ends = support(&f.nut);
        let space = enumerate_paths(&f.network, horizon, &starts, &ends, &f.cost).unwrap();
        let costs = space.costs(&f.cost, &f.network).unwrap();
        for (k, path) in space.paths().iter().enumerate() {
            let sum: f64 = path.windows(2).map(|w| markov_edge_cost(&f.cost, w[0], w[1]).unwrap().unwrap()).sum();
            prop_assert_eq!(costs[k], sum);
            prop_assert!(path.windows(2).all(|w| f.network.has_edge(w[0], w[1])));
        }
    }

    #[test]
    fn neutral_rules_reduce_to_base_lengths(seed in 0u64..50) {
        let f = fixtures::synthetic30(seed);
        let ruled = CostModel::Ruled(CostRules::neutral());
        // parallel edges share endpoints; keep the shortest, as the neutral rules would
        let mut best = std::collections::HashMap::new();
        for e in f.network.edges() {
            let v = best.entry((e.from, e.to)).or_insert(f64::INFINITY);
            *v = e.base_length.min(*v);
        }
        let starts = support(&f.nu0);
        let space = enumerate_paths(&f.network, 2, &starts, &(0..30).collect::<Vec<_>>(), &ruled).unwrap();
        for path in space.paths().iter().step_by(7) {
            let direct: f64 = path.windows(2).map(|w| best[&(w[0], w[1])]).sum();
            let c = ruled_path_cost(&ruled, &f.network, path).unwrap();
            prop_assert!((c - direct).abs() <= 1e-12 * direct.max(1.0), "{} vs {}", c, direct);
        }
    }

    #[test]
    fn ruled_cost_ignores_node_labels(perm in Just((0..30).collect::<Vec<usize>>()).prop_shuffle()) {
        let (original, moved) = relabeled(&perm);
        let model = CostModel::Ruled(CostRules::default());
        let all: Vec<usize> = (0..30).collect();
        let space = enumerate_paths(&original, 3, &[0, 7, 23], &all, &model).unwrap();
        for path in space.paths().iter().step_by(13) {
            let mapped: Vec<usize> = path.iter().map(|&i| perm[i]).collect();
            let a = ruled_path_cost(&model, &original, path).unwrap();
            let b = ruled_path_cost(&model, &moved, &mapped).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
