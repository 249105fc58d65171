//! Seeded test networks: a three-node toy, random small Markov instances,
//! and a 30-node logistics network generated by the same rules as the
//! auto-parts case (three supply sites, six ports, highways, local roads
//! between near pairs, storage loops).

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imitation::{ImitationTarget, IotProblem};
use crate::network::{build_network, CostModel, CostRules, EdgeCostTable, EdgeKind, EdgeSpec, Network, Node, PathSpace};
use crate::numeric::transport_feasible;

/// One-based ids of the supply sites in the synthetic network.
pub const SUPPLY_NODES: [usize; 3] = [1, 8, 24];
/// One-based ids of the port nodes joined by maritime edges.
pub const PORT_NODES: [usize; 6] = [1, 3, 11, 21, 27, 30];
pub const SUPPLY_MASS: [f64; 3] = [490.0, 490.0, 489.0];
pub const Q_TOTAL: f64 = 1469.0;
const LOCAL_ROAD_RANGE_KM: f64 = 300.0;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub network: Network,
    pub rules: CostRules,
    pub cost: CostModel,
    pub horizon: usize,
    pub nu0: Vec<f64>,
    pub nut: Vec<f64>,
}

impl Fixture {
    pub fn problem(&self, alpha: f64, target: ImitationTarget) -> Result<IotProblem> {
        IotProblem::new(
            self.network.clone(),
            self.cost.clone(),
            self.horizon,
            self.nu0.clone(),
            self.nut.clone(),
            alpha,
            target,
        )
    }

    /// The same fixture priced by per-edge table costs.
    pub fn markov(&self) -> Fixture {
        Fixture {
            name: format!("{}-markov", self.name),
            cost: CostModel::Markov(EdgeCostTable::from_network(&self.network, &self.rules)),
            ..self.clone()
        }
    }

    /// The same fixture priced by the rule-based path costs.
    pub fn ruled(&self) -> Fixture {
        Fixture { name: format!("{}-ruled", self.name), cost: CostModel::Ruled(self.rules), ..self.clone() }
    }
}

fn node(id: usize, x: f64, y: f64) -> Node {
    Node { id, x_km: x, y_km: y, label: format!("n{id}") }
}

/// Complete three-node graph with storage loops, horizon 2 (27 paths).
pub fn tiny() -> Fixture {
    let nodes = vec![node(1, 0.0, 0.0), node(2, 3.0, 0.0), node(3, 1.0, 2.0)];
    let mut edges = Vec::new();
    for i in 1..=3 {
        for j in 1..=3 {
            let kind = if i == j { EdgeKind::Storage } else { EdgeKind::LocalRoad };
            edges.push(EdgeSpec::new(i, j, kind));
        }
    }
    let network = build_network(nodes, edges).expect("static network");
    let rules = CostRules { storage_cost_km: 1.0, ..CostRules::default() };
    Fixture {
        name: "tiny".into(),
        cost: CostModel::Markov(EdgeCostTable::from_network(&network, &rules)),
        network,
        rules,
        horizon: 2,
        nu0: vec![0.5, 0.3, 0.2],
        nut: vec![0.2, 0.3, 0.5],
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize, support: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for &i in support {
        p[i] = rng.gen_range(0.1..1.0);
    }
    let total: f64 = p.iter().sum();
    p.iter().map(|x| x / total).collect()
}

/// A strongly connected random graph on `n` nodes (a directed ring plus
/// random chords and storage loops), with table costs in `[1, 10]` and
/// random marginals whose supports can be joined in `horizon` steps.
pub fn random_markov(seed: u64, n: usize, horizon: usize) -> Fixture {
    assert!(n >= 2 && horizon >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let nodes: Vec<Node> =
            (1..=n).map(|id| node(id, rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
        let mut edges = Vec::new();
        let mut table = EdgeCostTable::empty(n);
        for i in 0..n {
            for j in 0..n {
                let ring = j == (i + 1) % n;
                if ring || rng.gen_bool(0.5) {
                    let kind = if i == j { EdgeKind::Storage } else { EdgeKind::LocalRoad };
                    edges.push(EdgeSpec::new(i + 1, j + 1, kind));
                    table.set(i, j, rng.gen_range(1.0..10.0)).expect("valid cost");
                }
            }
        }
        let network = build_network(nodes, edges).expect("valid random network");
        let starts: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        let ends: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
        if starts.is_empty() || ends.is_empty() {
            continue;
        }
        let nu0 = random_distribution(&mut rng, n, &starts);
        let nut = random_distribution(&mut rng, n, &ends);
        let reach = reachability(&table, horizon);
        if !transport_feasible(&nu0, &nut, |i, j| reach[i][j]) {
            continue;
        }
        return Fixture {
            name: format!("random-{seed}-{n}-{horizon}"),
            network,
            rules: CostRules::default(),
            cost: CostModel::Markov(table),
            horizon,
            nu0,
            nut,
        };
    }
}

fn reachability(table: &EdgeCostTable, horizon: usize) -> Vec<Vec<bool>> {
    let n = table.n();
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    for _ in 0..horizon {
        reach = (0..n)
            .map(|i| (0..n).map(|j| (0..n).any(|k| reach[i][k] && table.get(k, j).is_some())).collect())
            .collect();
    }
    reach
}

/// Seeded 30-node logistics network.
///
/// Nodes are scattered over a 1000 km by 420 km strip. Highways join the
/// nodes in order along the strip and each node to its nearest neighbor,
/// ports are pairwise joined by sea, half of the remaining pairs closer than
/// 300 km get local roads, and every node has a storage loop. All links run
/// both ways. Supply is 490/490/489 units at nodes 1, 8 and 24; the other
/// nodes get random positive integer demands summing to 1469.
pub fn synthetic30(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30;
    let nodes: Vec<Node> = (1..=n)
        .map(|id| node(id, rng.gen_range(0.0..1000.0), rng.gen_range(0.0..420.0)))
        .collect();
    let dist = |i: usize, j: usize| (nodes[i].x_km - nodes[j].x_km).hypot(nodes[i].y_km - nodes[j].y_km);

    let mut highway = BTreeSet::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nodes[a].x_km.total_cmp(&nodes[b].x_km));
    for w in order.windows(2) {
        highway.insert((w[0].min(w[1]), w[0].max(w[1])));
    }
    for i in 0..n {
        let nearest = (0..n).filter(|&j| j != i).min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b))).unwrap();
        highway.insert((i.min(nearest), i.max(nearest)));
    }
    let ports: Vec<usize> = PORT_NODES.iter().map(|p| p - 1).collect();
    let mut near: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| dist(i, j) < LOCAL_ROAD_RANGE_KM && !highway.contains(&(i, j)))
        .collect();
    near.shuffle(&mut rng);
    near.truncate(near.len() / 2);

    let mut edges = Vec::new();
    let mut both = |i: usize, j: usize, kind: EdgeKind| {
        edges.push(EdgeSpec::new(i + 1, j + 1, kind));
        edges.push(EdgeSpec::new(j + 1, i + 1, kind));
    };
    for &(i, j) in &highway {
        both(i, j, EdgeKind::Highway);
    }
    for (a, &i) in ports.iter().enumerate() {
        for &j in &ports[a + 1..] {
            both(i, j, EdgeKind::Maritime);
        }
    }
    for &(i, j) in &near {
        both(i, j, EdgeKind::LocalRoad);
    }
    for i in 1..=n {
        edges.push(EdgeSpec::new(i, i, EdgeKind::Storage));
    }
    let network = build_network(nodes, edges).expect("generated network is valid");

    let mut nu0 = vec![0.0; n];
    for (s, m) in SUPPLY_NODES.iter().zip(SUPPLY_MASS) {
        nu0[s - 1] = m / Q_TOTAL;
    }
    let demand = integer_demands(&mut rng, n, Q_TOTAL as usize);
    let nut = demand.iter().map(|&d| d as f64 / Q_TOTAL).collect();
    let rules = CostRules::default();
    Fixture {
        name: format!("synthetic30-{seed}"),
        cost: CostModel::Ruled(rules),
        network,
        rules,
        horizon: 3,
        nu0,
        nut,
    }
}

/// A hand-designed style plan on `space`: each destination is served from
/// nearby supply sites (pairs taken in order of distance, as in a greedy
/// assignment), along the route with the fewest moves and then the lowest
/// cost. The result meets both marginals.
pub fn greedy_q_star(network: &Network, space: &PathSpace, costs: &[f64], nu0: &[f64], nut: &[f64]) -> Vec<f64> {
    let n = network.node_count();
    let mut supply = nu0.to_vec();
    let mut demand = nut.to_vec();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .filter(|&s| nu0[s] > 0.0)
        .flat_map(|s| (0..n).filter(|&d| nut[d] > 0.0).map(move |d| (s, d)))
        .collect();
    pairs.sort_by(|a, b| network.distance(a.0, a.1).total_cmp(&network.distance(b.0, b.1)).then(a.cmp(b)));
    let moves = |k: usize| space.path(k).windows(2).filter(|w| w[0] != w[1]).count();
    let mut q = vec![0.0; space.len()];
    for (s, d) in pairs {
        let mass = supply[s].min(demand[d]);
        if mass <= 0.0 {
            continue;
        }
        let best = (0..space.len())
            .filter(|&k| space.start(k) == s && space.end(k) == d)
            .min_by(|&a, &b| moves(a).cmp(&moves(b)).then(costs[a].total_cmp(&costs[b])));
        if let Some(k) = best {
            q[k] += mass;
            supply[s] -= mass;
            demand[d] -= mass;
        }
    }
    q
}

/// Positive integer demands on the non-supply nodes summing to `total`.
pub fn integer_demands(rng: &mut ChaCha8Rng, n: usize, total: usize) -> Vec<usize> {
    let sinks: Vec<usize> = (0..n).filter(|i| !SUPPLY_NODES.contains(&(i + 1))).collect();
    let raw: Vec<f64> = sinks.iter().map(|_| rng.gen_range(1.0..4.0)).collect();
    let scale = (total - sinks.len()) as f64 / raw.iter().sum::<f64>();
    let mut out = vec![0usize; n];
    let mut assigned = 0;
    for (&i, r) in sinks.iter().zip(&raw) {
        out[i] = 1 + (r * scale).floor() as usize;
        assigned += out[i];
    }
    let mut k = 0;
    while assigned < total {
        out[sinks[k % sinks.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    out
}

/// Nodes and edges of the risk fixture that the disaster hits.
#[derive(Debug, Clone)]
pub struct RiskLayout {
    pub fixture: Fixture,
    /// Zero-based `(from, to)` pairs expected to be damaged.
    pub affected: Vec<(usize, usize)>,
    /// Zero-based node whose every incident edge is damaged.
    pub cut_node: usize,
}

/// An 8-node network with a cheap land corridor through a hazard zone and a
/// dearer but undamaged sea route.
///
/// Supplies sit at nodes 1 and 2, demand at nodes 4 to 8. The corridor
/// 1-3-4 is damaged, as is the spur 5-8. Node 8 hangs off port 5 alone and
/// has no storage loop; node 5 is two undamaged steps from the supplies
/// (1-2-5 or 2-2-5), so every horizon-3 path into node 8 crosses exactly one
/// damaged edge, 5 -> 8. Costs are per-edge (table) costs.
pub fn risk_fixture(seed: u64) -> RiskLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = [
        (0.0, 0.0),
        (0.0, 80.0),
        (100.0, 0.0),
        (200.0, 0.0),
        (150.0, 150.0),
        (250.0, 80.0),
        (300.0, -20.0),
        (150.0, 230.0),
    ];
    let nodes: Vec<Node> = base
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| node(k + 1, x + rng.gen_range(-5.0..5.0), y + rng.gen_range(-5.0..5.0)))
        .collect();
    let land = [
        (1, 2, EdgeKind::LocalRoad),
        (1, 3, EdgeKind::Highway),
        (2, 3, EdgeKind::LocalRoad),
        (3, 4, EdgeKind::Highway),
        (4, 5, EdgeKind::LocalRoad),
        (4, 6, EdgeKind::LocalRoad),
        (5, 6, EdgeKind::LocalRoad),
        (4, 7, EdgeKind::LocalRoad),
        (5, 8, EdgeKind::LocalRoad),
    ];
    let mut edges = Vec::new();
    for &(a, b, kind) in &land {
        edges.push(EdgeSpec::new(a, b, kind));
        edges.push(EdgeSpec::new(b, a, kind));
    }
    edges.push(EdgeSpec::new(2, 5, EdgeKind::Maritime));
    edges.push(EdgeSpec::new(5, 2, EdgeKind::Maritime));
    for i in 1..=7 {
        edges.push(EdgeSpec::new(i, i, EdgeKind::Storage));
    }
    let network = build_network(nodes, edges).expect("static risk network");
    let affected = [(1, 3), (3, 4), (5, 8)]
        .iter()
        .flat_map(|&(a, b)| [(a - 1, b - 1), (b - 1, a - 1)])
        .collect();
    let n = network.node_count();
    let mut nu0 = vec![0.0; n];
    nu0[0] = 0.5;
    nu0[1] = 0.5;
    let sinks = [3, 4, 5, 6, 7];
    let nut = random_distribution(&mut rng, n, &sinks);
    let rules = CostRules::default();
    RiskLayout {
        fixture: Fixture {
            name: format!("risk-{seed}"),
            cost: CostModel::Markov(EdgeCostTable::from_network(&network, &rules)),
            network,
            rules,
            horizon: 3,
            nu0,
            nut,
        },
        affected,
        cut_node: 7,
    }
}
