//! Directed logistics networks, edge costs, and enumerated path spaces.
//!
//! Node indices are zero-based everywhere inside the library. Files and
//! reports use the one-based ids carried by [`Node::id`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "highway")]
    Highway,
    #[serde(rename = "maritime")]
    Maritime,
    #[serde(rename = "local")]
    LocalRoad,
    #[serde(rename = "storage")]
    Storage,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EdgeKind::Highway => "highway",
            EdgeKind::Maritime => "maritime",
            EdgeKind::LocalRoad => "local",
            EdgeKind::Storage => "storage",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub x_km: f64,
    pub y_km: f64,
    #[serde(default)]
    pub label: String,
}

/// Edge input as it appears in a network file: one-based endpoints and an
/// optional explicit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_km: Option<f64>,
}

impl EdgeSpec {
    pub fn new(from: usize, to: usize, kind: EdgeKind) -> Self {
        EdgeSpec { from, to, kind, length_km: None }
    }

    pub fn with_length(mut self, length_km: f64) -> Self {
        self.length_km = Some(length_km);
        self
    }
}

/// A validated edge with zero-based endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub base_length: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    by_pair: HashMap<(usize, usize), Vec<usize>>,
    successors: Vec<Vec<usize>>,
}

/// Validates nodes and edges into a [`Network`].
///
/// Node ids must be exactly `1..=n` (any order). Edge lengths default to the
/// Euclidean distance between the endpoint positions.
pub fn build_network(nodes: Vec<Node>, edges: Vec<EdgeSpec>) -> Result<Network> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::Validation("network has no nodes".into()));
    }
    let mut nodes = nodes;
    nodes.sort_by_key(|node| node.id);
    for (k, node) in nodes.iter().enumerate() {
        if node.id != k + 1 {
            return Err(Error::Validation(format!(
                "node ids must be dense in 1..={n}; found id {} at rank {}",
                node.id,
                k + 1
            )));
        }
        if !node.x_km.is_finite() || !node.y_km.is_finite() {
            return Err(Error::Validation(format!("node {} has a non-finite position", node.id)));
        }
    }

    let mut seen = HashSet::new();
    let mut built = Vec::with_capacity(edges.len());
    let mut by_pair: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut successors = vec![Vec::new(); n];
    for spec in edges {
        if spec.from == 0 || spec.to == 0 || spec.from > n || spec.to > n {
            return Err(Error::DanglingEndpoint { from: spec.from, to: spec.to, n });
        }
        if spec.from == spec.to && spec.kind != EdgeKind::Storage {
            return Err(Error::NonStorageSelfLoop { node: spec.from, kind: spec.kind.to_string() });
        }
        if !seen.insert((spec.from, spec.to, spec.kind)) {
            return Err(Error::Validation(format!(
                "duplicate edge ({}, {}, {})",
                spec.from, spec.to, spec.kind
            )));
        }
        let (i, j) = (spec.from - 1, spec.to - 1);
        let base_length = match spec.length_km {
            Some(len) => len,
            None => {
                let (a, b) = (&nodes[i], &nodes[j]);
                (a.x_km - b.x_km).hypot(a.y_km - b.y_km)
            }
        };
        if !(base_length.is_finite() && base_length >= 0.0) {
            return Err(Error::Validation(format!(
                "edge ({}, {}) has invalid length {base_length}",
                spec.from, spec.to
            )));
        }
        by_pair.entry((i, j)).or_default().push(built.len());
        successors[i].push(j);
        built.push(Edge { from: i, to: j, kind: spec.kind, base_length });
    }
    for succ in &mut successors {
        succ.sort_unstable();
        succ.dedup();
    }
    Ok(Network { nodes, edges: built, by_pair, successors })
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges joining `i` to `j` (zero-based); several when kinds differ.
    pub fn edges_between(&self, i: usize, j: usize) -> impl Iterator<Item = &Edge> {
        self.by_pair
            .get(&(i, j))
            .into_iter()
            .flatten()
            .map(move |&k| &self.edges[k])
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.by_pair.contains_key(&(i, j))
    }

    /// Sorted distinct successors of node `i`.
    pub fn successors(&self, i: usize) -> &[usize] {
        &self.successors[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.nodes[i], &self.nodes[j]);
        (a.x_km - b.x_km).hypot(a.y_km - b.y_km)
    }

    /// Returns a copy of the network with every length of the listed
    /// `(from, to)` pairs multiplied by `factor`.
    pub fn repriced(&self, pairs: &HashSet<(usize, usize)>, factor: f64) -> Network {
        let mut out = self.clone();
        for edge in &mut out.edges {
            if pairs.contains(&(edge.from, edge.to)) {
                edge.base_length *= factor;
            }
        }
        out
    }

    pub fn edge_specs(&self) -> Vec<EdgeSpec> {
        self.edges
            .iter()
            .map(|e| EdgeSpec::new(e.from + 1, e.to + 1, e.kind).with_length(e.base_length))
            .collect()
    }
}

/// Parameters of the rule-based (non-Markov) path pricing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostRules {
    pub highway_discount_2: f64,
    pub highway_discount_3plus: f64,
    pub switch_penalty_km: f64,
    pub storage_cost_km: f64,
    pub maritime_multiplier: f64,
}

impl Default for CostRules {
    fn default() -> Self {
        CostRules {
            highway_discount_2: 0.20,
            highway_discount_3plus: 0.30,
            switch_penalty_km: 20.0,
            storage_cost_km: 10.0,
            maritime_multiplier: 4.0,
        }
    }
}

impl CostRules {
    /// Rules under which a path costs the plain sum of its base lengths.
    pub fn neutral() -> Self {
        CostRules {
            highway_discount_2: 0.0,
            highway_discount_3plus: 0.0,
            switch_penalty_km: 0.0,
            storage_cost_km: 0.0,
            maritime_multiplier: 1.0,
        }
    }

    /// Cost of one edge before run discounts and switch penalties.
    pub fn edge_cost(&self, edge: &Edge) -> f64 {
        match edge.kind {
            EdgeKind::Maritime => self.maritime_multiplier * edge.base_length,
            EdgeKind::Storage => self.storage_cost_km,
            EdgeKind::Highway | EdgeKind::LocalRoad => edge.base_length,
        }
    }

    /// Prices a fixed sequence of edges.
    pub fn sequence_cost(&self, edges: &[&Edge]) -> f64 {
        let mut total: f64 = edges.iter().map(|e| self.edge_cost(e)).sum();
        let mut t = 0;
        while t < edges.len() {
            if edges[t].kind != EdgeKind::Highway {
                t += 1;
                continue;
            }
            let start = t;
            let mut run = 0.0;
            while t < edges.len() && edges[t].kind == EdgeKind::Highway {
                run += self.edge_cost(edges[t]);
                t += 1;
            }
            match t - start {
                1 => {}
                2 => total -= self.highway_discount_2 * run,
                _ => total -= self.highway_discount_3plus * run,
            }
        }
        let switches = edges.windows(2).filter(|w| w[0].kind != w[1].kind).count();
        total + self.switch_penalty_km * switches as f64
    }
}

/// Dense table of per-edge costs; `None` marks an absent edge (infinite cost).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCostTable {
    n: usize,
    costs: Vec<Option<f64>>,
}

impl EdgeCostTable {
    pub fn empty(n: usize) -> Self {
        EdgeCostTable { n, costs: vec![None; n * n] }
    }

    /// Builds a table from `(i, j, cost)` triples with zero-based indices.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut table = Self::empty(n);
        for (i, j, c) in entries {
            table.set(i, j, c)?;
        }
        Ok(table)
    }

    /// Single-edge costs of a network under `rules`, ignoring run discounts
    /// and switch penalties; parallel edges keep the cheapest kind.
    pub fn from_network(network: &Network, rules: &CostRules) -> Self {
        let mut table = Self::empty(network.node_count());
        for edge in network.edges() {
            let c = rules.edge_cost(edge);
            let slot = &mut table.costs[edge.from * table.n + edge.to];
            *slot = Some(slot.map_or(c, |old| old.min(c)));
        }
        table
    }

    pub fn set(&mut self, i: usize, j: usize, cost: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::ShapeMismatch(format!("entry ({i}, {j}) outside a {0}x{0} table", self.n)));
        }
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(Error::Validation(format!("edge cost at ({i}, {j}) must be finite and >= 0, got {cost}")));
        }
        self.costs[i * self.n + j] = Some(cost);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.costs[i * self.n + j]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Present entries as `(i, j, cost)`, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.costs
            .iter()
            .enumerate()
            .filter_map(move |(k, c)| c.map(|c| (k / self.n, k % self.n, c)))
    }

    pub fn path_cost(&self, path: &[usize]) -> Option<f64> {
        path.windows(2).map(|w| self.get(w[0], w[1])).sum()
    }

    /// Adds `delta` to every present entry.
    pub fn shifted(&self, delta: f64) -> Self {
        let costs = self.costs.iter().map(|c| c.map(|c| c + delta)).collect();
        EdgeCostTable { n: self.n, costs }
    }

    /// Multiplies the listed `(from, to)` entries by `factor`.
    pub fn repriced(&self, pairs: &HashSet<(usize, usize)>, factor: f64) -> Self {
        let mut out = self.clone();
        for &(i, j) in pairs {
            if let Some(c) = out.costs[i * self.n + j].as_mut() {
                *c *= factor;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    /// Path cost is the sum of per-edge table costs.
    Markov(EdgeCostTable),
    /// Path cost depends on the whole edge-kind sequence.
    Ruled(CostRules),
}

impl CostModel {
    pub fn is_markov(&self) -> bool {
        matches!(self, CostModel::Markov(_))
    }

    pub fn table(&self) -> Option<&EdgeCostTable> {
        match self {
            CostModel::Markov(t) => Some(t),
            CostModel::Ruled(_) => None,
        }
    }

    /// Whether a single step `i -> j` has finite cost.
    pub fn admits(&self, network: &Network, i: usize, j: usize) -> bool {
        match self {
            CostModel::Markov(t) => t.get(i, j).is_some(),
            CostModel::Ruled(_) => network.has_edge(i, j),
        }
    }

    /// Cost of a path, or `None` if it uses an absent edge.
    pub fn path_cost(&self, network: &Network, path: &[usize]) -> Result<Option<f64>> {
        match self {
            CostModel::Markov(t) => Ok(t.path_cost(path)),
            CostModel::Ruled(_) => match ruled_path_cost(self, network, path) {
                Ok(c) => Ok(Some(c)),
                Err(Error::InfeasiblePath { .. }) => Ok(None),
                Err(e) => Err(e),
            },
        }
    }
}

pub fn markov_edge_cost(model: &CostModel, i: usize, j: usize) -> Result<Option<f64>> {
    match model {
        CostModel::Markov(t) => {
            if i >= t.n() || j >= t.n() {
                return Err(Error::ShapeMismatch(format!("node pair ({i}, {j}) outside the table")));
            }
            Ok(t.get(i, j))
        }
        CostModel::Ruled(_) => Err(Error::ModeMismatch { expected: "markov" }),
    }
}

/// Rule-based path cost. With parallel edges of different kinds the
/// cheapest kind assignment is charged.
pub fn ruled_path_cost(model: &CostModel, network: &Network, path: &[usize]) -> Result<f64> {
    let CostModel::Ruled(rules) = model else {
        return Err(Error::ModeMismatch { expected: "ruled" });
    };
    let mut options: Vec<Vec<&Edge>> = Vec::with_capacity(path.len().saturating_sub(1));
    for (step, w) in path.windows(2).enumerate() {
        let opts: Vec<&Edge> = network.edges_between(w[0], w[1]).collect();
        if opts.is_empty() {
            return Err(Error::InfeasiblePath { from: w[0] + 1, to: w[1] + 1, step });
        }
        options.push(opts);
    }
    // Odometer over parallel-edge choices; almost always a single combination.
    let mut choice = vec![0usize; options.len()];
    let mut best = f64::INFINITY;
    let mut seq: Vec<&Edge> = Vec::with_capacity(options.len());
    loop {
        seq.clear();
        seq.extend(choice.iter().zip(&options).map(|(&c, o)| o[c]));
        best = best.min(rules.sequence_cost(&seq));
        let mut k = 0;
        loop {
            if k == choice.len() {
                return Ok(if options.is_empty() { 0.0 } else { best });
            }
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// The enumerated set of admissible paths of a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpace {
    n: usize,
    horizon: usize,
    paths: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl PathSpace {
    /// Enumerates every node sequence of `horizon` steps from `starts` to
    /// `ends` whose steps satisfy `admits`, in lexicographic order.
    pub fn enumerate(
        n: usize,
        horizon: usize,
        starts: &[usize],
        ends: &[usize],
        admits: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if let Some(&bad) = starts.iter().chain(ends).find(|&&v| v >= n) {
            return Err(Error::ShapeMismatch(format!("support node index {bad} outside 0..{n}")));
        }
        let succ: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| admits(i, j)).collect()).collect();

        // reach[k][i]: node i can hit an end node in exactly k steps.
        let mut reach = vec![vec![false; n]; horizon + 1];
        for &e in ends {
            reach[0][e] = true;
        }
        for k in 1..=horizon {
            for i in 0..n {
                reach[k][i] = succ[i].iter().any(|&j| reach[k - 1][j]);
            }
        }

        let mut starts: Vec<usize> = starts.to_vec();
        starts.sort_unstable();
        starts.dedup();
        let mut paths = Vec::new();
        let mut current = Vec::with_capacity(horizon + 1);
        for &s in &starts {
            if reach[horizon][s] {
                current.push(s);
                extend_paths(&succ, &reach, horizon, &mut current, &mut paths);
                current.pop();
            }
        }
        if paths.is_empty() {
            return Err(Error::EmptyPathSpace { horizon });
        }
        Ok(Self::from_sorted(n, horizon, paths))
    }

    /// Wraps an explicit list of paths, keeping the given order.
    pub fn from_paths(n: usize, horizon: usize, paths: Vec<Vec<usize>>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if paths.is_empty() {
            return Err(Error::EmptyPathSpace { horizon });
        }
        let mut index = HashMap::with_capacity(paths.len());
        for (k, p) in paths.iter().enumerate() {
            if p.len() != horizon + 1 {
                return Err(Error::Validation(format!("path {k} has {} nodes, expected {}", p.len(), horizon + 1)));
            }
            if let Some(&bad) = p.iter().find(|&&v| v >= n) {
                return Err(Error::Validation(format!("path {k} visits node index {bad} outside 0..{n}")));
            }
            if index.insert(p.clone(), k).is_some() {
                return Err(Error::Validation(format!("path {k} is a duplicate")));
            }
        }
        Ok(PathSpace { n, horizon, paths, index })
    }

    fn from_sorted(n: usize, horizon: usize, paths: Vec<Vec<usize>>) -> Self {
        let index = paths.iter().enumerate().map(|(k, p)| (p.clone(), k)).collect();
        PathSpace { n, horizon, paths, index }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    pub fn path(&self, k: usize) -> &[usize] {
        &self.paths[k]
    }

    pub fn index_of(&self, path: &[usize]) -> Option<usize> {
        self.index.get(path).copied()
    }

    pub fn start(&self, k: usize) -> usize {
        self.paths[k][0]
    }

    pub fn end(&self, k: usize) -> usize {
        self.paths[k][self.horizon]
    }

    /// Costs of every path; errors if any path has infinite cost.
    pub fn costs(&self, model: &CostModel, network: &Network) -> Result<Vec<f64>> {
        self.paths
            .iter()
            .map(|p| {
                model.path_cost(network, p)?.ok_or_else(|| {
                    let w = p.windows(2).position(|w| !model.admits(network, w[0], w[1])).unwrap_or(0);
                    Error::InfeasiblePath { from: p[w] + 1, to: p[w + 1] + 1, step: w }
                })
            })
            .collect()
    }

    /// Mass on each start node and each end node.
    pub fn endpoint_marginals(&self, law: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut first = vec![0.0; self.n];
        let mut last = vec![0.0; self.n];
        for (k, &p) in law.iter().enumerate() {
            first[self.start(k)] += p;
            last[self.end(k)] += p;
        }
        (first, last)
    }
}

fn extend_paths(
    succ: &[Vec<usize>],
    reach: &[Vec<bool>],
    horizon: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let depth = current.len() - 1;
    if depth == horizon {
        out.push(current.clone());
        return;
    }
    let last = current[depth];
    let remaining = horizon - depth - 1;
    for &j in &succ[last] {
        if reach[remaining][j] {
            current.push(j);
            extend_paths(succ, reach, horizon, current, out);
            current.pop();
        }
    }
}

/// Enumerates the admissible paths of a network under a cost model.
pub fn enumerate_paths(
    network: &Network,
    horizon: usize,
    start_support: &[usize],
    end_support: &[usize],
    model: &CostModel,
) -> Result<PathSpace> {
    let n = network.node_count();
    if let CostModel::Markov(t) = model {
        if t.n() != n {
            return Err(Error::ShapeMismatch(format!("cost table is {0}x{0}, network has {n} nodes", t.n())));
        }
    }
    PathSpace::enumerate(n, horizon, start_support, end_support, |i, j| model.admits(network, i, j))
}

/// Indices with positive mass.
pub fn support(dist: &[f64]) -> Vec<usize> {
    dist.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, _)| i).collect()
}

/// On-disk network description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default)]
    pub cost_rules: CostRules,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub x_km: f64,
    pub y_km: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_km: Option<f64>,
}

impl NetworkFile {
    pub fn from_network(network: &Network, rules: CostRules) -> Self {
        NetworkFile {
            nodes: network
                .nodes()
                .iter()
                .map(|n| NodeRecord { id: n.id, x_km: n.x_km, y_km: n.y_km, label: n.label.clone() })
                .collect(),
            edges: network
                .edge_specs()
                .into_iter()
                .map(|e| EdgeRecord { from: e.from, to: e.to, kind: e.kind, length_km: e.length_km })
                .collect(),
            cost_rules: rules,
        }
    }

    pub fn build(&self) -> Result<(Network, CostRules)> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node { id: n.id, x_km: n.x_km, y_km: n.y_km, label: n.label.clone() })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeSpec { from: e.from, to: e.to, kind: e.kind, length_km: e.length_km })
            .collect();
        Ok((build_network(nodes, edges)?, self.cost_rules))
    }
}

pub fn parse_network(json: &str) -> Result<(Network, CostRules)> {
    let file: NetworkFile = serde_json::from_str(json)?;
    file.build()
}

pub fn load_network(path: impl AsRef<Path>) -> Result<(Network, CostRules)> {
    parse_network(&std::fs::read_to_string(path)?)
}
