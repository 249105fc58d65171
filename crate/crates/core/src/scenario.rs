//! Logistics scenarios: supply and demand ingestion, the imitation and
//! risk-prior studies, disaster re-pricing, and report files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approx::{fit_markov, markov_plan_from_fit};
use crate::error::{Error, Result};
use crate::formats::{atomic_write, PathMassFile};
use crate::imitation::{edge_usage, solve_iot, ImitationTarget, IotProblem, MarkovTarget, ObjectiveTerms, Route, TransportPlan};
use crate::network::{load_network, CostModel, CostRules, EdgeCostTable, EdgeKind, Network, PathSpace};
use crate::oracle::lp_ot;

const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Rule-based path costs (run discounts, switch penalties).
    #[default]
    Ruled,
    /// Per-edge costs summed along the path.
    Markov,
}

/// Entries of the risk prior `R_Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskPriorSpec {
    pub default_weight: f64,
    pub affected_weight: f64,
    pub maritime_weight: f64,
    /// Scale rows of `R_Q` to sum to one.
    pub row_normalize: bool,
}

impl Default for RiskPriorSpec {
    fn default() -> Self {
        RiskPriorSpec { default_weight: 1.0, affected_weight: 1e-5, maritime_weight: 100.0, row_normalize: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioKindFile {
    Imitation {
        q_star: String,
        #[serde(default)]
        beta: f64,
    },
    Risk {
        /// Edges expected to be hit; the disaster edges when absent.
        #[serde(default)]
        affected: Option<Vec<[usize; 2]>>,
        #[serde(default, flatten)]
        weights: RiskPriorSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisasterFile {
    pub edges: Vec<[usize; 2]>,
    pub multiplier: f64,
}

/// Scenario file. Paths are resolved relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub network: String,
    pub supply: BTreeMap<String, f64>,
    pub demand: BTreeMap<String, f64>,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub alpha: f64,
    #[serde(default)]
    pub cost_mode: CostMode,
    pub scenario: ScenarioKindFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disaster: Option<DisasterFile>,
}

#[derive(Debug, Clone)]
pub enum ScenarioKind {
    Imitation { q_star: PathMassFile, beta: f64 },
    Risk { affected: HashSet<(usize, usize)>, weights: RiskPriorSpec },
}

#[derive(Debug, Clone)]
pub struct Disaster {
    /// Zero-based directed pairs; each listed link is hit in both directions.
    pub edges: HashSet<(usize, usize)>,
    pub multiplier: f64,
}

/// A validated scenario with normalized marginals.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub network: Network,
    pub rules: CostRules,
    pub cost_mode: CostMode,
    pub q_total: f64,
    pub nu0: Vec<f64>,
    pub nut: Vec<f64>,
    pub horizon: usize,
    pub alpha: f64,
    pub kind: ScenarioKind,
    pub disaster: Option<Disaster>,
}

impl ScenarioSpec {
    pub fn cost_model(&self) -> CostModel {
        cost_model(&self.network, &self.rules, self.cost_mode)
    }

    pub fn problem(&self, target: ImitationTarget) -> Result<IotProblem> {
        IotProblem::new(
            self.network.clone(),
            self.cost_model(),
            self.horizon,
            self.nu0.clone(),
            self.nut.clone(),
            self.alpha,
            target,
        )
    }
}

fn cost_model(network: &Network, rules: &CostRules, mode: CostMode) -> CostModel {
    match mode {
        CostMode::Ruled => CostModel::Ruled(*rules),
        CostMode::Markov => CostModel::Markov(EdgeCostTable::from_network(network, rules)),
    }
}

fn masses(name: &str, table: &BTreeMap<String, f64>, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for (key, &mass) in table {
        let id: usize = key
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("{name}: {key:?} is not a node id")))?;
        if id == 0 || id > n {
            return Err(Error::Validation(format!("{name}: node {id} outside 1..={n}")));
        }
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(Error::Validation(format!("{name}: node {id} has invalid mass {mass}")));
        }
        out[id - 1] += mass;
    }
    Ok(out)
}

fn edge_set(edges: &[[usize; 2]], n: usize) -> Result<HashSet<(usize, usize)>> {
    let mut out = HashSet::new();
    for &[a, b] in edges {
        if a == 0 || b == 0 || a > n || b > n {
            return Err(Error::Validation(format!("edge ({a}, {b}) references a node outside 1..={n}")));
        }
        out.insert((a - 1, b - 1));
        out.insert((b - 1, a - 1));
    }
    Ok(out)
}

pub fn parse_scenario(file: &ScenarioFile, base: &Path) -> Result<ScenarioSpec> {
    let (network, rules) = load_network(base.join(&file.network))?;
    let n = network.node_count();
    let supply = masses("supply", &file.supply, n)?;
    let demand = masses("demand", &file.demand, n)?;
    let (s, d): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if !(s > 0.0) || (s - d).abs() > BALANCE_TOL * s.max(d) {
        return Err(Error::Validation(format!(
            "supply total {s} and demand total {d} differ; only balanced transport is supported"
        )));
    }
    if file.horizon == 0 {
        return Err(Error::Validation("T must be at least 1".into()));
    }
    if !(file.alpha > 0.0 && file.alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be positive, got {}", file.alpha)));
    }
    let disaster = match &file.disaster {
        None => None,
        Some(dis) => {
            if !(dis.multiplier.is_finite() && dis.multiplier >= 0.0) {
                return Err(Error::Validation(format!("invalid disaster multiplier {}", dis.multiplier)));
            }
            Some(Disaster { edges: edge_set(&dis.edges, n)?, multiplier: dis.multiplier })
        }
    };
    let kind = match &file.scenario {
        ScenarioKindFile::Imitation { q_star, beta } => {
            if !(0.0..=1.0).contains(beta) {
                return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
            }
            ScenarioKind::Imitation { q_star: PathMassFile::load(base.join(q_star))?, beta: *beta }
        }
        ScenarioKindFile::Risk { affected, weights } => {
            let affected = match (affected, &disaster) {
                (Some(list), _) => edge_set(list, n)?,
                (None, Some(dis)) => dis.edges.clone(),
                (None, None) => HashSet::new(),
            };
            ScenarioKind::Risk { affected, weights: *weights }
        }
    };
    Ok(ScenarioSpec {
        network,
        rules,
        cost_mode: file.cost_mode,
        q_total: s,
        nu0: supply.iter().map(|x| x / s).collect(),
        nut: demand.iter().map(|x| x / s).collect(),
        horizon: file.horizon,
        alpha: file.alpha,
        kind,
        disaster,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let file: ScenarioFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    parse_scenario(&file, path.parent().unwrap_or(Path::new(".")))
}

/// `R_Q`: the affected weight on expected-affected edges, the maritime
/// weight on sea links, the default weight on other edges, zero off-edge.
pub fn risk_target(network: &Network, affected: &HashSet<(usize, usize)>, spec: &RiskPriorSpec) -> MarkovTarget {
    let n = network.node_count();
    let r_q = DMatrix::from_fn(n, n, |i, j| {
        if !network.has_edge(i, j) {
            0.0
        } else if affected.contains(&(i, j)) {
            spec.affected_weight
        } else if network.edges_between(i, j).any(|e| e.kind == EdgeKind::Maritime) {
            spec.maritime_weight
        } else {
            spec.default_weight
        }
    });
    let target = MarkovTarget { nu_q0: DVector::from_element(n, 1.0 / n as f64), r_q };
    if spec.row_normalize {
        target.row_normalized()
    } else {
        target
    }
}

/// A plan together with its path costs, ready for reporting.
#[derive(Debug, Clone)]
pub struct PlanReport {
    pub name: String,
    pub space: Arc<PathSpace>,
    pub law: Vec<f64>,
    pub costs: Vec<f64>,
    pub total_cost: f64,
    /// `sum_{x: xT = j} P(x) C(x)` per destination `j`.
    pub per_destination: Vec<f64>,
    pub objective: Option<ObjectiveTerms>,
}

impl PlanReport {
    pub fn new(name: &str, space: Arc<PathSpace>, law: Vec<f64>, costs: Vec<f64>, objective: Option<ObjectiveTerms>) -> Self {
        let mut per_destination = vec![0.0; space.node_count()];
        for (k, (&p, &c)) in law.iter().zip(&costs).enumerate() {
            if p > 0.0 {
                per_destination[space.end(k)] += p * c;
            }
        }
        let total_cost = law.iter().zip(&costs).filter(|(p, _)| **p > 0.0).map(|(p, c)| p * c).sum();
        PlanReport { name: name.into(), space, law, costs, total_cost, per_destination, objective }
    }

    pub fn from_plan(name: &str, plan: &TransportPlan, costs: &[f64]) -> Self {
        Self::new(name, plan.space.clone(), plan.path_law.clone(), costs.to_vec(), Some(plan.objective))
    }

    /// The same plan evaluated under other path costs.
    pub fn repriced(&self, name: &str, costs: Vec<f64>) -> Self {
        Self::new(name, self.space.clone(), self.law.clone(), costs, None)
    }

    pub fn usage(&self) -> BTreeMap<(usize, usize, usize), f64> {
        let plan = TransportPlan {
            space: self.space.clone(),
            path_law: self.law.clone(),
            transition_matrices: None,
            objective: ObjectiveTerms::new(self.total_cost, 0.0, 0.0),
            route: Route::Marginal,
            iterations: 0,
            residual: 0.0,
        };
        edge_usage(&plan)
    }
}

/// Before/after costs per destination for the imitation plan and the OT plan.
#[derive(Debug, Clone)]
pub struct DisasterTable {
    pub multiplier: f64,
    pub before_iot: PlanReport,
    pub before_ot: PlanReport,
    pub after_iot: PlanReport,
    pub after_ot: PlanReport,
}

impl DisasterTable {
    /// Change of one destination's cost under each plan.
    pub fn delta(&self, node: usize) -> (f64, f64) {
        (
            self.after_iot.per_destination[node] - self.before_iot.per_destination[node],
            self.after_ot.per_destination[node] - self.before_ot.per_destination[node],
        )
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub plans: Vec<PlanReport>,
    pub disaster: Option<DisasterTable>,
    /// Extra `key, value` lines for the summary.
    pub notes: Vec<(String, String)>,
}

impl ScenarioOutcome {
    pub fn plan(&self, name: &str) -> Option<&PlanReport> {
        self.plans.iter().find(|p| p.name == name)
    }
}

/// The imitation study: the target `Q_star`, the minimum-cost plan, the
/// imitation plan with the blended target, and its Markov approximation.
pub fn run_imitation_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    let ScenarioKind::Imitation { q_star, beta } = &spec.kind else {
        return Err(Error::Validation("not an imitation scenario".into()));
    };
    let probe = spec.problem(ImitationTarget::Uniform)?;
    let q_vec = q_star.to_vector(&probe.space)?;
    let problem = spec.problem(ImitationTarget::Path { q_star: q_vec.clone(), beta: *beta })?;
    let costs = problem.costs.clone();

    let ot = lp_ot(&problem.space, &costs, &problem.nu0, &problem.nut)?;
    let iot = solve_iot(&problem)?;
    let mut fit = fit_markov(&problem.path_prior()?)?;
    let markov = markov_plan_from_fit(&mut fit, &problem, Some(&iot))?;

    let notes = vec![
        ("paths".into(), problem.space.len().to_string()),
        ("beta".into(), format!("{beta}")),
        ("markov_fit_residual".into(), format!("{:e}", fit.residual)),
        (
            "markov_relative_objective_error".into(),
            format!("{:e}", fit.relative_objective_error.unwrap_or(f64::NAN)),
        ),
    ];
    Ok(ScenarioOutcome {
        plans: vec![
            PlanReport::new("q_star", problem.space.clone(), q_vec, costs.clone(), None),
            PlanReport::new("ot", problem.space.clone(), ot.probabilities, costs.clone(), None),
            PlanReport::from_plan("iot", &iot, &costs),
            PlanReport::from_plan("iot_markov", &markov, &costs),
        ],
        disaster: None,
        notes,
    })
}

/// Path costs after multiplying the listed edges by `multiplier`.
pub fn disaster_costs(spec: &ScenarioSpec, space: &PathSpace, disaster: &Disaster) -> Result<Vec<f64>> {
    let network = spec.network.repriced(&disaster.edges, disaster.multiplier);
    let model = match spec.cost_model() {
        CostModel::Markov(table) => CostModel::Markov(table.repriced(&disaster.edges, disaster.multiplier)),
        ruled => ruled,
    };
    space.costs(&model, &network)
}

/// The risk-prior study: the minimum-cost plan and the imitation plan under
/// `R_Q`, and their realized costs after the disaster.
pub fn run_risk_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    let ScenarioKind::Risk { affected, weights } = &spec.kind else {
        return Err(Error::Validation("not a risk scenario".into()));
    };
    let target = risk_target(&spec.network, affected, weights);
    let problem = spec.problem(ImitationTarget::Markov(target))?;
    let costs = problem.costs.clone();
    let ot = lp_ot(&problem.space, &costs, &problem.nu0, &problem.nut)?;
    let iot = solve_iot(&problem)?;
    let ot_report = PlanReport::new("ot", problem.space.clone(), ot.probabilities, costs.clone(), None);
    let iot_report = PlanReport::from_plan("iot", &iot, &costs);

    let disaster = match &spec.disaster {
        None => None,
        Some(d) => {
            let after = disaster_costs(spec, &problem.space, d)?;
            Some(DisasterTable {
                multiplier: d.multiplier,
                after_iot: iot_report.repriced("iot_after", after.clone()),
                after_ot: ot_report.repriced("ot_after", after),
                before_iot: iot_report.clone(),
                before_ot: ot_report.clone(),
            })
        }
    };
    let mut notes = vec![
        ("paths".into(), problem.space.len().to_string()),
        ("route".into(), format!("{:?}", iot.route)),
    ];
    if let Some(t) = &disaster {
        notes.push(("after_disaster_iot".into(), format!("{:e}", t.after_iot.total_cost)));
        notes.push(("after_disaster_ot".into(), format!("{:e}", t.after_ot.total_cost)));
    }
    Ok(ScenarioOutcome { plans: vec![ot_report, iot_report], disaster, notes })
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    match spec.kind {
        ScenarioKind::Imitation { .. } => run_imitation_scenario(spec),
        ScenarioKind::Risk { .. } => run_risk_scenario(spec),
    }
}

/// Rendered report files, keyed by file name.
pub fn render_report(outcome: &ScenarioOutcome, threshold: f64) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    let horizon = outcome.plans.first().map_or(0, |p| p.space.horizon());
    let usages: Vec<_> = outcome.plans.iter().map(|p| (p.name.as_str(), p.usage())).collect();
    for t in 0..horizon {
        let mut csv = String::from("plan,t,from,to,mass\n");
        for (name, usage) in &usages {
            for (&(step, i, j), &mass) in usage.iter() {
                if step == t && mass > 0.0 && mass >= threshold {
                    let _ = writeln!(csv, "{name},{t},{},{},{mass:.12e}", i + 1, j + 1);
                }
            }
        }
        files.insert(format!("report_usage_t{t}.csv"), csv);
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "usage_threshold,{threshold:e}");
    for (k, v) in &outcome.notes {
        let _ = writeln!(summary, "{k},{v}");
    }
    for p in &outcome.plans {
        let _ = writeln!(summary, "[{}]", p.name);
        let _ = writeln!(summary, "total_cost,{:.12e}", p.total_cost);
        if let Some(o) = &p.objective {
            let _ = writeln!(summary, "kl_to_q,{:.12e}", o.kl_to_q);
            let _ = writeln!(summary, "objective,{:.12e}", o.total);
        }
        for (node, c) in p.per_destination.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(summary, "destination_{},{c:.12e}", node + 1);
            }
        }
    }
    files.insert("report_summary.txt".into(), summary);

    if let Some(t) = &outcome.disaster {
        let mut csv = String::from("node,before_iot,before_ot,after_iot,after_ot,delta_iot,delta_ot\n");
        for node in 0..t.before_iot.per_destination.len() {
            let row = [
                t.before_iot.per_destination[node],
                t.before_ot.per_destination[node],
                t.after_iot.per_destination[node],
                t.after_ot.per_destination[node],
            ];
            if row.iter().all(|x| *x == 0.0) {
                continue;
            }
            let (di, dot) = t.delta(node);
            let _ = writeln!(
                csv,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{di:.12e},{dot:.12e}",
                node + 1,
                row[0],
                row[1],
                row[2],
                row[3]
            );
        }
        let _ = writeln!(
            csv,
            "total,{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            t.before_iot.total_cost,
            t.before_ot.total_cost,
            t.after_iot.total_cost,
            t.after_ot.total_cost,
            t.after_iot.total_cost - t.before_iot.total_cost,
            t.after_ot.total_cost - t.before_ot.total_cost
        );
        files.insert("report_disaster.csv".into(), csv);
    }
    files
}

/// Writes the report files into `dir` and returns their paths. Usage rows
/// below `threshold` are left out of the usage tables only.
pub fn emit_report(outcome: &ScenarioOutcome, threshold: f64, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = render_report(outcome, threshold);
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        atomic_write(&path, &contents)?;
        written.push(path);
    }
    Ok(written)
}
