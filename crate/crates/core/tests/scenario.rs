mod common;

use std::collections::{BTreeMap, HashSet};

use common::tv;
use iot_core::fixtures::{self, Fixture};
use iot_core::formats::PathMassFile;
use iot_core::imitation::{solve_iot, solve_maxent, ImitationTarget};
use iot_core::network::{CostModel, NetworkFile};
use iot_core::oracle::objective_eval;
use iot_core::scenario::{
    disaster_costs, load_scenario, render_report, risk_target, run_imitation_scenario, run_risk_scenario, CostMode,
    Disaster, DisasterFile, RiskPriorSpec, ScenarioFile, ScenarioKind, ScenarioKindFile, ScenarioSpec,
};
use iot_core::Error;
use proptest::prelude::*;

fn spec_from(f: &Fixture, mode: CostMode, alpha: f64, kind: ScenarioKind, disaster: Option<Disaster>) -> ScenarioSpec {
    ScenarioSpec {
        network: f.network.clone(),
        rules: f.rules,
        cost_mode: mode,
        q_total: 1.0,
        nu0: f.nu0.clone(),
        nut: f.nut.clone(),
        horizon: f.horizon,
        alpha,
        kind,
        disaster,
    }
}

fn imitation_spec(mode: CostMode, beta: f64) -> (ScenarioSpec, Vec<f64>) {
    let f = fixtures::synthetic30(3);
    let f = if matches!(mode, CostMode::Markov) { f.markov() } else { f };
    let problem = f.problem(50.0, ImitationTarget::Uniform).unwrap();
    let q = fixtures::greedy_q_star(&f.network, &problem.space, &problem.costs, &f.nu0, &f.nut);
    let kind = ScenarioKind::Imitation { q_star: PathMassFile::from_vector(&problem.space, &q), beta };
    (spec_from(&f, mode, 50.0, kind, None), q)
}

fn risk_spec(seed: u64, weights: RiskPriorSpec) -> (ScenarioSpec, usize) {
    let layout = fixtures::risk_fixture(seed);
    let affected: HashSet<(usize, usize)> = layout.affected.iter().copied().collect();
    let disaster = Disaster { edges: affected.clone(), multiplier: 10.0 };
    let kind = ScenarioKind::Risk { affected, weights };
    (spec_from(&layout.fixture, CostMode::Markov, 35.0, kind, Some(disaster)), layout.cut_node)
}

fn write_json<T: serde::Serialize>(dir: &std::path::Path, name: &str, value: &T) {
    std::fs::write(dir.join(name), serde_json::to_string(value).unwrap()).unwrap();
}

fn scenario_file(supply: &[(usize, f64)], demand: &[(usize, f64)]) -> ScenarioFile {
    let table = |v: &[(usize, f64)]| v.iter().map(|(k, m)| (k.to_string(), *m)).collect::<BTreeMap<_, _>>();
    ScenarioFile {
        network: "network.json".into(),
        supply: table(supply),
        demand: table(demand),
        horizon: 3,
        alpha: 50.0,
        cost_mode: CostMode::Ruled,
        scenario: ScenarioKindFile::Risk { affected: None, weights: RiskPriorSpec::default() },
        disaster: Some(DisasterFile { edges: vec![[1, 2]], multiplier: 10.0 }),
    }
}

#[test]
fn scenario_file_normalizes_supplies() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures::synthetic30(3);
    write_json(dir.path(), "network.json", &NetworkFile::from_network(&f.network, f.rules));
    let demand: Vec<(usize, f64)> =
        f.nut.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(i, m)| (i + 1, m * 1469.0)).collect();
    write_json(dir.path(), "scenario.json", &scenario_file(&[(1, 490.0), (8, 490.0), (24, 489.0)], &demand));
    let spec = load_scenario(dir.path().join("scenario.json")).unwrap();
    assert_eq!(spec.q_total, 1469.0);
    assert_eq!(spec.nu0[0], 490.0 / 1469.0);
    assert_eq!(spec.nu0[7], 490.0 / 1469.0);
    assert_eq!(spec.nu0[23], 489.0 / 1469.0);
    assert_eq!(spec.nu0.iter().filter(|&&m| m > 0.0).count(), 3);
    assert!(spec.disaster.as_ref().unwrap().edges.contains(&(1, 0)));
    let problem = spec.problem(ImitationTarget::Uniform).unwrap();
    assert_eq!(problem.space.len(), 3165);

    write_json(dir.path(), "bad.json", &scenario_file(&[(1, 490.0), (8, 490.0), (24, 489.0)], &[(5, 1000.0)]));
    let err = load_scenario(dir.path().join("bad.json")).unwrap_err();
    assert!(matches!(err, Error::Validation(ref m) if m.contains("1469") && m.contains("1000")), "{err}");
}

#[test]
fn imitation_costs_are_ordered() {
    let (spec, q) = imitation_spec(CostMode::Ruled, 0.1);
    let out = run_imitation_scenario(&spec).unwrap();
    let costs = &out.plan("ot").unwrap().costs;
    let cost_of = |name: &str| {
        let law = &out.plan(name).unwrap().law;
        objective_eval(law, costs, law, 1.0).cost
    };
    let (ot, iot, target) = (cost_of("ot"), cost_of("iot"), cost_of("q_star"));
    assert!(ot <= iot && iot <= target, "{ot} {iot} {target}");
    assert_eq!(out.plan("q_star").unwrap().law, q);
    let note = |k: &str| out.notes.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone()).unwrap();
    assert!(note("markov_relative_objective_error").parse::<f64>().unwrap() > 0.0);
}

#[test]
fn pure_target_confines_the_plan_to_its_support() {
    let (spec, q) = imitation_spec(CostMode::Ruled, 0.0);
    let out = run_imitation_scenario(&spec).unwrap();
    let law = &out.plan("iot").unwrap().law;
    for (p, t) in law.iter().zip(&q) {
        if *t == 0.0 {
            assert_eq!(*p, 0.0);
        }
    }
    // The fitted chain leaks outside the target's support here.
    let note = out.notes.iter().find(|(k, _)| k == "markov_relative_objective_error").unwrap();
    assert_eq!(note.1, "inf");
}

#[test]
fn full_smoothing_is_maximum_entropy_transport() {
    let (spec, _) = imitation_spec(CostMode::Markov, 1.0);
    let out = run_imitation_scenario(&spec).unwrap();
    let problem = spec.problem(ImitationTarget::Uniform).unwrap();
    let maxent = solve_maxent(&problem).unwrap();
    assert!(tv(&out.plan("iot").unwrap().law, &maxent.path_law) < 1e-8);
}

#[test]
fn equal_risk_weights_are_maximum_entropy_transport() {
    let flat = RiskPriorSpec { default_weight: 1.0, affected_weight: 1.0, maritime_weight: 1.0, row_normalize: false };
    let (spec, _) = risk_spec(0, flat);
    let out = run_risk_scenario(&spec).unwrap();
    let maxent = solve_maxent(&spec.problem(ImitationTarget::Uniform).unwrap()).unwrap();
    assert!(tv(&out.plan("iot").unwrap().law, &maxent.path_law) < 1e-8);
}

#[test]
fn risk_averse_plan_wins_after_the_disaster() {
    for seed in 0..5 {
        let (spec, cut) = risk_spec(seed, RiskPriorSpec::default());
        let out = run_risk_scenario(&spec).unwrap();
        let table = out.disaster.as_ref().unwrap();
        let problem = spec.problem(ImitationTarget::Uniform).unwrap();
        let after = disaster_costs(&spec, &problem.space, spec.disaster.as_ref().unwrap()).unwrap();
        let realized = |name: &str| {
            let law = &out.plan(name).unwrap().law;
            objective_eval(law, &after, law, 1.0).cost
        };
        let (iot, ot) = (realized("iot"), realized("ot"));
        assert!(iot <= ot, "seed {seed}: {iot} > {ot}");
        assert!((table.after_iot.total_cost - iot).abs() < 1e-9 * iot);
        assert!((table.after_ot.total_cost - ot).abs() < 1e-9 * ot);
        let (d_iot, d_ot) = table.delta(cut);
        assert!((d_iot - d_ot).abs() < 1e-6, "seed {seed}: {d_iot} vs {d_ot}");
    }
}

#[test]
fn repricing_touches_only_listed_edges() {
    let (spec, _) = risk_spec(2, RiskPriorSpec::default());
    let problem = spec.problem(ImitationTarget::Uniform).unwrap();
    let disaster = spec.disaster.as_ref().unwrap();
    let after = disaster_costs(&spec, &problem.space, disaster).unwrap();
    let mut touched = 0;
    for (k, path) in problem.space.paths().iter().enumerate() {
        if path.windows(2).any(|w| disaster.edges.contains(&(w[0], w[1]))) {
            touched += 1;
            assert!(after[k] > problem.costs[k]);
        } else {
            assert_eq!(after[k], problem.costs[k]);
        }
    }
    assert!(touched > 0);
}

#[test]
fn zero_risk_weight_edges_carry_nothing() {
    let (spec, _) = risk_spec(1, RiskPriorSpec::default());
    let blocked: HashSet<(usize, usize)> = [(0, 2), (2, 0)].into_iter().collect();
    let weights = RiskPriorSpec { affected_weight: 0.0, ..RiskPriorSpec::default() };
    let target = risk_target(&spec.network, &blocked, &weights);
    let problem = spec.problem(ImitationTarget::Markov(target)).unwrap();
    let plan = solve_iot(&problem).unwrap();
    let mut blocked_paths = 0;
    for (path, &p) in problem.space.paths().iter().zip(&plan.path_law) {
        if path.windows(2).any(|w| blocked.contains(&(w[0], w[1]))) {
            blocked_paths += 1;
            assert_eq!(p, 0.0);
        }
    }
    assert!(blocked_paths > 0);
}

fn usage_rows(csv: &str) -> Vec<(String, f64)> {
    csv.lines().skip(1).map(|l| (l.to_string(), l.rsplit(',').next().unwrap().parse().unwrap())).collect()
}

#[test]
fn report_filters_only_the_usage_view() {
    let (spec, _) = risk_spec(3, RiskPriorSpec::default());
    let out = run_risk_scenario(&spec).unwrap();
    let all = render_report(&out, 0.0);
    let some = render_report(&out, 1e-4);
    for t in 0..3 {
        let name = format!("report_usage_t{t}.csv");
        let full = usage_rows(&all[&name]);
        let kept = usage_rows(&some[&name]);
        let positive: usize = out.plans.iter().map(|p| p.usage().iter().filter(|(k, m)| k.0 == t && **m > 0.0).count()).sum();
        assert_eq!(full.len(), positive);
        let expected: Vec<_> = full.iter().filter(|(_, m)| *m >= 1e-4).cloned().collect();
        assert_eq!(kept, expected);
        // Each plan moves all its mass at every step.
        for plan in &out.plans {
            let total: f64 = plan.usage().iter().filter(|(k, _)| k.0 == t).map(|(_, m)| m).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("usage_threshold")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&all["report_summary.txt"]), strip(&some["report_summary.txt"]));
    assert_eq!(all["report_disaster.csv"], some["report_disaster.csv"]);

    for plan in &out.plans {
        let direct = objective_eval(&plan.law, &plan.costs, &plan.law, 1.0).cost;
        assert!((plan.total_cost - direct).abs() < 1e-9 * direct);
        let per: f64 = plan.per_destination.iter().sum();
        assert!((per - plan.total_cost).abs() < 1e-9 * direct);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn risk_plans_meet_demand(seed in 0u64..1000) {
        let (spec, _) = risk_spec(seed, RiskPriorSpec::default());
        let out = run_risk_scenario(&spec).unwrap();
        for plan in &out.plans {
            let (a, b) = plan.space.endpoint_marginals(&plan.law);
            for i in 0..spec.nu0.len() {
                prop_assert!((a[i] - spec.nu0[i]).abs() < 1e-9);
                prop_assert!((b[i] - spec.nut[i]).abs() < 1e-9);
            }
        }
        prop_assert!(matches!(spec.cost_model(), CostModel::Markov(_)));
    }
}
