//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use iot_core::approx::{fit_markov, markov_plan_from_fit};
use iot_core::bridge::{bridge_kl, marginalize_prior, sinkhorn_path, PathPrior};
use iot_core::fixtures::{self, Fixture};
use iot_core::imitation::{solve_iot, solve_maxent, ImitationTarget, IotProblem, MarkovTarget};
use iot_core::oracle::{dense_ipf, lp_ot, objective_eval, random_feasible_plans};
use iot_core::robust::{realized_cost, sample_members, worst_case_certificate};
use iot_core::scenario::{run_risk_scenario, CostMode, Disaster, RiskPriorSpec, ScenarioKind, ScenarioSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KAPPA: f64 = 1e-10;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn err(e: iot_core::Error) -> String {
    e.to_string()
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn random_target(f: &Fixture, rng: &mut ChaCha8Rng) -> MarkovTarget {
    let n = f.network.node_count();
    let r_q = DMatrix::from_fn(n, n, |i, j| if f.network.has_edge(i, j) { rng.gen_range(0.1..3.0) } else { 0.0 });
    MarkovTarget::new(DVector::from_element(n, 1.0 / n as f64), r_q).unwrap()
}

fn affine_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..10u64 {
        let n = 3 + (k as usize % 4);
        let horizon = 1 + (k as usize % 3);
        let f = fixtures::random_markov(1000 + k, n, horizon);
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let alpha = rng.gen_range(0.3..10.0);
        let problem = f.problem(alpha, ImitationTarget::Markov(random_target(&f, &mut rng))).map_err(err)?;
        let prior = problem.path_prior().map_err(err)?;
        let q = problem.q().map_err(err)?;
        let allowed = vec![true; problem.space.len()];
        let plans = random_feasible_plans(&problem.space, &allowed, &f.nu0, &f.nut, 50, 2.0, &mut rng).map_err(err)?;
        let gaps: Vec<f64> = plans
            .iter()
            .map(|p| alpha * bridge_kl(p, &prior).unwrap().value - objective_eval(p, &problem.costs, &q, alpha).total)
            .collect();
        worst = worst.max(std_dev(&gaps));
    }
    check(worst < 1e-8, || format!("max std dev {worst:e}"))?;
    Ok(format!("max std dev {worst:.2e} over 10 fixtures x 50 plans"))
}

fn tiny_target_problem() -> IotProblem {
    let r_q = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, 1.5, 1.0, 3.0, 0.7, 1.0, 2.0]);
    let target = MarkovTarget::new(DVector::from_vec(vec![0.2, 0.5, 0.3]), r_q).unwrap();
    fixtures::tiny().problem(1.0, ImitationTarget::Markov(target)).unwrap()
}

fn certificate() -> Outcome {
    let problem = tiny_target_problem();
    let plan = solve_iot(&problem).map_err(err)?;
    let q = problem.q().map_err(err)?;
    let eps = 0.2;
    let cert = worst_case_certificate(&plan.path_law, &problem.costs, &q, problem.alpha, eps).map_err(err)?;
    let eval = objective_eval(&plan.path_law, &problem.costs, &q, problem.alpha);
    let closed = eval.cost + problem.alpha * eval.kl + eps;
    check((cert.worst_case_cost - closed).abs() < 1e-9, || format!("{} vs {closed}", cert.worst_case_cost))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let members = sample_members(&problem.costs, &q, problem.alpha, eps, 1000, 1.0, &mut rng);
    let best = members.iter().map(|m| realized_cost(&plan.path_law, m)).fold(f64::NEG_INFINITY, f64::max);
    check(best <= cert.worst_case_cost + 1e-9, || format!("member reaches {best} > {}", cert.worst_case_cost))?;
    Ok(format!("certificate {:.6}, best of 1000 members {:.6}", cert.worst_case_cost, best))
}

fn sinkhorn_vs_ipf() -> Outcome {
    let mut list: Vec<(Fixture, f64)> = vec![(fixtures::tiny(), 1.0), (fixtures::risk_fixture(0).fixture, 35.0)];
    for seed in 0..5 {
        list.push((fixtures::random_markov(seed, 6, 3), 2.0));
    }
    list.push((fixtures::synthetic30(3), 50.0));
    let mut worst_tv: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut largest = 0;
    for (f, alpha) in &list {
        let problem = f.problem(*alpha, ImitationTarget::Uniform).map_err(err)?;
        if problem.space.len() > 10_000 {
            continue;
        }
        largest = largest.max(problem.space.len());
        let prior = problem.path_prior().map_err(err)?;
        let ipf = dense_ipf(&problem.space, prior.log_weights(), &f.nu0, &f.nut, 1e-13, 1_000_000).map_err(err)?;
        for force in [false, true] {
            let plan = solve_iot(&problem.clone().forcing_path(force)).map_err(err)?;
            worst_tv = worst_tv.max(tv(&plan.path_law, &ipf.probabilities));
            let (a, b) = plan.marginals();
            for i in 0..a.len() {
                worst_gap = worst_gap.max((a[i] - f.nu0[i]).abs()).max((b[i] - f.nut[i]).abs());
            }
        }
    }
    check(worst_tv < 1e-8, || format!("tv {worst_tv:e}"))?;
    check(worst_gap < 10.0 * KAPPA, || format!("marginal gap {worst_gap:e}"))?;
    Ok(format!("{} fixtures (largest N_X {largest}), max tv {worst_tv:.2e}, max marginal gap {worst_gap:.2e}", list.len()))
}

fn maxent_reduction() -> Outcome {
    let mut list = vec![fixtures::tiny(), fixtures::risk_fixture(1).fixture];
    for seed in 0..3 {
        list.push(fixtures::random_markov(seed + 20, 5, 3));
    }
    let mut worst: f64 = 0.0;
    for f in &list {
        let problem = f.problem(2.0, ImitationTarget::Uniform).map_err(err)?;
        let maxent = solve_maxent(&problem).map_err(err)?;
        // Both routes: transition matrices, and path weights through the endpoint marginal.
        for force in [false, true] {
            let plan = solve_iot(&problem.clone().forcing_path(force)).map_err(err)?;
            worst = worst.max(tv(&plan.path_law, &maxent.path_law));
        }
    }
    check(worst < 1e-8, || format!("tv {worst:e}"))?;
    Ok(format!("5 fixtures, both routes, max tv {worst:.2e}"))
}

fn small_alpha_limit() -> Outcome {
    let problem = fixtures::tiny().problem(1.0, ImitationTarget::Uniform).map_err(err)?;
    let lp = lp_ot(&problem.space, &problem.costs, &problem.nu0, &problem.nut).map_err(err)?;
    let mut costs = Vec::new();
    for alpha in [0.01, 0.1, 1.0, 10.0, 100.0] {
        costs.push(solve_iot(&problem.clone().with_alpha(alpha).map_err(err)?).map_err(err)?.objective.expected_cost);
    }
    for w in costs.windows(2) {
        check(w[1] >= w[0] - 1e-9, || format!("cost fell from {} to {}", w[0], w[1]))?;
    }
    let scale = problem.costs.iter().copied().fold(0.0, f64::max);
    let plan = solve_iot(&problem.clone().with_alpha(1e-3 * scale).map_err(err)?).map_err(err)?;
    let rel = (plan.objective.expected_cost - lp.objective) / lp.objective;
    check(rel < 0.01 && rel > -1e-9, || format!("relative gap {rel:e}"))?;
    Ok(format!("LP {:.6}, cost at alpha={:.4}: {:.6} (gap {rel:.2e}); grid monotone", lp.objective, 1e-3 * scale, plan.objective.expected_cost))
}

fn markov_approximation() -> Outcome {
    let mut worst_res: f64 = 0.0;
    let mut worst_tv: f64 = 0.0;
    for seed in 0..4 {
        let f = fixtures::random_markov(seed + 40, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = f.problem(1.5, ImitationTarget::Markov(random_target(&f, &mut rng))).map_err(err)?;
        let exact = solve_iot(&problem).map_err(err)?;
        let mut fit = fit_markov(&problem.path_prior().map_err(err)?).map_err(err)?;
        let plan = markov_plan_from_fit(&mut fit, &problem, Some(&exact)).map_err(err)?;
        worst_res = worst_res.max(fit.residual);
        worst_tv = worst_tv.max(tv(&plan.path_law, &exact.path_law));
    }
    check(worst_res < 1e-10, || format!("residual {worst_res:e}"))?;
    check(worst_tv < 1e-8, || format!("tv {worst_tv:e}"))?;

    let f = fixtures::synthetic30(3);
    let problem = f.problem(50.0, ImitationTarget::Uniform).map_err(err)?;
    let exact = solve_iot(&problem).map_err(err)?;
    let mut fit = fit_markov(&problem.path_prior().map_err(err)?).map_err(err)?;
    let plan = markov_plan_from_fit(&mut fit, &problem, Some(&exact)).map_err(err)?;
    let q = problem.q().map_err(err)?;
    let a = objective_eval(&plan.path_law, &problem.costs, &q, 50.0).total;
    let b = objective_eval(&exact.path_law, &problem.costs, &q, 50.0).total;
    let oracle = ((a - b) / b).abs();
    let reported = fit.relative_objective_error.unwrap_or(f64::NAN);
    check((reported - oracle).abs() < 1e-10, || format!("reported {reported:e}, oracle {oracle:e}"))?;
    Ok(format!(
        "exact priors: residual {worst_res:.1e}, tv {worst_tv:.1e}; synthetic ruled fit: residual {:.3e}, relative objective error {:.2}%",
        fit.residual,
        100.0 * reported
    ))
}

fn best_time(mut f: impl FnMut(), runs: usize) -> Duration {
    (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

fn performance() -> Outcome {
    let f = fixtures::synthetic30(3);
    let problem = f.problem(50.0, ImitationTarget::Uniform).map_err(err)?;
    let prior: PathPrior = problem.path_prior().map_err(err)?;
    let n_x = problem.space.len();
    let sinkhorn = best_time(
        || {
            let _ = marginalize_prior(&prior);
            sinkhorn_path(&prior, &f.nu0, &f.nut, &problem.options).unwrap();
        },
        5,
    );
    let lp = best_time(|| drop(lp_ot(&problem.space, &problem.costs, &f.nu0, &f.nut).unwrap()), 3);
    let ratio = lp.as_secs_f64() / sinkhorn.as_secs_f64();
    check(ratio >= 10.0, || format!("ratio {ratio:.1}"))?;
    Ok(format!("N_X {n_x}: marginalize+sinkhorn {:.2} ms, dense LP {:.2} ms, ratio {ratio:.0}x", 1e3 * sinkhorn.as_secs_f64(), 1e3 * lp.as_secs_f64()))
}

fn scenario_direction() -> Outcome {
    let mut lines = Vec::new();
    for seed in 0..3 {
        let layout = fixtures::risk_fixture(seed);
        let edges = layout.affected.iter().copied().collect();
        let f = &layout.fixture;
        let spec = ScenarioSpec {
            network: f.network.clone(),
            rules: f.rules,
            cost_mode: CostMode::Markov,
            q_total: 1.0,
            nu0: f.nu0.clone(),
            nut: f.nut.clone(),
            horizon: f.horizon,
            alpha: 35.0,
            kind: ScenarioKind::Risk { affected: layout.affected.iter().copied().collect(), weights: RiskPriorSpec::default() },
            disaster: Some(Disaster { edges, multiplier: 10.0 }),
        };
        let out = run_risk_scenario(&spec).map_err(err)?;
        let t = out.disaster.as_ref().ok_or("no disaster table")?;
        let (iot, ot) = (t.after_iot.total_cost, t.after_ot.total_cost);
        check(iot <= ot, || format!("seed {seed}: iot {iot} > ot {ot}"))?;
        let (d_iot, d_ot) = t.delta(layout.cut_node);
        check((d_iot - d_ot).abs() < 1e-6, || format!("seed {seed}: cut-node deltas {d_iot} vs {d_ot}"))?;
        lines.push(format!("seed {seed}: after {iot:.1} vs {ot:.1}, cut delta diff {:.1e}", (d_iot - d_ot).abs()));
    }
    Ok(lines.join("; "))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

const PRIOR: &str = r#"{"kind":"markov","mu0":[0.3,0.3,0.4],"m":[[1,0.5,0.2],[0.3,1,0.4],[0.2,0.6,1]],"T":2}"#;

fn cli_session(dir: &Path) -> Result<Vec<u8>, String> {
    std::fs::write(dir.join("prior.json"), PRIOR).unwrap();
    let q: Vec<String> = (1..=3)
        .flat_map(|a| (1..=3).flat_map(move |b| (1..=3).map(move |c| format!(r#"{{"path":[{a},{b},{c}],"p":{}}}"#, 1.0 / 27.0))))
        .collect();
    std::fs::write(dir.join("q.json"), format!(r#"{{"paths":[{}]}}"#, q.join(","))).unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["--seed", "5", "--out-dir", ".", "scenario", "generate", "--kind", "tiny"],
        vec!["--seed", "5", "--out-dir", "risk", "scenario", "generate", "--kind", "risk"],
        vec!["--seed", "5", "--out-dir", "imitation", "scenario", "generate", "--kind", "imitation"],
        vec!["--seed", "5", "--out-dir", "random", "scenario", "generate", "--kind", "random"],
        vec!["rbwalk", "--network", "network.json", "--alpha", "1"],
        vec!["bridge", "--prior", "prior.json", "--nu0", "nu0.json", "--nuT", "nuT.json", "--emit-paths"],
        vec!["solve", "--network", "network.json", "--nu0", "nu0.json", "--nuT", "nuT.json", "--alpha", "1", "--horizon", "2"],
        vec!["approx", "--prior", "prior.json"],
        vec!["robust-cert", "--plan", "plan.out", "--q-file", "q.json", "--epsilon", "0.1"],
        vec!["--out-dir", "risk/out", "scenario", "run", "--spec", "risk/scenario.json"],
        vec!["--out-dir", "imitation/out", "scenario", "run", "--spec", "imitation/scenario.json"],
        vec!["--seed", "5", "oracle", "check", "--fixture", "tiny"],
        vec!["oracle", "check", "--fixture", "random/fixture.json"],
    ];
    let mut transcript = Vec::new();
    for args in runs {
        let out = Command::new(env!("CARGO_BIN_EXE_iot")).args(&args).current_dir(dir).output().unwrap();
        if !out.status.success() {
            return Err(format!("`iot {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
        }
        transcript.extend(out.stdout);
    }
    Ok(transcript)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out_a = cli_session(a.path())?;
    let out_b = cli_session(b.path())?;
    check(out_a == out_b, || "standard output differs between runs".into())?;
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    check(sa.keys().eq(sb.keys()), || "runs wrote different file sets".into())?;
    for (name, bytes) in &sa {
        check(&sb[name] == bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("13 commands, {} files byte-identical across two runs", sa.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, f64); 9] = [
        ("affine equivalence of the imitation objective", affine_identity, 5.0),
        ("worst-case certificate", certificate, 10.0),
        ("sinkhorn agrees with dense IPF", sinkhorn_vs_ipf, 30.0),
        ("uniform target is maximum-entropy transport", maxent_reduction, f64::INFINITY),
        ("small-alpha limit and alpha monotonicity", small_alpha_limit, f64::INFINITY),
        ("markov approximation", markov_approximation, f64::INFINITY),
        ("marginalized sinkhorn vs dense LP speed", performance, 120.0),
        ("disaster scenario direction", scenario_direction, f64::INFINITY),
        ("CLI determinism", determinism, f64::INFINITY),
    ];
    let mut failed = 0;
    for (k, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let result = match result {
            Ok(detail) if secs > *limit => Err(format!("{detail}; took {secs:.1} s, limit {limit} s")),
            other => other,
        };
        match result {
            Ok(detail) => println!("criterion {} PASS [{name}] {detail} ({secs:.2} s)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL [{name}] {detail} ({secs:.2} s)", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
