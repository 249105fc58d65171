use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use iot_core::approx::fit_markov;
use iot_core::bridge::{sinkhorn_markov, sinkhorn_path, Coupling, PathPrior, SinkhornOptions};
use iot_core::fixtures::{self, Fixture};
use iot_core::formats::{
    atomic_write, format_plan, parse_plan, read_distribution, LoadedPrior, PathMassFile, PriorFile,
    TargetMatrixFile,
};
use iot_core::imitation::{solve_iot, ImitationTarget, IotProblem, Route};
use iot_core::network::{load_network, CostModel, NetworkFile, PathSpace};
use iot_core::oracle::{dense_ipf, lp_ot, objective_eval};
use iot_core::robust::worst_case_certificate;
use iot_core::scenario::{
    emit_report, load_scenario, run_scenario, CostMode, DisasterFile, RiskPriorSpec, ScenarioFile, ScenarioKindFile,
};
use iot_core::spectral::RbPrior;
use iot_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "iot", version, about = "Imitation-regularized optimal transport on networks")]
struct Cli {
    /// Seed for fixture generation and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Sinkhorn tolerance on the log potentials.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 100_000)]
    max_iter: usize,
    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the Ruelle–Bowens walk of a network's edge costs.
    Rbwalk {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Solve a Schrödinger bridge against a prior file.
    Bridge {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        nu0: PathBuf,
        #[arg(long = "nuT")]
        nut: PathBuf,
        /// Also print the law of every path.
        #[arg(long)]
        emit_paths: bool,
    },
    /// Solve an imitation-regularized transport problem.
    Solve {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        nu0: PathBuf,
        #[arg(long = "nuT")]
        nut: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Markov)]
        cost_mode: ModeArg,
        /// Imitation target as a path distribution.
        #[arg(long, conflicts_with = "rq_file")]
        q_file: Option<PathBuf>,
        /// Imitation target as a transition weight matrix.
        #[arg(long)]
        rq_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        force_path: bool,
        /// Plan file name, inside the output directory.
        #[arg(long, default_value = "plan.out")]
        out: PathBuf,
    },
    /// Fit a Markov prior to a path prior by log-space least squares.
    Approx {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long, default_value = "fit.out")]
        out: PathBuf,
    },
    /// Worst-case cost certificate of a plan over the entropic cost set.
    RobustCert {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        q_file: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        epsilon: f64,
    },
    /// Logistics scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Cross-check the solvers against the brute-force references.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
}

#[derive(Subcommand, Debug)]
enum ScenarioAction {
    /// Run a scenario file and write the report files.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Usage rows below this mass are hidden from the usage tables.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
    /// Write a seeded fixture (network, marginals, and scenario files).
    Generate {
        #[arg(long, value_enum)]
        kind: FixtureArg,
    },
}

#[derive(Subcommand, Debug)]
enum OracleAction {
    Check {
        /// A fixture name (tiny, random, synthetic, risk) or a fixture file.
        #[arg(long)]
        fixture: String,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Markov,
    Ruled,
}

impl From<ModeArg> for CostMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Markov => CostMode::Markov,
            ModeArg::Ruled => CostMode::Ruled,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FixtureArg {
    Tiny,
    Random,
    Imitation,
    Risk,
}

/// A problem instance on disk: network plus marginals.
#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    network: String,
    nu0: Vec<f64>,
    #[serde(rename = "nuT")]
    nut: Vec<f64>,
    #[serde(rename = "T")]
    horizon: usize,
    alpha: f64,
    #[serde(default)]
    cost_mode: CostMode,
}

fn cost_model(path: &Path, mode: CostMode) -> Result<(iot_core::network::Network, CostModel)> {
    let (network, rules) = load_network(path)?;
    let model = match mode {
        CostMode::Markov => CostModel::Markov(iot_core::network::EdgeCostTable::from_network(&network, &rules)),
        CostMode::Ruled => CostModel::Ruled(rules),
    };
    Ok((network, model))
}

fn options(cli: &Cli) -> Result<SinkhornOptions> {
    if !(cli.tol > 0.0) {
        return Err(Error::Domain(format!("--tol must be positive, got {}", cli.tol)));
    }
    Ok(SinkhornOptions::new(cli.tol, cli.max_iter))
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

fn label(path: &[usize]) -> String {
    path.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("-")
}

fn write_out(cli: &Cli, name: &Path, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cli.out_dir)?;
    let path = cli.out_dir.join(name);
    atomic_write(&path, contents)?;
    Ok(path)
}

fn rbwalk(network: &Path, alpha: f64) -> Result<String> {
    let (_, model) = cost_model(network, CostMode::Markov)?;
    let rb = RbPrior::build(&model, alpha)?;
    let mut out = String::new();
    let _ = writeln!(out, "lambda_B,{:e}", rb.lambda);
    let _ = writeln!(out, "v_RB,{}", join(rb.v_rb.iter().copied()));
    out.push_str("R\n");
    for row in rb.r.row_iter() {
        let _ = writeln!(out, "{}", join(row.iter().copied()));
    }
    Ok(out)
}

fn bridge(cli: &Cli, prior: &Path, nu0: &Path, nut: &Path, emit_paths: bool) -> Result<String> {
    let opts = options(cli)?;
    let nu0 = read_distribution(nu0)?;
    let nut = read_distribution(nut)?;
    let mut out = String::new();
    match PriorFile::load(prior)?.build()? {
        LoadedPrior::Markov { prior, horizon } => {
            let sol = sinkhorn_markov(&prior, &nu0, &nut, horizon, &opts)?;
            let _ = writeln!(out, "iterations,{}\nresidual,{:e}", sol.iterations, sol.residual);
            for (t, phi) in sol.log_phi.iter().enumerate() {
                let _ = writeln!(out, "phi({t}),{}", join(phi.iter().map(|l| l.exp())));
            }
            for (t, phihat) in sol.log_phihat.iter().enumerate() {
                let _ = writeln!(out, "phihat({t}),{}", join(phihat.iter().map(|l| l.exp())));
            }
            for (t, pi) in sol.transitions().unwrap_or_default().iter().enumerate() {
                let _ = writeln!(out, "Pi({t})");
                for row in pi.row_iter() {
                    let _ = writeln!(out, "{}", join(row.iter().copied()));
                }
            }
            if emit_paths {
                let starts: Vec<usize> = (0..nu0.len()).filter(|&i| nu0[i] > 0.0).collect();
                let ends: Vec<usize> = (0..nut.len()).filter(|&i| nut[i] > 0.0).collect();
                let space = PathSpace::enumerate(prior.n(), horizon, &starts, &ends, |i, j| prior.step(0)[(i, j)] > 0.0 || prior.time_varying.is_some())?;
                out.push_str("path,probability\n");
                for (path, p) in space.paths().iter().zip(sol.law_on(&space)?) {
                    if p > 0.0 {
                        let _ = writeln!(out, "{},{p:e}", label(path));
                    }
                }
            }
        }
        LoadedPrior::Path(prior) => {
            let sol = sinkhorn_path(&prior, &nu0, &nut, &opts)?;
            let _ = writeln!(out, "iterations,{}\nresidual,{:e}", sol.iterations, sol.residual);
            let _ = writeln!(out, "phi(0),{}", join(sol.phi0()));
            let _ = writeln!(out, "phi(T),{}", join(sol.phi_end()));
            let _ = writeln!(out, "phihat(0),{}", join(sol.phihat0()));
            let _ = writeln!(out, "phihat(T),{}", join(sol.phihat_end()));
            if let Coupling::Endpoint { pi, law } = &sol.coupling {
                out.push_str("Pi(x0,xT)\n");
                for row in pi.row_iter() {
                    let _ = writeln!(out, "{}", join(row.iter().copied()));
                }
                if emit_paths {
                    out.push_str("path,probability\n");
                    for (path, p) in prior.space().paths().iter().zip(law) {
                        if *p > 0.0 {
                            let _ = writeln!(out, "{},{p:e}", label(path));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    cli: &Cli,
    network: &Path,
    nu0: &Path,
    nut: &Path,
    alpha: f64,
    horizon: usize,
    mode: CostMode,
    q_file: Option<&Path>,
    rq_file: Option<&Path>,
    beta: f64,
    force_path: bool,
    out: &Path,
) -> Result<String> {
    let (net, model) = cost_model(network, mode)?;
    let nu0 = read_distribution(nu0)?;
    let nut = read_distribution(nut)?;
    let base = IotProblem::new(net, model, horizon, nu0, nut, alpha, ImitationTarget::Uniform)?;
    let target = match (q_file, rq_file) {
        (Some(q), _) => ImitationTarget::Path { q_star: PathMassFile::load(q)?.to_vector(&base.space)?, beta },
        (None, Some(rq)) => ImitationTarget::Markov(TargetMatrixFile::load(rq)?.build()?),
        (None, None) => ImitationTarget::Uniform,
    };
    let problem = IotProblem { target, force_path, options: options(cli)?, ..base };
    problem.log_q()?;
    let plan = solve_iot(&problem)?;
    let path = write_out(cli, out, &format_plan(&plan, &problem.costs, 1e-12))?;
    let route = match plan.route {
        Route::Transitions => "transitions",
        Route::Marginal => "marginal",
    };
    Ok(format!(
        "wrote {}\nroute,{route}\nexpected_cost,{:e}\nkl_to_q,{:e}\ntotal,{:e}\n",
        path.display(),
        plan.objective.expected_cost,
        plan.objective.kl_to_q,
        plan.objective.total
    ))
}

fn approx(cli: &Cli, prior: &Path, out: &Path) -> Result<String> {
    let prior = match PriorFile::load(prior)?.build()? {
        LoadedPrior::Path(p) => p,
        LoadedPrior::Markov { prior, horizon } => {
            let n = prior.n();
            let starts: Vec<usize> = (0..n).filter(|&i| prior.mu0[i] > 0.0).collect();
            let all: Vec<usize> = (0..n).collect();
            let space = PathSpace::enumerate(n, horizon, &starts, &all, |i, j| prior.m[(i, j)] > 0.0)?;
            PathPrior::from_markov(&prior, Arc::new(space))?
        }
    };
    let fit = fit_markov(&prior)?;
    let mut text = String::new();
    let _ = writeln!(text, "[fit]\nhorizon,{}\nresidual,{:e}", fit.horizon, fit.residual);
    text.push_str("[m0]\nnode,log_weight\n");
    for (i, m) in fit.m0_tilde.iter().enumerate() {
        if m.is_finite() {
            let _ = writeln!(text, "{},{m:e}", i + 1);
        }
    }
    text.push_str("[m]\nfrom,to,log_weight\n");
    for i in 0..fit.m_tilde.nrows() {
        for j in 0..fit.m_tilde.ncols() {
            let m = fit.m_tilde[(i, j)];
            if m.is_finite() {
                let _ = writeln!(text, "{},{},{m:e}", i + 1, j + 1);
            }
        }
    }
    let path = write_out(cli, out, &text)?;
    Ok(format!("wrote {}\nresidual,{:e}\n", path.display(), fit.residual))
}

fn robust_cert(plan: &Path, q_file: &Path, alpha: Option<f64>, epsilon: f64) -> Result<String> {
    let plan = parse_plan(&std::fs::read_to_string(plan)?)?;
    let alpha = alpha
        .or(plan.alpha)
        .ok_or_else(|| Error::Validation("no --alpha given and the plan file records none".into()))?;
    let q_table: HashMap<Vec<usize>, f64> = PathMassFile::load(q_file)?
        .paths
        .into_iter()
        .map(|e| (e.path.iter().map(|i| i.saturating_sub(1)).collect(), e.p))
        .collect();
    let q: Vec<f64> = plan.paths.iter().map(|p| q_table.get(p).copied().unwrap_or(0.0)).collect();
    let cert = worst_case_certificate(&plan.probabilities, &plan.costs, &q, alpha, epsilon)?;
    Ok(format!(
        "epsilon,{:e}\nalpha,{:e}\nnominal_cost,{:e}\nkl_term,{:e}\nworst_case_cost,{:e}\n",
        cert.epsilon, cert.alpha, cert.nominal_cost, cert.kl_term, cert.worst_case_cost
    ))
}

fn named_fixture(name: &str, seed: u64) -> Option<(Fixture, f64)> {
    match name {
        "tiny" => Some((fixtures::tiny(), 1.0)),
        "random" => Some((fixtures::random_markov(seed, 5, 3), 2.0)),
        "synthetic" => Some((fixtures::synthetic30(seed), 50.0)),
        "risk" => Some((fixtures::risk_fixture(seed).fixture, 35.0)),
        _ => None,
    }
}

fn load_fixture(spec: &str, seed: u64) -> Result<(iot_core::network::Network, CostModel, usize, Vec<f64>, Vec<f64>, f64)> {
    if let Some((f, alpha)) = named_fixture(spec, seed) {
        return Ok((f.network, f.cost, f.horizon, f.nu0, f.nut, alpha));
    }
    let path = Path::new(spec);
    let file: FixtureFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let (network, model) = cost_model(&path.parent().unwrap_or(Path::new(".")).join(&file.network), file.cost_mode)?;
    Ok((network, model, file.horizon, file.nu0, file.nut, file.alpha))
}

struct Check {
    name: &'static str,
    gap: f64,
    tol: f64,
}

fn oracle_check(cli: &Cli, fixture: &str, alpha: Option<f64>) -> Result<(String, bool)> {
    let (network, model, horizon, nu0, nut, default_alpha) = load_fixture(fixture, cli.seed)?;
    let alpha = alpha.unwrap_or(default_alpha);
    let problem = IotProblem::new(network, model, horizon, nu0, nut, alpha, ImitationTarget::Uniform)?
        .with_options(options(cli)?);
    let mut checks = Vec::new();

    let plan = solve_iot(&problem)?;
    let prior = problem.path_prior()?;
    let ipf = dense_ipf(&problem.space, prior.log_weights(), &problem.nu0, &problem.nut, 1e-12, 1_000_000)?;
    let tv = 0.5 * plan.path_law.iter().zip(&ipf.probabilities).map(|(a, b)| (a - b).abs()).sum::<f64>();
    checks.push(Check { name: "bridge_vs_dense_ipf_tv", gap: tv, tol: 1e-8 });

    let (a, b) = plan.marginals();
    let gap = a.iter().zip(&problem.nu0).chain(b.iter().zip(&problem.nut)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    checks.push(Check { name: "marginal_gap", gap, tol: 10.0 * cli.tol.max(1e-12) });

    let q = problem.q()?;
    let eval = objective_eval(&plan.path_law, &problem.costs, &q, alpha);
    checks.push(Check { name: "objective_eval", gap: (eval.total - plan.objective.total).abs(), tol: 1e-9 * eval.total.abs().max(1.0) });

    let lp = lp_ot(&problem.space, &problem.costs, &problem.nu0, &problem.nut)?;
    checks.push(Check {
        name: "lp_lower_bound",
        gap: (lp.objective - plan.objective.expected_cost).max(0.0),
        tol: 1e-9,
    });

    if plan.route == Route::Transitions {
        let path_plan = solve_iot(&problem.clone().forcing_path(true))?;
        let tv = 0.5 * plan.path_law.iter().zip(&path_plan.path_law).map(|(a, b)| (a - b).abs()).sum::<f64>();
        checks.push(Check { name: "markov_vs_path_route_tv", gap: tv, tol: 1e-8 });
    }

    let mut out = String::new();
    let _ = writeln!(out, "fixture,{fixture}\npaths,{}\nalpha,{alpha:e}", problem.space.len());
    let mut all = true;
    for c in &checks {
        let pass = c.gap <= c.tol;
        all &= pass;
        let _ = writeln!(out, "{},{},gap={:e},tol={:e}", if pass { "PASS" } else { "FAIL" }, c.name, c.gap, c.tol);
    }
    Ok((out, all))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn node_masses(v: &[f64], scale: f64) -> std::collections::BTreeMap<String, f64> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, &x)| ((i + 1).to_string(), x * scale))
        .collect()
}

fn generate(cli: &Cli, kind: FixtureArg) -> Result<String> {
    let seed = cli.seed;
    let (fixture, alpha, mode) = match kind {
        FixtureArg::Tiny => (fixtures::tiny(), 1.0, CostMode::Markov),
        FixtureArg::Random => (fixtures::random_markov(seed, 5, 3), 2.0, CostMode::Markov),
        FixtureArg::Imitation => (fixtures::synthetic30(seed), 50.0, CostMode::Ruled),
        FixtureArg::Risk => (fixtures::risk_fixture(seed).fixture, 35.0, CostMode::Markov),
    };
    let mut written = Vec::new();
    let net = NetworkFile::from_network(&fixture.network, fixture.rules);
    written.push(write_out(cli, Path::new("network.json"), &to_json(&net)?)?);
    written.push(write_out(cli, Path::new("nu0.json"), &to_json(&fixture.nu0)?)?);
    written.push(write_out(cli, Path::new("nuT.json"), &to_json(&fixture.nut)?)?);
    let ff = FixtureFile {
        network: "network.json".into(),
        nu0: fixture.nu0.clone(),
        nut: fixture.nut.clone(),
        horizon: fixture.horizon,
        alpha,
        cost_mode: mode,
    };
    written.push(write_out(cli, Path::new("fixture.json"), &to_json(&ff)?)?);

    let scenario = match kind {
        FixtureArg::Imitation => {
            let problem = fixture.problem(alpha, ImitationTarget::Uniform)?;
            let q = fixtures::greedy_q_star(&fixture.network, &problem.space, &problem.costs, &fixture.nu0, &fixture.nut);
            let q_file = PathMassFile::from_vector(&problem.space, &q);
            written.push(write_out(cli, Path::new("q_star.json"), &to_json(&q_file)?)?);
            Some(ScenarioKindFile::Imitation { q_star: "q_star.json".into(), beta: 0.1 })
        }
        FixtureArg::Risk => Some(ScenarioKindFile::Risk { affected: None, weights: RiskPriorSpec::default() }),
        _ => None,
    };
    if let Some(scenario) = scenario {
        let disaster = match kind {
            FixtureArg::Risk => {
                let layout = fixtures::risk_fixture(seed);
                let mut edges: Vec<[usize; 2]> =
                    layout.affected.iter().filter(|(a, b)| a < b).map(|&(a, b)| [a + 1, b + 1]).collect();
                edges.sort_unstable();
                Some(DisasterFile { edges, multiplier: 10.0 })
            }
            _ => None,
        };
        let q_total = if matches!(kind, FixtureArg::Imitation) { fixtures::Q_TOTAL } else { 1.0 };
        let file = ScenarioFile {
            network: "network.json".into(),
            supply: node_masses(&fixture.nu0, q_total),
            demand: node_masses(&fixture.nut, q_total),
            horizon: fixture.horizon,
            alpha,
            cost_mode: mode,
            scenario,
            disaster,
        };
        written.push(write_out(cli, Path::new("scenario.json"), &to_json(&file)?)?);
    }
    let mut out = String::new();
    for p in written {
        let _ = writeln!(out, "wrote {}", p.display());
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<(String, bool)> {
    let ok = |s: String| Ok((s, true));
    match &cli.command {
        Command::Rbwalk { network, alpha } => ok(rbwalk(network, *alpha)?),
        Command::Bridge { prior, nu0, nut, emit_paths } => ok(bridge(cli, prior, nu0, nut, *emit_paths)?),
        Command::Solve { network, nu0, nut, alpha, horizon, cost_mode, q_file, rq_file, beta, force_path, out } => ok(solve(
            cli,
            network,
            nu0,
            nut,
            *alpha,
            *horizon,
            (*cost_mode).into(),
            q_file.as_deref(),
            rq_file.as_deref(),
            *beta,
            *force_path,
            out,
        )?),
        Command::Approx { prior, out } => ok(approx(cli, prior, out)?),
        Command::RobustCert { plan, q_file, alpha, epsilon } => ok(robust_cert(plan, q_file, *alpha, *epsilon)?),
        Command::Scenario { action: ScenarioAction::Run { spec, threshold } } => {
            let scenario = load_scenario(spec)?;
            let outcome = run_scenario(&scenario)?;
            let mut out = String::new();
            for p in emit_report(&outcome, *threshold, &cli.out_dir)? {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            for plan in &outcome.plans {
                let _ = writeln!(out, "{},total_cost,{:e}", plan.name, plan.total_cost);
            }
            ok(out)
        }
        Command::Scenario { action: ScenarioAction::Generate { kind } } => ok(generate(cli, *kind)?),
        Command::Oracle { action: OracleAction::Check { fixture, alpha } } => oracle_check(cli, fixture, *alpha),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok((out, passed)) => {
            print!("{out}");
            if passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: one or more oracle checks failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_convergence() { 2 } else { 1 })
        }
    }
}
