//! Command-line smoke tests: exit codes, output files, and agreement with the library.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use iot_core::fixtures;
use iot_core::formats::parse_plan;
use iot_core::imitation::{solve_iot, ImitationTarget};

fn iot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iot")).args(args).current_dir(dir).output().expect("spawn iot")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn generate_tiny(dir: &Path) {
    let out = iot(dir, &["scenario", "generate", "--kind", "tiny"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn solve_args<'a>(out: &'a str) -> Vec<&'a str> {
    vec![
        "solve", "--network", "network.json", "--nu0", "nu0.json", "--nuT", "nuT.json", "--alpha", "1",
        "--horizon", "2", "--out", out,
    ]
}

fn leftovers(dir: &Path) -> Vec<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".partial") || n == "plan.out")
        .collect()
}

#[test]
fn solve_writes_a_plan_matching_the_library() {
    let dir = tempfile::tempdir().unwrap();
    generate_tiny(dir.path());
    let out = iot(dir.path(), &solve_args("plan.out"));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let parsed = parse_plan(&fs::read_to_string(dir.path().join("plan.out")).unwrap()).unwrap();
    let fixture = fixtures::tiny();
    let plan = solve_iot(&fixture.problem(1.0, ImitationTarget::Uniform).unwrap()).unwrap();
    let mut listed = 0.0;
    for (path, p) in parsed.paths.iter().zip(&parsed.probabilities) {
        let k = plan.space.index_of(path).expect("listed path is admissible");
        assert!((p - plan.path_law[k]).abs() < 1e-9, "path {path:?}: {p} vs {}", plan.path_law[k]);
        listed += p;
    }
    assert!((listed - 1.0).abs() < 1e-9);
    assert_eq!(parsed.alpha, Some(1.0));
}

#[test]
fn infeasible_marginals_exit_one_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let prior = r#"{"kind":"markov","mu0":[0.5,0.5],"m":[[1,0],[0,1]],"T":2}"#;
    fs::write(dir.path().join("prior.json"), prior).unwrap();
    fs::write(dir.path().join("a.json"), "[1,0]").unwrap();
    fs::write(dir.path().join("b.json"), "[0,1]").unwrap();
    let out = iot(dir.path(), &["bridge", "--prior", "prior.json", "--nu0", "a.json", "--nuT", "b.json"]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("infeasible") || stderr.contains("empty path space"), "{stderr}");
}

#[test]
fn oracle_check_passes_on_tiny() {
    let dir = tempfile::tempdir().unwrap();
    let out = iot(dir.path(), &["oracle", "check", "--fixture", "tiny"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let checks: Vec<&str> = stdout.lines().filter(|l| l.contains(",gap=")).collect();
    assert_eq!(checks.len(), 5, "{stdout}");
    assert!(checks.iter().all(|l| l.starts_with("PASS,")), "{stdout}");
}

#[test]
fn unknown_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = iot(dir.path(), &["solve", "--no-such-flag"]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&iot(dir.path(), &["--help"])), 0);
}

#[test]
fn exhausted_iterations_exit_two_and_leave_no_file() {
    let dir = tempfile::tempdir().unwrap();
    generate_tiny(dir.path());
    let mut args = vec!["--max-iter", "2"];
    args.extend(solve_args("plan.out"));
    let out = iot(dir.path(), &args);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did not converge"));
    assert!(leftovers(dir.path()).is_empty(), "{:?}", leftovers(dir.path()));
}

#[test]
fn bad_input_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    generate_tiny(dir.path());
    fs::write(dir.path().join("nuT.json"), "[0.5, 0.5]").unwrap();
    let out = iot(dir.path(), &solve_args("plan.out"));
    assert_eq!(code(&out), 1);
    assert!(leftovers(dir.path()).is_empty(), "{:?}", leftovers(dir.path()));
}
