use std::path::Path;
use std::process::{Command, Output};

use cube_localize::laplace::tilt;
use cube_localize::measure::DiscreteMeasure;
use cube_localize::transport::w1_dual;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cube-localize");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CUBE_LOCALIZE_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_str(stdout(o).trim()).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn write_spec(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn certify_exit_codes_follow_the_verdict() {
    let ok = run(&["--seed", "1", "certify", "--family", "uniform", "--n", "3", "--condition", "semi-lc", "--threshold", "1"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));

    let bad = run(&["--seed", "1", "--json", "certify", "--family", "two-point", "--n", "3", "--condition", "semi-lc", "--threshold", "1"]);
    assert_eq!(bad.status.code(), Some(2));
    let doc = json(&bad);
    assert_eq!(doc["result"]["verdict"], "fail");
    assert!(doc["result"]["certified_value"].as_f64().unwrap() > 1.0);
    assert!(doc["result"]["witness"].is_array());

    let ray = run(&["--seed", "1", "certify", "--family", "slice", "--n", "4", "--k", "0", "--condition", "rayleigh"]);
    assert_eq!(ray.status.code(), Some(0), "{}", stderr(&ray));
}

#[test]
fn malformed_specs_exit_one_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write_spec(dir.path(), "missing.json", "{\"family\": \"slice\",\n \"n\": 4}\n");
    let o = run(&["--seed", "0", "certify", "--spec", &missing, "--condition", "rayleigh"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains('k'), "{}", stderr(&o));

    let syntax = write_spec(dir.path(), "syntax.json", "{\"family\": \"uniform\",\n \"n\": }\n");
    let o = run(&["--seed", "0", "certify", "--spec", &syntax, "--condition", "semi-lc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let typed = write_spec(dir.path(), "typed.json", "{\"family\": \"uniform\", \"n\": \"three\"}");
    let o = run(&["--seed", "0", "certify", "--spec", &typed, "--condition", "semi-lc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n"), "{}", stderr(&o));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["certify", "--family", "uniform", "--n", "3"]).status.code(), Some(1));
}

#[test]
fn w1_matches_the_dual_program() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "two_point3.json", "{\"family\": \"two_point\", \"n\": 3}");
    let o = run(&["--json", "w1", "--spec-a", &spec, "--tilt-b", "0.5,-0.2,0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json(&o);
    let nu = DiscreteMeasure::two_point(3).unwrap();
    let expected = w1_dual(&nu, &tilt(&nu, &[0.5, -0.2, 0.1]).unwrap()).unwrap();
    assert!((doc["result"]["w1"].as_f64().unwrap() - expected).abs() <= 1e-8);
    assert!((doc["result"]["w1_dual"].as_f64().unwrap() - expected).abs() <= 1e-8);
}

#[test]
fn w1_refuses_large_dimensions_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "u11.json", "{\"family\": \"uniform\", \"n\": 11}");
    let o = run(&["w1", "--spec-a", &spec]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hint"), "{}", stderr(&o));
}

#[test]
fn sample_reproduces_the_tilted_mean() {
    let o = run(&["--seed", "3", "--json", "sample", "--family", "uniform", "--n", "1", "--tilt", "1", "--paths", "20000", "--collapse-tol", "1e-4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = &json(&o)["result"];
    let mean = r["empirical_mean"][0].as_f64().unwrap();
    let exact = 1f64.tanh();
    assert!((r["exact_mean"][0].as_f64().unwrap() - exact).abs() <= 1e-15);
    let p = (1.0 + exact) / 2.0;
    let sd = 2.0 * (p * (1.0 - p) / 20000.0).sqrt();
    assert!((mean - exact).abs() <= 3.0 * sd + r["snap_bias_bound"].as_f64().unwrap(), "{mean}");
}

#[test]
fn canonical_json_is_byte_identical_across_reruns_and_thread_counts() {
    let args = ["--seed", "9", "--json", "audit", "trace-decay", "--family", "slice", "--n", "4", "--k", "0", "--paths", "200"];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut threaded = vec!["--threads", "2"];
    threaded.extend_from_slice(&args);
    assert_eq!(run(&threaded).stdout, a.stdout);
    assert!(!stdout(&a).contains("wall_clock"));
}

#[test]
fn seed_falls_back_to_the_environment_then_to_entropy() {
    let args = ["--json", "certify", "--family", "ising", "--n", "3", "--measure-seed", "2", "--condition", "semi-lc"];
    let flag = {
        let mut v = vec!["--seed", "42"];
        v.extend_from_slice(&args);
        run(&v)
    };
    let env = Command::new(BIN).args(args).env("CUBE_LOCALIZE_SEED", "42").output().unwrap();
    assert_eq!(flag.stdout, env.stdout);
    assert_eq!(json(&flag)["manifest"]["seed"], 42);

    let drawn = json(&run(&args));
    assert_eq!(drawn["manifest"]["seed_source"], "entropy");
    assert!(drawn["manifest"]["seed"].is_u64());
}

#[test]
fn simulate_writes_csv_with_manifest_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["--seed", "5", "--out", out.to_str().unwrap(), "simulate", "--family", "uniform", "--n", "2", "--paths", "2", "--t-max", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("trajectory_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,w_1,w_2,a_1,a_2,trace_cov"));
    for line in lines {
        assert_eq!(line.split(',').count(), 6);
        assert!(line.split(',').all(|f| f.parse::<f64>().is_ok()), "{line}");
    }
    assert!(out.join("trajectory_1.csv").exists());
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(out.join("trajectory_0.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 5);
    assert_eq!(sidecar["command"], "simulate");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
    assert!(report["manifest"]["wall_clock_seconds"].is_f64());
    assert_eq!(report["result"].as_array().unwrap().len(), 2);
}

#[test]
fn audits_report_violations_with_exit_two() {
    let ok = run(&["--seed", "0", "audit", "entropy-theorem", "--family", "slice", "--n", "6", "--k", "0"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("PASS"));
    let bad = run(&["--seed", "0", "audit", "entropy-theorem", "--family", "two-point", "--n", "4", "--beta", "1"]);
    assert_eq!(bad.status.code(), Some(2), "{}", stderr(&bad));
    assert!(stdout(&bad).contains("FAIL"));
    let control = run(&["--seed", "0", "audit", "hadamard-control", "--ns", "4,8,16"]);
    assert_eq!(control.status.code(), Some(0), "{}", stderr(&control));
}
