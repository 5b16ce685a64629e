use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_constrained-law");

const BENCH: &str = r#"
version = 1
seed = 11

[initial]
kind = "uniform_box"
lower = [-0.5]
upper = [0.5]

[coefficients.drift]
kind = "constant"
value = [1.0]

[coefficients.diffusion]
kind = "scalar"
s = 0.2

[constraint]
kind = "convex_support"
region = { kind = "ball", center = [0.0], radius = 1.0 }

[scheme]
n_particles = 32
n_steps = 40
horizon = 1.0
epsilon = 0.1

[sweep]
eps = [0.1, 0.05, 0.025]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_one_row_per_step_and_particle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BENCH);
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_rows(&dir.path().join("diagnostics.csv")).len(), 41);
    assert_eq!(data_rows(&dir.path().join("trajectory.csv")).len(), 41 * 32);
    let text = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(text.contains("# seed: 11"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BENCH);
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path()), "--seed", "99"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(text.contains("# seed: 99"));
}

#[test]
fn nonpositive_epsilon_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for bad in ["epsilon = 0.0", "epsilon = -0.1"] {
        let cfg = write(dir.path(), "bad.toml", &BENCH.replace("epsilon = 0.1", bad));
        let out = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("scheme.epsilon"));
        assert!(!dir.path().join("diagnostics.csv").exists());
    }
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &BENCH.replace("horizon = 1.0", "horizon = 1.0\nhorizn = 2.0"));
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
}

#[test]
fn missing_config_exits_2() {
    let out = run(&["simulate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BENCH);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(run(&["simulate", "--config", s(&cfg), "--out", s(d)]).status.success());
    }
    for f in ["diagnostics.csv", "trajectory.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn sweep_writes_a_row_per_eps_and_a_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BENCH);
    let out = run(&["sweep", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "slope");
    assert!(rows[3][1].parse::<f64>().unwrap().is_finite());
    for i in 0..3 {
        assert!(dir.path().join(format!("diagnostics_eps{i}.csv")).exists());
    }
    let out = run(&["sweep", "--config", s(&cfg), "--out", s(dir.path()), "--eps", "0.1,0.2,0.05"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_coefficients_inside_k_give_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let text = BENCH.replace("value = [1.0]", "value = [0.0]").replace("s = 0.2", "s = 0.0");
    let cfg = write(dir.path(), "zero.toml", &text);
    let out = run(&["sweep", "--config", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for row in &data_rows(&dir.path().join("sweep.csv"))[..3] {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn transport_of_identical_clouds_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "x,y\n0.5,1\n-2,3\n4,0.25\n");
    let out = run(&["transport", "--input", s(&a), "--target", s(&a), "--out", s(dir.path())]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("w2_squared 0\n"), "{stdout}");
    let b = write(dir.path(), "b.csv", "x\n0\n1\n");
    let out = run(&["transport", "--input", s(&a), "--target", s(&b)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn projecting_a_feasible_cloud_returns_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BENCH);
    let input_text = "x\n0.25\n-0.75\n0.5\n";
    let input = write(dir.path(), "in.csv", input_text);
    let out = run(&["project", "--config", s(&cfg), "--input", s(&input), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("projected.csv"));
    let xs: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(xs, vec![0.25, -0.75, 0.5]);
    // inputs are never rewritten
    assert_eq!(std::fs::read_to_string(&input).unwrap(), input_text);
    assert_eq!(std::fs::read_to_string(&cfg).unwrap(), BENCH);
}

#[test]
fn projecting_outside_moves_to_the_wall() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BENCH);
    let input = write(dir.path(), "in.csv", "x\n3\n-0.5\n");
    let out = run(&["project", "--config", s(&cfg), "--input", s(&input), "--out", s(dir.path())]);
    assert!(out.status.success());
    let rows = data_rows(&dir.path().join("projected.csv"));
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), -0.5);
    assert!(String::from_utf8_lossy(&out.stdout).contains("distance_sq 2\n"));
}

#[test]
fn check_monotone_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check", "monotone", "--instances", "40", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("check_monotone.json")).unwrap()).unwrap();
    let reports = json["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    assert!(reports.iter().all(|r| r["passed"] == true));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}
