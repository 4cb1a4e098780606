use std::path::Path;
use std::process::{Command, Output};

fn sharpch(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sharpch"))
        .args(args)
        .current_dir(dir)
        .env_remove("SHARPCH_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SIMULATION: &str = r#"
seed = 3
snapshot_every = 10
[grid]
nx = 32
ny = 32
[solver]
epsilon = 0.05
dt = 1e-4
final_time = 0.002
[noise]
enabled = true
amplitude = 3.0
[geometry]
kind = "circle"
radius = 0.25
"#;

#[test]
fn theory_prints_three_dimensional_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.toml"), "[theory]\np = 3.0\nd = 3\n").unwrap();
    let o = sharpch(&["theory", "--config", "t.toml", "--out", "out"], dir.path());
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("gamma_min = 6\n") && s.contains("sigma_min = 11\n"), "{s}");
    assert!(dir.path().join("out/theory.txt").exists());
}

#[test]
fn reruns_produce_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SIMULATION).unwrap();
    for out in ["a", "b"] {
        let o = sharpch(&["simulate", "--config", "run.toml", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["trajectory.csv", "residual.csv", "interface.csv", "summary.txt", "snapshots/u_00000020.shfl"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let o = sharpch(&["simulate", "--config", "run.toml", "--out", "c", "--seed", "4"], dir.path());
    assert!(o.status.success());
    let a = std::fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c/trajectory.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn ensemble_output_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("members = 3\n{}\n[analysis]\nepsilons = [0.05]\nsigmas = [1.0, 2.0]\n", SIMULATION.replace("snapshot_every = 10\n", ""));
    std::fs::write(dir.path().join("e.toml"), config).unwrap();
    let one = sharpch(&["ensemble", "--config", "e.toml", "--out", "one", "--workers", "1"], dir.path());
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    let three = Command::new(env!("CARGO_BIN_EXE_sharpch"))
        .args(["ensemble", "--config", "e.toml", "--out", "three"])
        .current_dir(dir.path())
        .env("SHARPCH_WORKERS", "3")
        .output()
        .unwrap();
    assert!(three.status.success());
    let a = std::fs::read(dir.path().join("one/scaling.csv")).unwrap();
    let b = std::fs::read(dir.path().join("three/scaling.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn failures_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| sharpch(args, dir.path()).status.code();
    assert_eq!(code(&["bogus"]), Some(2));
    assert_eq!(code(&["theory", "--workers", "0"]), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "[solver]\nepsilonn = 0.1\nepsilon = -1.0\n").unwrap();
    let o = sharpch(&["simulate", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("solver.epsilon"), "{err}");
    assert!(err.contains("line 3"), "{err}");
    assert_eq!(code(&["simulate", "--config", "missing.toml"]), Some(4));
    std::fs::create_dir(dir.path().join("snaps")).unwrap();
    std::fs::write(dir.path().join("snaps/x.shfl"), b"SHFL\x09\0\0\0").unwrap();
    std::fs::write(dir.path().join("an.toml"), "[analysis]\ninput = \"snaps\"\n").unwrap();
    assert_eq!(code(&["analyze", "--config", "an.toml"]), Some(6));
    std::fs::write(
        dir.path().join("blow.toml"),
        "[grid]\nnx = 16\nny = 16\n[solver]\ndt = 10.0\nfinal_time = 1000.0\nstabilization = 0.0\n\
         [initial]\nkind = \"random\"\namplitude = 5.0\n",
    )
    .unwrap();
    assert_eq!(code(&["simulate", "--config", "blow.toml", "--out", "blow"]), Some(5));
}

#[test]
fn constant_state_is_preserved() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[grid]\nnx = 16\nny = 16\n[solver]\ndt = 1e-4\nfinal_time = 0.001\n[initial]\nvalue = 1.0\n",
    )
    .unwrap();
    let o = sharpch(&["simulate", "--config", "c.toml", "--out", "o"], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("o/trajectory.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let cols: Vec<&str> = last.split(',').collect();
    assert_eq!(cols[0], "10");
    assert_eq!(cols[4].parse::<f64>().unwrap(), 1.0);
    assert_eq!(cols[5].parse::<f64>().unwrap(), 1.0);
}
