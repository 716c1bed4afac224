use std::path::{Path, PathBuf};
use std::process::Command;

use sgc_sim::cli::dispatch_to;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["sgc"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = dispatch_to(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn value_after(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.contains(key)).unwrap_or_else(|| panic!("{key} missing in\n{text}"));
    let rest = &line[line.find(key).unwrap() + key.len()..];
    rest.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn p_zero_run_matches_exact_gd() {
    let cfg = configs().join("paper_fig2.cfg");
    let cfg = cfg.to_str().unwrap();
    let common = ["--config", cfg, "--set", "iterations=200", "--seed", "11"];
    let mut a = common.to_vec();
    a.extend(["run", "--scheme", "sgc", "--p", "0"]);
    let mut b = common.to_vec();
    b.extend(["run", "--scheme", "exact_gd", "--p", "0"]);
    let (ca, oa, ea) = run(&a);
    let (cb, ob, eb) = run(&b);
    assert_eq!((ca, cb), (0, 0), "{ea}{eb}");
    let (fa, fb) = (value_after(&oa, "final_error = "), value_after(&ob, "final_error = "));
    assert!(fa > 0.0);
    assert!((fa - fb).abs() <= 1e-9, "{fa} vs {fb}");
}

#[test]
fn bounds_on_consistent_system_is_the_contraction_term() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("consistent_system.cfg");
    let (code, out, err) = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "bounds",
    ]);
    assert_eq!(code, 0, "{err}");
    let eps = value_after(&out, "epsilon=");
    let b0 = value_after(&out, "beta0_err_sq=");
    let thm3 = value_after(&out, "thm3_bound = ");
    assert!((thm3 - eps * eps * b0).abs() <= 1e-12 * thm3, "{thm3} vs {}", eps * eps * b0);
    assert!(out.contains("empirical_sgc_mse = n/a"));
}

#[test]
fn sweep_then_bounds_reports_empirical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("consistent_system.cfg");
    let base = [
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "repetitions=20",
    ];
    let mut sweep = base.to_vec();
    sweep.push("sweep");
    let (code, out, err) = run(&sweep);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("repetitions = 20"), "override not echoed:\n{out}");
    assert!(dir.path().join("traces.csv").exists());
    let mut bounds = base.to_vec();
    bounds.push("bounds");
    let (code, out, _) = run(&bounds);
    assert_eq!(code, 0);
    let emp = value_after(&out, "empirical_sgc_mse = ");
    assert!(emp.is_finite() && emp > 0.0);
}

#[test]
fn inspect_assignment_prints_degrees_and_overlaps() {
    let cfg = configs().join("paper_fig2.cfg");
    let (code, out, err) = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "data.m=200",
        "inspect-assignment",
        "--scheme",
        "sgc",
    ]);
    assert_eq!(code, 0, "{err}");
    let avg = value_after(&out, "avg_degree=");
    assert!((1.9..=2.1).contains(&avg), "{avg}");
    assert!(out.contains("overlap mean="));
    let degrees = out.lines().find(|l| l.trim_start().starts_with("degrees ")).unwrap();
    assert_eq!(degrees.split_whitespace().count(), 201);
}

#[test]
fn usage_errors_exit_1() {
    let cfg = configs().join("consistent_system.cfg");
    let cfg = cfg.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["--bogus", "sweep"],
        vec!["sweep"],
        vec![],
        vec!["--config", "/nonexistent/x.cfg", "sweep"],
        vec!["--config", cfg, "--set", "n=0", "sweep"],
        vec!["--config", cfg, "--set", "nonsense", "sweep"],
        vec!["--config", cfg, "--set", "typo_key=3", "sweep"],
        vec!["--config", cfg, "run", "--scheme", "fastest"],
        vec!["--config", cfg, "run", "--p", "1.5"],
        vec!["--config", cfg, "--threads", "x", "sweep"],
    ];
    for args in cases {
        let (code, _, err) = run(&args);
        assert_eq!(code, 1, "{args:?}: {err}");
        assert!(!err.trim().is_empty(), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("csv.cfg");
    std::fs::write(
        &cfg,
        "n = 2\nd = 1.0\niterations = 5\np_values = [0.1]\nschemes = [\"sgc\"]\n\
         [data]\nsource = \"csv\"\npath = \"missing.csv\"\n",
    )
    .unwrap();
    let (code, _, err) = run(&["--config", cfg.to_str().unwrap(), "sweep"]);
    assert_eq!(code, 2);
    assert!(err.contains("missing.csv"), "{err}");

    std::fs::write(dir.path().join("bad.csv"), "1,2\n3,x\n").unwrap();
    let (code, _, err) = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "data.path=bad.csv",
        "sweep",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn csv_data_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("x1,x2,y\n");
    for i in 0..30 {
        let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos());
        text += &format!("{a},{b},{}\n", 2.0 * a - b);
    }
    std::fs::write(dir.path().join("d.csv"), text).unwrap();
    let cfg = dir.path().join("e.cfg");
    std::fs::write(
        &cfg,
        "n = 5\nd = 2.0\niterations = 300\np_values = [0.0]\nschemes = [\"sgc\"]\n\
         [data]\nsource = \"csv\"\npath = \"d.csv\"\nhas_header = true\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sgc"))
        .args(["--config", cfg.to_str().unwrap(), "run"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(value_after(&stdout, "final_error = ") < 1e-6, "{stdout}");

    let out = Command::new(env!("CARGO_BIN_EXE_sgc")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_sgc")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
