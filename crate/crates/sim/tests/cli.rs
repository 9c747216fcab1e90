use std::path::Path;
use std::process::{Command, Output};

fn dpmnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpmnl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.cfg");
    let out = dir.join("out");
    std::fs::write(&path, format!("{body}\noutput_dir = {}\n", out.display())).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "T = 100\nreplicates = 1\nN = 10\nK = 3");
    let out = dpmnl(&["run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["raw.csv", "summary.csv", "ledger.csv", "config.snapshot", "audit.log"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let raw = std::fs::read_to_string(dir.path().join("out/raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 101);
}

#[test]
fn set_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "T = 100\nreplicates = 1");
    let out = dpmnl(&["validate", &cfg, "--set", "K=4", "--set", "T0=9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("K = 4\n") && text.contains("T0 = 9\n"), "{text}");
}

#[test]
fn validate_rejects_late_exploration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "T = 100\nT0 = 100");
    let out = dpmnl(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("T0"));
}

#[test]
fn unknown_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horizon = 100");
    let out = dpmnl(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
}

#[test]
fn sweep_runs_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "T = 60\nreplicates = 1\nN = 8\nK = 3\nwrite_raw = false\nsweep_rho_total = 0.1,0.5,1\nsweep_mle_fraction = 0.1,0.5,0.9",
    );
    let out = dpmnl(&["sweep", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let arms: std::collections::BTreeSet<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(arms.len(), 9);
    assert!(!dir.path().join("out/raw.csv").exists());
}

#[test]
fn fit_ground_truth_prints_a_config_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("log.csv");
    std::fs::write(&csv, "t,item_id,f1,f2,revenue,chosen\n1,a,0.5,0.1,1,1\n1,b,-0.2,0.3,1,0\n2,a,0.1,0.9,1,0\n").unwrap();
    let out = dpmnl(&["fit-ground-truth", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("theta_star = "));
    assert_eq!(text.trim().split(',').count(), 2);
}
