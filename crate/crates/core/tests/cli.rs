use std::path::Path;
use std::process::{Command, Output};

use rcbf::log::load_log;
use rcbf::scenario::Scenario;

fn rcbf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcbf"))
        .args(args)
        .current_dir(dir)
        .env("RCBF_WORKERS", "1")
        .output()
        .unwrap()
}

fn small_scenario(dir: &Path, duration: f64) -> String {
    let mut s = Scenario::paper_nominal();
    s.duration = duration;
    s.gamma_grid = [30, 30];
    let path = dir.join("small.toml");
    std::fs::write(&path, s.to_toml_string().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_field_writes_file_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcbf(&["solve-field", "--scenario", "paper", "--out", "f.psf"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("residual"));
    let field = rcbf::field::GridField::load(dir.path().join("f.psf")).unwrap();
    assert_eq!(field.spacing, 0.05);
    let manifest = std::fs::read_to_string(dir.path().join("f.psf.manifest.toml")).unwrap();
    assert!(manifest.contains("solve-field"));
}

#[test]
fn degenerate_resolution_exits_with_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rcbf(
        &["solve-field", "--scenario", "paper", "--out", "f.psf", "--resolution", "2.0"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rcbf(&["run", "--bogus"], dir.path()).status.code(), Some(1));
    let o = rcbf(&["run", "--scenario", "paper", "--variant", "nope", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(rcbf(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn run_vanilla_logs_the_deadlock() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), 20.0);
    let o = rcbf(
        &["run", "--scenario", &scenario, "--variant", "vanilla_h0", "--out", "v.csv", "--no-timing"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("deadlocked true"));
    let log = load_log(dir.path().join("v.csv")).unwrap();
    assert!(log.records.iter().any(|r| r.deadlocked));
    assert!(log.records.iter().all(|r| r.wall_clock_us == 0.0));
    let m = rcbf(&["metrics", "--log", "v.csv", "--scenario", &scenario], dir.path());
    assert!(m.status.success());
    let text = stdout(&m);
    assert!(text.starts_with("method,J_opt,J_t"));
    assert!(text.contains("\nv,--,"));
}

#[test]
fn adapt_demo_prints_the_landscape() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), 1.0);
    let o = rcbf(
        &["adapt-demo", "--scenario", &scenario, "--state", "0.5,-0.3,0.1", "--t", "1.0"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("gamma1,gamma2,sigma_hat,objective,admissible"));
    assert_eq!(lines.count(), 900);
    assert!(String::from_utf8_lossy(&o.stderr).contains("argmin gamma1 0.0001 gamma2 0.0001"));
}

#[test]
fn compare_writes_one_log_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = small_scenario(dir.path(), 1.0);
    let o = rcbf(&["compare", "--scenario", &scenario, "--out-dir", "cmp"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for v in rcbf::sim::ALL_NAMES {
        assert!(dir.path().join("cmp").join(format!("{v}.csv")).exists(), "{v}");
    }
    assert!(dir.path().join("cmp/metrics.csv").exists());
    assert!(dir.path().join("cmp/manifest.toml").exists());
    assert!(!dir.path().join("cmp/timing.csv").exists());
}
