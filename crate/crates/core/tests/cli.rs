use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pls(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pls-bench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr_line(o: &Output) -> String {
    let text = String::from_utf8_lossy(&o.stderr).into_owned();
    assert_eq!(text.trim_end().lines().count(), 1, "expected one line, got {text:?}");
    text.trim_end().to_owned()
}

const GRID: &str = "synthetic_n_total = 20
labeled_fraction = 0.25
test_fraction = 0.25
criteria = [\"probability-score\", \"supervised\"]
seeds = [1, 2, 3]
output_dir = \"out\"
";

#[test]
fn bench_grid_arithmetic_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), GRID).unwrap();
    let o = pls(&["bench", "--config", "c.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs: Vec<_> = fs::read_dir(dir.path().join("out/runs")).unwrap().collect();
    assert_eq!(runs.len(), 6);
    let csv = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("criterion,iteration,mean_accuracy,stderr"));
    // pool of 10 -> iterations 0..=10 for each criterion
    assert_eq!(lines.count(), 2 * 11);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 22);

    let again = pls(&["bench", "--config", "c.toml"], dir.path());
    assert!(String::from_utf8_lossy(&again.stdout).contains("0 computed, 6 reused"));
    assert_eq!(fs::read_to_string(dir.path().join("out/summary.csv")).unwrap(), csv);

    let report = pls(&["report", "--config", "c.toml"], dir.path());
    assert!(report.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("out/report.csv")).unwrap(), csv);
}

#[test]
fn baseline_is_a_flat_series() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), GRID).unwrap();
    assert!(pls(&["bench", "--config", "c.toml"], dir.path()).status.success());
    let csv = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let base: Vec<&str> = csv
        .lines()
        .filter(|l| l.starts_with("supervised,"))
        .map(|l| l.splitn(3, ',').nth(2).unwrap())
        .collect();
    assert_eq!(base.len(), 11);
    assert!(base.iter().all(|v| *v == base[0]));
}

#[test]
fn run_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), GRID).unwrap();
    let args = ["run", "--config", "c.toml", "--criterion", "gamma-maximin", "--alpha", "0.3", "--seed", "9"];
    let first = pls(&args, dir.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let path = dir.path().join(String::from_utf8_lossy(&first.stdout).trim());
    assert!(path.ends_with("out/runs/gamma-maximin-alpha0.3_seed9.json"));
    let a = fs::read(&path).unwrap();
    fs::remove_file(&path).unwrap();
    assert!(pls(&args, dir.path()).status.success());
    assert_eq!(a, fs::read(&path).unwrap());
}

#[test]
fn report_without_runs_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = pls(&["report", "--out", "nothing"], dir.path());
    assert!(!o.status.success());
    assert_eq!(stderr_line(&o), "error: no_runs: no runs found");
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "alphas = [1.5]\n").unwrap();
    let o = pls(&["bench", "--config", "bad.toml"], dir.path());
    assert!(!o.status.success());
    let line = stderr_line(&o);
    assert!(line.starts_with("error: invalid_config: "), "{line}");
    assert!(line.contains("`alphas`"), "{line}");

    fs::write(dir.path().join("typo.toml"), "sigma_scal = 1.0\n").unwrap();
    let line = stderr_line(&pls(&["run", "--config", "typo.toml"], dir.path()));
    assert!(line.contains("`sigma_scal`"), "{line}");

    let line = stderr_line(&pls(&["run", "--config", "missing.toml"], dir.path()));
    assert!(line.starts_with("error: io: "), "{line}");

    let o = pls(&["frobnicate"], dir.path());
    assert!(!o.status.success());
    assert!(stderr_line(&o).starts_with("error: usage: "));
}

#[test]
fn mixed_fingerprints_are_rejected_by_report() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), GRID).unwrap();
    assert!(pls(&["run", "--config", "c.toml", "--criterion", "ppp", "--seed", "1"], dir.path()).status.success());
    fs::write(dir.path().join("d.toml"), format!("{GRID}sigma_scale = 1.0\n")).unwrap();
    let o = pls(&["run", "--config", "d.toml", "--criterion", "ppp", "--seed", "2"], dir.path());
    assert!(o.status.success());
    let o = pls(&["report", "--config", "c.toml"], dir.path());
    assert!(stderr_line(&o).starts_with("error: mixed_fingerprints: "));
}

#[test]
fn simulate_writes_a_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = pls(&["simulate", "--seed", "4", "--out", "data/sim.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = pls_core::data::load_csv(&dir.path().join("data/sim.csv"), "class", "1").unwrap();
    assert_eq!(d.n_rows(), 80);
    assert_eq!(d.n_features(), 2);

    fs::write(
        dir.path().join("csv.toml"),
        "dataset = \"csv\"\ncsv_path = \"data/sim.csv\"\ncriteria = [\"ppp\"]\nseeds = [1]\nmax_iterations = 3\n",
    )
    .unwrap();
    let o = pls(&["bench", "--config", "csv.toml"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}
