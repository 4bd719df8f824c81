use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn qtorus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtorus")).args(args).output().expect("spawn qtorus")
}

fn repo_config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

const SMALL: &str = r#"
n = 64
seed = 9
trials = 200
n_steps = 3
bins = 20

[state]
kind = "coherent"
x0 = 0.1
p0 = 0.1
beta = 0.5
sigma_prime = 0.1

[kraus]
sigma = 0.1

[evolution]
kind = "cat"
"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(2).map(String::from).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn selfcheck_passes_and_detects_corruption() {
    let ok = qtorus(&["selfcheck"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 8);

    let bad = qtorus(&["selfcheck", "--corrupt-cat-phase"]);
    assert_eq!(bad.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL exact egorov")), "{stdout}");
}

#[test]
fn odd_grid_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "odd.toml", &SMALL.replace("n = 64", "n = 65"));
    let out = qtorus(&["simulate", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("even"));
}

#[test]
fn unknown_key_reports_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "typo.toml", &SMALL.replace("bins = 20", "bins = 20\nbinz = 3"));
    let out = qtorus(&["simulate", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("binz") && err.contains("line"), "{err}");
}

#[test]
fn simulate_writes_outputs_with_provenance() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let out_dir = dir.path().join("run");
    let out = qtorus(&["simulate", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["trajectories.csv", "marginals.csv", "summary.txt", "marginals.gp"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let text = fs::read_to_string(out_dir.join("marginals.csv")).unwrap();
    let mut lines = text.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# qtorus ") && prov.contains("seed=9") && prov.contains("\"trials\":200"), "{prov}");
    assert_eq!(lines.next(), Some("step,bin,bin_center,density,classical_density,tv,trials"));
    assert_eq!(lines.count(), 4 * 20);
    assert_eq!(data_lines(&out_dir.join("trajectories.csv")).len(), 200 * 4);
}

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(qtorus(&["simulate", s(&cfg), "--out", s(&a)]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_qtorus")).env("QTORUS_THREADS", "3").args(["simulate", s(&cfg), "--out", s(&b)]).output().unwrap();
    assert!(out.status.success());
    for name in ["trajectories.csv", "marginals.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn single_trial_gives_one_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "one.toml", &SMALL.replace("trials = 200", "trials = 1"));
    assert!(qtorus(&["simulate", s(&cfg), "--out", s(dir.path())]).status.success());
    let rows = data_lines(&dir.path().join("trajectories.csv"));
    assert_eq!(rows.len(), 3 + 1);
    assert!(rows.iter().all(|r| r.starts_with("0,")));
}

#[test]
fn sweep_rows_survive_appended_n() {
    let dir = TempDir::new().unwrap();
    let short = write_config(&dir, "short.toml", &SMALL.replace("n = 64", "n = 64\nn_list = [40, 80]"));
    let long = write_config(&dir, "long.toml", &SMALL.replace("n = 64", "n = 64\nn_list = [40, 80, 120]"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(qtorus(&["sweep", s(&short), "--out", s(&a)]).status.success());
    assert!(qtorus(&["sweep", s(&long), "--out", s(&b)]).status.success());
    let rows_a = data_lines(&a.join("convergence.csv"));
    let rows_b = data_lines(&b.join("convergence.csv"));
    assert_eq!(rows_a.len(), 2 * 4);
    assert_eq!(rows_b.len(), 3 * 4);
    assert_eq!(rows_a[..], rows_b[..rows_a.len()]);
    assert!(b.join("convergence.gp").exists());
}

#[test]
fn sweep_with_single_n_has_one_row_per_step() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "single.toml", &SMALL.replace("n = 64", "n = 64\nn_list = [64]"));
    assert!(qtorus(&["sweep", s(&cfg), "--out", s(dir.path())]).status.success());
    let rows = data_lines(&dir.path().join("convergence.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().enumerate().all(|(step, r)| r.starts_with(&format!("64,{step},"))));
}

#[test]
fn lyapunov_reports_each_matrix() {
    let dir = TempDir::new().unwrap();
    let text = SMALL.replace("bins = 20", "bins = 20\nmatrices = [[2, 1, 1, 1], [4, 1, 15, 4]]");
    let cfg = write_config(&dir, "lyap.toml", &text);
    let out = qtorus(&["lyapunov", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("gamma=0.9624") && stdout.contains("gamma=2.0634"), "{stdout}");
    assert_eq!(data_lines(&dir.path().join("lyapunov.csv")).len(), 2 * 4);
}

#[test]
fn egorov_check_commands() {
    assert_eq!(qtorus(&["egorov-check", "--n", "32", "--flow", "m3"]).status.code(), Some(0));
    assert_eq!(qtorus(&["egorov-check", "--n", "31"]).status.code(), Some(1));
    assert_eq!(qtorus(&["egorov-check", "--n", "16", "--flow", "hamiltonian"]).status.code(), Some(0));
}

#[test]
fn oracle_compare_exit_codes() {
    let dir = TempDir::new().unwrap();
    let small = SMALL.replace("n = 64", "n = 8").replace("n_steps = 3", "n_steps = 1").replace("trials = 200", "trials = 20000");
    let cfg = write_config(&dir, "oracle.toml", &small);
    let out = qtorus(&["oracle-compare", s(&cfg), "--q", "64", "--bins", "8", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_lines(&dir.path().join("density.csv"));
    assert_eq!(rows.len(), 64 * 64);

    let big = write_config(&dir, "big.toml", &small.replace("n = 8", "n = 200"));
    assert_eq!(qtorus(&["oracle-compare", s(&big), "--out", s(dir.path())]).status.code(), Some(3));
    let strict = qtorus(&["oracle-compare", s(&cfg), "--q", "64", "--bins", "8", "--max-tv", "0", "--out", s(dir.path())]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    for name in ["fig1.toml", "fig3.toml", "fig4.toml", "fig5.toml", "fig6.toml", "fig7.toml"] {
        let text = fs::read_to_string(repo_config(name)).unwrap();
        qtorus::config::RunConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn fig1_config_gives_spaghetti_csv() {
    let dir = TempDir::new().unwrap();
    let out = qtorus(&["simulate", s(&repo_config("fig1.toml")), "--out", s(dir.path())]);
    assert!(out.status.success());
    let rows = data_lines(&dir.path().join("trajectories.csv"));
    assert_eq!(rows.len(), 200 * 101);
    let trials: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(trials.len(), 200);
}
