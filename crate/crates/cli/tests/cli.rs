use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdlrt::lrt::{run_test, run_test_regimes, BlockPartition, Regime, TestInput, TestReport};
use hdlrt::rng::stream;
use hdlrt::{GroupedSample, Matrix, RegressionData};

fn lrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrt"))
        .args(args)
        .env("LRT_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_matrix(path: &Path, m: &Matrix, header: bool) {
    let mut s = String::new();
    if header {
        let names: Vec<String> = (0..m.cols()).map(|j| format!("x{j}")).collect();
        writeln!(s, "{}", names.join(",")).unwrap();
    }
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        writeln!(s, "{}", cells.join(",")).unwrap();
    }
    std::fs::write(path, s).unwrap();
}

fn write_grouped(path: &Path, g: &GroupedSample) {
    let mut s = String::from("group");
    for j in 0..g.dim() {
        write!(s, ",v{j}").unwrap();
    }
    s.push('\n');
    for (k, m) in g.groups().iter().enumerate() {
        for r in m.row_iter() {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "g{k},{}", cells.join(",")).unwrap();
        }
    }
    std::fs::write(path, s).unwrap();
}

fn grouped(sizes: &[usize], p: usize, seed: u64) -> GroupedSample {
    let mut rng = stream(seed, 0);
    GroupedSample::new(
        sizes.iter().map(|&n| Matrix::standard_normal(n, p, &mut rng)).collect(),
        None,
    )
    .unwrap()
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn independence_report_matches_library_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let x = Matrix::standard_normal(60, 5, &mut stream(1, 0));
    let path = tmp(&dir, "x.csv");
    write_matrix(&path, &x, true);
    let o = lrt(&["test", "independence", "--data", path.to_str().unwrap(), "--blocks", "2,3", "--alpha", "0.05", "--regime", "growing-q"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for key in ["statistic", "center", "scale", "z", "p_value", "reject", "regime", "diagnostics"] {
        assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
    }
    let parsed: TestReport = serde_json::from_str(&text).unwrap();
    let input = TestInput::Independence {
        observations: x,
        blocks: BlockPartition::new(vec![2, 3]).unwrap(),
    };
    let direct = run_test(&input, Regime::GrowingQ, 0.05).unwrap();
    assert_eq!(parsed, direct);
    // printed and re-parsed once more
    let again: TestReport = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(again, parsed);
}

#[test]
fn null_data_mostly_not_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "x.csv");
    let mut rejections = 0;
    for seed in 0..20 {
        write_matrix(&path, &Matrix::standard_normal(80, 6, &mut stream(seed, 3)), false);
        let o = lrt(&["test", "independence", "--data", path.to_str().unwrap(), "--blocks", "2,2,2"]);
        assert_eq!(code(&o), 0);
        let r: TestReport = serde_json::from_slice(&o.stdout).unwrap();
        rejections += usize::from(r.reject);
    }
    assert!(rejections <= 5, "{rejections}");
}

#[test]
fn block_sizes_must_match_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "x.csv");
    write_matrix(&path, &Matrix::standard_normal(20, 4, &mut stream(2, 0)), false);
    let o = lrt(&["test", "independence", "--data", path.to_str().unwrap(), "--blocks", "2,3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn singular_covariance_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "x.csv");
    let y = Matrix::standard_normal(20, 3, &mut stream(3, 0));
    let x = Matrix::from_fn(20, 4, |i, j| y.get(i, j.min(2)));
    write_matrix(&path, &x, false);
    let o = lrt(&["test", "independence", "--data", path.to_str().unwrap(), "--blocks", "2,2"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn equal_dist_both_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "g.csv");
    let g = grouped(&[20, 25, 30], 4, 4);
    write_grouped(&path, &g);
    let o = lrt(&["test", "equal-dist", "--data", path.to_str().unwrap(), "--alpha", "0.05", "--regime", "both"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reports: Vec<TestReport> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(reports.len(), 2);
    let direct = run_test_regimes(&TestInput::EqualDist(g), &Regime::ALL, 0.05).unwrap();
    for (a, b) in reports.iter().zip(&direct) {
        assert_eq!(a.regime(), b.regime());
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.p_value, b.p_value);
    }
}

#[test]
fn small_group_names_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let path = tmp(&dir, "g.csv");
    write_grouped(&path, &grouped(&[12, 12, 6], 4, 5));
    let o = lrt(&["test", "equal-cov", "--data", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("requires n_j > p + 2; group 3 has n_j = 6, p = 4"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn regression_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = stream(6, 0);
    let x = Matrix::standard_normal(50, 3, &mut rng);
    let z = Matrix::standard_normal(50, 5, &mut rng);
    let (xp, zp, bp) = (tmp(&dir, "x.csv"), tmp(&dir, "z.csv"), tmp(&dir, "b.csv"));
    write_matrix(&xp, &x, false);
    write_matrix(&zp, &z, true);
    let beta = Matrix::from_fn(3, 2, |i, j| 0.1 * (i + j) as f64);
    write_matrix(&bp, &beta, false);
    let o = lrt(&[
        "test", "regression", "--data", xp.to_str().unwrap(), "--designs", zp.to_str().unwrap(),
        "--q1", "2", "--beta01", bp.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: TestReport = serde_json::from_slice(&o.stdout).unwrap();
    let input = TestInput::Regression {
        data: RegressionData::new(x, z, 2).unwrap(),
        beta01: beta,
    };
    assert_eq!(r, run_test(&input, Regime::GrowingQ, 0.05).unwrap());

    let o = lrt(&[
        "test", "regression", "--data", xp.to_str().unwrap(), "--designs", zp.to_str().unwrap(),
        "--q1", "2", "--regime", "fixed-q",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "r");
    let o = lrt(&["simulate", "--preset", "fig1", "--scale", "desk", "--reps", "40", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("report.json").exists());
    let csv = std::fs::read_to_string(out.join("pvalues.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 40);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["regimes"].as_array().unwrap().len(), 2);

    // same seed, same p-values
    let out2 = tmp(&dir, "r2");
    let o = lrt(&["simulate", "--preset", "fig1", "--reps", "40", "--seed", "7", "--out", out2.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(csv, std::fs::read_to_string(out2.join("pvalues.csv")).unwrap());
}

#[test]
fn simulate_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tmp(&dir, "cfg.json");
    std::fs::write(
        &cfg,
        r#"{"test":"equal-cov","sizes":[15,15,20],"p":3,"replications":10,"seed":0,"regimes":["growing-q"],"alpha":0.1}"#,
    )
    .unwrap();
    let out = tmp(&dir, "r");
    let o = lrt(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 3);
    assert_eq!(report["regimes"][0]["pvalues"].as_array().unwrap().len(), 10);
}

#[test]
fn simulate_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "r");
    let out = out.to_str().unwrap();
    let o = lrt(&["simulate", "--preset", "fig3", "--reps", "0", "--seed", "1", "--out", out]);
    assert_eq!(code(&o), 2);
    let o = lrt(&["simulate", "--preset", "fig3", "--out", out]);
    assert_eq!(code(&o), 2, "missing seed");
    let o = lrt(&["simulate", "--preset", "fig3", "--config", "c.json", "--seed", "1", "--out", out]);
    assert_eq!(code(&o), 2, "preset with config");
    let o = lrt(&["simulate", "--scale", "paper", "--config", "c.json", "--seed", "1", "--out", out]);
    assert_eq!(code(&o), 2, "scale without preset");
}

#[test]
fn oracle_commands() {
    let o = lrt(&["oracle", "independence", "--n", "30", "--blocks", "2,3,4", "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["clt"]["variance_sum"].as_f64().unwrap() > 0.0);

    let o = lrt(&["oracle", "regression", "--n", "40", "--p", "3", "--q", "4", "--q1", "2", "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = lrt(&["oracle", "equal-cov", "--n", "40", "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no Beta decomposition available for this test"));
}
