use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use byrd_nafl::metrics::{parse_metrics_csv, summary_best_acc, METRICS_HEADER, TABLE_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_byrd-nafl"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = r#"
[run]
n_workers = 10
byz_ratio = 0.2
iterations = 40
eta = 0.05
batch_size = 8
seed = 3
eval_every = 10
rule = { kind = "cwmed" }
attack = { kind = "random_noise" }
model = { kind = "logistic" }
dataset = { kind = "synthetic", family = "binary", n = 300, dim = 5 }
"#;

#[test]
fn run_writes_metrics_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.toml");
    let out = tmp.path().join("smoke");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(METRICS_HEADER));
    let reports = parse_metrics_csv(&csv).unwrap();
    let ks: Vec<usize> = reports.iter().map(|r| r.k).collect();
    assert_eq!(ks.first(), Some(&0));
    assert_eq!(ks.last(), Some(&299));
    assert_eq!(ks.len(), 13);

    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let best = summary_best_acc(&summary).unwrap();
    let max = reports.iter().map(|r| r.test_acc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, max);
    assert!(summary.contains("beta_used = 0.9"));
    assert!(summary.contains("byzantine = 4 of 20"));
    assert!(summary.contains("[config]"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        files.push(fs::read(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);

    let out = tmp.path().join("c");
    let o = run(&["--seed", "4", "run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(out.join("metrics.csv")).unwrap(), files[0]);
}

#[test]
fn majority_violation_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("byz_ratio = 0.2", "byz_ratio = 0.6"));
    let out = tmp.path().join("o");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("H > N/2"));
    assert!(!out.exists());
}

#[test]
fn malformed_configs_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cases = [
        SMALL.replace("batch_size", "batchsize"),
        SMALL.replace("eta = 0.05", "eta = -1.0"),
        SMALL.replace("\"cwmed\"", "\"trimmed_mean\""),
        format!("{SMALL}\n[matrix]\nrules = [{{ kind = \"mean\" }}]\n"),
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.toml"), text);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 1, "case {i}");
    }
    let o = run(&["run", "--config", "/nonexistent.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["verify", "nonsense"])), 1);
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let missing = SMALL.replace(
        r#"{ kind = "synthetic", family = "binary", n = 300, dim = 5 }"#,
        r#"{ kind = "covtype", path = "/nonexistent/covtype.data" }"#,
    );
    let diverge = SMALL
        .replace("eta = 0.05", "eta = 1e300")
        .replace(r#"{ kind = "logistic" }"#, r#"{ kind = "logistic", rho = 1.0 }"#);
    for (i, text) in [missing, diverge].iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.toml"), text);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "case {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn grid_writes_one_directory_per_cell_and_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke_grid.toml");
    let out = tmp.path().join("grid");
    let o = run(&["grid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut dirs: Vec<PathBuf> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    assert_eq!(dirs.len(), 8);

    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some(TABLE_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    for (row, dir) in rows.iter().zip(&dirs) {
        let fields: Vec<&str> = row.split(',').collect();
        let name = dir.file_name().unwrap().to_str().unwrap();
        assert!(name.contains(fields[0]) && name.contains(fields[1]) && name.ends_with(fields[3]), "{row} vs {name}");
        let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
        let best: f64 = fields[4].parse().unwrap();
        assert_eq!(summary_best_acc(&summary), Some(best));
        assert!(dir.join("metrics.csv").exists());
    }
}

#[test]
fn grid_jobs_do_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[matrix]\nrules = [{{ kind = \"mean\" }}, {{ kind = \"geomed\" }}]\noptimizers = [\"sgd\", \"nesterov\"]\n");
    let cfg = write_config(tmp.path(), "g.toml", &text);
    let mut tables = Vec::new();
    for jobs in ["1", "4"] {
        let out = tmp.path().join(format!("j{jobs}"));
        let o = run(&["grid", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(code(&o), 0);
        let mut metrics = Vec::new();
        for e in fs::read_dir(&out).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                metrics.push((p.file_name().unwrap().to_owned(), fs::read(p.join("metrics.csv")).unwrap()));
            }
        }
        metrics.sort();
        assert_eq!(metrics.len(), 4);
        tables.push((fs::read(out.join("table.csv")).unwrap(), metrics));
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn verify_suites_pass() {
    for suite in ["theorem", "nesterov", "aggregation", "attacks"] {
        let o = run(&["verify", suite]);
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "{stdout}");
        assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
    }
}
