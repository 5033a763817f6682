use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cppe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cppe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

const SMALL: &str = r#"{"m": 4, "n": 600, "d": 2, "k": 5, "mu": [1, 0], "sigma": 0.1, "delta": 0.1, "reps": 2, "seed": 5}"#;

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("res");
    let o = cppe(&["run", "--config", path(&config), "--out", path(&out), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("cppe") && stdout.contains("fedpe") && stdout.contains("indpe"));
    for f in ["traces.csv", "summary.csv", "events.csv", "failures.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("algorithm,round,mean,std,m,normalized"));
    assert_eq!(summary.lines().count(), 1 + 3 * 600);
    let traces = fs::read_to_string(out.join("traces.csv")).unwrap();
    assert_eq!(traces.lines().next(), Some("algorithm,rep,round,joint_cum_regret"));
    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    assert_eq!(
        events.lines().next(),
        Some("algorithm,rep,phase,stage,eps,pulls_total,min_active,max_active")
    );
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(&config, SMALL).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(cppe(&["run", "--config", path(&config), "--out", path(&a)]).status.code(), Some(0));
    assert_eq!(cppe(&["run", "--config", path(&config), "--out", path(&b), "--workers", "1"]).status.code(), Some(0));
    for f in ["traces.csv", "summary.csv", "events.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_problems_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, SMALL.replace("\"seed\": 5", "\"seed\": 5, \"typo\": 1")).unwrap();
    let invalid = dir.path().join("invalid.json");
    fs::write(&invalid, SMALL.replace("\"delta\": 0.1", "\"delta\": 2")).unwrap();
    let missing = dir.path().join("missing.json");
    for cfg in [&unknown, &invalid, &missing] {
        let o = cppe(&["run", "--config", path(cfg), "--out", path(&dir.path().join("o"))]);
        assert_eq!(o.status.code(), Some(1), "{}", cfg.display());
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(cppe(&["run"]).status.code(), Some(1));
    assert_eq!(cppe(&["bogus"]).status.code(), Some(1));
    assert_eq!(cppe(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failure_in_every_replication_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.csv"), "1,0.1,0\n0.3,1,0.2\n0,0.4,1\n0.7,-0.6,0.5\n-0.2,0.9,-0.8\n").unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{"m": 2, "n": 100, "d": 3, "mu": [1, 0, 0], "sigma": 0.1, "delta": 0.1, "reps": 2,
            "action_source": "csv_file", "actions_file": "a.csv", "design_tol": 1e-12, "design_max_iter": 1}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = cppe(&["run", "--config", path(&config), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("failures.csv").exists());
}

#[test]
fn design_reports_a_g_optimal_design() {
    let dir = tempfile::tempdir().unwrap();
    let actions = dir.path().join("a.csv");
    fs::write(&actions, "x1,x2\n1,0\n0,1\n0.7071,0.7071\n").unwrap();
    let o = cppe(&["design", "--actions", path(&actions), "--tol", "0.001"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(o.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("id,weight"));
    let total: f64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let note = String::from_utf8(o.stderr).unwrap();
    let g: f64 = note.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(g <= 2.0 * 1.001 + 1e-6, "{note}");

    let out = dir.path().join("w.csv");
    let o = cppe(&["design", "--actions", path(&actions), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("g = "));
    assert!(fs::read_to_string(out).unwrap().starts_with("id,weight"));

    assert_eq!(cppe(&["design", "--actions", path(&actions), "--tol", "0"]).status.code(), Some(1));
    assert_eq!(cppe(&["design", "--actions", path(&dir.path().join("none.csv"))]).status.code(), Some(1));
}

#[test]
fn net_writes_points_in_the_ball() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("net.csv");
    let o = cppe(&["net", "--d", "2", "--eps", "0.5", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(!rows.is_empty() && rows.len() <= 25);
    assert!(rows.iter().all(|r| r.len() == 2 && (r[0] * r[0] + r[1] * r[1]).sqrt() <= 1.0 + 1e-12));
    assert_eq!(cppe(&["net", "--d", "2", "--eps", "0", "--out", path(&out)]).status.code(), Some(1));
}

#[test]
fn hard_writes_vertices_with_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hard.csv");
    let o = cppe(&["hard", "--d", "4", "--n", "10000", "--alpha", "0", "--c1", "1", "--seed", "3", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    for key in ["theta0_norm=", "eta=", "c3=", "c4="] {
        assert!(meta.starts_with('#') && meta.contains(key), "{meta}");
    }
    assert_eq!(lines.next(), Some("z,x1,x2,x3,x4"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| {
            let mut f = r.split(',');
            let z = f.next().unwrap();
            assert_eq!(z.len(), 3);
            f.map(|v| v.parse::<f64>().unwrap().powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    assert!(norms.iter().all(|n| (n - norms[0]).abs() < 1e-9));

    let o = cppe(&["hard", "--d", "3", "--n", "10000", "--gamma", "0.25", "--m", "16", "--c1", "1", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(cppe(&["hard", "--d", "3", "--n", "100", "--gamma", "0.25", "--c1", "1", "--out", path(&out)]).status.code(), Some(1));
    assert_eq!(cppe(&["hard", "--d", "1", "--n", "100", "--alpha", "0.2", "--c1", "1", "--out", path(&out)]).status.code(), Some(1));
}
