use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn soie(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soie"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn soie")
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn assert_hash_header(path: &Path) {
    let text = fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap();
    assert!(
        first.starts_with("# manifest_hash=") && first.len() == 16 + 64,
        "{first}"
    );
}

#[test]
fn report_on_empty_dir_is_missing_prerequisite() {
    let d = tempfile::tempdir().unwrap();
    let out = soie(&["report", d.path().to_str().unwrap()], d.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn grid_without_surface_is_missing_prerequisite() {
    let d = tempfile::tempdir().unwrap();
    let out = soie(&["grid", "--out-dir", "r"], d.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_config_exits_2_with_location() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.json"),
        "{\n  \"seed\": 1,\n  \"agent\": {\"mass\": 2}\n}\n",
    )
    .unwrap();
    let out = soie(&["--config", "c.json", "optimize"], d.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("mass"), "{err}");

    fs::write(d.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(
        soie(&["--config", "bad.json", "optimize"], d.path()).status.code(),
        Some(2)
    );
}

#[test]
fn single_pair_optimize_gives_one_lambda() {
    let d = tempfile::tempdir().unwrap();
    let out = soie(
        &["optimize", "--own-bias", "0", "--partner-bias", "0", "--out-dir", "o"],
        d.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("lambda* = "), "{stdout}");
    let csv = d.path().join("o/surface.csv");
    assert_hash_header(&csv);
    assert_eq!(data_lines(&csv).len(), 2);
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    error: f64,
    effort: f64,
}

#[test]
fn grid_rows_and_report_means() {
    let d = tempfile::tempdir().unwrap();
    assert!(soie(&["optimize", "--out-dir", "r"], d.path()).status.success());
    let surface = d.path().join("r/surface.csv");
    assert_hash_header(&surface);
    assert_eq!(data_lines(&surface).len(), 1 + 64);

    let out = soie(&["grid", "--out-dir", "r"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = d.path().join("r/grid_rows.csv");
    for f in ["grid_rows.csv", "grid_summary.csv", "grid_tests.csv"] {
        assert_hash_header(&d.path().join("r").join(f));
    }
    let lines = data_lines(&rows);
    assert_eq!(lines.len(), 1 + 192);

    // Averaging oracle over the raw rows.
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (ic, ie, ief) = (col("controller"), col("error_deg"), col("effort_nm"));
    let mut acc: std::collections::BTreeMap<String, Acc> = Default::default();
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let a = acc.entry(f[ic].to_string()).or_default();
        a.n += 1;
        a.error += f[ie].parse::<f64>().unwrap();
        a.effort += f[ief].parse::<f64>().unwrap();
    }

    let rep = soie(&["report", "r"], d.path());
    assert!(rep.status.success());
    let text = String::from_utf8_lossy(&rep.stdout);
    for (c, a) in &acc {
        assert_eq!(a.n, 64);
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(c)).unwrap();
        let f: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(f[1].parse::<usize>().unwrap(), a.n);
        assert!((f[2].parse::<f64>().unwrap() - a.error / a.n as f64).abs() < 1e-4);
        assert!((f[3].parse::<f64>().unwrap() - a.effort / a.n as f64).abs() < 1e-4);
    }
    assert!(text.lines().any(|l| l.starts_with("PASS") || l.starts_with("FAIL")));

    let out = soie(
        &[
            "grid",
            "--out-dir",
            "r20",
            "--surface-dir",
            "r",
            "--trials-per-cell",
            "20",
        ],
        d.path(),
    );
    assert!(out.status.success());
    assert_eq!(data_lines(&d.path().join("r20/grid_rows.csv")).len(), 1 + 3840);
}

const FAST_FIT: &str = r#"{"pso": {"particles": 4, "iterations": 3}}"#;

#[test]
fn fit_is_deterministic_and_rejects_missing_conditions() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("fast.json"), FAST_FIT).unwrap();
    let targets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/human_human_targets.json");
    let t = targets.to_str().unwrap();
    for out in ["a", "b"] {
        let o = soie(
            &["--config", "fast.json", "--seed", "3", "fit", t, "--out-dir", out],
            d.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["fit.json", "human_human.csv"] {
        assert_eq!(
            fs::read(d.path().join("a").join(f)).unwrap(),
            fs::read(d.path().join("b").join(f)).unwrap()
        );
    }
    assert_hash_header(&d.path().join("a/human_human.csv"));

    fs::write(
        d.path().join("partial.json"),
        r#"{"conditions": {"SS": {"error_deg": 1.3, "cocontraction": 0.23}}}"#,
    )
    .unwrap();
    let o = soie(&["--config", "fast.json", "fit", "partial.json"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_time_series() {
    let d = tempfile::tempdir().unwrap();
    let o = soie(&["simulate", "--bias1", "3", "--out-dir", "s"], d.path());
    assert!(o.status.success());
    let p = d.path().join("s/pair_trial.csv");
    assert_hash_header(&p);
    assert_eq!(data_lines(&p).len(), 1 + 1001);

    let o = soie(&["simulate", "--study", "human-robot", "--out-dir", "s"], d.path());
    assert!(o.status.success());
    let p = d.path().join("s/human_robot.csv");
    assert_hash_header(&p);
    assert_eq!(data_lines(&p).len(), 1 + 8);
}

#[test]
fn dt_flag_changes_sample_count() {
    let d = tempfile::tempdir().unwrap();
    let o = soie(&["--dt", "0.02", "simulate", "--out-dir", "s"], d.path());
    assert!(o.status.success());
    assert_eq!(data_lines(&d.path().join("s/pair_trial.csv")).len(), 1 + 501);
    assert_eq!(soie(&["--dt", "-1", "simulate"], d.path()).status.code(), Some(2));
}
