use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 7
scenario = "stationary-overlap"
horizon = 3000
n_id = 500
n_mc = 2000

[engine]
update_schedule = [{ every = 100 }]
optimizer = { epochs = 2, reference_epochs = 5 }
"#;

fn asat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY).unwrap();
    path.to_string_lossy().into_owned()
}

fn jsonl_count(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "jsonl")
        })
        .count()
}

#[test]
fn run_writes_a_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let o = asat(&["run", "--config", &cfg, "--method", "fsat", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("config hash"));
    let trace = fs::read_to_string(out.join("fsat_seed7.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 3002);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("fsat,7,"));
}

#[test]
fn compare_writes_every_trace_and_a_deterministic_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let mut aggregates = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("cmp{k}"));
        let o = asat(&[
            "compare",
            "--config",
            &cfg,
            "--seeds",
            "1,2,3,4,5",
            "--reference-pool",
            "500",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(jsonl_count(&out), 15);
        for m in ["asat", "fsat", "fsft"] {
            assert!(out.join(format!("{m}_seed3.jsonl")).exists());
        }
        assert!(out.join("reference.csv").exists());
        aggregates.push(fs::read_to_string(out.join("aggregate.csv")).unwrap());

        // The fixed threshold sits far above alpha on this scenario.
        let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
        let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == "fpr_violation").unwrap();
        let fsft: Vec<&str> = summary
            .lines()
            .filter(|l| l.starts_with("fsft,"))
            .map(|l| l.split(',').nth(col).unwrap())
            .collect();
        assert_eq!(fsft, vec!["true"; 5]);
    }
    assert_eq!(aggregates[0], aggregates[1]);
    assert!(aggregates[0].lines().next().unwrap().contains("tpr_star"));
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("sweep");
    let o = asat(&[
        "sweep",
        "--config",
        &cfg,
        "--method",
        "fsat",
        "--sweep-param",
        "est-window",
        "--sweep-values",
        "200",
        "800",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("est_window_200/fsat_seed7.jsonl").exists());
    assert!(out.join("est_window_800/fsat_seed7.jsonl").exists());
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn scenarios_are_listed() {
    let o = asat(&["scenarios"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["stationary-overlap", "shift-easy-to-hard", "shift-hard-to-easy"] {
        assert!(text.contains(name));
    }
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = asat(&["run", "--config", &cfg, "--method", "oracle", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle"));
}

#[test]
fn empty_sweep_values_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = asat(&[
        "sweep",
        "--config",
        &cfg,
        "--sweep-param",
        "est-window",
        "--sweep-values",
        "--out",
        "x",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_reports_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\nscenario = \"stationary-overlap\"\n[engine]\nalhpa = 0.1\n").unwrap();
    let o = asat(&["run", "--config", path.to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:") && err.contains("alhpa"), "{err}");
    let o = asat(&["run", "--config", "/nonexistent/c.toml", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
}
