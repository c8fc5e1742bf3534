use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;
use tempfile::TempDir;

const GAMMA_FLOOR: f64 = std::f64::consts::FRAC_PI_2 - 1.0;

fn notchseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_notchseq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn study(dir: &Path) -> PathBuf {
    write(
        dir,
        "study.json",
        r#"{"n": 64, "message": [12,13,14,20,21,22], "interferer": [5,6,7,25,26,27], "alpha": 5.0, "trials": 2000}"#,
    )
}

fn small(dir: &Path) -> PathBuf {
    write(
        dir,
        "small.json",
        r#"{"n": 12, "message": [2,3], "interferer": [5], "alpha": 2.0, "trials": 200}"#,
    )
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn keys(v: &Value) -> Vec<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

/// Key order as printed, which `Value` would otherwise re-sort.
fn printed_top_level_keys(out: &Output) -> Vec<String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
        .map(|l| l.trim().split('"').nth(1).unwrap().to_string())
        .collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_prints_sorted_result() {
    let dir = TempDir::new().unwrap();
    let cfg = study(dir.path());
    let seq = dir.path().join("best.txt");
    let out = notchseq(&[
        "design",
        path_str(&cfg),
        "--seed",
        "4",
        "--sequence-out",
        path_str(&seq),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    let printed = printed_top_level_keys(&out);
    let mut sorted = printed.clone();
    sorted.sort();
    assert_eq!(printed, sorted);
    for key in [
        "best",
        "beta",
        "feasibility_rate",
        "gamma_min_feasible",
        "kkt_residual",
        "mcdiarmid_bound",
        "n_feasible",
        "n_trials",
        "relaxation_objective",
        "score_kind",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let best = &v["best"];
    assert_eq!(best["metrics"]["feasible"], Value::Bool(true));
    assert!(best["gamma"].as_f64().unwrap() >= GAMMA_FLOOR);
    assert_eq!(keys(best), ["gamma", "metrics", "sequence", "trial_index"]);
    assert_eq!(best["sequence"].as_array().unwrap().len(), 64);
    assert_eq!(
        fs::read_to_string(&seq).unwrap().split_whitespace().count(),
        64
    );
    assert_eq!(v["n_trials"], 2000);
}

#[test]
fn design_without_feasible_candidate_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "dense.json",
        r#"{"n": 16, "message": [1], "interferer": [2,3,4,5,6,7,8,9,10,11,12,13,14,15], "alpha": 0.0, "trials": 100}"#,
    );
    let out = notchseq(&["design", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["best"], Value::Null);
}

#[test]
fn infeasible_relaxation_exits_2_with_null_best() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "cap.json",
        r#"{"n": 8, "message": [1], "interferer": [0,2,3,4,5,6,7], "alpha": 0.0, "trials": 10}"#,
    );
    let out = notchseq(&["design", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["best"], Value::Null);
    assert_eq!(v["n_feasible"], 0);
    assert!(v["error"].as_str().unwrap().contains("infeasible"));
}

#[test]
fn design_is_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = study(dir.path());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let first = notchseq(&[
        "design",
        path_str(&cfg),
        "--seed",
        "7",
        "--score",
        "rejection_ratio",
        "--output",
        path_str(&a),
    ]);
    let second = notchseq(&[
        "--jobs",
        "1",
        "design",
        path_str(&cfg),
        "--seed",
        "7",
        "--score",
        "rejection_ratio",
        "--output",
        path_str(&b),
    ]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&a).unwrap(), first.stdout);
    let other = notchseq(&[
        "design",
        path_str(&cfg),
        "--seed",
        "8",
        "--score",
        "rejection_ratio",
    ]);
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn flags_override_file_values() {
    let dir = TempDir::new().unwrap();
    let cfg = study(dir.path());
    let v = json(&notchseq(&[
        "design",
        path_str(&cfg),
        "--trials",
        "50",
        "--alpha",
        "40",
        "--score",
        "reciprocal_dynamic_range",
    ]));
    assert_eq!(v["n_trials"], 50);
    assert_eq!(v["feasibility_rate"], 1.0);
    assert_eq!(v["score_kind"], "reciprocal_dynamic_range");
}

#[test]
fn oracle_reports_three_optima() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path());
    let out = notchseq(&["oracle", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for key in ["best_by_power", "best_by_rho", "best_by_chi"] {
        assert_eq!(v[key]["sequence"].as_array().unwrap().len(), 12);
    }
    assert_eq!(v["n_enumerated"], 2048);
    assert_eq!(out.stdout, notchseq(&["oracle", path_str(&cfg)]).stdout);

    let none = write(
        dir.path(),
        "none.json",
        r#"{"n": 8, "message": [1], "interferer": [0,2,3,4,5,6,7], "alpha": 0.0}"#,
    );
    let out = notchseq(&["oracle", path_str(&none)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["best_by_power"], Value::Null);
}

#[test]
fn oracle_rejects_long_sequences() {
    let dir = TempDir::new().unwrap();
    let out = notchseq(&["oracle", path_str(&study(dir.path()))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn baselines_print_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = study(dir.path());
    for (cmd, extra) in [
        ("shape", ["--shape-max-iters", "200"]),
        ("lpnn", ["--lpnn-max-iters", "200"]),
    ] {
        for variant in ["unimodular", "binary"] {
            let mut args = vec![cmd, path_str(&cfg), "--variant", variant];
            args.extend(extra);
            let out = notchseq(&args);
            assert_eq!(
                out.status.code(),
                Some(0),
                "{cmd} {variant}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            let v = json(&out);
            assert_eq!(
                keys(&v),
                ["iterations", "metrics", "sequence", "trace", "variant"]
            );
            assert_eq!(v["variant"], variant);
            assert!(v["iterations"].as_u64().unwrap() <= 200);
            assert_eq!(v["sequence"].as_array().unwrap().len(), 64);
            assert_eq!(out.stdout, notchseq(&args).stdout);
        }
    }
    let out = notchseq(&[
        "lpnn",
        path_str(&cfg),
        "--lpnn-step",
        "0.002",
        "--lpnn-c0",
        "5",
        "--lpnn-max-iters",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn dump_sdp_writes_square_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path());
    let out_path = dir.path().join("s.csv");
    let out = notchseq(&["dump-sdp", path_str(&cfg), "--output", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&out_path).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 12);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 12);
        assert!((row[i] - 1.0).abs() < 1e-12);
    }
    assert_eq!(
        notchseq(&["dump-sdp", path_str(&cfg)]).stdout,
        text.as_bytes()
    );
}

#[test]
fn oracle_comparison_experiment_schema() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = notchseq(&[
        "experiment",
        "--kind",
        "oracle_comparison",
        "--seed",
        "3",
        "--output",
        path_str(&out_dir),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("wrote "));
    let path = out_dir.join("oracle_comparison_3.csv");
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec![
            "kind",
            "seed",
            "version",
            "sweep_name",
            "sweep",
            "series",
            "statistic",
            "value",
            "std_error",
            "config"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    for l in [16.0, 64.0, 256.0, 1024.0, 4096.0] {
        let ratios: Vec<&str> = rows
            .iter()
            .filter(|r| r[4].parse::<f64>() == Ok(l) && &r[6] == "mean_ratio")
            .map(|r| &r[5])
            .collect();
        assert_eq!(
            ratios,
            [
                "message_power",
                "rejection_ratio",
                "reciprocal_dynamic_range"
            ]
        );
    }
    assert!(rows
        .iter()
        .all(|r| &r[0] == "oracle_comparison" && &r[1] == "3"));
}

#[test]
fn experiment_files_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = write(
        dir.path(),
        "exp.json",
        r#"{"kind": "feasibility_vs_width", "problem": {"n": 32, "message": [0,1,2,12,13,14,15], "interferer": [5], "alpha": 3.0, "trials": 500}, "sweep": {"width": [1, 2, 3]}, "repetitions": 1, "seed": 5}"#,
    );
    for out_dir in [&a, &b] {
        let out = notchseq(&["experiment", path_str(&cfg), "--output", path_str(out_dir)]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let file = "feasibility_vs_width_5.csv";
    assert_eq!(
        fs::read(a.join(file)).unwrap(),
        fs::read(b.join(file)).unwrap()
    );
}

#[test]
fn ratio_histogram_finishes_at_desk_scale() {
    let dir = TempDir::new().unwrap();
    let start = Instant::now();
    let out = notchseq(&[
        "experiment",
        "--kind",
        "ratio_histogram",
        "--output",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(start.elapsed().as_secs() < 300);
    assert!(dir.path().join("ratio_histogram_0.csv").exists());
}

#[test]
fn bad_inputs_exit_1() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path());
    let garbage = write(dir.path(), "bad.json", "{ not json");
    let overlap = write(
        dir.path(),
        "overlap.json",
        r#"{"n": 8, "message": [1,2], "interferer": [2], "alpha": 1.0}"#,
    );
    let cases: [&[&str]; 6] = [
        &["design", "/nonexistent/problem.json"],
        &["design", path_str(&garbage)],
        &["design", path_str(&overlap)],
        &["design", path_str(&cfg), "--score", "loudness"],
        &["shape", path_str(&cfg), "--variant", "ternary"],
        &["experiment", "--kind", "nonsense"],
    ];
    for args in cases {
        let out = notchseq(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains("error"),
            "{args:?}"
        );
    }
}
