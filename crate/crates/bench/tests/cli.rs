use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mobconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobconv")).args(args).output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = r#"[
  {"name": "d", "kind": "dwconv", "h_i": 10, "w_i": 10, "c_i": 8, "h_f": 3, "w_f": 3, "stride": 1},
  {"name": "p", "kind": "pwconv", "h_i": 4, "w_i": 4, "c_i": 8, "c_o": 16}
]"#;

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_writes_csv_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = mobconv(&["validate", "--config", &cfg, "--workers", "1,3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("layer,strategy,workers,max_rel_diff,tolerance,status")
    );
    assert_eq!(lines.count(), (3 + 2) * 2);
}

#[test]
fn json_output_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let dest = dir.path().join("traffic.json");
    let out = mobconv(&[
        "traffic",
        "--config",
        &cfg,
        "--format",
        "json",
        "--out",
        dest.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let rows: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(dest).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[2]["strategy"], "dw-hp");
    assert!(rows.iter().all(|r| r["measured_ai"].as_f64().unwrap() > 0.0));
}

#[test]
fn traffic_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = mobconv(&["traffic", "--config", &cfg, "--seed", "9"]).stdout;
    let b = mobconv(&["traffic", "--config", &cfg, "--seed", "9"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn bench_reports_three_rows_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = mobconv(&["bench", "--config", &cfg, "--repeats", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 5 * 3);
}

#[test]
fn analyze_requires_roofline_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = mobconv(&["analyze", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);

    let out = mobconv(&[
        "analyze",
        "--config",
        &cfg,
        "--peak-gflops",
        "0",
        "--bandwidth-gbps",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: usage:"));

    let out = mobconv(&[
        "analyze",
        "--config",
        &cfg,
        "--peak-gflops",
        "46",
        "--bandwidth-gbps",
        "12.8",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("layer,kind,strategy,flops,oi,analytical_ai,attainable_gflops,peak_gflops\n"));
}

#[test]
fn usage_and_config_errors_exit_two_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cases: Vec<Vec<String>> = vec![
        vec!["validate".into(), "--bogus".into()],
        vec!["frobnicate".into()],
        vec![
            "validate".into(),
            "--config".into(),
            dir.path().join("missing.json").to_str().unwrap().into(),
        ],
        vec![
            "validate".into(),
            "--config".into(),
            cfg.clone(),
            "--workers".into(),
            "0".into(),
        ],
        vec![
            "bench".into(),
            "--config".into(),
            cfg.clone(),
            "--repeats".into(),
            "1".into(),
        ],
        vec![
            "validate".into(),
            "--config".into(),
            cfg,
            "--tolerance".into(),
            "-1".into(),
        ],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = mobconv(&args);
        let err = stderr(&out);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{args:?}: {err}");
    }
}

#[test]
fn help_exits_zero() {
    assert_eq!(mobconv(&["--help"]).status.code(), Some(0));
    assert_eq!(mobconv(&["validate", "--help"]).status.code(), Some(0));
}
