use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic/config.toml")
}

fn eventstudy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eventstudy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn analyze(out: &Path) -> Output {
    let config = fixture_config();
    eventstudy(&[
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ])
}

fn error_line(output: &Output) -> serde_json::Value {
    let text = String::from_utf8(output.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    serde_json::from_str::<serde_json::Value>(text.trim())
        .unwrap()
        .get("error")
        .cloned()
        .unwrap()
}

#[test]
fn analyze_twice_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = analyze(dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let summary: serde_json::Value = serde_json::from_slice(&analyze(&a).stdout).unwrap();
    let outputs = summary["outputs"].as_array().unwrap();
    assert!(outputs.len() > 20);
    for path in outputs {
        let path = path.as_str().unwrap();
        assert_eq!(fs::read(a.join(path)).unwrap(), fs::read(b.join(path)).unwrap(), "{path}");
    }
}

#[test]
fn report_rerenders_from_intermediate() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(analyze(tmp.path()).status.success());
    let table = tmp.path().join("table2_returns.csv");
    let before = fs::read(&table).unwrap();
    fs::remove_file(&table).unwrap();
    let config = fixture_config();
    let out = eventstudy(&[
        "report",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&table).unwrap(), before);
}

#[test]
fn overlapping_windows_exit_with_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture_config();
    let out = eventstudy(&[
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--estimation-window",
        "-150,-5",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_line(&out);
    assert_eq!(err["kind"], "validation");
    assert_eq!(err["code"], "E003");
    let message = err["message"].as_str().unwrap();
    assert!(message.contains("[-150, -5]") && message.contains("[-7, 30]"), "{message}");
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "estimation_windw = [-150, -10]\n").unwrap();
    let out = eventstudy(&["analyze", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["code"], "E001");
}

#[test]
fn missing_events_file_exits_with_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture_config();
    let missing = tmp.path().join("nope.csv");
    let out = eventstudy(&[
        "analyze",
        "--config",
        config.to_str().unwrap(),
        "--events",
        missing.to_str().unwrap(),
        "--output-dir",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_line(&out);
    assert_eq!(err["kind"], "data");
    assert_eq!(err["code"], "E010");
}

#[test]
fn ingest_check_prints_warnings_as_json_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture_config();
    let out = eventstudy(&[
        "ingest-check",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let codes: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["code"].as_str().unwrap().to_string())
        .collect();
    assert!(codes.contains(&"W106".to_string()));
    assert!(codes.contains(&"W103".to_string()));
}
