use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

fn qdc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qdc")).args(args).output().unwrap()
}

/// Two separable classes labeled 4 and 9, written as a headed CSV.
fn write_data(dir: &Path) -> PathBuf {
    let path = dir.join("data.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "x,y,z,label").unwrap();
    for i in 0..40 {
        let t = i as f64 * 0.37;
        let (a, b, label) = if i % 2 == 0 { (2.0, 0.2, 4) } else { (0.2, 2.0, 9) };
        writeln!(f, "{},{},{},{label}", a + 0.3 * t.sin(), b + 0.3 * t.cos(), 0.5 + 0.1 * (2.0 * t).sin()).unwrap();
    }
    path
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn config(kind: &str, extra: &str) -> String {
    format!(
        r#"{{"version": 1, "experiment_id": "cli", "dataset": {{"format": "csv", "path": "data.csv"}},
            "model": {{"kind": "{kind}", "pipeline": {{"center": false}}}}, "split": {{"repetitions": 3, "seed": 7}}{extra}}}"#
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bench_writes_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cfg = write_config(dir.path(), &config("pgm_c", ""));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = qdc(&["bench", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let report = std::fs::read_to_string(&a).unwrap();
    assert_eq!(report, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("experiment_id,classifier,features,copies,repetition,split_seed"));
    assert!(lines[4].contains(",mean,"));
}

#[test]
fn train_then_predict_reports_original_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path());
    let cfg = write_config(dir.path(), &config("kpgm_c", ""));
    let model = dir.path().join("model.json");
    let o = qdc(&["train", "--config", s(&cfg), "--model", s(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("pred.csv");
    let o = qdc(&["predict", "--model", s(&model), "--input", s(&data), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pred = std::fs::read_to_string(&out).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next().unwrap(), "row,prediction,score_4,score_9");
    let input = std::fs::read_to_string(&data).unwrap();
    let correct = lines
        .zip(input.lines().skip(1))
        .filter(|(p, i)| p.split(',').nth(1) == i.split(',').nth(3))
        .count();
    assert!(correct >= 38, "{correct}/40");
}

#[test]
fn sweep_writes_series_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cfg = write_config(dir.path(), &config("kpgm_c", ""));
    let out = dir.path().join("sweep.csv");
    let svg = dir.path().join("sweep.svg");
    let o = qdc(&["sweep", "--config", s(&cfg), "--m", "1..3,inf", "--out", s(&out), "--svg", s(&svg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let copies: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(copies, ["1", "2", "3", "inf"]);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let out = dir.path().join("o.csv");
    let cfg = write_config(dir.path(), &config("pgm_c", r#", "surprise": 1"#));
    assert_eq!(qdc(&["bench", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
    let missing = dir.path().join("nope.json");
    assert_eq!(qdc(&["bench", "--config", s(&missing), "--out", s(&out)]).status.code(), Some(2));
    let cfg = write_config(dir.path(), &config("pgm_c", ""));
    assert_eq!(qdc(&["sweep", "--config", s(&cfg), "--m", "1,inf", "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config("pgm_c", ""));
    let out = dir.path().join("o.csv");
    assert_eq!(qdc(&["bench", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(3));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,oops\n").unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, "{}").unwrap();
    assert_eq!(
        qdc(&["predict", "--model", s(&model), "--input", s(&bad), "--out", s(&out)]).status.code(),
        Some(3)
    );
}

#[test]
fn all_na_runs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cfg = write_config(dir.path(), &config("sdp_c", r#", "budget_minutes": 1e-12"#));
    let out = dir.path().join("o.csv");
    let o = qdc(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
    // The N/A rows are still written.
    assert!(std::fs::read_to_string(&out).unwrap().contains("n/a"));
}
