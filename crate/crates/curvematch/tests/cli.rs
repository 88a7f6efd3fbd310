use std::path::Path;
use std::process::{Command, Output};

fn curvematch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvematch")).args(args).output().unwrap()
}

fn small_corpus(dir: &Path) {
    let out = curvematch(&[
        "gen-corpus", "--out", dir.to_str().unwrap(), "--designs", "3", "--sherds-per-design", "2", "--width", "80",
        "--height", "80", "--sherd-min", "20", "--sherd-max", "26", "--seed", "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(curvematch(&[]).status.code(), Some(2));
    assert_eq!(curvematch(&["identify", "--catalog", "x", "--sherd", "s0000"]).status.code(), Some(2));
    assert_eq!(curvematch(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let c = dir.path().to_str().unwrap();
    let out = curvematch(&["match", "--catalog", c, "--sherd", "s0000", "--theta-stride", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let out = curvematch(&["match", "--catalog", c, "--sherd", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    let out = curvematch(&["gen-corpus", "--out", c, "--degradation", "awful"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn io_and_format_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none");
    assert_eq!(
        curvematch(&["match", "--catalog", missing.to_str().unwrap(), "--sherd", "s0000"]).status.code(),
        Some(3)
    );
    small_corpus(dir.path());
    let c = dir.path().to_str().unwrap();
    std::fs::write(dir.path().join("bad.cpm"), b"not a model").unwrap();
    let bad = dir.path().join("bad.cpm");
    let out = curvematch(&["identify", "--catalog", c, "--model", bad.to_str().unwrap(), "--sherd", "s0000"]);
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(dir.path().join("sherds/s0001_curve.pgm"), b"P5 1 1").unwrap();
    let out = curvematch(&["match", "--catalog", c, "--sherd", "s0001"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset"));
}

#[test]
fn match_writes_candidates_and_a_run_record() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let c = dir.path().to_str().unwrap();
    let out_file = dir.path().join("cands.json");
    let out = curvematch(&[
        "match", "--catalog", c, "--sherd", "s0002", "--k", "2", "--theta-stride", "30", "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_file).unwrap()).unwrap();
    assert_eq!(v["sherd"], "s0002");
    assert_eq!(v["candidates"].as_array().unwrap().len(), 6);
    let run: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("cands.json.run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "match");
    assert!(run.get("threads").is_none());
    let corpus_run: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(corpus_run["outputs"]["sherds"], 6);
}

#[test]
fn report_renders_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "method,rank,value\nstage1,1,0.5\nstage1,2,1\n").unwrap();
    let csv = dir.path().join("all.csv");
    let svg = dir.path().join("cmc.svg");
    let out = curvematch(&[
        "report", "--input", a.to_str().unwrap(), "--csv", csv.to_str().unwrap(), "--svg", svg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&a).unwrap());
    assert!(std::fs::read_to_string(&svg).unwrap().contains("stage1"));
    std::fs::write(&a, "method,rank,value\nstage1,2,0.5\n").unwrap();
    let out = curvematch(&["report", "--input", a.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
