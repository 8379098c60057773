use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dacat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dacat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dacat(args);
    assert!(
        out.status.success(),
        "dacat {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_with_ext(dir: &Path, ext: &str) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

fn easy_data(dir: &Path, videos: &str) {
    ok(&[
        "gen-data", "--out", s(dir), "--videos", videos, "--len", "120", "--phases", "3", "--d-raw", "6",
        "--noise", "0.5", "--separation", "6", "--seed", "3",
    ]);
}

#[test]
fn gen_data_writes_files_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        ok(&[
            "gen-data", "--videos", "3", "--len", "200", "--phases", "7", "--seed", "1",
            "--interference", "0.2", "--out", s(dir),
        ]);
    }
    assert_eq!(files_with_ext(&a, "dcat"), 3);
    assert_eq!(files_with_ext(&a, "csv"), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["generator"]["interference_rate"], 0.2);
    for name in ["video_000.dcat", "video_002.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn train_writes_reproducible_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    easy_data(&data, "2");
    let run = |out: &Path| {
        ok(&[
            "train", "--data", s(&data), "--epochs1", "2", "--epochs2", "2", "--seed", "1", "--out", s(out),
            "--fusion", "before", "--interaction", "add", "--readout", "fixed:10",
        ]);
    };
    let (r1, r2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    run(&r1);
    run(&r2);
    assert_eq!(files_with_ext(&r1, "dcpt"), 2);
    for name in ["cache_encoder.dcpt", "dacat.dcpt"] {
        assert_eq!(fs::read(r1.join(name)).unwrap(), fs::read(r2.join(name)).unwrap());
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r1.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["fusion"], "before");
    assert_eq!(manifest["config"]["interaction"], "add");
    assert_eq!(manifest["config"]["readout"], "fixed:10");
    assert_eq!(manifest["stage2"]["epochs_run"], 2);
}

#[test]
fn stage_two_reuses_stage_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    easy_data(&data, "2");
    let out = tmp.path().join("run");
    ok(&["train", "--data", s(&data), "--epochs1", "1", "--stage", "1", "--out", s(&out)]);
    assert!(!out.join("dacat.dcpt").exists());
    let before = fs::read(out.join("cache_encoder.dcpt")).unwrap();
    ok(&["train", "--data", s(&data), "--epochs2", "1", "--stage", "2", "--out", s(&out)]);
    assert!(out.join("dacat.dcpt").exists());
    assert_eq!(fs::read(out.join("cache_encoder.dcpt")).unwrap(), before);

    let mismatch = dacat(&["train", "--data", s(&data), "--d", "8", "--stage", "2", "--out", s(&out)]);
    assert!(!mismatch.status.success());
}

#[test]
fn converged_toy_run_scores_high() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    easy_data(&data, "4");
    let run = tmp.path().join("run");
    ok(&[
        "train", "--data", s(&data), "--d", "8", "--hidden", "8", "--epochs1", "20", "--lr1", "1e-2",
        "--epochs2", "5", "--lr2", "1e-3", "--out", s(&run),
    ]);
    let pred = tmp.path().join("pred");
    ok(&["infer", "--data", s(&data), "--ckpt", s(&run), "--out", s(&pred), "--jobs", "2"]);
    assert_eq!(files_with_ext(&pred, "csv"), 4);
    let metrics = tmp.path().join("metrics");
    ok(&["eval", "--data", s(&data), "--pred", s(&pred), "--out", s(&metrics)]);
    let csv = fs::read_to_string(metrics.join("metrics_strict.csv")).unwrap();
    let mean: Vec<f64> = csv
        .lines()
        .find(|l| l.starts_with("mean,"))
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(mean[0] >= 0.95, "strict accuracy {}", mean[0]);

    let pred32 = tmp.path().join("pred32");
    ok(&["infer", "--data", s(&data), "--ckpt", s(&run), "--out", s(&pred32), "--precision", "f32"]);
    assert_eq!(files_with_ext(&pred32, "csv"), 4);
}

#[test]
fn perfect_predictions_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    easy_data(&data, "2");
    let metrics = tmp.path().join("metrics");
    ok(&["eval", "--data", s(&data), "--pred", s(&data), "--out", s(&metrics)]);
    for file in ["metrics_strict.csv", "metrics_relaxed.csv"] {
        let csv = fs::read_to_string(metrics.join(file)).unwrap();
        let mean = csv.lines().find(|l| l.starts_with("mean,")).unwrap();
        assert_eq!(mean, "mean,1.000000,1.000000,1.000000,1.000000");
    }
}

#[test]
fn bench_has_one_row_per_length() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench.csv");
    ok(&[
        "bench", "--lengths", "1,10,100", "--d", "16", "--hidden", "8", "--frames", "5", "--out", s(&out),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "length,d,mean_ms,p95_ms,fps");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("100,16,"));
}

#[test]
fn ablate_writes_one_row_per_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    easy_data(&data, "3");
    let out = tmp.path().join("ablation.csv");
    ok(&[
        "ablate", "--data", s(&data), "--epochs1", "1", "--epochs2", "1", "--d", "4", "--hidden", "4",
        "--out", s(&out),
    ]);
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "strategy,phase_0,phase_1,phase_2,overall");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["adaptive", "fixed:10", "fixed:100", "all"]);
}

#[test]
fn missing_inputs_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    easy_data(&data, "1");

    let out = dacat(&["infer", "--data", s(&data), "--ckpt", s(&tmp.path().join("nope")), "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run_manifest.json"));

    let out = dacat(&["eval", "--data", s(&data), "--pred", s(tmp.path()), "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("video_000.csv"));

    let out = dacat(&["train", "--data", s(&tmp.path().join("missing")), "--out", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

#[test]
fn unwritable_output_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = dacat(&["gen-data", "--videos", "1", "--len", "10", "--out", s(&blocker.join("sub"))]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_flag_values_are_rejected() {
    let out = dacat(&["train", "--data", ".", "--out", ".", "--readout", "fixed:0"]);
    assert!(!out.status.success());
    let out = dacat(&["train", "--data", ".", "--out", ".", "--fusion", "sideways"]);
    assert!(!out.status.success());
}
