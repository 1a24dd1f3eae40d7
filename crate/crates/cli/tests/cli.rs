use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const OBJECT: &str = "a bouquet of sunflowers";

fn toao(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toao")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Bundled adversarial scene cut down to a few frames.
fn small_spec(dir: &Path, frames: u32) -> PathBuf {
    let text = include_str!("../../core/fixtures/flower_adversarial.json");
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v["trajectory"]["wrist_sweep"]["frames"] = frames.into();
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

fn synth(dir: &Path) -> PathBuf {
    let spec = small_spec(dir, 6);
    ok(&toao(&["synth", "--spec", spec.to_str().unwrap(), "--out", "ds"], dir));
    dir.join("ds")
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = glob::glob(&format!("{}/**/*", dir.display()))
        .unwrap()
        .filter_map(Result::ok)
        .filter(|p| p.is_file())
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = synth(a.path());
    let db = synth(b.path());
    let (fa, fb) = (file_bytes(&da), file_bytes(&db));
    assert!(fa.iter().any(|(n, _)| n == "field.gff"));
    assert!(fa.iter().any(|(n, _)| n == "frames/000005.depth.png"));
    assert_eq!(fa, fb);
}

#[test]
fn invalid_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"parts\": 3}").unwrap();
    let out = toao(&["synth", "--spec", path.to_str().unwrap(), "--out", "ds"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = toao(&["synth", "--spec", "nowhere.json", "--out", "ds"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preprocess_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let common = ["preprocess", "--dataset-dir", "ds", "--output-dir", "out"];
    let stdout = ok(&toao(&[&common[..], &["--theta-d", "0.5"]].concat(), dir.path()));
    assert_eq!(stdout.trim(), "retained 6/6 frames");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/preprocessed/report.json")).unwrap()).unwrap();
    assert_eq!(report["retained"].as_array().unwrap().len(), 6);

    // a clean render has valid depth on every mask pixel
    ok(&toao(&[&common[..], &["--theta-d", "1.0"]].concat(), dir.path()));

    // half the depth dropped: nothing reaches 0.9
    let text = include_str!("../../core/fixtures/flower_adversarial.json");
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v["trajectory"]["wrist_sweep"]["frames"] = 3.into();
    v["depth_dropout"] = 0.5.into();
    std::fs::write(dir.path().join("holes.json"), v.to_string()).unwrap();
    ok(&toao(&["synth", "--spec", "holes.json", "--out", "holes"], dir.path()));
    let out = toao(&["preprocess", "--dataset-dir", "holes", "--output-dir", "out2", "--theta-d", "0.9"], dir.path());
    assert_eq!(out.status.code(), Some(3));

    // subset at 0.5 matches a count made straight from the written images
    let out = ok(&toao(&["preprocess", "--dataset-dir", "holes", "--output-dir", "out3", "--theta-d", "0.5"], dir.path()));
    let mut expect = 0;
    for k in 0..3 {
        let mask = image::open(dir.path().join(format!("holes/frames/{k:06}.mask.png"))).unwrap().into_luma8();
        let depth = image::open(dir.path().join(format!("holes/frames/{k:06}.depth.png"))).unwrap().into_luma16();
        let on: Vec<u16> = mask.pixels().zip(depth.pixels()).filter(|(m, _)| m[0] != 0).map(|(_, d)| d[0]).collect();
        let valid = on.iter().filter(|&&d| (100..=2000).contains(&d)).count();
        if valid as f64 / on.len() as f64 >= 0.5 {
            expect += 1;
        }
    }
    assert_eq!(out.trim(), format!("retained {expect}/3 frames"));

    let out = toao(&["preprocess", "--dataset-dir", "missing", "--output-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = toao(&[&common[..], &["--theta-d", "1.5"]].concat(), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn extract_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = dir.path();
    let base = ["extract", "--dataset-dir", "ds", "--output-dir", "out", "--object", OBJECT];

    ok(&toao(&[&base[..], &["--part", "stem", "--name", "by-part"]].concat(), d));
    ok(&toao(&[&base[..], &["--task", "put it into the vase", "--name", "by-task"]].concat(), d));
    let a: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/by-part.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/by-task.json")).unwrap()).unwrap();
    assert_eq!(a["toao"], b["toao"]);
    assert_eq!(b["part_query"], "stem");
    assert_eq!(b["method"], "two-stage");
    assert!(d.join("out/by-part.ply").exists());

    // rerunning overwrites with identical bytes
    let before = std::fs::read(d.join("out/by-part.json")).unwrap();
    ok(&toao(&[&base[..], &["--part", "stem", "--name", "by-part"]].concat(), d));
    assert_eq!(before, std::fs::read(d.join("out/by-part.json")).unwrap());

    ok(&toao(&[&base[..], &["--task", "enjoy it"]].concat(), d));
    ok(&toao(&[&base[..], &["--part", "stem", "--baseline"]].concat(), d));
    ok(&toao(&[&base[..], &["--part", "blossoms", "--baseline"]].concat(), d));
    std::fs::remove_file(d.join("out/by-part.json")).unwrap();

    let stdout = ok(&toao(
        &["eval", "--dataset-dir", "ds", "--output-dir", "out", "--csv", "out/rows.csv", "--json", "out/*.json"],
        d,
    ));
    let reports: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    let by_name = |n: &str| reports.iter().find(|r| r["method_name"] == n).unwrap();
    let two = by_name("two-stage");
    let one = by_name("single-stage");
    assert_eq!(two["per_query"].as_array().unwrap().len(), 2);
    assert!(two["miou"].as_f64().unwrap() >= 0.9, "{two}");
    assert!(one["miou"].as_f64().unwrap() < two["miou"].as_f64().unwrap());

    let table = std::fs::read_to_string(d.join("out/eval.txt")).unwrap();
    assert!(table.contains("two-stage") && table.contains("(reference)"));
    let csv = std::fs::read_to_string(d.join("out/rows.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "method,query,iou,hit");
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn extraction_failures() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let d = dir.path();
    let base = ["extract", "--dataset-dir", "ds", "--output-dir", "out", "--object", OBJECT];
    assert_eq!(toao(&[&base[..], &["--part", "wheel"]].concat(), d).status.code(), Some(4));
    // the stub backend has no answer for an unknown task
    assert_eq!(toao(&[&base[..], &["--task", "juggle it"]].concat(), d).status.code(), Some(2));
    // neither task nor part
    assert_eq!(toao(&base, d).status.code(), Some(2));
    let out = toao(&["eval", "--dataset-dir", "ds", "--output-dir", "out", "out/none-*.json"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ask_uses_the_stub_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(&toao(&["ask", "--object", OBJECT, "--task", "enjoy it", "--show-prompt"], d));
    assert!(stdout.contains("O: a bouquet of sunflowers\nT: enjoy it"));
    assert_eq!(stdout.lines().last().unwrap(), "blossoms");

    std::fs::write(d.join("answers.json"), r#"[{"o": "mug", "t": "drink", "a": "A: the handle"}]"#).unwrap();
    std::fs::write(d.join("run.json"), r#"{"backend": {"kind": "stub", "table": "answers.json"}}"#).unwrap();
    let stdout = ok(&toao(&["ask", "--config", "run.json", "--object", "mug", "--task", "drink"], d));
    assert_eq!(stdout.trim(), "handle");
}
