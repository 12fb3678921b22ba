use std::path::{Path, PathBuf};

use serde_json::Value;
use tinydeploy::container::{StoredTensor, TensorFile};
use tinydeploy_cli::{run, Run, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn model(stem: &str) -> String {
    fixtures().join("models").join(format!("{stem}.json")).display().to_string()
}

fn profile(name: &str) -> String {
    fixtures().join("profiles").join(format!("{name}.json")).display().to_string()
}

fn cli(args: &[&str]) -> Run {
    run(std::iter::once("tinydeploy").chain(args.iter().copied()))
}

fn json(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.push("--json");
    let r = cli(&a);
    assert_eq!(r.code, EXIT_OK, "stderr: {}", r.stderr);
    serde_json::from_str(&r.stdout).unwrap()
}

#[test]
fn missing_model_is_a_usage_error() {
    let r = cli(&["analyze", "--model", "missing.json"]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("file not found"), "{}", r.stderr);
    assert!(r.stdout.is_empty());
}

#[test]
fn malformed_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, r#"{"name": "x"}"#).unwrap();
    let r = cli(&["analyze", "--model", p.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("bad.json"));
}

#[test]
fn bad_flags_exit_two_and_help_exits_zero() {
    assert_eq!(cli(&["plan", "--model"]).code, EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]).code, EXIT_USAGE);
    let h = cli(&["--help"]);
    assert_eq!(h.code, EXIT_OK);
    assert!(h.stdout.contains("estimate"));
}

#[test]
fn analyze_reports_fomo_counts() {
    let v = json(&["analyze", "--model", &model("fomo_mnv2_035_96_rgb")]);
    assert_eq!(v["params"], 20820);
    assert_eq!(v["macs"], 5_877_504);
    assert_eq!(v["input"], "96x96x3");
}

#[test]
fn text_and_json_agree() {
    let args = ["estimate", "--profile", &profile("gap9"), "--engine", "ne16"];
    let text = cli(&args).stdout;
    let v = json(&args);
    assert!(text.contains(&format!("latency_ms: {}\n", v["latency_ms"])));
    assert!(text.contains(&format!("days: {}\n", v["battery"]["days"])));
}

#[test]
fn quiet_prints_nothing() {
    let r = cli(&["analyze", "--model", &model("fomo_mnv2_035_96_g"), "--quiet"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stdout.is_empty() && r.stderr.is_empty());
}

#[test]
fn ssdlite_fits_on_gap9() {
    let v = json(&["plan", "--model", &model("ssdlite_mnv3_320x240"), "--profile", &profile("gap9")]);
    assert_eq!(v["deployable"], true);
    assert_eq!(v["verdict"]["status"], "deployable");
}

#[test]
fn not_deployable_still_exits_zero() {
    let r = cli(&["plan", "--model", &model("ssdlite_mnv3_320x240"), "--profile", &profile("stm32h747"), "--json"]);
    assert_eq!(r.code, EXIT_OK);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["verdict"]["status"], "not_deployable");
}

#[test]
fn gap9_ne16_battery_days() {
    let radio = json(&["estimate", "--profile", &profile("gap9"), "--engine", "ne16", "--duty", "1440", "--radio"]);
    assert_eq!(radio["battery"]["days"], 267);
    let quiet = json(&["estimate", "--profile", &profile("gap9"), "--engine", "ne16", "--no-radio"]);
    assert_eq!(quiet["battery"]["days"], 283);
}

#[test]
fn estimate_needs_a_workload_for_multi_point_profiles() {
    let r = cli(&["estimate", "--profile", &profile("stm32h747")]);
    assert_eq!(r.code, EXIT_USAGE);
    let v = json(&["estimate", "--profile", &profile("stm32h747"), "--model", &model("fomo_mnv2_035_96_g")]);
    assert_eq!(v["workload"]["mmac"], 5.213952);
}

#[test]
fn estimate_unknown_engine_is_a_domain_error() {
    let r = cli(&["estimate", "--profile", &profile("stm32h747"), "--engine", "ne16", "--mmac", "5"]);
    assert_eq!(r.code, EXIT_DOMAIN);
}

#[test]
fn report_is_byte_identical_across_runs() {
    let args = [
        "report",
        "--model",
        &model("fomo_mnv2_035_96_g"),
        &model("ssdlite_mnv3_320x240"),
        "--profile",
        &profile("stm32h747"),
        &profile("gap9"),
        "--json",
    ];
    let a = cli(&args);
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    assert_eq!(a.stdout, cli(&args).stdout);
    let v: Value = serde_json::from_str(&a.stdout).unwrap();
    let keys: Vec<(String, String)> = v["deployments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["model"].as_str().unwrap().into(), r["profile"].as_str().unwrap().into()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn out_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("plan.json");
    let r = cli(&["plan", "--model", &model("fomo_mnv2_035_96_g"), "--profile", &profile("gap9"), "--out", p.to_str().unwrap(), "--quiet"]);
    assert_eq!(r.code, EXIT_OK);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    assert_eq!(v["command"], "plan");
}

fn write_jsonl(dir: &Path, name: &str, lines: &[&str]) -> String {
    let p = dir.join(name);
    std::fs::write(&p, lines.join("\n") + "\n").unwrap();
    p.display().to_string()
}

#[test]
fn eval_half_recall() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_jsonl(
        dir.path(),
        "gt.jsonl",
        &[r#"{"image_id": "a", "class_id": 0, "box": [0, 0, 10, 10]}"#, r#"{"image_id": "b", "class_id": 0, "box": [0, 0, 10, 10]}"#],
    );
    let dets = write_jsonl(
        dir.path(),
        "dets.jsonl",
        &[
            r#"{"image_id": "a", "class_id": 0, "box": [0, 0, 10, 10], "score": 0.9}"#,
            r#"{"image_id": "b", "class_id": 0, "box": [50, 50, 60, 60], "score": 0.8}"#,
        ],
    );
    let v = json(&["eval", "--detections", &dets, "--ground-truth", &gt]);
    assert_eq!(v["map"], 0.5);
}

#[test]
fn eval_rejects_bad_lines_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_jsonl(dir.path(), "gt.jsonl", &[r#"{"image_id": "a", "class_id": 0, "box": [0, 0, 10, 10]}"#]);
    let dets = write_jsonl(dir.path(), "dets.jsonl", &[r#"{"image_id": "a", "class_id": 0, "box": [0, 0, 10, 10]}"#]);
    let r = cli(&["eval", "--detections", &dets, "--ground-truth", &gt]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("dets.jsonl"), "{}", r.stderr);
}

#[test]
fn detect_ssd_single_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let anchors = dir.path().join("anchors.json");
    std::fs::write(&anchors, r#"{"feature_maps": [{"grid": [1, 1], "scales": [0.5], "aspect_ratios": [1.0]}]}"#).unwrap();
    let raw = dir.path().join("raw.bin");
    let mut f = TensorFile::new();
    f.push(StoredTensor::f32("img0/boxes", vec![1, 4], vec![0.0; 4]));
    f.push(StoredTensor::f32("img0/scores", vec![1, 2], vec![0.0, 3.0]));
    f.write(&raw).unwrap();
    let out = dir.path().join("dets.jsonl");
    let v = json(&[
        "detect",
        "--head",
        "ssd",
        "--raw",
        raw.to_str().unwrap(),
        "--anchors",
        anchors.to_str().unwrap(),
        "--image-size",
        "320x240",
        "--out",
        out.to_str().unwrap(),
    ]);
    let d = &v["detections"][0];
    assert_eq!(d["box"], serde_json::json!([80.0, 60.0, 240.0, 180.0]));
    assert_eq!(d["image_id"], "img0");
    let written = tinydeploy::detect::read_records(&out).unwrap();
    assert_eq!(written.len(), 1);
    assert_eq!(written[0].class_id, 0);
}

#[test]
fn detect_ssd_requires_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.bin");
    TensorFile::new().write(&raw).unwrap();
    let r = cli(&["detect", "--head", "ssd", "--raw", raw.to_str().unwrap(), "--image-size", "10x10"]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn detect_fomo_blob() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.bin");
    // 2x2 grid, background + 1 class; the top-left cell is the only hit
    let mut scores = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    scores[0] = 0.1;
    scores[1] = 0.9;
    let mut f = TensorFile::new();
    f.push(StoredTensor::f32("scores", vec![2, 2, 2], scores));
    f.write(&raw).unwrap();
    let v = json(&["detect", "--head", "fomo", "--raw", raw.to_str().unwrap(), "--image-size", "16x16"]);
    assert_eq!(v["images"][0]["stride"], 8);
    let d = &v["detections"][0];
    assert_eq!(d["class_id"], 0);
    assert_eq!(d["centroid"], serde_json::json!([4.0, 4.0]));
    assert_eq!(v["detections"].as_array().unwrap().len(), 1);
}

#[test]
fn quantize_writes_int8_container() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.bin");
    let v = json(&["quantize", "--model", &model("fomo_mnv2_035_96_g"), "--calib-count", "2", "--out", out.to_str().unwrap()]);
    assert!(v["check"]["int8_vs_fakequant_max_steps"].as_f64().unwrap() <= 1.0);
    let file = TensorFile::read(&out).unwrap();
    let w = file.get("conv1.weight").unwrap();
    assert!(matches!(w.data, tinydeploy::container::TensorData::I8(_)));
    assert!(matches!(file.get("conv1.bias").unwrap().data, tinydeploy::container::TensorData::I32(_)));
}
