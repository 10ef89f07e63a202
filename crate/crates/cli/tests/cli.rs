use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dcne::pipeline::SyntheticSpec;
use serde_json::Value;

fn dcne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcne")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = dcne(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset in `root/data`.
fn synth(root: &Path) -> PathBuf {
    let spec = SyntheticSpec {
        images_per_class: 5,
        concept_channels: 24,
        ..Default::default()
    };
    let spec_path = root.join("spec.json");
    fs::write(&spec_path, serde_json::to_vec(&spec).unwrap()).unwrap();
    let data = root.join("data");
    ok(&["synth", "--spec", s(&spec_path), "--out", s(&data)]);
    data
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn files_with(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_images_masks_and_network() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    assert_eq!(files_with(&data.join("images"), "ppm").len(), 10);
    assert!(!files_with(&data.join("masks"), "pgm").is_empty());
    let manifest = read_json(&data.join("manifest.json"));
    assert_eq!(manifest["classes"].as_array().unwrap().len(), 2);
    assert!(data.join("network.json").exists() && data.join("network.bin").exists());
}

#[test]
fn explain_single_image_with_one_component() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("out");
    let image = &files_with(&data.join("images"), "ppm")[0];
    ok(&[
        "explain", "--net", s(&data.join("network.json")), "--out", s(&out), "--components", "1", "--base-size", "20",
        s(image),
    ]);
    let stem = image.file_stem().unwrap().to_str().unwrap();
    let dcne_dir = out.join("dcne").join("images").join(stem);
    assert_eq!(files_with(&dcne_dir, "f32").len(), 1);
    assert_eq!(files_with(&out.join("crp-20").join("images").join(stem), "f32").len(), 20);
    assert_eq!(read_json(&out.join("index.json"))["command"], "explain");
}

#[test]
fn explain_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "explain", "--manifest", s(&data.join("manifest.json")), "--out", s(&out), "--class", "beta",
            "--components", "3", "--base-size", "30",
        ]);
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut stack = vec![PathBuf::new()];
    let mut compared = 0;
    while let Some(rel) = stack.pop() {
        for entry in fs::read_dir(a.join(&rel)).unwrap() {
            let name = rel.join(entry.unwrap().file_name());
            if a.join(&name).is_dir() {
                stack.push(name);
            } else {
                assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
                compared += 1;
            }
        }
    }
    assert!(compared > 100);
}

#[test]
fn evaluate_reports_scores_and_complexity() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("out");
    let manifest = data.join("manifest.json");
    ok(&["explain", "--manifest", s(&manifest), "--out", s(&out), "--components", "3", "--base-size", "30"]);
    let report_dir = dir.path().join("report");
    ok(&[
        "evaluate", "--manifest", s(&manifest), "--out", s(&report_dir), s(&out.join("crp-30")), s(&out.join("crp-3")),
        s(&out.join("dcne")),
    ]);
    let report = read_json(&report_dir.join("report.json"));
    let summaries = report["summary"].as_array().unwrap();
    let per_image = |m: &str| {
        summaries.iter().find(|x| x["method"] == m).unwrap()["complexity_per_image"].as_f64().unwrap()
    };
    assert_eq!(per_image("crp-30") / per_image("dcne"), 10.0);
    assert!(report_dir.join("report.csv").exists());
}

#[test]
fn mask_copies_score_perfectly() {
    // A "method" whose single map is the feature mask itself.
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let manifest = read_json(&data.join("manifest.json"));
    let method = dir.path().join("oracle");
    let alpha = &manifest["classes"][0];
    for img in alpha["images"].as_array().unwrap() {
        let id = img["image_id"].as_str().unwrap();
        let target = method.join("alpha").join(id);
        fs::create_dir_all(&target).unwrap();
        if let Some(mask) = img["masks"][0].as_str() {
            let pgm = fs::read(data.join(mask)).unwrap();
            write_map_from_pgm(&pgm, &target.join("map_000.f32"));
        } else {
            write_map_from_pgm(&blank_pgm(32, 32), &target.join("map_000.f32"));
        }
    }
    // Score only the first alpha feature, which every map copies.
    let mut m = manifest.clone();
    m["classes"] = Value::Array(vec![alpha.clone()]);
    m["classes"][0]["features"] = Value::Array(vec![alpha["features"][0].clone()]);
    for img in m["classes"][0]["images"].as_array_mut().unwrap() {
        let first = img["masks"][0].clone();
        img["masks"] = Value::Array(vec![first]);
    }
    fs::write(data.join("alpha_only.json"), serde_json::to_vec(&m).unwrap()).unwrap();
    let report_dir = dir.path().join("report");
    ok(&["evaluate", "--manifest", s(&data.join("alpha_only.json")), "--out", s(&report_dir), s(&method)]);
    let report = read_json(&report_dir.join("report.json"));
    let q = &report["classes"][0]["features"][0]["q_f"];
    assert_eq!(q.as_f64(), Some(1.0), "{report}");
}

fn blank_pgm(w: usize, h: usize) -> Vec<u8> {
    let mut v = format!("P5\n{w} {h}\n255\n").into_bytes();
    v.extend(std::iter::repeat_n(0, w * h));
    v
}

/// Converts a binary PGM into an attribution file with values 0 or 1.
fn write_map_from_pgm(pgm: &[u8], path: &Path) {
    let img = dcne::io::decode_pgm(pgm).unwrap();
    let t = dcne::Tensor::new(vec![img.height, img.width], img.data.iter().map(|&v| v as f64 / 255.0).collect()).unwrap();
    dcne::io::write_attribution(path, &t).unwrap();
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dcne(&["evaluate", "--manifest", s(&missing), "--out", s(dir.path()), s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("nope.json"), "{err}");

    let data = synth(dir.path());
    let out = dcne(&[
        "explain", "--manifest", s(&data.join("manifest.json")), "--out", s(&dir.path().join("o")), "--class", "gamma",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));

    // Usage errors come from the argument parser.
    assert!(!dcne(&["explain"]).status.success());
    assert!(!dcne(&["frobnicate"]).status.success());
}

#[test]
fn render_overlays_maps_and_concise_sets() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("out");
    let image = &files_with(&data.join("images"), "ppm")[0];
    ok(&["explain", "--net", s(&data.join("network.json")), "--out", s(&out), "--components", "2", "--base-size", "10", s(image)]);
    let stem = image.file_stem().unwrap().to_str().unwrap();
    let dcne_dir = out.join("dcne").join("images").join(stem);
    let rendered = dir.path().join("rendered");
    fs::create_dir_all(&rendered).unwrap();
    ok(&[
        "render", "--image", s(image), "--out", s(&rendered), s(&dcne_dir.join("concise.dcs")),
        s(&dcne_dir.join("map_000.f32")),
    ]);
    assert_eq!(files_with(&rendered, "ppm").len(), 3);
}
