use std::fs;
use std::path::PathBuf;

use dcne::evalbench::normalize_to_uint8;
use dcne::factorize::FactorizationConfig;
use dcne::io::{decode_ppm, read_attribution, read_concise_set, read_ppm, write_attribution, RgbImage};
use dcne::net::load_network_file;
use dcne::pipeline::render::{blend_channel, overlay};
use dcne::pipeline::{
    cmd_evaluate, cmd_explain_dataset, cmd_render, cmd_synth, crp_method, Dataset, ExplainConfig, SyntheticSpec,
    DCNE_METHOD,
};
use dcne::relprop::SelectionMode;
use dcne::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        images_per_class: 5,
        concept_channels: 24,
        ..Default::default()
    }
}

fn small_explain() -> ExplainConfig {
    ExplainConfig {
        mode: SelectionMode::ClassMean,
        base_size: 40,
        factorization: FactorizationConfig {
            components: 3,
            ..Default::default()
        },
    }
}

#[test]
fn synthetic_dataset_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let synth = cmd_synth(&small_spec(), dir.path()).unwrap();
    let dataset = Dataset::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(dataset.classes.len(), 2);
    for (class, loaded) in synth.spec.classes.iter().zip(&dataset.classes) {
        assert_eq!(loaded.images.len(), 5);
        assert_eq!(loaded.features.len(), class.features.len());
    }
    for (img, loaded) in synth.images.iter().zip(dataset.classes.iter().flat_map(|c| &c.images)) {
        assert_eq!(img.image_id, loaded.image_id);
        assert_eq!(img.image, loaded.image);
        let visible = img.masks.iter().filter(|m| m.is_some()).count();
        assert_eq!(loaded.masks.len(), visible);
    }
    let net = load_network_file(&dataset.network_path().unwrap()).unwrap();
    assert_eq!(net, synth.network);
}

#[test]
fn missing_and_malformed_files_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small_spec(), dir.path()).unwrap();
    let images = dir.path().join("images");
    let mut names: Vec<PathBuf> = fs::read_dir(&images).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    fs::remove_file(&names[0]).unwrap();
    fs::write(&names[1], b"P6\n2 2\n255\nxx").unwrap();
    let err = Dataset::load(&dir.path().join("manifest.json")).unwrap_err().to_string();
    assert!(err.contains("2 problem(s)"), "{err}");
    let first = names[0].file_name().unwrap().to_string_lossy().into_owned();
    let second = names[1].file_name().unwrap().to_string_lossy().into_owned();
    assert!(err.contains(&first) && err.contains(&second), "{err}");

    fs::write(dir.path().join("manifest.json"), b"{\"classes\": 3}").unwrap();
    assert!(Dataset::load(&dir.path().join("manifest.json")).is_err());
}

#[test]
fn explain_writes_the_documented_layout_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let synth = cmd_synth(&small_spec(), &data).unwrap();
    let dataset = Dataset::load(&data.join("manifest.json")).unwrap();
    let cfg = small_explain();
    let index = cmd_explain_dataset(&synth.network, &dataset, Some("alpha"), &cfg, &out).unwrap();
    assert_eq!(index.entries.len(), 3 * 5);

    let crp_z = crp_method(3);
    let crp_n = crp_method(40);
    for img in &dataset.class("alpha").unwrap().images {
        let count = |m: &str| {
            fs::read_dir(out.join(m).join("alpha").join(&img.image_id))
                .unwrap()
                .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "f32"))
                .count()
        };
        assert_eq!(count(&crp_n), 40);
        assert_eq!(count(&crp_z), 3);
        assert_eq!(count(DCNE_METHOD), 3);
        let cs = read_concise_set(&out.join(DCNE_METHOD).join("alpha").join(&img.image_id).join("concise.dcs")).unwrap();
        assert_eq!(cs.maps.len(), 3);
        assert_eq!(cs.mixing.shape(), &[40, 3]);
    }
    assert!(out.join("index.json").exists());

    let dirs: Vec<PathBuf> = [crp_n, crp_z, DCNE_METHOD.to_string()].iter().map(|m| out.join(m)).collect();
    let report = cmd_evaluate(&dataset, &dirs, &Default::default()).unwrap_err();
    // beta was not explained; evaluation must name what is missing.
    assert!(report.to_string().contains("beta"), "{report}");
}

#[test]
fn evaluation_reports_complexity_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let synth = cmd_synth(&small_spec(), &data).unwrap();
    let dataset = Dataset::load(&data.join("manifest.json")).unwrap();
    cmd_explain_dataset(&synth.network, &dataset, None, &small_explain(), &out).unwrap();
    let dirs: Vec<PathBuf> = [crp_method(40), crp_method(3), DCNE_METHOD.into()].iter().map(|m| out.join(m)).collect();
    let report = cmd_evaluate(&dataset, &dirs, &Default::default()).unwrap();
    let per_image = |m: &str| report.summary_for(m).unwrap().complexity_per_image;
    assert_eq!(per_image(&crp_method(40)), 40.0);
    assert_eq!(per_image(&crp_method(3)), 3.0);
    assert_eq!(per_image(DCNE_METHOD), 3.0);
}

#[test]
fn raw_files_round_trip_at_storage_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dir = tempfile::tempdir().unwrap();
    let map = Tensor::new(vec![5, 7], (0..35).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
    let path = dir.path().join("m.f32");
    write_attribution(&path, &map).unwrap();
    let back = read_attribution(&path).unwrap();
    assert_eq!(back.shape(), map.shape());
    for (a, b) in map.data().iter().zip(back.data()) {
        assert_eq!(*b, *a as f32 as f64);
    }
    assert!(read_attribution(&dir.path().join("missing.f32")).is_err());
    fs::write(&path, b"short").unwrap();
    assert!(read_attribution(&path).is_err());
}

#[test]
fn overlay_matches_per_pixel_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let (h, w) = (rng.gen_range(1..10), rng.gen_range(1..10));
        let image = RgbImage {
            width: w,
            height: h,
            data: (0..h * w * 3).map(|_| rng.gen()).collect(),
        };
        let map = Tensor::new(vec![h, w], (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let v = normalize_to_uint8(&map);
        let out = overlay(&image, &map).unwrap();
        for p in 0..h * w {
            let a = 0.7 * v.data[p] as f64 / 255.0;
            let heat = [255.0, 255.0 - v.data[p] as f64, 0.0];
            for c in 0..3 {
                let base = image.data[p * 3 + c] as f64;
                let expected = ((1.0 - a) * base + a * heat[c] + 0.5).floor() as u8;
                assert_eq!(out.data[p * 3 + c], expected);
            }
        }
    }
    assert_eq!(blend_channel(100, 255, 0), 100);
}

#[test]
fn render_writes_one_overlay_per_map() {
    let dir = tempfile::tempdir().unwrap();
    let image = RgbImage {
        width: 4,
        height: 3,
        data: vec![50; 36],
    };
    let map = Tensor::new(vec![3, 4], (0..12).map(|i| i as f64).collect()).unwrap();
    let input = dir.path().join("a.f32");
    write_attribution(&input, &map).unwrap();
    let written = cmd_render(&image, &[input], dir.path()).unwrap();
    assert_eq!(written.len(), 1);
    let rendered = decode_ppm(&fs::read(&written[0]).unwrap()).unwrap();
    assert_eq!(rendered, overlay(&image, &map).unwrap());
    assert_eq!(read_ppm(&written[0]).unwrap(), rendered);

    let wrong = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
    let bad = dir.path().join("b.f32");
    write_attribution(&bad, &wrong).unwrap();
    assert!(cmd_render(&image, &[bad], dir.path()).is_err());
}
