mod common;

use common::*;
use proptest::prelude::*;
use radioplan_core::export::{cdf_csv, read_radio_map, read_weight_map, slice_csv, slice_png, write_radio_map, write_weight_map};
use radioplan_core::{coverage_cdf, geometric_center, horizontal_slice, load_scene, object_position_rmse, Error, Scene, Vec3};

fn docs_scene(name: &str) -> Scene {
    Scene::from_path(format!("{}/../../docs/scenes/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn shipped_scenes_load() {
    let factory = docs_scene("factory");
    assert!(!factory.obstacles.is_empty() && !factory.machines.is_empty() && !factory.trajectories.is_empty());
    let empty = docs_scene("empty_room");
    assert!(empty.obstacles.is_empty());
    for name in ["single_cluster", "twin_clusters", "cluttered"] {
        let scene = fixture(name);
        assert_eq!(load_scene(&scene.to_json()).unwrap(), scene);
    }
}

#[test]
fn validation_errors_name_the_field() {
    let cases = [
        (r#"{"bounds": {"x": [0, 5], "y": [0, 5]}, "machines": [{"id": "m", "position": [9, 1, 1], "traffic_weight": 1}]}"#, "machines[0].position"),
        (r#"{"bounds": {"x": [0, 5], "y": [0, 5]}, "machines": [{"id": "m", "position": [1, 1, 1], "traffic_weight": -1}]}"#, "machines[0].traffic_weight"),
        (r#"{"bounds": {"x": [5, 0], "y": [0, 5]}}"#, "bounds.x"),
        (
            r#"{"bounds": {"x": [0, 5], "y": [0, 5]}, "obstacles": [{"id": "o", "class_label": "c", "material": "unobtainium",
                "shape": {"box": {"center": [1, 1, 1], "size": [1, 1, 1]}}}]}"#,
            "obstacles[0].material",
        ),
    ];
    for (src, want) in cases {
        match load_scene(src) {
            Err(Error::Validation { path, .. }) => assert_eq!(path, want),
            other => panic!("{want}: {other:?}"),
        }
    }
    assert!(matches!(load_scene("{"), Err(Error::Parse(_))));
    assert!(matches!(load_scene(r#"{"bounds": {"x": [0, 1], "y": [0, 1]}, "extra": 1}"#), Err(Error::Parse(_))));
}

#[test]
fn rmse_matches_hand_computation() {
    let mut rng = rng(20);
    for _ in 0..20 {
        let n = 1 + (rand::Rng::random_range(&mut rng, 0..10usize));
        let truth: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng) * 5.0).collect();
        let est: Vec<Vec3> = truth.iter().map(|p| p + random_unit(&mut rng) * 0.3).collect();
        let mut expected = 0.0;
        for (p, q) in truth.iter().zip(&est) {
            let d = p - q;
            expected += ((d.x * d.x + d.y * d.y + d.z * d.z) / 3.0).sqrt();
        }
        expected /= n as f64;
        assert!((object_position_rmse(&truth, &est).unwrap() - expected).abs() < 1e-12);
    }
    assert!(matches!(object_position_rmse(&[], &[]), Err(Error::EmptyInput)));
    assert!(matches!(object_position_rmse(&[Vec3::zeros()], &[]), Err(Error::LengthMismatch(1, 0))));
}

#[test]
fn containers_round_trip_through_f32() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng(21);
    let (map, weights) = random_map(&mut rng, [4, 5, 3]);
    let bin = dir.path().join("map.bin");
    write_radio_map(&map, &bin).unwrap();
    let back = read_radio_map(&bin).unwrap();
    assert_eq!(back.grid, map.grid);
    assert_eq!(std::fs::metadata(&bin).unwrap().len(), 4 * map.values.len() as u64);
    for (a, b) in map.values.iter().zip(&back.values) {
        assert_eq!(*b, *a as f32 as f64);
    }
    let wbin = dir.path().join("weights.bin");
    write_weight_map(&weights, &wbin).unwrap();
    assert_eq!(read_weight_map(&wbin).unwrap().grid, weights.grid);
    assert!(read_weight_map(&bin).is_err());
    assert!(read_radio_map(&wbin).is_err());
}

#[test]
fn text_and_image_exports_are_stable() {
    let mut rng = rng(22);
    let (map, _) = random_map(&mut rng, [6, 4, 2]);
    let slice = horizontal_slice(&map, 0.5).unwrap();
    let csv = slice_csv(&slice);
    assert_eq!(csv.lines().count(), 1 + 6 * 4);
    assert_eq!(csv, slice_csv(&slice));
    let cdf = cdf_csv(&coverage_cdf(&map, None).unwrap());
    assert!(cdf.starts_with("rsrp_dbm,fraction\n"));
    for color in [false, true] {
        let png = slice_png(&slice, color).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
        assert_eq!(png, slice_png(&slice, color).unwrap());
    }
}

fn machine() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.0f64..15.0, 0.0f64..10.0, 0.0f64..4.0, 0.0f64..100.0)
}

proptest! {
    #[test]
    fn scenes_round_trip_through_json(machines in prop::collection::vec(machine(), 0..8), name in "[a-z]{0,12}") {
        let list: Vec<String> = machines
            .iter()
            .enumerate()
            .map(|(n, (x, y, z, w))| format!(r#"{{"id": "m{n}", "position": [{x}, {y}, {z}], "traffic_weight": {w}}}"#))
            .collect();
        let src = format!(r#"{{"name": "{name}", "bounds": {{"x": [0, 15], "y": [0, 10]}}, "machines": [{}]}}"#, list.join(","));
        let scene = load_scene(&src).unwrap();
        let json = scene.to_json();
        let again = load_scene(&json).unwrap();
        prop_assert_eq!(&again, &scene);
        prop_assert_eq!(again.to_json(), json);
        if machines.is_empty() {
            prop_assert!(matches!(geometric_center(&scene), Err(Error::EmptyMachines)));
        } else {
            let c = geometric_center(&scene).unwrap();
            let mean_x = machines.iter().map(|m| m.0).sum::<f64>() / machines.len() as f64;
            prop_assert!((c.x - mean_x).abs() < 1e-9);
        }
    }
}
