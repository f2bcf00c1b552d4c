//! Perception on rendered scans, checked against the scene that produced
//! them.

use std::path::{Path, PathBuf};

use comgrasp::cloud::pcd::{load_pcd, save_pcd};
use comgrasp::controller::{perceive, PerceptionParams};
use comgrasp::geometry::{angle_between_deg, Point3, Vec3};
use comgrasp::sim::{load_scenario, render_scan, true_com, NoiseModel, Shape};
use comgrasp::Error;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn object_pixels(scene: &comgrasp::sim::SceneSpec, scan: &comgrasp::cloud::PointCloud) -> usize {
    let floor = scene.table.height + PerceptionParams::default().object.min_height;
    scan.to_world().points.iter().filter(|p| p.z.is_finite() && p.z > floor).count()
}

#[test]
fn noiseless_scan_keeps_the_table_and_the_whole_object() {
    let scene = load_scenario(&scenario("exp1_rod_weights.toml")).unwrap();
    let scan = render_scan(&scene, &NoiseModel::noiseless(0));
    // a clean scan has nothing for the outlier stage to remove
    let mut pp = PerceptionParams::default();
    pp.preprocess.sor_k = 0;
    let per = perceive(&scan, &pp).unwrap();

    assert!(angle_between_deg(&per.plane.normal, &Vec3::z()) < 0.5);
    assert!(per.plane.signed_distance(&Point3::new(0.0, 0.0, scene.table.height)).abs() < 1e-3);
    let above = object_pixels(&scene, &scan);
    let kept = per.object.len() as f64 / above as f64;
    assert!(kept >= 0.99, "object keeps {kept:.4} of {above} pixels above the table");
    assert_eq!(per.rejected_clusters, 0);
}

#[test]
fn default_outlier_stage_only_trims_grazing_returns() {
    // sparse samples at grazing incidence exceed the global mean-distance
    // threshold even without noise
    let scene = load_scenario(&scenario("exp1_rod_weights.toml")).unwrap();
    let scan = render_scan(&scene, &NoiseModel::noiseless(0));
    let per = perceive(&scan, &PerceptionParams::default()).unwrap();
    let kept = per.object.len() as f64 / object_pixels(&scene, &scan) as f64;
    assert!(kept >= 0.90, "object keeps {kept:.4}");
}

#[test]
fn hidden_weights_pull_the_visual_estimate_off_the_true_com() {
    let scene = load_scenario(&scenario("exp1_rod_weights.toml")).unwrap();
    let per = perceive(&render_scan(&scene, &NoiseModel::noiseless(0)), &PerceptionParams::default()).unwrap();
    let truth = true_com(&scene.parts).unwrap();
    let c = per.visual_com.point;
    assert!(c.x.abs() < 0.08, "visual CoM {c:?}");
    // the bulky light block drags the estimate left, away from the truth
    assert!(c.x < truth.x - 0.01, "visual {:.4} vs true {:.4}", c.x, truth.x);
}

#[test]
fn hammer_com_sits_inside_the_head_and_no_handle_does() {
    let scene = load_scenario(&scenario("exp10_hammer.toml")).unwrap();
    let truth = true_com(&scene.parts).unwrap();
    let head = scene.parts.iter().find(|p| matches!(p.shape, Shape::Box { .. }) && p.mass > 1.0).unwrap();
    assert!(head.contains(&truth));

    let per = perceive(&render_scan(&scene, &NoiseModel::noiseless(0)), &PerceptionParams::default()).unwrap();
    assert!(!per.handles.is_empty());
    for h in &per.handles {
        let o = h.origin();
        assert!(!head.contains(&o), "handle at {o:?} inside the head");
    }
}

#[test]
fn noisy_scans_still_yield_handles_along_the_rod() {
    let scene = load_scenario(&scenario("bare_rod.toml")).unwrap();
    let per = perceive(&render_scan(&scene, &NoiseModel { seed: 5, ..NoiseModel::default() }), &PerceptionParams::default())
        .unwrap();
    assert!(per.handles.len() >= 50, "{} handles", per.handles.len());
    for h in &per.handles {
        assert!((h.representative.radius - 0.035).abs() < 0.008, "radius {}", h.representative.radius);
        assert!(h.grasp.is_valid());
    }
}

#[test]
fn saved_scans_perceive_like_the_original() {
    let scene = load_scenario(&scenario("exp11_drill.toml")).unwrap();
    let scan = render_scan(&scene, &NoiseModel::noiseless(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.pcd");
    save_pcd(&scan.to_world(), &path).unwrap();
    let loaded = load_pcd(&path).unwrap();

    let a = perceive(&scan, &PerceptionParams::default()).unwrap();
    let b = perceive(&loaded, &PerceptionParams::default()).unwrap();
    assert_eq!(a.handles.len(), b.handles.len());
    assert!((a.visual_com.point - b.visual_com.point).norm() < 1e-6);
}

#[test]
fn empty_table_has_no_handles() {
    let mut scene = load_scenario(&scenario("bare_rod.toml")).unwrap();
    for p in &mut scene.parts {
        p.present = false;
    }
    let err = perceive(&render_scan(&scene, &NoiseModel::noiseless(0)), &PerceptionParams::default()).unwrap_err();
    assert!(matches!(err, Error::NoObjectFound | Error::NoHandlesFound), "{err}");
}
