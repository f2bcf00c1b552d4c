//! Render one scan of a scenario, run the filtering and segmentation chain
//! and save each stage as a PCD file.
//!
//! cargo run --release --example scan_pipeline -- [scenario] [out_dir]

use std::path::PathBuf;

use comgrasp::cloud::pcd::save_pcd;
use comgrasp::cloud::{
    estimate_normals, extract_target_object, preprocess_scan, segment_dominant_plane, ObjectParams, PlaneParams,
    PreprocessParams,
};
use comgrasp::sim::{load_scenario, render_scan};

fn main() -> comgrasp::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario = args.next().map_or_else(|| PathBuf::from("crates/core/scenarios/exp1_rod_weights.toml"), PathBuf::from);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/scan_pipeline".into()));
    std::fs::create_dir_all(&out)?;

    let scene = load_scenario(&scenario)?;
    let raw = render_scan(&scene, &scene.noise);
    println!("raw: {} pixels, {} valid", raw.len(), raw.valid_count());
    save_pcd(&raw, &out.join("raw.pcd"))?;

    let world = raw.to_world();
    let filtered = preprocess_scan(&world, &PreprocessParams::default())?;
    println!("filtered: {} points", filtered.len());
    save_pcd(&filtered, &out.join("filtered.pcd"))?;

    let with_normals = estimate_normals(&filtered, 20, &world.viewpoint)?;
    let (plane, inliers) = segment_dominant_plane(&with_normals, &PlaneParams::default())?;
    println!("table: n = {:.4?}, offset {:.4}, {} inliers", plane.normal.as_slice(), plane.offset, inliers.len());

    let seg = extract_target_object(&with_normals, &plane, &inliers, &ObjectParams::default())?;
    println!("object: {} points, {} other clusters", seg.object.len(), seg.rejected_clusters);
    save_pcd(&seg.object, &out.join("object.pcd"))?;
    println!("wrote {}", out.display());
    Ok(())
}
