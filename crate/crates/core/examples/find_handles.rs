//! Stage I on a simulated scan: handles, visual CoM and the first grasp.
//!
//! cargo run --release --example find_handles -- [scenario]

use std::path::PathBuf;

use comgrasp::com::nearest_handle;
use comgrasp::controller::{perceive, PerceptionParams};
use comgrasp::sim::{load_scenario, render_scan, true_com, NoiseModel};

fn main() -> comgrasp::Result<()> {
    let scenario = std::env::args().nth(1).map_or_else(|| PathBuf::from("crates/core/scenarios/bare_rod.toml"), PathBuf::from);
    let scene = load_scenario(&scenario)?;
    let scan = render_scan(&scene, &NoiseModel::noiseless(0));

    let per = perceive(&scan, &PerceptionParams::default())?;
    let com = per.visual_com.point;
    let truth = true_com(&scene.parts)?;
    println!("{} handles on {} object points", per.handles.len(), per.object.len());
    println!("visual CoM {:.4} {:.4} {:.4} (true {:.4} {:.4} {:.4})", com.x, com.y, com.z, truth.x, truth.y, truth.z);

    let (first, dist) = nearest_handle(&per.handles, &com)?;
    let h = &per.handles[first];
    println!("first grasp: handle {first}, radius {:.4} m, {dist:.4} m from the visual CoM", h.representative.radius);
    println!("  {}", h.to_record());

    // spacing along the object, the "one grasp per centimetre" density
    let mut xs: Vec<f64> = per.handles.iter().map(|h| h.origin().x).collect();
    xs.sort_by(f64::total_cmp);
    let widest = xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    println!("widest gap between neighboring handles: {:.1} mm", widest * 1000.0);
    Ok(())
}
