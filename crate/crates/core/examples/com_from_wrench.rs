//! From one wrist reading to the line holding the CoM, then to the handle
//! that minimizes the expected torque. No simulator involved.
//!
//! cargo run --example com_from_wrench

use comgrasp::com::{com_line_from_wrench, select_min_torque_handle, write_scores_csv};
use comgrasp::geometry::{point_line_displacement, Frame, Point3, Vec3, Wrench};
use comgrasp::handles::{Cylinder, Handle};

fn main() -> comgrasp::Result<()> {
    // a rod along x, grasped from above at x = 0; the object weighs 12 N
    // and pulls 0.886 N·m about the grasp
    let grasp = Point3::new(0.0, 0.0, 0.97);
    let force = Vec3::new(0.0, 0.0, -12.0);
    let torque = Vec3::new(0.0, -0.886, 0.0);
    let wrench = Wrench::new(force, torque, "grasp");

    let line = com_line_from_wrench(&wrench, &grasp, 0.5)?;
    println!("CoM line through {:.4?} along {:.3?}", line.p0.coords.as_slice(), line.u.as_slice());
    println!("lever arm |tau|/|f| = {:.4} m", torque.norm() / force.norm());

    // candidate grasps every centimetre along the rod
    let handles: Vec<Handle> = (-20..=20)
        .map(|i| {
            let c = Cylinder { centroid: Point3::new(i as f64 * 0.01, 0.0, 0.935), axis: Vec3::x(), radius: 0.035, extent: 0.05 };
            let origin = Point3::new(c.centroid.x, 0.0, 0.97);
            Handle { cylinders: vec![c; 3], representative: c, grasp: Frame::translation(origin) }
        })
        .collect();

    let sel = select_min_torque_handle(&handles, &line, &force, &grasp)?;
    let best = handles[sel.index].origin();
    println!("regrasp at x = {:.3} m, hand moves {:.4} m", best.x, sel.d_g.norm());
    let residual = point_line_displacement(&best, &line).norm();
    println!("remaining lever arm {:.4} m", residual);

    println!("\nscores of the five best candidates:");
    let mut ranked = sel.scores.clone();
    ranked.sort_by(|a, b| a.torque_effort.total_cmp(&b.torque_effort));
    write_scores_csv(&ranked[..5], std::io::stdout())?;
    Ok(())
}
