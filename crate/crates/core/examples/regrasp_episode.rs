//! A full lift-measure-regrasp episode against the simulated robot, with a
//! scene built in code rather than read from a file.
//!
//! cargo run --release --example regrasp_episode

use comgrasp::controller::{run_episode, ControllerParams, PerceptionParams};
use comgrasp::geometry::{Point3, Vec3};
use comgrasp::sim::{NoiseModel, PartPrimitive, PortCall, SceneSpec, SimRobot};

fn main() -> comgrasp::Result<()> {
    // a rod on two blocks; the right block hides most of the mass
    let parts = vec![
        PartPrimitive::cylinder(Point3::new(0.0, 0.0, 0.945), Vec3::x(), 0.035, 0.9, 0.2),
        PartPrimitive::cuboid(Point3::new(-0.35, 0.0, 0.945), Vec3::new(0.08, 0.10, 0.09), 0.2),
        PartPrimitive::cuboid(Point3::new(0.35, 0.0, 0.945), Vec3::new(0.08, 0.10, 0.09), 0.8),
    ];
    let mut scene = SceneSpec::new("hidden_weight", parts);
    scene.noise = NoiseModel { seed: 42, ..NoiseModel::default() };

    let mut robot = SimRobot::new(scene)?;
    let report = run_episode(&mut robot, &PerceptionParams::default(), &ControllerParams::default())?;
    print!("{}", report.summary());

    let truth = robot.true_com()?;
    let grasp = report.final_grasp.expect("at least one lift").origin;
    println!("final grasp {:.4} m from the true CoM along the rod", (grasp.x - truth.x).abs());
    let lifts = robot.calls().iter().filter(|c| **c == PortCall::Lift).count();
    println!("{} port calls, {lifts} lifts", robot.calls().len());
    report.write_csv(std::io::stdout())?;
    Ok(())
}
