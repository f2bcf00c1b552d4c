//! Simulator behavior seen through the robot port: wrench consistency with
//! the ground truth, rigid lifts, grasp refusals and replay determinism.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use comgrasp::com::com_line_from_wrench;
use comgrasp::controller::{run_episode_traced, ControllerParams, PerceptionParams, RobotPort};
use comgrasp::geometry::{Frame, Point3};
use comgrasp::sim::{load_scenario, measure_wrench, true_com, NoiseModel, SimRobot};
use comgrasp::Error;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

#[test]
fn noiseless_wrench_lines_pass_through_the_true_com() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in ["exp1_rod_weights.toml", "exp6_frame.toml", "exp10_hammer.toml"] {
        let scene = load_scenario(&scenario(name)).unwrap();
        let com = true_com(&scene.parts).unwrap();
        for _ in 0..20 {
            let g = Point3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1), 0.98);
            let w = measure_wrench(&scene, &g, 2.0, &NoiseModel::noiseless(0)).unwrap();
            let line = com_line_from_wrench(&w, &g, 0.5).unwrap();
            assert!(line.distance_to(&com) < 1e-9, "{name}: {}", line.distance_to(&com));
        }
    }
}

#[test]
fn rod_build_puts_the_com_at_the_middle() {
    let scene = load_scenario(&scenario("exp1_rod_weights.toml")).unwrap();
    let axis = scene.measure_axis.unwrap();
    let d_r = axis.coordinate(&true_com(&scene.parts).unwrap());
    assert!((d_r - 0.520).abs() <= 0.005 + 1e-9, "d_r {d_r}");
    assert!((scene.total_mass() * scene.gravity - 12.0).abs() < 0.01);
}

#[test]
fn repeated_lifts_return_to_the_resting_pose() {
    let mut r = SimRobot::new(load_scenario(&scenario("bare_rod.toml")).unwrap()).unwrap();
    let grasp = Frame::translation(Point3::new(0.1, 0.0, 0.97));
    for _ in 0..100 {
        assert!(r.grasp_at(&grasp).unwrap());
        r.lift().unwrap();
        assert!((r.lift_offset() - comgrasp::sim::LIFT_HEIGHT).abs() < 1e-12);
        r.lower_and_release().unwrap();
        assert_eq!(r.lift_offset(), 0.0);
    }
    assert!(r.read_wrench(2.0).is_err());
}

#[test]
fn hammer_head_cannot_be_grasped() {
    let mut r = SimRobot::new(load_scenario(&scenario("exp10_hammer.toml")).unwrap()).unwrap();
    let on_head = Frame::translation(Point3::new(0.17, 0.0, 0.975));
    assert!(!r.grasp_at(&on_head).unwrap());
    assert!(r.lift().is_err());
    let on_shaft = Frame::translation(Point3::new(-0.05, 0.0, 0.97));
    assert!(r.grasp_at(&on_shaft).unwrap());
}

#[test]
fn episodes_with_events_replay_bit_identically() {
    let scene = load_scenario(&scenario("exp5_weight_removed.toml")).unwrap();
    let run = || {
        let mut r = SimRobot::new(scene.clone()).unwrap().with_seed(11);
        let pp = PerceptionParams { seed: 11, ..PerceptionParams::default() };
        let out = run_episode_traced(&mut r, &pp, &ControllerParams::default());
        (out.report, r.torque_trace().to_vec(), r.calls().to_vec())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn object_off_the_table_is_rejected() {
    let mut scene = load_scenario(&scenario("bare_rod.toml")).unwrap();
    scene.parts[0].pose.origin.z += 0.1;
    assert!(matches!(SimRobot::new(scene), Err(Error::InvalidParameter(_))));
}
