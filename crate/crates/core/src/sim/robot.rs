use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{render_scan, true_com, EventAction, NoiseModel, SceneSpec, Shape, LIFT_HEIGHT, WRENCH_RATE_HZ};
use crate::cloud::PointCloud;
use crate::controller::RobotPort;
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_deg, Frame, Point3, Vec3, Wrench};

/// One raw wrist torque reading taken while the object hangs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueSample {
    pub lift: usize,
    pub time: f64,
    pub torque: Vec3,
}

/// Ideal static wrench of the hanging object at `grasp_origin`, averaged
/// over `window` seconds of noisy 100 Hz samples.
pub fn measure_wrench(scene: &SceneSpec, grasp_origin: &Point3, window: f64, noise: &NoiseModel) -> Result<Wrench> {
    Ok(sample_wrench(scene, grasp_origin, window, noise, 0)?.0)
}

fn sample_wrench(
    scene: &SceneSpec,
    grasp_origin: &Point3,
    window: f64,
    noise: &NoiseModel,
    lift: usize,
) -> Result<(Wrench, Vec<TorqueSample>)> {
    let mass = scene.total_mass();
    let force = Vec3::new(0.0, 0.0, -mass * scene.gravity);
    let torque = if mass > 0.0 { (true_com(&scene.parts)? - grasp_origin).cross(&force) } else { Vec3::zeros() };
    let n = ((window * WRENCH_RATE_HZ).round() as usize).max(1);
    let dt = 1.0 / WRENCH_RATE_HZ;
    if noise.force_sigma == 0.0 && noise.torque_sigma == 0.0 {
        let trace = (0..n).map(|i| TorqueSample { lift, time: i as f64 * dt, torque }).collect();
        return Ok((Wrench::new(force, torque, "grasp"), trace));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut gauss3 = |sigma: f64| {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        Vec3::from(v) * sigma
    };
    let (mut f_sum, mut t_sum) = (Vec3::zeros(), Vec3::zeros());
    let mut trace = Vec::with_capacity(n);
    for i in 0..n {
        let f_i = force + gauss3(noise.force_sigma);
        let t_i = torque + gauss3(noise.torque_sigma);
        f_sum += f_i;
        t_sum += t_i;
        trace.push(TorqueSample { lift, time: i as f64 * dt, torque: t_i });
    }
    Ok((Wrench::new(f_sum / n as f64, t_sum / n as f64, "grasp"), trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PortCall {
    Scan,
    Grasp { accepted: bool },
    Lift,
    LowerAndRelease,
    ReadWrench,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HandState {
    Open,
    Holding { frame: Frame, lifted: bool },
}

/// Simulated robot: serves scans of the scene, checks grasps against the
/// true geometry and reports wrenches of the lifted object.
#[derive(Debug, Clone)]
pub struct SimRobot {
    scene: SceneSpec,
    state: HandState,
    /// Hand aperture: largest graspable radius (m).
    pub aperture: f64,
    /// Radial finger clearance required around a grasped cylinder (m).
    pub finger_gap: f64,
    releases: usize,
    scans: usize,
    lifts: usize,
    lift_offset: f64,
    calls: Vec<PortCall>,
    trace: Vec<TorqueSample>,
    lift_coms: Vec<Point3>,
}

const SCAN_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const LIFT_SALT: u64 = 0xD1B5_4A32_D192_ED03;

impl SimRobot {
    pub fn new(scene: SceneSpec) -> Result<Self> {
        scene.validate()?;
        Ok(Self {
            scene,
            state: HandState::Open,
            aperture: 0.06,
            finger_gap: 0.02,
            releases: 0,
            scans: 0,
            lifts: 0,
            lift_offset: 0.0,
            calls: Vec::new(),
            trace: Vec::new(),
            lift_coms: Vec::new(),
        })
    }

    /// Replaces the scene's noise seed, e.g. per repetition.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scene.noise.seed = seed;
        self
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    pub fn true_com(&self) -> Result<Point3> {
        true_com(&self.scene.parts)
    }

    pub fn calls(&self) -> &[PortCall] {
        &self.calls
    }

    pub fn torque_trace(&self) -> &[TorqueSample] {
        &self.trace
    }

    /// Ground-truth CoM at each wrench reading, in lift order.
    pub fn lift_coms(&self) -> &[Point3] {
        &self.lift_coms
    }

    /// Height of the object above its resting pose.
    pub fn lift_offset(&self) -> f64 {
        self.lift_offset
    }

    fn derived(&self, salt: u64, k: usize) -> NoiseModel {
        let mut n = self.scene.noise.clone();
        n.seed = n.seed.wrapping_add(salt.wrapping_mul(k as u64 + 1));
        n
    }

    /// Checks a grasp against the true geometry: the origin must sit on a
    /// cylinder the hand can close around, with free space for the fingers.
    pub fn grasp_feasible(&self, frame: &Frame) -> std::result::Result<(), String> {
        let g = frame.origin;
        let mut best: Option<(f64, usize)> = None;
        for (i, part) in self.scene.parts.iter().enumerate().filter(|(_, p)| p.present) {
            let Shape::Cylinder { radius, length } = part.shape else { continue };
            let q = part.pose.to_local(&g);
            let off = ((q.y * q.y + q.z * q.z).sqrt() - radius).abs();
            if q.x.abs() <= length / 2.0 && off <= 0.01 && axis_angle_deg(&part.pose.x_axis, &frame.x_axis) <= 20.0 {
                if best.is_none_or(|(b, _)| off < b) {
                    best = Some((off, i));
                }
            }
        }
        let Some((_, idx)) = best else {
            return Err(format!("no cylindrical surface at {:.3?}", g.coords.as_slice()));
        };
        let part = &self.scene.parts[idx];
        let Shape::Cylinder { radius, .. } = part.shape else { unreachable!() };
        if radius > self.aperture {
            return Err(format!("radius {radius:.3} m exceeds aperture {:.3} m", self.aperture));
        }
        // finger region: 4 cm along the axis around the grasp, gap-deep shell
        let local = part.pose.to_local(&g);
        for i in 0..=8 {
            let x = local.x - 0.02 + i as f64 * 0.005;
            for j in 1..=4 {
                let rho = radius + self.finger_gap * j as f64 / 4.0;
                for k in 0..36 {
                    let th = k as f64 * std::f64::consts::TAU / 36.0;
                    let p = part.pose.to_parent(&Point3::new(x, rho * th.cos(), rho * th.sin()));
                    let blocked = self.scene.parts.iter().enumerate().any(|(o, other)| o != idx && other.present && other.contains(&p));
                    if blocked {
                        return Err(format!("finger clearance blocked near {:.3?}", p.coords.as_slice()));
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_events(&mut self) {
        let n = self.releases;
        for e in self.scene.events.clone() {
            if e.after_iteration == n {
                match e.action {
                    EventAction::Add(i) => self.scene.parts[i].present = true,
                    EventAction::Remove(i) => self.scene.parts[i].present = false,
                }
            }
        }
    }
}

impl RobotPort for SimRobot {
    fn scan(&mut self) -> Result<PointCloud> {
        if matches!(self.state, HandState::Holding { lifted: true, .. }) {
            return Err(Error::Protocol("scan while the object is lifted".into()));
        }
        self.calls.push(PortCall::Scan);
        let noise = self.derived(SCAN_SALT, self.scans);
        self.scans += 1;
        Ok(render_scan(&self.scene, &noise))
    }

    fn grasp_at(&mut self, frame: &Frame) -> Result<bool> {
        if !matches!(self.state, HandState::Open) {
            return Err(Error::Protocol("grasp while already holding".into()));
        }
        let verdict = self.grasp_feasible(frame);
        self.calls.push(PortCall::Grasp { accepted: verdict.is_ok() });
        match verdict {
            Ok(()) => {
                self.state = HandState::Holding { frame: *frame, lifted: false };
                Ok(true)
            }
            Err(msg) => {
                log::warn!("grasp refused: {msg}");
                Ok(false)
            }
        }
    }

    fn lift(&mut self) -> Result<()> {
        match self.state {
            HandState::Holding { frame, lifted: false } => {
                self.calls.push(PortCall::Lift);
                self.state = HandState::Holding { frame, lifted: true };
                self.lift_offset = LIFT_HEIGHT;
                Ok(())
            }
            _ => Err(Error::Protocol("lift requires a grasped, resting object".into())),
        }
    }

    fn lower_and_release(&mut self) -> Result<()> {
        if matches!(self.state, HandState::Open) {
            return Err(Error::Protocol("release without a grasp".into()));
        }
        self.calls.push(PortCall::LowerAndRelease);
        self.state = HandState::Open;
        self.lift_offset = 0.0;
        self.releases += 1;
        self.apply_events();
        Ok(())
    }

    fn read_wrench(&mut self, settle_window: f64) -> Result<Wrench> {
        let HandState::Holding { frame, lifted: true } = self.state else {
            return Err(Error::NotLifted);
        };
        self.calls.push(PortCall::ReadWrench);
        let noise = self.derived(LIFT_SALT, self.lifts);
        // grasp and object rise together, so the lever arm is unchanged
        let (w, trace) = sample_wrench(&self.scene, &frame.origin, settle_window, &noise, self.lifts)?;
        self.lifts += 1;
        self.trace.extend(trace);
        self.lift_coms.push(true_com(&self.scene.parts)?);
        Ok(w)
    }
}
