//! Deterministic stand-in for the robot and its head camera: composite
//! rigid objects on a table, ray-cast depth scans and ideal wrist wrenches.

mod raycast;
mod robot;
mod scenario;

pub use raycast::{render_scan, Camera};
pub use robot::{measure_wrench, PortCall, SimRobot, TorqueSample};
pub use scenario::load_scenario;

use crate::error::{Error, Result};
use crate::geometry::{Frame, Point3, Vec3};

pub const GRAVITY: f64 = 9.81;
/// How far `lift` raises the object (m).
pub const LIFT_HEIGHT: f64 = 0.05;
pub const WRENCH_RATE_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Solid cylinder along the pose x axis, centered on the pose origin.
    Cylinder { radius: f64, length: f64 },
    /// Solid box with full extents along the pose axes.
    Box { extents: Vec3 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartPrimitive {
    pub shape: Shape,
    pub pose: Frame,
    pub mass: f64,
    /// Parts can enter or leave the scene through events.
    pub present: bool,
}

impl PartPrimitive {
    pub fn cylinder(center: Point3, axis: Vec3, radius: f64, length: f64, mass: f64) -> Self {
        let x = axis.normalize();
        let (y, z) = crate::geometry::orthonormal_complement(&x);
        let pose = Frame { origin: center, x_axis: x, y_axis: y, z_axis: z };
        Self { shape: Shape::Cylinder { radius, length }, pose, mass, present: true }
    }

    pub fn cuboid(center: Point3, extents: Vec3, mass: f64) -> Self {
        Self { shape: Shape::Box { extents }, pose: Frame::translation(center), mass, present: true }
    }

    pub fn center(&self) -> Point3 {
        self.pose.origin
    }

    /// Lowest world z of the part.
    pub fn lowest_z(&self) -> f64 {
        let f = &self.pose;
        let reach = match self.shape {
            Shape::Cylinder { radius, length } => {
                let az = f.x_axis.z.abs();
                length / 2.0 * az + radius * (1.0 - az * az).max(0.0).sqrt()
            }
            Shape::Box { extents } => {
                (extents.x * f.x_axis.z.abs() + extents.y * f.y_axis.z.abs() + extents.z * f.z_axis.z.abs()) / 2.0
            }
        };
        f.origin.z - reach
    }

    /// Whether `p` (world) lies inside the solid.
    pub fn contains(&self, p: &Point3) -> bool {
        let q = self.pose.to_local(p);
        match self.shape {
            Shape::Cylinder { radius, length } => q.x.abs() <= length / 2.0 && q.y * q.y + q.z * q.z <= radius * radius,
            Shape::Box { extents } => {
                q.x.abs() <= extents.x / 2.0 && q.y.abs() <= extents.y / 2.0 && q.z.abs() <= extents.z / 2.0
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = match self.shape {
            Shape::Cylinder { radius, length } => radius > 0.0 && length > 0.0,
            Shape::Box { extents } => extents.iter().all(|&e| e > 0.0),
        };
        if !(self.mass >= 0.0) || !dims_ok || !self.pose.is_valid() {
            return Err(Error::InvalidParameter(format!("bad part {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table {
    pub height: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Default for Table {
    fn default() -> Self {
        Self { height: 0.90, x_range: (-0.65, 0.65), y_range: (-0.25, 0.30) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventAction {
    Add(usize),
    Remove(usize),
}

/// A scene change applied at the `after_iteration`-th release.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneEvent {
    pub after_iteration: usize,
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub depth_sigma: f64,
    pub outlier_rate: f64,
    pub dropout_rate: f64,
    pub force_sigma: f64,
    pub torque_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { depth_sigma: 0.002, outlier_rate: 0.005, dropout_rate: 0.02, force_sigma: 0.05, torque_sigma: 0.005, seed: 0 }
    }
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        Self { depth_sigma: 0.0, outlier_rate: 0.0, dropout_rate: 0.0, force_sigma: 0.0, torque_sigma: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = (0.0..=1.0).contains(&self.outlier_rate) && (0.0..=1.0).contains(&self.dropout_rate);
        let sigmas = self.depth_sigma >= 0.0 && self.force_sigma >= 0.0 && self.torque_sigma >= 0.0;
        if rates && sigmas {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad noise model {self:?}")))
        }
    }
}

/// Axis along which CoM positions are reported as scalars, measured from
/// the object's left-most point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureAxis {
    pub origin: Point3,
    pub direction: Vec3,
}

impl MeasureAxis {
    pub fn coordinate(&self, p: &Point3) -> f64 {
        (p - self.origin).dot(&self.direction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub table: Table,
    pub parts: Vec<PartPrimitive>,
    pub camera: Camera,
    pub gravity: f64,
    pub events: Vec<SceneEvent>,
    pub noise: NoiseModel,
    pub measure_axis: Option<MeasureAxis>,
}

impl SceneSpec {
    pub fn new(name: impl Into<String>, parts: Vec<PartPrimitive>) -> Self {
        Self {
            name: name.into(),
            table: Table::default(),
            parts,
            camera: Camera::default(),
            gravity: GRAVITY,
            events: Vec::new(),
            noise: NoiseModel::default(),
            measure_axis: None,
        }
    }

    pub fn present_parts(&self) -> impl Iterator<Item = &PartPrimitive> {
        self.parts.iter().filter(|p| p.present)
    }

    pub fn total_mass(&self) -> f64 {
        self.present_parts().map(|p| p.mass).sum()
    }

    /// Checks part geometry and that the object rests on the table.
    pub fn validate(&self) -> Result<()> {
        for p in &self.parts {
            p.validate()?;
        }
        self.noise.validate()?;
        for e in &self.events {
            let idx = match e.action {
                EventAction::Add(i) | EventAction::Remove(i) => i,
            };
            if idx >= self.parts.len() {
                return Err(Error::InvalidParameter(format!("event refers to missing part {idx}")));
            }
        }
        let lowest = self.present_parts().map(PartPrimitive::lowest_z).fold(f64::INFINITY, f64::min);
        if lowest.is_finite() && (lowest - self.table.height).abs() > 1e-3 {
            return Err(Error::InvalidParameter(format!(
                "object lowest point {lowest:.4} m is not on the table at {:.4} m",
                self.table.height
            )));
        }
        Ok(())
    }
}

/// Mass-weighted mean of part centers.
pub fn true_com(parts: &[PartPrimitive]) -> Result<Point3> {
    let present = parts.iter().filter(|p| p.present);
    let (mut m, mut acc) = (0.0, Vec3::zeros());
    for p in present {
        m += p.mass;
        acc += p.center().coords * p.mass;
    }
    if !(m > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(Point3::from(acc / m))
}
