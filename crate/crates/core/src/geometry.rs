//! Value types and vector/frame/line algebra shared by every stage.
//!
//! World convention used throughout the crate: `z` up, gravity along `-z`.

use nalgebra::Matrix3;

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance for pure algebraic identities.
pub const ALGEBRA_EPS: f64 = 1e-9;

/// Inputs closer than this to parallel are rejected by [`build_frame`].
const MIN_AXIS_ANGLE_DEG: f64 = 1.0;

/// Below this magnitude a world-x component no longer decides the axis sign.
const SIGN_TIE_EPS: f64 = 1e-6;

/// An orthonormal right-handed frame: origin plus the three axes expressed in
/// the parent (usually world) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Point3,
    pub x_axis: Vec3,
    pub y_axis: Vec3,
    pub z_axis: Vec3,
}

impl Default for Frame {
    fn default() -> Self {
        Self::identity()
    }
}

impl Frame {
    pub fn identity() -> Self {
        Self {
            origin: Point3::origin(),
            x_axis: Vec3::x(),
            y_axis: Vec3::y(),
            z_axis: Vec3::z(),
        }
    }

    pub fn translation(origin: Point3) -> Self {
        Self { origin, ..Self::identity() }
    }

    /// Builds a frame from a rotation matrix whose columns are the axes.
    pub fn from_rotation(origin: Point3, rotation: &Matrix3<f64>) -> Self {
        Self {
            origin,
            x_axis: rotation.column(0).into_owned(),
            y_axis: rotation.column(1).into_owned(),
            z_axis: rotation.column(2).into_owned(),
        }
    }

    /// Frame located at `origin`, rotated by `roll`, `pitch`, `yaw` (radians,
    /// applied as Rz(yaw)·Ry(pitch)·Rx(roll)).
    pub fn from_rpy(origin: Point3, roll: f64, pitch: f64, yaw: f64) -> Self {
        let rot = nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw);
        Self::from_rotation(origin, rot.matrix())
    }

    /// Camera-style frame at `eye` whose `z` axis looks at `target`, with `x`
    /// horizontal (to the right) and `y` pointing down in the image.
    pub fn look_at(eye: Point3, target: Point3, up: Vec3) -> Result<Self> {
        let forward = target - eye;
        let n = forward.norm();
        if n < ALGEBRA_EPS {
            return Err(Error::DegenerateAxes);
        }
        let z = forward / n;
        let right = z.cross(&up);
        let rn = right.norm();
        if rn < ALGEBRA_EPS {
            return Err(Error::DegenerateAxes);
        }
        let x = right / rn;
        let y = z.cross(&x);
        Ok(Self { origin: eye, x_axis: x, y_axis: y, z_axis: z })
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.x_axis, self.y_axis, self.z_axis])
    }

    /// Maps a point given in this frame's coordinates to the parent frame.
    pub fn to_parent(&self, local: &Point3) -> Point3 {
        self.origin + self.rotation() * local.coords
    }

    pub fn vector_to_parent(&self, local: &Vec3) -> Vec3 {
        self.rotation() * local
    }

    /// Maps a parent-frame point into this frame's coordinates.
    pub fn to_local(&self, parent: &Point3) -> Point3 {
        Point3::from(self.rotation().transpose() * (parent - self.origin))
    }

    pub fn vector_to_local(&self, parent: &Vec3) -> Vec3 {
        self.rotation().transpose() * parent
    }

    /// Composition `self ∘ child`: a frame given relative to `self`, expressed
    /// in `self`'s parent.
    pub fn compose(&self, child: &Frame) -> Frame {
        Frame {
            origin: self.to_parent(&child.origin),
            x_axis: self.vector_to_parent(&child.x_axis),
            y_axis: self.vector_to_parent(&child.y_axis),
            z_axis: self.vector_to_parent(&child.z_axis),
        }
    }

    pub fn translated(&self, offset: &Vec3) -> Frame {
        Frame { origin: self.origin + offset, ..*self }
    }

    /// Largest deviation from orthonormality and right-handedness.
    pub fn orthonormality_error(&self) -> f64 {
        let (x, y, z) = (&self.x_axis, &self.y_axis, &self.z_axis);
        [
            (x.norm() - 1.0).abs(),
            (y.norm() - 1.0).abs(),
            (z.norm() - 1.0).abs(),
            x.dot(y).abs(),
            y.dot(z).abs(),
            z.dot(x).abs(),
            (x.cross(y) - z).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.orthonormality_error() <= ALGEBRA_EPS
    }
}

/// Infinite line `p(λ) = p0 + λ·u` with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line3 {
    pub p0: Point3,
    pub u: Vec3,
}

impl Line3 {
    /// Normalizes `direction`; `None` for a (near) zero direction.
    pub fn new(p0: Point3, direction: Vec3) -> Option<Self> {
        let n = direction.norm();
        (n > ALGEBRA_EPS && n.is_finite()).then(|| Self { p0, u: direction / n })
    }

    pub fn point_at(&self, lambda: f64) -> Point3 {
        self.p0 + self.u * lambda
    }

    pub fn distance_to(&self, q: &Point3) -> f64 {
        point_line_displacement(q, self).norm()
    }
}

/// Plane `n·p + offset = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn from_point_normal(point: &Point3, normal: &Vec3) -> Option<Self> {
        let n = normal.norm();
        if n < ALGEBRA_EPS || !n.is_finite() {
            return None;
        }
        let normal = normal / n;
        Some(Self { normal, offset: -normal.dot(&point.coords) })
    }

    /// Plane through three points; `None` when they are (near) collinear.
    pub fn through(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let scale = (b - a).norm() * (c - a).norm();
        if !(n.norm() > 1e-12 * scale) {
            return None;
        }
        Self::from_point_normal(a, &n)
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }

    /// Flips the plane so its normal points toward `viewpoint`.
    pub fn oriented_toward(self, viewpoint: &Point3) -> Self {
        if self.signed_distance(viewpoint) < 0.0 {
            Self { normal: -self.normal, offset: -self.offset }
        } else {
            self
        }
    }

    /// Two unit vectors spanning the plane, completing a right-handed basis
    /// with the normal.
    pub fn basis(&self) -> (Vec3, Vec3) {
        orthonormal_complement(&self.normal)
    }
}

/// Force (N) and torque (N·m) at the origin of `frame_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
    pub frame_id: String,
}

impl Wrench {
    pub fn new(force: Vec3, torque: Vec3, frame_id: impl Into<String>) -> Self {
        Self { force, torque, frame_id: frame_id.into() }
    }
}

/// Shortest vector from `q` to the line: `q + w` lies on `line` and `w ⊥ u`.
pub fn point_line_displacement(q: &Point3, line: &Line3) -> Vec3 {
    let to_p0 = line.p0 - q;
    to_p0 - line.u * to_p0.dot(&line.u)
}

/// Two unit vectors orthogonal to `n` (assumed unit) such that `(a, b, n)`
/// is right-handed.
pub fn orthonormal_complement(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let a = helper.cross(n).normalize();
    let b = n.cross(&a);
    (a, b)
}

/// Sign-canonical form of an axis direction: positive world-x component, or
/// positive world-y when the x component is negligible, then positive z.
pub fn canonical_axis(dir: &Vec3) -> Vec3 {
    let sign = if dir.x.abs() >= SIGN_TIE_EPS {
        dir.x.signum()
    } else if dir.y.abs() >= SIGN_TIE_EPS {
        dir.y.signum()
    } else {
        dir.z.signum()
    };
    dir * sign
}

pub fn angle_between_deg(a: &Vec3, b: &Vec3) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// Angle between two undirected axes, in `[0, 90]` degrees.
pub fn axis_angle_deg(a: &Vec3, b: &Vec3) -> f64 {
    let c = (a.dot(b).abs() / (a.norm() * b.norm())).clamp(0.0, 1.0);
    c.acos().to_degrees()
}

/// Grasp-style frame: `x` along `x_dir` (canonical sign), `y` the part of
/// `y_hint` orthogonal to `x`, `z = x × y` facing `viewpoint`. When `z` has to
/// be flipped to face the viewpoint, `x` flips with it.
pub fn build_frame(x_dir: &Vec3, y_hint: &Vec3, viewpoint: &Point3, origin: &Point3) -> Result<Frame> {
    let xn = x_dir.norm();
    let yn = y_hint.norm();
    if xn <= ALGEBRA_EPS || yn <= ALGEBRA_EPS || !xn.is_finite() || !yn.is_finite() {
        return Err(Error::DegenerateAxes);
    }
    if axis_angle_deg(x_dir, y_hint) <= MIN_AXIS_ANGLE_DEG {
        return Err(Error::DegenerateAxes);
    }
    let mut x = canonical_axis(&(x_dir / xn));
    let y_raw = y_hint - x * x.dot(y_hint);
    let y = y_raw.normalize();
    let mut z = x.cross(&y);
    if z.dot(&(viewpoint - origin)) < 0.0 {
        z = -z;
        x = -x;
    }
    Ok(Frame { origin: *origin, x_axis: x, y_axis: y, z_axis: z })
}
