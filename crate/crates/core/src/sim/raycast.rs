use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{NoiseModel, PartPrimitive, SceneSpec, Shape, Table};
use crate::cloud::PointCloud;
use crate::geometry::{Frame, Point3, Vec3};

/// Pinhole depth camera; its frame looks along +z with x right, y down.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub pose: Frame,
    pub width: usize,
    pub height: usize,
    pub vfov_deg: f64,
}

impl Default for Camera {
    /// 1 m from the table center, pitched 30° down, facing +y.
    fn default() -> Self {
        let target = Point3::new(0.0, 0.0, 0.90);
        let pitch = 30f64.to_radians();
        let eye = target + Vec3::new(0.0, -pitch.cos(), pitch.sin());
        Self::looking_at(eye, target)
    }
}

impl Camera {
    pub fn looking_at(eye: Point3, target: Point3) -> Self {
        let pose = Frame::look_at(eye, target, Vec3::z()).expect("camera target differs from eye and is not straight below");
        Self { pose, width: 1024, height: 1024, vfov_deg: 70.0 }
    }

    fn focal_px(&self) -> f64 {
        (self.height as f64 / 2.0) / (self.vfov_deg.to_radians() / 2.0).tan()
    }

    /// Unit ray through the center of pixel (u, v), camera frame.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        let f = self.focal_px();
        Vec3::new(
            (u as f64 + 0.5 - self.width as f64 / 2.0) / f,
            (v as f64 + 0.5 - self.height as f64 / 2.0) / f,
            1.0,
        )
        .normalize()
    }
}

const OUTLIER_RANGE: (f64, f64) = (0.3, 2.5);
const HIT_EPS: f64 = 1e-9;

/// Organized depth scan in the camera frame. Each row draws its noise from
/// its own stream, so a pixel's noise depends only on the seed and its
/// position in the image.
pub fn render_scan(scene: &SceneSpec, noise: &NoiseModel) -> PointCloud {
    let cam = &scene.camera;
    let eye = cam.pose.origin;
    let parts: Vec<&PartPrimitive> = scene.present_parts().collect();
    let noisy = noise.depth_sigma > 0.0 || noise.outlier_rate > 0.0 || noise.dropout_rate > 0.0;
    let mut points = Vec::with_capacity(cam.width * cam.height);
    for v in 0..cam.height {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(v as u64);
        for u in 0..cam.width {
            let local = cam.pixel_ray(u, v);
            let dir = cam.pose.vector_to_parent(&local);
            let mut range = nearest_hit(&scene.table, &parts, &eye, &dir);
            if noisy {
                let drop: f64 = rng.random();
                let out: f64 = rng.random();
                let depth: f64 = rng.random();
                let gauss: f64 = rng.sample(StandardNormal);
                if out < noise.outlier_rate {
                    range = Some(OUTLIER_RANGE.0 + depth * (OUTLIER_RANGE.1 - OUTLIER_RANGE.0));
                } else if let Some(r) = range.as_mut() {
                    *r += gauss * noise.depth_sigma;
                }
                if drop < noise.dropout_rate {
                    range = None;
                }
            }
            points.push(match range {
                Some(r) => Point3::from(local * r),
                None => Point3::new(f64::NAN, f64::NAN, f64::NAN),
            });
        }
    }
    let mut cloud = PointCloud::new(points, "camera");
    cloud.organized = Some((cam.width, cam.height));
    cloud.world_pose = cam.pose;
    cloud
}

fn nearest_hit(table: &Table, parts: &[&PartPrimitive], eye: &Point3, dir: &Vec3) -> Option<f64> {
    let mut best = hit_table(table, eye, dir);
    for p in parts {
        if let Some(t) = hit_part(p, eye, dir) {
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }
    best
}

fn hit_table(table: &Table, eye: &Point3, dir: &Vec3) -> Option<f64> {
    if dir.z >= 0.0 {
        return None;
    }
    let t = (table.height - eye.z) / dir.z;
    let p = eye + dir * t;
    let inside = (table.x_range.0..=table.x_range.1).contains(&p.x) && (table.y_range.0..=table.y_range.1).contains(&p.y);
    (t > HIT_EPS && inside).then_some(t)
}

/// Ray parameter of the first entry into the solid, if any.
pub(crate) fn hit_part(part: &PartPrimitive, eye: &Point3, dir: &Vec3) -> Option<f64> {
    let o = part.pose.to_local(eye);
    let d = part.pose.vector_to_local(dir);
    match part.shape {
        Shape::Cylinder { radius, length } => hit_cylinder(&o, &d, radius, length / 2.0),
        Shape::Box { extents } => hit_box(&o, &d, &(extents / 2.0)),
    }
}

fn hit_cylinder(o: &Point3, d: &Vec3, r: f64, half: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > HIT_EPS && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d.y * d.y + d.z * d.z;
    if a > 0.0 {
        let b = 2.0 * (o.y * d.y + o.z * d.z);
        let c = o.y * o.y + o.z * o.z - r * r;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                if (o.x + t * d.x).abs() <= half {
                    consider(t);
                }
            }
        }
    }
    if d.x != 0.0 {
        for cap in [-half, half] {
            let t = (cap - o.x) / d.x;
            let (y, z) = (o.y + t * d.y, o.z + t * d.z);
            if y * y + z * z <= r * r {
                consider(t);
            }
        }
    }
    best
}

fn hit_box(o: &Point3, d: &Vec3, half: &Vec3) -> Option<f64> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k] == 0.0 {
            if o[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let a = (-half[k] - o[k]) / d[k];
        let b = (half[k] - o[k]) / d[k];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t1 < t0 || t1 <= HIT_EPS {
        return None;
    }
    Some(if t0 > HIT_EPS { t0 } else { t1 })
}
