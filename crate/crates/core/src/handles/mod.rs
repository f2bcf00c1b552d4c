//! Handle localization: dense cylinder fits over the object surface,
//! clearance checks, co-linear grouping and grasp frames.

mod quadric;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use quadric::{fit_quadric, Curvature, Quadric};

use crate::cloud::{PointCloud, SpatialGrid};
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_deg, build_frame, canonical_axis, Frame, Line3, Plane, Point3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct HandleParams {
    /// Radius of the neighborhood fitted around each seed (m).
    pub neighborhood_radius: f64,
    /// Pitch of the seed grid (m).
    pub seed_spacing: f64,
    /// Curvature gates (1/m): the straight direction must stay within
    /// ±k_min, the curled one within [k_min, k_max].
    pub k_min: f64,
    pub k_max: f64,
    /// Radial depth of the point-free gap the fingers need (m).
    pub gap_clearance: f64,
    pub handle_count: usize,
    pub axis_tol_deg: f64,
    pub centroid_tol: f64,
    pub radius_tol: f64,
    /// Largest radius the hand can close around (m).
    pub max_radius: f64,
    /// Radial band around the fitted surface that still counts as the
    /// surface itself during the clearance check (m).
    pub surface_tol: f64,
    /// Largest RMS radial residual of an accepted fit (m).
    pub fit_tol: f64,
    pub min_points: usize,
}

impl Default for HandleParams {
    fn default() -> Self {
        Self {
            neighborhood_radius: 0.025,
            seed_spacing: 0.01,
            k_min: 10.0,
            k_max: 67.0,
            gap_clearance: 0.02,
            handle_count: 3,
            axis_tol_deg: 10.0,
            centroid_tol: 0.01,
            radius_tol: 0.01,
            max_radius: 0.06,
            surface_tol: 0.005,
            fit_tol: 0.004,
            min_points: 10,
        }
    }
}

impl HandleParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.neighborhood_radius > 0.0
            && self.seed_spacing > 0.0
            && self.seed_spacing <= 0.01 + 1e-12
            && self.k_min > 0.0
            && self.k_min < self.k_max
            && self.gap_clearance > self.surface_tol
            && self.handle_count >= 1
            && self.max_radius > 0.0
            && self.min_points >= 10;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("handle parameters out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub centroid: Point3,
    pub axis: Vec3,
    pub radius: f64,
    /// Axial span of the supporting neighborhood (m).
    pub extent: f64,
}

impl Cylinder {
    pub fn axis_line(&self) -> Line3 {
        Line3 { p0: self.centroid, u: self.axis }
    }

    /// Axial coordinate and radial distance of `p`.
    pub fn local(&self, p: &Point3) -> (f64, f64) {
        let d = p - self.centroid;
        let t = d.dot(&self.axis);
        (t, (d - self.axis * t).norm())
    }

    pub fn compatible_with(&self, other: &Cylinder, params: &HandleParams) -> bool {
        axis_angle_deg(&self.axis, &other.axis) <= params.axis_tol_deg
            && self.axis_line().distance_to(&other.centroid) <= params.centroid_tol
            && other.axis_line().distance_to(&self.centroid) <= params.centroid_tol
            && (self.radius - other.radius).abs() <= params.radius_tol
    }
}

/// Why a neighborhood did not yield a handle cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rejection {
    TooFewPoints,
    TooFlat,
    TooCurved,
    /// Quadric accepted but points scatter too far from the cylinder.
    PoorFit,
    /// Wider than the hand aperture.
    TooWide,
    /// Points inside the finger gap or inside the cylinder body.
    Obstructed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Handle {
    pub cylinders: Vec<Cylinder>,
    pub representative: Cylinder,
    pub grasp: Frame,
}

impl Handle {
    pub fn origin(&self) -> Point3 {
        self.grasp.origin
    }

    /// One-line text record: origin, the three axes, radius.
    pub fn to_record(&self) -> String {
        let g = &self.grasp;
        let mut s = String::new();
        let _ = write!(s, "origin {:.6} {:.6} {:.6}", g.origin.x, g.origin.y, g.origin.z);
        for (name, v) in [("x", g.x_axis), ("y", g.y_axis), ("z", g.z_axis)] {
            let _ = write!(s, " {name} {:.6} {:.6} {:.6}", v.x, v.y, v.z);
        }
        let _ = write!(s, " radius {:.6}", self.representative.radius);
        s
    }
}

/// Fits one cylinder to a neighborhood through a Taubin quadric and its
/// principal curvatures at the centroid's foot point.
pub fn fit_cylinder_patch(
    neighborhood: &PointCloud,
    params: &HandleParams,
    viewpoint: &Point3,
) -> std::result::Result<Cylinder, Rejection> {
    let pts: Vec<Point3> = neighborhood.valid_indices().into_iter().map(|i| neighborhood.points[i]).collect();
    fit_cylinder_points(&pts, params, viewpoint)
}

fn fit_cylinder_points(
    pts: &[Point3],
    params: &HandleParams,
    viewpoint: &Point3,
) -> std::result::Result<Cylinder, Rejection> {
    if pts.len() < params.min_points {
        return Err(Rejection::TooFewPoints);
    }
    let quad = fit_quadric(pts).ok_or(Rejection::TooFlat)?;
    let centroid = Point3::from(pts.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / pts.len() as f64);
    let foot = quad.project(&centroid).ok_or(Rejection::TooFlat)?;
    let curv = quad.curvatures(&foot, viewpoint).ok_or(Rejection::TooFlat)?;
    if curv.k2 < params.k_min {
        return Err(Rejection::TooFlat);
    }
    if curv.k2 > params.k_max || curv.k1.abs() > params.k_min {
        return Err(Rejection::TooCurved);
    }
    let axis = canonical_axis(&curv.dir1);
    let center = foot - curv.normal / curv.k2;
    let line = Line3 { p0: center, u: axis };

    // radius: least-squares over radial distances to the fitted axis
    let dists: Vec<f64> = pts.iter().map(|p| line.distance_to(p)).collect();
    let radius = dists.iter().sum::<f64>() / dists.len() as f64;
    let rms = (dists.iter().map(|d| (d - radius).powi(2)).sum::<f64>() / dists.len() as f64).sqrt();
    if rms > params.fit_tol {
        return Err(Rejection::PoorFit);
    }
    let t_c = (centroid - center).dot(&axis);
    let on_axis = center + axis * t_c;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        let t = (p - on_axis).dot(&axis);
        lo = lo.min(t);
        hi = hi.max(t);
    }
    Ok(Cylinder { centroid: on_axis, axis, radius, extent: hi - lo })
}

/// Outcome of handle detection including the intermediate products.
#[derive(Debug, Clone, Default)]
pub struct HandleDetection {
    pub handles: Vec<Handle>,
    pub seeds: usize,
    /// Cylinders that passed fitting and clearance, in axis order.
    pub accepted: Vec<Cylinder>,
    pub rejections: BTreeMap<Rejection, usize>,
    /// Runs dropped because their axis is parallel to the plane normal.
    pub vertical: usize,
}

/// Handles over `object`, ordered along the object's principal axis.
pub fn detect_handles(
    object: &PointCloud,
    params: &HandleParams,
    plane: &Plane,
    viewpoint: &Point3,
    seed: u64,
) -> Result<Vec<Handle>> {
    let det = detect_handles_detailed(object, params, plane, viewpoint, seed)?;
    if det.handles.is_empty() {
        return Err(Error::NoHandlesFound);
    }
    Ok(det.handles)
}

pub fn detect_handles_detailed(
    object: &PointCloud,
    params: &HandleParams,
    plane: &Plane,
    viewpoint: &Point3,
    seed: u64,
) -> Result<HandleDetection> {
    params.validate()?;
    let valid = object.valid_indices();
    if valid.is_empty() {
        return Err(Error::NoHandlesFound);
    }
    let pts = &object.points;
    let grid = SpatialGrid::with_subset(pts, params.neighborhood_radius, &valid);
    let seeds = sample_seeds(pts, &valid, params.seed_spacing, seed);
    let mut det = HandleDetection { seeds: seeds.len(), ..Default::default() };

    let mut nbrs = Vec::new();
    let mut accepted = Vec::new();
    for &s in &seeds {
        grid.radius_into(&pts[s], params.neighborhood_radius, &mut nbrs);
        let local: Vec<Point3> = nbrs.iter().map(|&i| pts[i]).collect();
        let verdict = fit_cylinder_points(&local, params, viewpoint).and_then(|c| {
            if c.radius > params.max_radius {
                Err(Rejection::TooWide)
            } else if !clearance_free(&c, pts, &grid, params) {
                Err(Rejection::Obstructed)
            } else {
                Ok(c)
            }
        });
        match verdict {
            Ok(c) => accepted.push(c),
            Err(r) => *det.rejections.entry(r).or_default() += 1,
        }
    }

    let axis = principal_axis(pts, &valid);
    let along = |p: &Point3| p.coords.dot(&axis);
    accepted.sort_by(|a, b| along(&a.centroid).total_cmp(&along(&b.centroid)));

    let mut used_repr = std::collections::BTreeSet::new();
    let mut handles: Vec<(f64, usize, Handle)> = Vec::new();
    for run in colinear_runs(&accepted, params, &along) {
        let repr_idx = run[run.len() / 2];
        if !used_repr.insert(repr_idx) {
            continue;
        }
        let cylinders: Vec<Cylinder> = run.iter().map(|&i| accepted[i]).collect();
        let representative = accepted[repr_idx];
        match grasp_frame_with_grid(&representative, plane, viewpoint, object, &grid, params) {
            Ok(grasp) => {
                let key = along(&grasp.origin);
                handles.push((key, handles.len(), Handle { cylinders, representative, grasp }));
            }
            Err(_) => det.vertical += 1,
        }
    }
    handles.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    det.handles = handles.into_iter().map(|(_, _, h)| h).collect();
    det.accepted = accepted;
    Ok(det)
}

/// One seed per occupied cell of a `spacing` grid: the member point nearest
/// to a random location inside the cell. The jitter keeps the seeds (and so
/// the handle origins) from aligning with the grid.
fn sample_seeds(pts: &[Point3], valid: &[usize], spacing: f64, seed: u64) -> Vec<usize> {
    let lo = valid.iter().fold(Point3::from(Vec3::repeat(f64::INFINITY)), |a, &i| a.inf(&pts[i]));
    let key = |p: &Point3| {
        let d = (p - lo) / spacing;
        (d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64)
    };
    let mut cells: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for &i in valid {
        cells.entry(key(&pts[i])).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cells
        .iter()
        .map(|(k, members)| {
            let target = lo
                + Vec3::new(
                    (k.0 as f64 + rng.random::<f64>()) * spacing,
                    (k.1 as f64 + rng.random::<f64>()) * spacing,
                    (k.2 as f64 + rng.random::<f64>()) * spacing,
                );
            *members
                .iter()
                .min_by(|&&a, &&b| (pts[a] - target).norm_squared().total_cmp(&(pts[b] - target).norm_squared()))
                .expect("occupied cell")
        })
        .collect()
}

/// True when no point lies inside the cylinder body or in the finger gap
/// `(radius + surface_tol, radius + gap_clearance)` over the axial extent.
fn clearance_free(c: &Cylinder, pts: &[Point3], grid: &SpatialGrid, params: &HandleParams) -> bool {
    let reach = ((c.extent / 2.0).powi(2) + (c.radius + params.gap_clearance).powi(2)).sqrt();
    grid.radius(&c.centroid, reach).into_iter().all(|i| !violates_clearance(c, &pts[i], params))
}

/// The forbidden-region test behind the clearance check.
pub fn violates_clearance(c: &Cylinder, p: &Point3, params: &HandleParams) -> bool {
    let (t, rho) = c.local(p);
    if t.abs() > c.extent / 2.0 {
        return false;
    }
    rho < c.radius - params.surface_tol || (rho > c.radius + params.surface_tol && rho < c.radius + params.gap_clearance)
}

/// Greedy runs of `handle_count` mutually compatible cylinders whose
/// consecutive axial gaps lie in [0.5, 2] seed spacings. Every cylinder may
/// start a run, so runs overlap.
fn colinear_runs(cyls: &[Cylinder], params: &HandleParams, along: &dyn Fn(&Point3) -> f64) -> Vec<Vec<usize>> {
    let (min_gap, max_gap) = (0.5 * params.seed_spacing, 2.0 * params.seed_spacing);
    let pos: Vec<f64> = cyls.iter().map(|c| along(&c.centroid)).collect();
    let mut runs = Vec::new();
    for start in 0..cyls.len() {
        let mut run = vec![start];
        let mut j = start + 1;
        while run.len() < params.handle_count && j < cyls.len() {
            let gap = pos[j] - pos[*run.last().unwrap()];
            if gap > max_gap {
                break;
            }
            if gap >= min_gap && run.iter().all(|&m| cyls[m].compatible_with(&cyls[j], params)) {
                run.push(j);
            }
            j += 1;
        }
        if run.len() == params.handle_count {
            runs.push(run);
        }
    }
    runs
}

fn principal_axis(pts: &[Point3], valid: &[usize]) -> Vec3 {
    let n = valid.len() as f64;
    let mean = valid.iter().fold(Vec3::zeros(), |a, &i| a + pts[i].coords) / n;
    let mut cov = Matrix3::zeros();
    for &i in valid {
        let d = pts[i].coords - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    canonical_axis(&eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned())
}

/// Grasp frame of a handle: x along the cylinder axis, y along the plane
/// normal, z toward the sensor. The origin sits on the cylinder's upper
/// surface, at the 95th percentile height of the object points around the
/// middle cylinder.
pub fn build_grasp_frame(
    cylinders: &[Cylinder],
    plane: &Plane,
    viewpoint: &Point3,
    object: &PointCloud,
    params: &HandleParams,
) -> Result<Frame> {
    let representative = cylinders.get(cylinders.len() / 2).ok_or(Error::EmptyHandleList)?;
    let valid = object.valid_indices();
    let grid = SpatialGrid::with_subset(&object.points, params.neighborhood_radius, &valid);
    grasp_frame_with_grid(representative, plane, viewpoint, object, &grid, params)
}

fn grasp_frame_with_grid(
    representative: &Cylinder,
    plane: &Plane,
    viewpoint: &Point3,
    object: &PointCloud,
    grid: &SpatialGrid,
    params: &HandleParams,
) -> Result<Frame> {
    let c = representative;
    let n_p = plane.normal;
    let reach = ((c.extent / 2.0).powi(2) + (c.radius + params.surface_tol).powi(2)).sqrt();
    let mut heights: Vec<f64> = grid
        .radius(&c.centroid, reach)
        .into_iter()
        .filter_map(|i| {
            let p = &object.points[i];
            let (t, rho) = c.local(p);
            (t.abs() <= c.extent / 2.0 && rho <= c.radius + params.surface_tol).then(|| (p - c.centroid).dot(&n_p))
        })
        .collect();
    let lift = if heights.is_empty() {
        c.radius
    } else {
        heights.sort_by(f64::total_cmp);
        percentile_sorted(&heights, 0.95)
    };
    let origin = c.centroid + n_p * lift;
    build_frame(&c.axis, &n_p, viewpoint, &origin)
}

/// Linear-interpolated percentile of an ascending slice.
fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
