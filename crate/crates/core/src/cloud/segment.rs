//! Dominant support plane extraction and tabletop object isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{covariance_normal, PointCloud, SpatialGrid};
use crate::error::{Error, Result};
use crate::geometry::{Plane, Point3};

/// Boundary tolerance of the 2D orientation test.
const HULL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneParams {
    /// Max |signed distance| of an inlier (m).
    pub dist_eps: f64,
    /// Max angle between a point normal and the plane normal (deg).
    pub angle_eps_deg: f64,
    pub iterations: usize,
    /// Minimum fraction of valid points supporting the winning plane.
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for PlaneParams {
    fn default() -> Self {
        Self { dist_eps: 0.005, angle_eps_deg: 10.0, iterations: 500, min_inlier_ratio: 0.10, seed: 0 }
    }
}

/// RANSAC over random 3-point hypotheses. A point supports a hypothesis when
/// it is within `dist_eps` of it and its normal is within `angle_eps_deg`.
/// The winner is refit to its inliers by least squares, oriented toward the
/// cloud viewpoint, and the inlier set recomputed against the refit plane.
pub fn segment_dominant_plane(cloud: &PointCloud, params: &PlaneParams) -> Result<(Plane, Vec<usize>)> {
    let normals = cloud.normals.as_ref().ok_or(Error::MissingNormals)?;
    let valid: Vec<usize> = cloud.valid_indices().into_iter().filter(|&i| normals[i].iter().all(|c| c.is_finite())).collect();
    if valid.len() < 3 {
        return Err(Error::NoPlaneFound { best_ratio: 0.0 });
    }
    let cos_eps = params.angle_eps_deg.to_radians().cos();
    let inliers_of = |plane: &Plane| -> Vec<usize> {
        valid
            .iter()
            .copied()
            .filter(|&i| {
                plane.signed_distance(&cloud.points[i]).abs() <= params.dist_eps
                    && plane.normal.dot(&normals[i]).abs() >= cos_eps
            })
            .collect()
    };
    let count_of = |plane: &Plane| -> usize {
        valid
            .iter()
            .filter(|&&i| {
                plane.signed_distance(&cloud.points[i]).abs() <= params.dist_eps
                    && plane.normal.dot(&normals[i]).abs() >= cos_eps
            })
            .count()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..params.iterations {
        let a = valid[rng.random_range(0..valid.len())];
        let b = valid[rng.random_range(0..valid.len())];
        let c = valid[rng.random_range(0..valid.len())];
        if a == b || b == c || a == c {
            continue;
        }
        let Some(plane) = Plane::through(&cloud.points[a], &cloud.points[b], &cloud.points[c]) else {
            continue;
        };
        let count = count_of(&plane);
        if best.as_ref().is_none_or(|(n, _)| count > *n) {
            best = Some((count, plane));
        }
    }
    let best_ratio = best.as_ref().map_or(0.0, |(n, _)| *n as f64 / valid.len() as f64);
    let Some((count, hypothesis)) = best else {
        return Err(Error::NoPlaneFound { best_ratio });
    };
    if best_ratio < params.min_inlier_ratio || count < 3 {
        return Err(Error::NoPlaneFound { best_ratio });
    }

    let support = inliers_of(&hypothesis);
    let refit = fit_plane(&cloud.points, &support).unwrap_or(hypothesis).oriented_toward(&cloud.viewpoint);
    let mut inliers = inliers_of(&refit);
    if inliers.len() < support.len() / 2 {
        // refit drifted off the consensus set; keep the sampled plane
        inliers = support;
        return Ok((hypothesis.oriented_toward(&cloud.viewpoint), inliers));
    }
    Ok((refit, inliers))
}

/// Least-squares plane through the indexed points.
fn fit_plane(points: &[Point3], idx: &[usize]) -> Option<Plane> {
    if idx.len() < 3 {
        return None;
    }
    let pts: Vec<Point3> = idx.iter().map(|&i| points[i]).collect();
    let n = covariance_normal(&pts)?;
    let mean = pts.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / pts.len() as f64;
    Plane::from_point_normal(&Point3::from(mean), &n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectParams {
    /// Euclidean clustering distance (m).
    pub cluster_tol: f64,
    pub min_cluster: usize,
    /// Points closer than this to the plane belong to the support (m).
    pub min_height: f64,
}

impl Default for ObjectParams {
    fn default() -> Self {
        Self { cluster_tol: 0.02, min_cluster: 50, min_height: 0.005 }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub plane: Plane,
    pub plane_inliers: Vec<usize>,
    pub object: PointCloud,
    /// Indices of the object points in the segmented cloud.
    pub object_indices: Vec<usize>,
    /// Surviving clusters other than the selected object.
    pub rejected_clusters: usize,
}

/// Isolates the largest Euclidean cluster standing on the support plane
/// (inside the convex hull of the projected plane inliers).
pub fn extract_target_object(
    cloud: &PointCloud,
    plane: &Plane,
    inliers: &[usize],
    params: &ObjectParams,
) -> Result<SegmentationResult> {
    let (u, v) = plane.basis();
    let to_2d = |p: &Point3| {
        let q = plane.project(p);
        [q.coords.dot(&u), q.coords.dot(&v)]
    };
    let hull = convex_hull_2d(&inliers.iter().map(|&i| to_2d(&cloud.points[i])).collect::<Vec<_>>());
    if hull.len() < 3 {
        return Err(Error::NoObjectFound);
    }
    let mut is_inlier = vec![false; cloud.len()];
    for &i in inliers {
        is_inlier[i] = true;
    }
    let candidates: Vec<usize> = (0..cloud.len())
        .filter(|&i| !is_inlier[i] && cloud.is_valid(i))
        .filter(|&i| {
            let p = &cloud.points[i];
            plane.signed_distance(p) > params.min_height.max(0.0) && point_in_convex_polygon(&hull, to_2d(p))
        })
        .collect();

    let mut clusters = euclidean_clusters(&cloud.points, &candidates, params.cluster_tol);
    clusters.retain(|c| c.len() >= params.min_cluster.max(1));
    // largest first; ties resolved by smallest member index
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let Some(object_indices) = clusters.first().cloned() else {
        return Err(Error::NoObjectFound);
    };
    Ok(SegmentationResult {
        plane: *plane,
        plane_inliers: inliers.to_vec(),
        object: cloud.select(&object_indices),
        object_indices,
        rejected_clusters: clusters.len() - 1,
    })
}

/// Connected components of `subset` under the "closer than `tol`" relation.
/// Each cluster lists indices in ascending order; clusters are ordered by
/// their smallest index.
pub fn euclidean_clusters(points: &[Point3], subset: &[usize], tol: f64) -> Vec<Vec<usize>> {
    let grid = SpatialGrid::with_subset(points, tol, subset);
    const UNLABELED: usize = usize::MAX;
    let mut label = vec![UNLABELED; points.len()];
    let mut sorted: Vec<usize> = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut clusters = Vec::new();
    let mut nbrs = Vec::new();
    for &seed in &sorted {
        if label[seed] != UNLABELED || !points[seed].coords.iter().all(|c| c.is_finite()) {
            continue;
        }
        let id = clusters.len();
        label[seed] = id;
        let mut members = vec![seed];
        let mut head = 0;
        while head < members.len() {
            let p = points[members[head]];
            head += 1;
            grid.radius_into(&p, tol, &mut nbrs);
            for &j in &nbrs {
                if label[j] == UNLABELED {
                    label[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

/// Counter-clockwise convex hull (Andrew's monotone chain), collinear
/// boundary points removed.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.iter().copied().filter(|p| p[0].is_finite() && p[1].is_finite()).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for p in &pts {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Inclusive point-in-convex-polygon test for a CCW polygon.
pub fn point_in_convex_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    (0..poly.len()).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -HULL_EPS
    })
}
