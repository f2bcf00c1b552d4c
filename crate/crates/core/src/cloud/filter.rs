//! Scan preprocessing: reach gate, statistical outlier removal and
//! second-degree moving least squares smoothing.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen};

use super::{PointCloud, SpatialGrid};
use crate::error::{Error, Result};
use crate::geometry::{orthonormal_complement, Point3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessParams {
    /// Points farther than this from the sensor are unreachable (m).
    pub max_range: f64,
    pub sor_k: usize,
    pub sor_mult: f64,
    /// MLS neighborhood radius (m); zero disables smoothing.
    pub mls_radius: f64,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self { max_range: 1.5, sor_k: 20, sor_mult: 1.0, mls_radius: 0.015 }
    }
}

/// Range gate, outlier removal, then MLS projection. The result is an
/// unorganized cloud without normals and never larger than the input.
pub fn preprocess_scan(raw: &PointCloud, params: &PreprocessParams) -> Result<PointCloud> {
    let cropped = range_crop(raw, params.max_range);
    if cropped.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }
    let kept = statistical_outlier_removal(&cropped, params.sor_k, params.sor_mult);
    if kept.is_empty() {
        return Err(Error::EmptyAfterFilter);
    }
    let smoothed = if params.mls_radius > 0.0 { moving_least_squares(&kept, params.mls_radius) } else { kept };
    Ok(smoothed)
}

/// Keeps finite points within `max_range` of the cloud's viewpoint.
pub fn range_crop(cloud: &PointCloud, max_range: f64) -> PointCloud {
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.is_valid(i) && (cloud.points[i] - cloud.viewpoint).norm() <= max_range)
        .collect();
    cloud.select(&keep)
}

/// Drops points whose mean distance to their `k` nearest neighbors exceeds
/// the global mean of that statistic plus `mult` standard deviations.
pub fn statistical_outlier_removal(cloud: &PointCloud, k: usize, mult: f64) -> PointCloud {
    let valid = cloud.valid_indices();
    if valid.len() < 2 || k == 0 {
        return cloud.select(&valid);
    }
    let k = k.min(valid.len() - 1);
    let grid = SpatialGrid::with_subset(&cloud.points, SpatialGrid::knn_cell_size(&cloud.points, k), &valid);
    let mean_dists: Vec<f64> = valid
        .iter()
        .map(|&i| {
            let nn = grid.knn(&cloud.points[i], k, Some(i));
            nn.iter().map(|(_, d2)| d2.sqrt()).sum::<f64>() / nn.len() as f64
        })
        .collect();
    let n = mean_dists.len() as f64;
    let mean = mean_dists.iter().sum::<f64>() / n;
    let var = mean_dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let threshold = mean + mult * var.sqrt();
    let keep: Vec<usize> =
        valid.iter().zip(&mean_dists).filter(|(_, &d)| d <= threshold).map(|(&i, _)| i).collect();
    cloud.select(&keep)
}

/// Projects every point onto a weighted degree-2 height field fitted over
/// its `radius` neighborhood, expressed in the neighborhood's tangent frame.
pub fn moving_least_squares(cloud: &PointCloud, radius: f64) -> PointCloud {
    let valid = cloud.valid_indices();
    let grid = SpatialGrid::with_subset(&cloud.points, radius, &valid);
    let mut nbrs = Vec::new();
    let mut scratch = Vec::new();
    let mut out = cloud.select(&valid);
    out.normals = None;
    let inv_h2 = 1.0 / (radius * radius);
    let mut slot_of = vec![usize::MAX; cloud.points.len()];
    for (slot, &i) in valid.iter().enumerate() {
        slot_of[i] = slot;
    }
    // sweep cell by cell so consecutive neighborhoods share cache lines
    for i in grid.cell_order() {
        let slot = slot_of[i];
        let p = cloud.points[i];
        grid.radius_into(&p, radius, &mut nbrs);
        if let Some(q) = mls_project(&cloud.points, &nbrs, &p, inv_h2, &mut scratch) {
            out.points[slot] = q;
        }
    }
    out
}

/// `scratch` holds (offset from p, weight) per neighbor between passes.
fn mls_project(
    points: &[Point3],
    nbrs: &[usize],
    p: &Point3,
    inv_h2: f64,
    scratch: &mut Vec<(Vec3, f64)>,
) -> Option<Point3> {
    if nbrs.len() < 3 {
        return None;
    }
    scratch.clear();
    let (mut wsum, mut acc) = (0.0, Vec3::zeros());
    for &j in nbrs {
        // centered on p to keep the sums well conditioned
        let d = points[j] - p;
        let t = 1.0 - d.norm_squared() * inv_h2;
        let w = t * t;
        wsum += w;
        acc += d * w;
        scratch.push((d, w));
    }
    let mean_off = acc / wsum;
    let centroid = p + mean_off;
    // upper triangle of the weighted covariance
    let mut c = [0.0; 6];
    for &(d, w) in scratch.iter() {
        let e = d - mean_off;
        c[0] += w * e.x * e.x;
        c[1] += w * e.x * e.y;
        c[2] += w * e.x * e.z;
        c[3] += w * e.y * e.y;
        c[4] += w * e.y * e.z;
        c[5] += w * e.z * e.z;
    }
    let cov = Matrix3::new(c[0], c[1], c[2], c[1], c[3], c[4], c[2], c[4], c[5]);
    let eig = SymmetricEigen::new(cov);
    let normal = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let (u, v) = orthonormal_complement(&normal);

    let rel = -mean_off;
    let (pu, pv) = (rel.dot(&u), rel.dot(&v));
    let on_plane = centroid + u * pu + v * pv;
    if nbrs.len() < 6 {
        return Some(on_plane);
    }

    // weighted moments Σw·a^i·b^j (i + j ≤ 4) and Σw·h·a^i·b^j (i + j ≤ 2)
    let mut m = [0.0; 15];
    let mut t = [0.0; 6];
    for &(d, w) in scratch.iter() {
        let e = d - mean_off;
        let (a, b, h) = (e.dot(&u), e.dot(&v), e.dot(&normal));
        let (wa, wb) = (w * a, w * b);
        let (waa, wab, wbb) = (wa * a, wa * b, wb * b);
        let (waaa, waab, wabb, wbbb) = (waa * a, waa * b, wab * b, wbb * b);
        m[0] += w;
        m[1] += wa;
        m[2] += wb;
        m[3] += waa;
        m[4] += wab;
        m[5] += wbb;
        m[6] += waaa;
        m[7] += waab;
        m[8] += wabb;
        m[9] += wbbb;
        m[10] += waaa * a;
        m[11] += waaa * b;
        m[12] += waab * b;
        m[13] += wabb * b;
        m[14] += wbbb * b;
        t[0] += w * h;
        t[1] += wa * h;
        t[2] += wb * h;
        t[3] += waa * h;
        t[4] += wab * h;
        t[5] += wbb * h;
    }
    // basis 1, a, b, a², ab, b²; entry (r, c) is the moment of their product
    #[rustfmt::skip]
    let ata = SMatrix::<f64, 6, 6>::from_row_slice(&[
        m[0], m[1], m[2], m[3], m[4], m[5],
        m[1], m[3], m[4], m[6], m[7], m[8],
        m[2], m[4], m[5], m[7], m[8], m[9],
        m[3], m[6], m[7], m[10], m[11], m[12],
        m[4], m[7], m[8], m[11], m[12], m[13],
        m[5], m[8], m[9], m[12], m[13], m[14],
    ]);
    let atb = SVector::<f64, 6>::from(t);
    let coeffs = match ata.cholesky() {
        Some(ch) => ch.solve(&atb),
        None => return Some(on_plane),
    };
    let basis = SVector::<f64, 6>::from([1.0, pu, pv, pu * pu, pu * pv, pv * pv]);
    let height = coeffs.dot(&basis);
    if !height.is_finite() {
        return Some(on_plane);
    }
    Some(on_plane + normal * height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn plane_grid(n: usize, spacing: f64) -> Vec<Point3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Point3::new(i as f64 * spacing, j as f64 * spacing, 0.9));
            }
        }
        pts
    }

    #[test]
    fn range_gate_removes_far_point() {
        let mut pts: Vec<Point3> = plane_grid(32, 0.01).into_iter().take(1000).collect();
        pts.push(Point3::new(0.1, 0.1, 3.0));
        let cloud = PointCloud::new(pts, "world").with_viewpoint(Point3::new(0.15, 0.15, 1.4));
        let params = PreprocessParams { mls_radius: 0.0, sor_mult: 10.0, ..Default::default() };
        let out = preprocess_scan(&cloud, &params).unwrap();
        assert_eq!(out.len(), 1000);
        assert!(out.points.iter().all(|p| p.z < 1.0));
    }

    #[test]
    fn noiseless_plane_is_a_fixed_point() {
        let pts = plane_grid(30, 0.004);
        let cloud = PointCloud::new(pts.clone(), "world").with_viewpoint(Point3::new(0.05, 0.05, 1.5));
        let out = moving_least_squares(&cloud, 0.015);
        for (a, b) in out.points.iter().zip(&pts) {
            assert!((a - b).norm() < 1e-9);
        }
        // idempotent through the whole preprocessing chain as well
        let params = PreprocessParams { sor_mult: 100.0, ..Default::default() };
        let out = preprocess_scan(&cloud, &params).unwrap();
        assert_eq!(out.len(), pts.len());
        let again = preprocess_scan(&out, &params).unwrap();
        for (a, b) in again.points.iter().zip(&out.points) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn mls_reduces_depth_noise_below_a_millimetre() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let pts: Vec<Point3> =
            plane_grid(80, 0.0025).into_iter().map(|p| Point3::new(p.x, p.y, p.z + noise.sample(&mut rng))).collect();
        let cloud = PointCloud::new(pts, "world").with_viewpoint(Point3::new(0.1, 0.1, 1.5));
        let out = preprocess_scan(&cloud, &PreprocessParams::default()).unwrap();
        let rms = (out.points.iter().map(|p| (p.z - 0.9).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
        assert!(rms < 0.001, "rms {rms}");
    }

    #[test]
    fn sor_removes_isolated_outlier() {
        let mut pts = plane_grid(20, 0.01);
        pts.push(Point3::new(0.1, 0.1, 1.2));
        let cloud = PointCloud::new(pts, "world");
        let out = statistical_outlier_removal(&cloud, 8, 1.0);
        assert!(out.points.iter().all(|p| p.z < 1.0));
        assert!(out.len() <= cloud.len());
    }

    #[test]
    fn everything_out_of_range_is_an_error() {
        let cloud = PointCloud::new(plane_grid(5, 0.01), "world").with_viewpoint(Point3::new(0.0, 0.0, 10.0));
        assert!(matches!(preprocess_scan(&cloud, &PreprocessParams::default()), Err(Error::EmptyAfterFilter)));
    }
}
