use nalgebra::{Matrix3, SymmetricEigen};

use super::{PointCloud, SpatialGrid};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

const TIE_SLACK: usize = 8;

/// Attaches unit normals from the covariance of each point's `k` nearest
/// neighbors (the point itself included), flipped to face `viewpoint`.
/// Neighbors tied with the k-th distance are all kept so that symmetric
/// samplings give symmetric neighborhoods. Invalid points get NaN normals.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Point3) -> Result<PointCloud> {
    let valid = cloud.valid_indices();
    if k == 0 || valid.len() < k + 1 {
        return Err(Error::TooFewPoints { needed: k + 1, got: valid.len() });
    }
    let grid = SpatialGrid::with_subset(&cloud.points, SpatialGrid::knn_cell_size(&cloud.points, k), &valid);
    let mut normals = vec![Vec3::repeat(f64::NAN); cloud.len()];
    let mut nbr_pts = Vec::with_capacity(k + 1);
    for &i in &valid {
        let p = cloud.points[i];
        nbr_pts.clear();
        nbr_pts.push(p);
        let nn = grid.knn(&p, k + TIE_SLACK, Some(i));
        let cutoff = nn[(k - 1).min(nn.len() - 1)].1 * (1.0 + 1e-9);
        nbr_pts.extend(nn.iter().take_while(|(_, d2)| *d2 <= cutoff).map(|&(j, _)| cloud.points[j]));
        let mut n = covariance_normal(&nbr_pts).unwrap_or_else(Vec3::z);
        if n.dot(&(viewpoint - p)) < 0.0 {
            n = -n;
        }
        normals[i] = n;
    }
    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}

/// Eigenvector of the smallest covariance eigenvalue (unoriented).
pub fn covariance_normal(points: &[Point3]) -> Option<Vec3> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let v = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let norm = v.norm();
    (norm > 0.0).then(|| v / norm)
}
