//! Point clouds and the tabletop segmentation pipeline.

mod filter;
mod normals;
pub mod pcd;
mod search;
mod segment;

pub use filter::{
    moving_least_squares, preprocess_scan, range_crop, statistical_outlier_removal, PreprocessParams,
};
pub use normals::{covariance_normal, estimate_normals};
pub use search::SpatialGrid;
pub use segment::{
    convex_hull_2d, euclidean_clusters, extract_target_object, point_in_convex_polygon, segment_dominant_plane,
    ObjectParams, PlaneParams, SegmentationResult,
};

use crate::geometry::{Frame, Point3, Vec3};

/// A set of 3D points with optional unit normals and optional organized
/// (row-major `width × height`) layout. Organized clouds mark missing
/// returns with NaN coordinates; every consumer skips non-finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Vec3>>,
    pub organized: Option<(usize, usize)>,
    pub frame_id: String,
    /// Sensor origin expressed in this cloud's frame.
    pub viewpoint: Point3,
    /// Pose of this cloud's frame in the world frame.
    pub world_pose: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_id: impl Into<String>) -> Self {
        Self {
            points,
            normals: None,
            organized: None,
            frame_id: frame_id.into(),
            viewpoint: Point3::origin(),
            world_pose: Frame::identity(),
        }
    }

    pub fn with_viewpoint(mut self, viewpoint: Point3) -> Self {
        self.viewpoint = viewpoint;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        let p = &self.points[i];
        p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_valid(i)).collect()
    }

    pub fn valid_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_valid(i)).count()
    }

    /// Unorganized sub-cloud of the given indices (normals carried along).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
            organized: None,
            frame_id: self.frame_id.clone(),
            viewpoint: self.viewpoint,
            world_pose: self.world_pose,
        }
    }

    /// Drops invalid points (and the organized layout).
    pub fn compacted(&self) -> PointCloud {
        if self.organized.is_none() && self.valid_count() == self.len() {
            return self.clone();
        }
        self.select(&self.valid_indices())
    }

    /// Re-expresses the cloud in the world frame. Layout and invalid entries
    /// are preserved.
    pub fn to_world(&self) -> PointCloud {
        let pose = self.world_pose;
        PointCloud {
            points: self.points.iter().map(|p| pose.to_parent(p)).collect(),
            normals: self.normals.as_ref().map(|n| n.iter().map(|v| pose.vector_to_parent(v)).collect()),
            organized: self.organized,
            frame_id: "world".to_string(),
            viewpoint: pose.to_parent(&self.viewpoint),
            world_pose: Frame::identity(),
        }
    }

    /// Axis-aligned bounds of the valid points.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let mut it = self.points.iter().filter(|p| p.coords.iter().all(|c| c.is_finite()));
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    pub fn centroid(&self) -> Option<Point3> {
        let valid = self.valid_indices();
        if valid.is_empty() {
            return None;
        }
        let sum = valid.iter().fold(Vec3::zeros(), |acc, &i| acc + self.points[i].coords);
        Some(Point3::from(sum / valid.len() as f64))
    }
}
