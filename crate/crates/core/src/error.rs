use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate axes: x direction is zero or parallel to the y hint")]
    DegenerateAxes,

    #[error("no points survived filtering")]
    EmptyAfterFilter,

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("point cloud has no normals")]
    MissingNormals,

    #[error("no dominant plane found (best inlier ratio {best_ratio:.3})")]
    NoPlaneFound { best_ratio: f64 },

    #[error("no object cluster above the support plane")]
    NoObjectFound,

    #[error("no graspable handles found on the object")]
    NoHandlesFound,

    #[error("handle list is empty")]
    EmptyHandleList,

    #[error("force magnitude {force:.4} N below minimum {min:.4} N")]
    ForceTooSmall { force: f64, min: f64 },

    #[error("object has zero total mass")]
    ZeroMass,

    #[error("wrench requested while the object is not lifted")]
    NotLifted,

    #[error("grasp failed: {0}")]
    GraspFailed(String),

    #[error("robot port protocol violation: {0}")]
    Protocol(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("PCD parse error at line {line}: {msg}")]
    Pcd { line: usize, msg: String },

    #[error("scenario {path}: {msg}")]
    Scenario { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
