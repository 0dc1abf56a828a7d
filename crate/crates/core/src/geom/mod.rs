//! Homogeneous geometry primitives shared by all other modules: points,
//! planes, cameras, projective and rigid transformations, the wedge operator,
//! and the conditioning transforms used by the linear estimators.

mod camera;
mod homogeneous;
mod ops;
mod transform;

pub use camera::CameraMatrix;
pub use homogeneous::{HPlane3, HPoint2, HPoint3};
pub use ops::{
    canonicalize_matrix, canonicalize_vector, cross_matrix, inhomog_distance, normalize_points,
    normalize_points_2d, projective_distance,
};
pub use transform::{Homography3, RigidTransform3, Similarity3};

/// Default tolerance for homogeneous equality after canonicalization.
pub const HOMOG_EQ_TOL: f64 = 1e-8;
