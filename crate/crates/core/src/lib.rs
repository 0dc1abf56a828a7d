//! Cross-calibration of range (time-of-flight style) cameras against stereo
//! pairs of colour cameras, for networks of rig-mounted camera triples.
//!
//! The crate estimates the 4x4 space homography aligning each rig's range
//! reconstruction with its parallax-based reconstruction, chains rigs together
//! through rigid inter-rig transforms, and evaluates the result with metrics
//! that separate calibration error from sensor-noise-driven total error.
//!
//! All geometry and solvers are generic over the scalar type via [`Scalar`];
//! concrete `f64` aliases are exported at the crate root.

pub mod align;
pub mod error;
pub mod eval;
pub mod geom;
pub mod lm;
pub mod network;
pub mod scalar;
pub mod stereo;
pub mod synth;
pub mod tof;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` aliases for the geometry types; the pipeline operates on these.
pub type HPoint2F64 = geom::HPoint2<f64>;
pub type HPoint3F64 = geom::HPoint3<f64>;
pub type HPlane3F64 = geom::HPlane3<f64>;
pub type CameraMatrixF64 = geom::CameraMatrix<f64>;
pub type Homography3F64 = geom::Homography3<f64>;
pub type Similarity3F64 = geom::Similarity3<f64>;
pub type RigidTransform3F64 = geom::RigidTransform3<f64>;
pub type FundamentalMatrixF64 = stereo::FundamentalMatrix<f64>;
