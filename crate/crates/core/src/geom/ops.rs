use nalgebra::allocator::Allocator;
use nalgebra::{DefaultAllocator, Dim, Matrix3, OMatrix, OVector, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{sc, Scalar};
use crate::geom::{HPoint2, HPoint3, Homography3};

/// Antisymmetric matrix of the cross product: `cross_matrix(u) * v == u x v`.
pub fn cross_matrix<T: Scalar>(u: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -u.z, u.y, u.z, z, -u.x, -u.y, u.x, z)
}

/// Scales a homogeneous vector to unit norm with the largest-magnitude
/// component made positive, so projectively equal vectors compare bitwise-close.
pub fn canonicalize_vector<T: Scalar, D: Dim>(v: &OVector<T, D>) -> OVector<T, D>
where
    DefaultAllocator: Allocator<D>,
{
    let norm = v.norm();
    assert!(norm > T::zero(), "cannot canonicalize a zero vector");
    let mut out = v / norm;
    let mut pivot = T::zero();
    let mut pivot_abs = T::zero();
    for c in out.iter() {
        if c.abs() > pivot_abs {
            pivot_abs = c.abs();
            pivot = *c;
        }
    }
    if pivot < T::zero() {
        out.neg_mut();
    }
    out
}

/// Matrix variant of [`canonicalize_vector`]: unit Frobenius norm, canonical sign.
pub fn canonicalize_matrix<T: Scalar, R: Dim, C: Dim>(m: &OMatrix<T, R, C>) -> OMatrix<T, R, C>
where
    DefaultAllocator: Allocator<R, C>,
{
    let norm = m.norm();
    assert!(norm > T::zero(), "cannot canonicalize a zero matrix");
    let mut out = m / norm;
    let mut pivot = T::zero();
    let mut pivot_abs = T::zero();
    for c in out.iter() {
        if c.abs() > pivot_abs {
            pivot_abs = c.abs();
            pivot = *c;
        }
    }
    if pivot < T::zero() {
        out.neg_mut();
    }
    out
}

/// Distance in canonical form between two projectively equal-sized matrices.
pub fn projective_distance<T: Scalar, R: Dim, C: Dim>(
    a: &OMatrix<T, R, C>,
    b: &OMatrix<T, R, C>,
) -> T
where
    DefaultAllocator: Allocator<R, C>,
{
    (canonicalize_matrix(a) - canonicalize_matrix(b)).norm()
}

/// Euclidean pixel distance between two inhomogenized image points.
///
/// Invariant to rescaling either argument; errors on points at infinity.
pub fn inhomog_distance<T: Scalar>(p: &HPoint2<T>, q: &HPoint2<T>) -> Result<T> {
    Ok((p.inhomogenize()? - q.inhomogenize()?).norm())
}

/// Conditioning transform for 3D points: translates the centroid to the origin
/// and scales so the mean coordinate norm is sqrt(3).
///
/// Returns the transformed points together with the similarity applied.
pub fn normalize_points<T: Scalar>(
    points: &[HPoint3<T>],
) -> Result<(Vec<HPoint3<T>>, Homography3<T>)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData { what: "points", needed: 2, got: points.len() });
    }
    let euclid: Vec<Vector3<T>> =
        points.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
    let n = sc::<T>(euclid.len() as f64);
    let centroid = euclid.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mean_norm =
        euclid.iter().map(|p| (p - centroid).norm()).fold(T::zero(), |a, b| a + b) / n;
    if mean_norm <= T::default_epsilon().sqrt() {
        return Err(Error::DegenerateScale("all points coincide"));
    }
    let s = sc::<T>(3.0).sqrt() / mean_norm;

    let mut m = nalgebra::Matrix4::identity();
    for i in 0..3 {
        m[(i, i)] = s;
        m[(i, 3)] = -s * centroid[i];
    }
    let transform = Homography3::from_matrix_unchecked(m);
    let transformed = points.iter().map(|p| transform.transform_point(p)).collect();
    Ok((transformed, transform))
}

/// 2D analogue of [`normalize_points`]: centroid at the origin, mean norm sqrt(2).
pub fn normalize_points_2d<T: Scalar>(
    points: &[HPoint2<T>],
) -> Result<(Vec<HPoint2<T>>, Matrix3<T>)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData { what: "points", needed: 2, got: points.len() });
    }
    let euclid: Vec<nalgebra::Vector2<T>> =
        points.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
    let n = sc::<T>(euclid.len() as f64);
    let centroid = euclid.iter().fold(nalgebra::Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_norm =
        euclid.iter().map(|p| (p - centroid).norm()).fold(T::zero(), |a, b| a + b) / n;
    if mean_norm <= T::default_epsilon().sqrt() {
        return Err(Error::DegenerateScale("all points coincide"));
    }
    let s = sc::<T>(2.0).sqrt() / mean_norm;

    let mut m = Matrix3::identity();
    m[(0, 0)] = s;
    m[(1, 1)] = s;
    m[(0, 2)] = -s * centroid.x;
    m[(1, 2)] = -s * centroid.y;
    let transformed = points.iter().map(|p| p.transformed(&m)).collect();
    Ok((transformed, m))
}
