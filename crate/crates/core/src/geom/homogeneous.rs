use nalgebra::{Matrix3, SMatrix, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Homogeneous point in 3-space: `(delta, w)`, defined up to nonzero scale.
///
/// Euclidean coordinates are `delta / w` in millimetres when `w != 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPoint3<T: Scalar> {
    coords: Vector4<T>,
}

impl<T: Scalar> HPoint3<T> {
    pub fn new(x: T, y: T, z: T, w: T) -> Self {
        Self::from_vector(Vector4::new(x, y, z, w))
    }

    pub fn from_vector(coords: Vector4<T>) -> Self {
        assert!(coords.norm() > T::zero(), "homogeneous point must be nonzero");
        Self { coords }
    }

    /// Point with Euclidean coordinates `(x, y, z)` and `w = 1`.
    pub fn euclidean(x: T, y: T, z: T) -> Self {
        Self::from_vector(Vector4::new(x, y, z, T::one()))
    }

    pub fn from_euclidean(p: &Vector3<T>) -> Self {
        Self::euclidean(p.x, p.y, p.z)
    }

    pub fn coords(&self) -> &Vector4<T> {
        &self.coords
    }

    /// The first three coordinates.
    pub fn delta(&self) -> Vector3<T> {
        self.coords.xyz()
    }

    pub fn w(&self) -> T {
        self.coords.w
    }

    /// Euclidean coordinates `delta / w`; errors on points at infinity.
    pub fn inhomogenize(&self) -> Result<Vector3<T>> {
        if self.coords.w == T::zero() {
            return Err(Error::PointAtInfinity("fourth coordinate is zero"));
        }
        let d = self.delta() / self.coords.w;
        if d.iter().all(|c| c.is_finite()) {
            Ok(d)
        } else {
            Err(Error::PointAtInfinity("division by fourth coordinate overflows"))
        }
    }

    /// Scales to unit norm with the largest-magnitude component made positive.
    pub fn canonicalized(&self) -> Self {
        Self { coords: super::ops::canonicalize_vector(&self.coords) }
    }

    /// Projective equality: canonicalized difference norm within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.canonicalized().coords - other.canonicalized().coords).norm() <= tol
    }

    /// The 6x4 operator turning projective equality with this point into six
    /// linear constraints: the top block is `(w I | -delta)`, the bottom block
    /// `((delta)_x | 0)`.
    pub fn wedge(&self) -> SMatrix<T, 6, 4> {
        let d = self.delta();
        let w = self.coords.w;
        let cross = super::ops::cross_matrix(&d);
        let mut m = SMatrix::<T, 6, 4>::zeros();
        for i in 0..3 {
            m[(i, i)] = w;
            m[(i, 3)] = -d[i];
            for j in 0..3 {
                m[(i + 3, j)] = cross[(i, j)];
            }
        }
        m
    }
}

/// Homogeneous plane in 3-space: `(normal, offset)`, defined up to scale.
///
/// A point `P` lies on the plane `U` iff `U . P = 0`. With a unit normal the
/// offset is the signed perpendicular distance of the plane from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPlane3<T: Scalar> {
    coeffs: Vector4<T>,
}

impl<T: Scalar> HPlane3<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self::from_vector(Vector4::new(a, b, c, d))
    }

    pub fn from_vector(coeffs: Vector4<T>) -> Self {
        assert!(coeffs.norm() > T::zero(), "homogeneous plane must be nonzero");
        Self { coeffs }
    }

    /// Plane with unit normal `n` through the point at distance `dist` along `n`.
    pub fn from_unit_normal_and_distance(n: &Vector3<T>, dist: T) -> Self {
        Self::from_vector(Vector4::new(n.x, n.y, n.z, -dist))
    }

    pub fn coeffs(&self) -> &Vector4<T> {
        &self.coeffs
    }

    pub fn normal(&self) -> Vector3<T> {
        self.coeffs.xyz()
    }

    pub fn offset(&self) -> T {
        self.coeffs.w
    }

    /// Rescales so the normal has unit length; errors when the normal is zero
    /// (plane at infinity).
    pub fn hessian_normalized(&self) -> Result<Self> {
        let n = self.normal().norm();
        if n == T::zero() {
            return Err(Error::DegenerateData("plane normal is zero"));
        }
        Ok(Self { coeffs: self.coeffs / n })
    }

    /// Incidence residual `U . P`, scale-dependent.
    pub fn incidence(&self, p: &HPoint3<T>) -> T {
        self.coeffs.dot(p.coords())
    }

    /// Signed perpendicular distance from a Euclidean point to the plane.
    pub fn signed_distance(&self, p: &HPoint3<T>) -> Result<T> {
        let plane = self.hessian_normalized()?;
        let e = p.inhomogenize()?;
        Ok(plane.normal().dot(&e) + plane.offset())
    }

    pub fn canonicalized(&self) -> Self {
        Self { coeffs: super::ops::canonicalize_vector(&self.coeffs) }
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.canonicalized().coeffs - other.canonicalized().coeffs).norm() <= tol
    }
}

/// Homogeneous image point; pixels when inhomogenized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HPoint2<T: Scalar> {
    coords: Vector3<T>,
}

impl<T: Scalar> HPoint2<T> {
    pub fn new(x: T, y: T, w: T) -> Self {
        Self::from_vector(Vector3::new(x, y, w))
    }

    pub fn from_vector(coords: Vector3<T>) -> Self {
        assert!(coords.norm() > T::zero(), "homogeneous image point must be nonzero");
        Self { coords }
    }

    /// Pixel `(x, y)` with `w = 1`.
    pub fn pixel(x: T, y: T) -> Self {
        Self::from_vector(Vector3::new(x, y, T::one()))
    }

    pub fn coords(&self) -> &Vector3<T> {
        &self.coords
    }

    pub fn w(&self) -> T {
        self.coords.z
    }

    pub fn inhomogenize(&self) -> Result<Vector2<T>> {
        if self.coords.z == T::zero() {
            return Err(Error::PointAtInfinity("third coordinate is zero"));
        }
        let d = self.coords.xy() / self.coords.z;
        if d.iter().all(|c| c.is_finite()) {
            Ok(d)
        } else {
            Err(Error::PointAtInfinity("division by third coordinate overflows"))
        }
    }

    pub fn canonicalized(&self) -> Self {
        Self { coords: super::ops::canonicalize_vector(&self.coords) }
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.canonicalized().coords - other.canonicalized().coords).norm() <= tol
    }

    /// Applies a 3x3 projective map.
    pub fn transformed(&self, m: &Matrix3<T>) -> Self {
        Self::from_vector(m * self.coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ops::inhomog_distance;
    use crate::scalar::sc;

    #[test]
    fn inhomogenize_rejects_infinity() {
        let p = HPoint3::<f64>::new(1.0, 2.0, 3.0, 0.0);
        assert!(matches!(p.inhomogenize(), Err(Error::PointAtInfinity(_))));
        let q = HPoint2::<f64>::new(1.0, 2.0, 0.0);
        assert!(matches!(q.inhomogenize(), Err(Error::PointAtInfinity(_))));
    }

    #[test]
    fn homogeneous_equality_is_scale_and_sign_invariant() {
        let p = HPoint3::new(1.0, -2.0, 3.0, 1.0);
        let q = HPoint3::new(-2.5, 5.0, -7.5, -2.5);
        assert!(p.approx_eq(&q, 1e-8));
    }

    #[test]
    fn plane_incidence_and_distance() {
        let u = HPlane3::<f64>::new(0.0, 0.0, 2.0, -4000.0);
        let on = HPoint3::euclidean(7.0, -3.0, 2000.0);
        assert_eq!(u.incidence(&on), 0.0);
        let off = HPoint3::euclidean(0.0, 0.0, 2500.0);
        assert!((u.signed_distance(&off).unwrap() - 500.0).abs() < 1e-12);
    }

    #[test]
    fn wedge_self_annihilates() {
        let q = HPoint3::new(1.0, 2.0, 3.0, 1.0);
        let r = q.wedge() * q.coords();
        assert!(r.norm() <= 1e-14 * q.coords().norm());
    }

    #[test]
    fn wedge_of_origin() {
        let q = HPoint3::<f64>::new(0.0, 0.0, 0.0, 1.0);
        let w = q.wedge();
        for i in 0..3 {
            for j in 0..4 {
                let top = if i == j { 1.0 } else { 0.0 };
                assert_eq!(w[(i, j)], top);
                assert_eq!(w[(i + 3, j)], 0.0);
            }
        }
    }

    #[test]
    fn wedge_top_block_measures_distance() {
        let q = HPoint3::<f64>::new(10.0, -4.0, 7.0, 1.0);
        let p = HPoint3::new(-2.0, 5.0, 1.0, 1.0);
        let r = q.wedge() * p.coords();
        let top = Vector3::new(r[0], r[1], r[2]);
        let dist = (p.delta() - q.delta()).norm();
        assert!((top.norm() - dist).abs() < 1e-12);
    }

    #[test]
    fn generic_scalar_instantiates_for_f32() {
        let p = HPoint2::<f32>::pixel(3.0, 4.0);
        let o = HPoint2::<f32>::pixel(0.0, 0.0);
        let d = inhomog_distance(&p, &o).unwrap();
        assert!((d - sc::<f32>(5.0)).abs() < 1e-5);
    }
}
