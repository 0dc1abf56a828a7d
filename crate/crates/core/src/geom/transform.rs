use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geom::ops::canonicalize_matrix;
use crate::geom::{HPlane3, HPoint3};
use crate::scalar::{sc, Scalar};

/// Invertible 4x4 projective transformation of 3-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography3<T: Scalar> {
    m: Matrix4<T>,
}

impl<T: Scalar> Homography3<T> {
    /// Wraps a matrix, rejecting ones that are not invertible.
    pub fn from_matrix(m: Matrix4<T>) -> Result<Self> {
        if m.try_inverse().is_none() {
            return Err(Error::NotInvertible("4x4 homography"));
        }
        Ok(Self { m })
    }

    /// Wraps a matrix the caller already knows to be invertible.
    pub fn from_matrix_unchecked(m: Matrix4<T>) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        Self { m: Matrix4::identity() }
    }

    pub fn from_translation(t: &Vector3<T>) -> Self {
        let mut m = Matrix4::identity();
        for i in 0..3 {
            m[(i, 3)] = t[i];
        }
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix4<T> {
        &self.m
    }

    pub fn inverse(&self) -> Result<Self> {
        self.m
            .try_inverse()
            .map(|m| Self { m })
            .ok_or(Error::NotInvertible("4x4 homography"))
    }

    /// Maps a point: `Q = H P`.
    pub fn transform_point(&self, p: &HPoint3<T>) -> HPoint3<T> {
        HPoint3::from_vector(self.m * p.coords())
    }

    /// Maps a plane by the inverse transpose: `V = H^-T U`, preserving incidence.
    pub fn transform_plane(&self, u: &HPlane3<T>) -> Result<HPlane3<T>> {
        let inv = self.inverse()?;
        Ok(HPlane3::from_vector(inv.m.transpose() * u.coeffs()))
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { m: self.m * other.m }
    }

    /// Unit Frobenius norm with canonical sign.
    pub fn canonicalized(&self) -> Self {
        Self { m: canonicalize_matrix(&self.m) }
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.canonicalized().m - other.canonicalized().m).norm() <= tol
    }
}

/// Similarity transformation: uniform scale, rotation and translation (7 DoF).
///
/// The rotation is kept as a Rodrigues axis-angle vector; the matrix is
/// regenerated from it on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity3<T: Scalar> {
    scale: T,
    rotvec: Vector3<T>,
    translation: Vector3<T>,
}

impl<T: Scalar> Similarity3<T> {
    pub fn new(scale: T, rotvec: Vector3<T>, translation: Vector3<T>) -> Result<Self> {
        if scale <= T::zero() {
            return Err(Error::DegenerateScale("similarity scale must be positive"));
        }
        Ok(Self { scale, rotvec, translation })
    }

    pub fn identity() -> Self {
        Self { scale: T::one(), rotvec: Vector3::zeros(), translation: Vector3::zeros() }
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn rotvec(&self) -> &Vector3<T> {
        &self.rotvec
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        Rotation3::from_scaled_axis(self.rotvec).into_inner()
    }

    /// Embeds as a 4x4 homography with bottom row `(0, 0, 0, 1)`.
    pub fn as_homography(&self) -> Homography3<T> {
        let r = self.rotation_matrix();
        let mut m = Matrix4::identity();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = self.scale * r[(i, j)];
            }
            m[(i, 3)] = self.translation[i];
        }
        Homography3::from_matrix_unchecked(m)
    }

    pub fn transform_euclidean(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation_matrix() * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r_inv = Rotation3::from_scaled_axis(self.rotvec).inverse();
        let s_inv = T::one() / self.scale;
        Self {
            scale: s_inv,
            rotvec: r_inv.scaled_axis(),
            translation: -(r_inv.into_inner() * self.translation * s_inv),
        }
    }
}

/// Rigid 3D transformation: rotation plus translation, a similarity with scale 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform3<T: Scalar> {
    rotvec: Vector3<T>,
    translation: Vector3<T>,
}

impl<T: Scalar> RigidTransform3<T> {
    pub fn new(rotvec: Vector3<T>, translation: Vector3<T>) -> Self {
        Self { rotvec, translation }
    }

    pub fn identity() -> Self {
        Self { rotvec: Vector3::zeros(), translation: Vector3::zeros() }
    }

    /// Builds from a rotation matrix, rejecting non-orthonormal or reflecting input.
    pub fn from_matrix(r: &Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        let orthogonality = (r.transpose() * r - Matrix3::identity()).norm();
        if orthogonality > sc(1e-9) || r.determinant() < T::zero() {
            return Err(Error::DegenerateData("not a proper rotation matrix"));
        }
        let rotvec = Rotation3::from_matrix(r).scaled_axis();
        Ok(Self { rotvec, translation })
    }

    pub fn rotvec(&self) -> &Vector3<T> {
        &self.rotvec
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        Rotation3::from_scaled_axis(self.rotvec).into_inner()
    }

    pub fn as_homography(&self) -> Homography3<T> {
        let r = self.rotation_matrix();
        let mut m = Matrix4::identity();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = r[(i, j)];
            }
            m[(i, 3)] = self.translation[i];
        }
        Homography3::from_matrix_unchecked(m)
    }

    pub fn transform_euclidean(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation_matrix() * p + self.translation
    }

    pub fn transform_point(&self, p: &HPoint3<T>) -> HPoint3<T> {
        self.as_homography().transform_point(p)
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let ra = Rotation3::from_scaled_axis(self.rotvec);
        let rb = Rotation3::from_scaled_axis(other.rotvec);
        Self {
            rotvec: (ra * rb).scaled_axis(),
            translation: ra.into_inner() * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let r_inv = Rotation3::from_scaled_axis(self.rotvec).inverse();
        Self {
            rotvec: r_inv.scaled_axis(),
            translation: -(r_inv.into_inner() * self.translation),
        }
    }

    /// Geodesic rotation distance to another transform, in radians.
    pub fn rotation_angle_to(&self, other: &Self) -> T {
        let ra = Rotation3::from_scaled_axis(self.rotvec);
        let rb = Rotation3::from_scaled_axis(other.rotvec);
        ra.rotation_to(&rb).angle()
    }

    pub fn translation_distance_to(&self, other: &Self) -> T {
        (self.translation - other.translation).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::HPoint3;

    #[test]
    fn homography_identity_fixes_points_and_planes() {
        let h = Homography3::<f64>::identity();
        let p = HPoint3::euclidean(1.0, 2.0, 3.0);
        let u = HPlane3::new(0.0, 0.0, 1.0, -3.0);
        assert!(h.transform_point(&p).approx_eq(&p, 1e-15));
        assert!(h.transform_plane(&u).unwrap().approx_eq(&u, 1e-15));
    }

    #[test]
    fn translation_moves_origin() {
        let h = Homography3::from_translation(&Vector3::new(10.0, -5.0, 2.0));
        let p = h.transform_point(&HPoint3::euclidean(0.0, 0.0, 0.0));
        assert!((p.inhomogenize().unwrap() - Vector3::new(10.0, -5.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut m = Matrix4::identity();
        m[(3, 3)] = 0.0;
        m[(3, 2)] = 0.0;
        assert!(matches!(Homography3::from_matrix(m), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn plane_transform_preserves_incidence() {
        let m = Matrix4::new(
            1.0, 0.2, 0.0, 4.0, //
            -0.1, 0.9, 0.3, -2.0, //
            0.0, 0.4, 1.1, 7.0, //
            0.001, 0.0, -0.002, 1.0,
        );
        let h = Homography3::from_matrix(m).unwrap();
        // Point on the plane z = 5.
        let u = HPlane3::<f64>::new(0.0, 0.0, 1.0, -5.0);
        let p = HPoint3::<f64>::euclidean(3.0, -2.0, 5.0);
        assert!(u.incidence(&p).abs() < 1e-15);
        let (q, v) = (h.transform_point(&p), h.transform_plane(&u).unwrap());
        let vc = v.canonicalized();
        let qc = q.canonicalized();
        assert!(vc.incidence(&qc).abs() < 1e-10);
    }

    #[test]
    fn similarity_round_trips_through_homography() {
        let s = Similarity3::new(
            2.0,
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(5.0, 6.0, -7.0),
        )
        .unwrap();
        let p = Vector3::new(1.0, 2.0, 3.0);
        let via_s = s.transform_euclidean(&p);
        let via_h = s
            .as_homography()
            .transform_point(&HPoint3::from_euclidean(&p))
            .inhomogenize()
            .unwrap();
        assert!((via_s - via_h).norm() < 1e-12);
        let back = s.inverse().transform_euclidean(&via_s);
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn similarity_rejects_nonpositive_scale() {
        assert!(Similarity3::new(0.0, Vector3::zeros(), Vector3::<f64>::zeros()).is_err());
        assert!(Similarity3::new(-1.0, Vector3::zeros(), Vector3::<f64>::zeros()).is_err());
    }

    #[test]
    fn rigid_compose_and_inverse() {
        let a = RigidTransform3::new(Vector3::new(0.0, 0.0, 0.3), Vector3::new(1.0, 2.0, 3.0));
        let b = RigidTransform3::new(Vector3::new(0.2, 0.0, 0.0), Vector3::new(-4.0, 0.0, 1.0));
        let p = Vector3::new(10.0, -20.0, 5.0);
        let via_compose = a.compose(&b).transform_euclidean(&p);
        let via_steps = a.transform_euclidean(&b.transform_euclidean(&p));
        assert!((via_compose - via_steps).norm() < 1e-12);

        let round = a.inverse().compose(&a);
        assert!(round.rotation_angle_to(&RigidTransform3::identity()) < 1e-12);
        assert!(round.translation().norm() < 1e-12);
    }
}
