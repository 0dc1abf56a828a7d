use nalgebra::{Matrix3, Matrix3x4, Vector3};

use crate::error::{Error, Result};
use crate::geom::ops::canonicalize_matrix;
use crate::geom::{HPoint2, HPoint3, Homography3, RigidTransform3};
use crate::scalar::{sc, Scalar};

/// 3x4 projective camera with `(A | b)` block decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMatrix<T: Scalar> {
    m: Matrix3x4<T>,
}

impl<T: Scalar> CameraMatrix<T> {
    /// Wraps a 3x4 matrix, rejecting rank-deficient ones.
    pub fn from_matrix(m: Matrix3x4<T>) -> Result<Self> {
        let svd = m.svd(false, false);
        let s = &svd.singular_values;
        if s[2] <= s[0] * sc(1e-12) {
            return Err(Error::InvalidCamera("camera matrix must have rank 3"));
        }
        Ok(Self { m })
    }

    pub fn from_matrix_unchecked(m: Matrix3x4<T>) -> Self {
        Self { m }
    }

    pub fn from_blocks(a: &Matrix3<T>, b: &Vector3<T>) -> Self {
        let mut m = Matrix3x4::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = a[(i, j)];
            }
            m[(i, 3)] = b[i];
        }
        Self { m }
    }

    /// Canonical left camera `(I | 0)`.
    pub fn canonical() -> Self {
        Self::from_blocks(&Matrix3::identity(), &Vector3::zeros())
    }

    pub fn matrix(&self) -> &Matrix3x4<T> {
        &self.m
    }

    /// The left 3x3 block.
    pub fn a_block(&self) -> Matrix3<T> {
        self.m.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// The right 3x1 block.
    pub fn b_block(&self) -> Vector3<T> {
        self.m.column(3).into_owned()
    }

    pub fn project(&self, p: &HPoint3<T>) -> HPoint2<T> {
        HPoint2::from_vector(self.m * p.coords())
    }

    /// Optical centre: the right nullspace of the camera matrix.
    pub fn center(&self) -> HPoint3<T> {
        // Pad to 4x4 so the SVD is full and exposes the null direction.
        let mut padded = nalgebra::Matrix4::<T>::zeros();
        padded.fixed_view_mut::<3, 4>(0, 0).copy_from(&self.m);
        let svd = padded.svd(false, true);
        let vt = svd.v_t.expect("svd columns requested");
        HPoint3::from_vector(vt.row(3).transpose())
    }

    /// `C * H`: reprojection through a modified 3D frame.
    pub fn compose_homography(&self, h: &Homography3<T>) -> Self {
        Self { m: self.m * h.matrix() }
    }

    /// `C * G` for a rigid frame change.
    pub fn compose_rigid(&self, g: &RigidTransform3<T>) -> Self {
        Self { m: self.m * g.as_homography().matrix() }
    }

    /// Unit Frobenius norm with canonical sign.
    pub fn canonicalized(&self) -> Self {
        Self { m: canonicalize_matrix(&self.m) }
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        (self.canonicalized().m - other.canonicalized().m).norm() <= tol
    }
}
