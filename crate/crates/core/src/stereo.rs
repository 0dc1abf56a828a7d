//! Parallax-based reconstruction: fundamental-matrix estimation with RANSAC,
//! projective camera extraction, linear triangulation, and recovery of the
//! fundamental matrix induced by a camera pair.

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{
    canonicalize_vector, cross_matrix, normalize_points_2d, CameraMatrix, HPoint2, HPoint3,
};
use crate::scalar::{sc, Scalar};

/// 3x3 rank-2 matrix encoding the epipolar constraint `p_r' F p_l = 0`.
///
/// The right epipole (left nullvector of `F`) is computed on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix<T: Scalar> {
    m: Matrix3<T>,
    epipole_right: Vector3<T>,
}

impl<T: Scalar> FundamentalMatrix<T> {
    /// Wraps a 3x3 matrix, forcing the smallest singular value to zero.
    ///
    /// Rejects matrices of rank below 2.
    pub fn from_matrix(m: Matrix3<T>) -> Result<Self> {
        let svd = m.svd(true, true);
        let s = svd.singular_values;
        if s[1] <= s[0] * sc(1e-12) {
            return Err(Error::DegenerateData("fundamental matrix must have rank 2"));
        }
        let u = svd.u.expect("svd vectors requested");
        let vt = svd.v_t.expect("svd vectors requested");
        let mut rank2 = Matrix3::zeros();
        for k in 0..2 {
            let uk = u.column(k);
            let vk = vt.row(k);
            for i in 0..3 {
                for j in 0..3 {
                    rank2[(i, j)] += s[k] * uk[i] * vk[j];
                }
            }
        }
        let epipole_right = canonicalize_vector(&u.column(2).into_owned());
        Ok(Self { m: crate::geom::canonicalize_matrix(&rank2), epipole_right })
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.m
    }

    /// The right epipole `e_r`, satisfying `F' e_r = 0`.
    pub fn right_epipole(&self) -> HPoint2<T> {
        HPoint2::from_vector(self.epipole_right)
    }

    /// Epipolar residual `p_r' F p_l` with both points scaled to unit last
    /// coordinate.
    pub fn epipolar_residual(&self, c: &Correspondence2D2D<T>) -> Result<T> {
        let l = c.left.inhomogenize()?;
        let r = c.right.inhomogenize()?;
        let pl = Vector3::new(l.x, l.y, T::one());
        let pr = Vector3::new(r.x, r.y, T::one());
        Ok(pr.dot(&(self.m * pl)))
    }

    /// First-order geometric (Sampson) distance of a correspondence, in pixels.
    pub fn sampson_distance(&self, c: &Correspondence2D2D<T>) -> Result<T> {
        let l = c.left.inhomogenize()?;
        let r = c.right.inhomogenize()?;
        let pl = Vector3::new(l.x, l.y, T::one());
        let pr = Vector3::new(r.x, r.y, T::one());
        let fl = self.m * pl;
        let fr = self.m.transpose() * pr;
        let num = pr.dot(&fl);
        let den = (fl.x * fl.x + fl.y * fl.y + fr.x * fr.x + fr.y * fr.y).sqrt();
        if den == T::zero() {
            return Err(Error::DegenerateGeometry("epipolar gradient vanished"));
        }
        Ok(num.abs() / den)
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        crate::geom::projective_distance(&self.m, &other.m) <= tol
    }
}

/// Gauge of the projective reconstruction: `(g, gamma)` select one member of
/// the four-parameter family of camera pairs compatible with a fundamental
/// matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectiveFrame<T: Scalar> {
    g: Vector3<T>,
    gamma: T,
}

impl<T: Scalar> ProjectiveFrame<T> {
    pub fn new(g: Vector3<T>, gamma: T) -> Result<Self> {
        if gamma == T::zero() {
            return Err(Error::InvalidFrame("gamma must be nonzero"));
        }
        Ok(Self { g, gamma })
    }

    /// The neutral frame `g = 0`, `gamma = 1`.
    pub fn neutral() -> Self {
        Self { g: Vector3::zeros(), gamma: T::one() }
    }

    pub fn g(&self) -> &Vector3<T> {
        &self.g
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }
}

/// A matched pair of image points in the left and right views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence2D2D<T: Scalar> {
    pub left: HPoint2<T>,
    pub right: HPoint2<T>,
}

impl<T: Scalar> Correspondence2D2D<T> {
    pub fn new(left: HPoint2<T>, right: HPoint2<T>) -> Self {
        Self { left, right }
    }
}

/// Normalized eight-point estimate of the fundamental matrix.
pub fn estimate_fundamental_linear<T: Scalar>(
    matches: &[Correspondence2D2D<T>],
) -> Result<FundamentalMatrix<T>> {
    if matches.len() < 8 {
        return Err(Error::InsufficientData {
            what: "correspondences",
            needed: 8,
            got: matches.len(),
        });
    }
    let lefts: Vec<HPoint2<T>> = matches.iter().map(|c| c.left).collect();
    let rights: Vec<HPoint2<T>> = matches.iter().map(|c| c.right).collect();
    let (nl, tl) = normalize_points_2d(&lefts)?;
    let (nr, tr) = normalize_points_2d(&rights)?;

    // At least as many rows as columns so the SVD exposes the null direction.
    let mut a = DMatrix::<T>::zeros(matches.len().max(9), 9);
    for (k, (l, r)) in nl.iter().zip(nr.iter()).enumerate() {
        let l = l.inhomogenize()?;
        let r = r.inhomogenize()?;
        let row =
            [r.x * l.x, r.x * l.y, r.x, r.y * l.x, r.y * l.y, r.y, l.x, l.y, T::one()];
        for (j, v) in row.iter().enumerate() {
            a[(k, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("svd vectors requested");
    let f = vt.row(8);
    let f_norm = Matrix3::from_row_slice(f.transpose().as_slice());
    // Undo the conditioning transforms: p_r' F p_l = (T_r p_r)' F_hat (T_l p_l).
    let f_full = tr.transpose() * f_norm * tl;
    FundamentalMatrix::from_matrix(f_full)
}

/// Robust fundamental-matrix estimation.
///
/// Runs seeded RANSAC over minimal eight-point samples with the Sampson
/// distance as the inlier residual, then re-estimates on the consensus set by
/// the normalized eight-point method. The returned mask is consistent with
/// the returned matrix. Deterministic given `(matches, threshold, iters, seed)`.
pub fn estimate_fundamental_ransac<T: Scalar>(
    matches: &[Correspondence2D2D<T>],
    threshold_px: T,
    max_iters: usize,
    seed: u64,
) -> Result<(FundamentalMatrix<T>, Vec<bool>)> {
    let n = matches.len();
    if n < 8 {
        return Err(Error::InsufficientData { what: "correspondences", needed: 8, got: n });
    }
    assert!(threshold_px > T::zero(), "RANSAC threshold must be positive");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, T, Vec<bool>)> = None;
    let mut needed = max_iters;
    let confidence = 0.99_f64;

    let mut iter = 0;
    while iter < max_iters.min(needed) {
        iter += 1;
        let idx = rand::seq::index::sample(&mut rng, n, 8);
        let sample: Vec<Correspondence2D2D<T>> = idx.iter().map(|i| matches[i]).collect();
        let f = match estimate_fundamental_linear(&sample) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let mut mask = vec![false; n];
        let mut count = 0usize;
        let mut residual_sum = T::zero();
        for (k, c) in matches.iter().enumerate() {
            let d = match f.sampson_distance(c) {
                Ok(d) => d,
                Err(_) => continue,
            };
            if d <= threshold_px {
                mask[k] = true;
                count += 1;
                residual_sum += d;
            }
        }
        let better = match &best {
            None => count >= 8,
            Some((bc, bs, _)) => count > *bc || (count == *bc && residual_sum < *bs),
        };
        if better {
            best = Some((count, residual_sum, mask));
            // Adaptive iteration bound at 99% confidence.
            let w = count as f64 / n as f64;
            let p_all = w.powi(8);
            if p_all > 0.0 && p_all < 1.0 {
                let bound = ((1.0 - confidence).ln() / (1.0 - p_all).ln()).ceil();
                needed = iter + bound.max(0.0) as usize;
            } else if p_all >= 1.0 {
                needed = iter;
            }
        }
    }

    let (_, _, mask) =
        best.ok_or(Error::NoConsensus("no eight-point sample reached 8 inliers"))?;
    let consensus: Vec<Correspondence2D2D<T>> = matches
        .iter()
        .zip(mask.iter())
        .filter_map(|(c, keep)| keep.then_some(*c))
        .collect();
    let f = estimate_fundamental_linear(&consensus)?;
    let final_mask: Vec<bool> = matches
        .iter()
        .map(|c| f.sampson_distance(c).map(|d| d <= threshold_px).unwrap_or(false))
        .collect();
    Ok((f, final_mask))
}

/// Camera pair compatible with a fundamental matrix: the left camera is
/// `(I | 0)` and the right is `((e_r)_x F + e_r g' | gamma e_r)`.
pub fn cameras_from_fundamental<T: Scalar>(
    f: &FundamentalMatrix<T>,
    frame: &ProjectiveFrame<T>,
) -> (CameraMatrix<T>, CameraMatrix<T>) {
    let e = f.epipole_right;
    let a = cross_matrix(&e) * f.m + e * frame.g.transpose();
    let b = e * frame.gamma;
    (CameraMatrix::canonical(), CameraMatrix::from_blocks(&a, &b))
}

/// Homogeneous linear triangulation from two views.
///
/// Solves the stacked projection constraints by SVD; rows are normalized for
/// conditioning. Errors when the camera centres coincide or the solution is
/// not unique (point on the baseline).
pub fn triangulate<T: Scalar>(
    c_left: &CameraMatrix<T>,
    c_right: &CameraMatrix<T>,
    m: &Correspondence2D2D<T>,
) -> Result<HPoint3<T>> {
    if c_left.center().approx_eq(&c_right.center(), sc(1e-9)) {
        return Err(Error::DegenerateGeometry("camera centres coincide"));
    }
    let l = m.left.inhomogenize()?;
    let r = m.right.inhomogenize()?;
    let ml = c_left.matrix();
    let mr = c_right.matrix();

    let mut a = Matrix4::<T>::zeros();
    for j in 0..4 {
        a[(0, j)] = l.x * ml[(2, j)] - ml[(0, j)];
        a[(1, j)] = l.y * ml[(2, j)] - ml[(1, j)];
        a[(2, j)] = r.x * mr[(2, j)] - mr[(0, j)];
        a[(3, j)] = r.y * mr[(2, j)] - mr[(1, j)];
    }
    for i in 0..4 {
        let norm = a.row(i).norm();
        if norm > T::zero() {
            for j in 0..4 {
                a[(i, j)] /= norm;
            }
        }
    }
    let svd = a.svd(false, true);
    let s = svd.singular_values;
    if s[2] <= s[0] * sc(1e-9) {
        return Err(Error::DegenerateGeometry("triangulation is not unique"));
    }
    let vt = svd.v_t.expect("svd vectors requested");
    Ok(HPoint3::from_vector(vt.row(3).transpose()))
}

/// Fundamental matrix induced by a camera pair:
/// `F = (e_r)_x C_r C_l^+` with `e_r = C_r d_l` and `C_l d_l = 0`.
pub fn fundamental_from_cameras<T: Scalar>(
    c_left: &CameraMatrix<T>,
    c_right: &CameraMatrix<T>,
) -> Result<FundamentalMatrix<T>> {
    let d_left = c_left.center();
    let e = c_right.matrix() * d_left.coords();
    let scale = c_right.matrix().norm() * d_left.coords().norm();
    if e.norm() <= scale * sc(1e-12) {
        return Err(Error::DegenerateGeometry("camera centres coincide"));
    }
    let e = canonicalize_vector(&e);
    let pinv = c_left
        .matrix()
        .clone_owned()
        .pseudo_inverse(c_left.matrix().norm() * sc(1e-13))
        .map_err(|_| Error::DegenerateGeometry("camera matrix pseudo-inverse failed"))?;
    let f = cross_matrix(&e) * (c_right.matrix() * pinv);
    FundamentalMatrix::from_matrix(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn project(c: &CameraMatrix<f64>, p: &HPoint3<f64>) -> Vector2<f64> {
        c.project(p).inhomogenize().unwrap()
    }

    #[test]
    fn linear_estimation_rejects_seven_matches() {
        let matches: Vec<Correspondence2D2D<f64>> = (0..7)
            .map(|k| {
                let x = k as f64;
                Correspondence2D2D::new(HPoint2::pixel(x, x + 1.0), HPoint2::pixel(x + 2.0, x))
            })
            .collect();
        assert!(matches!(
            estimate_fundamental_linear(&matches),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(
            estimate_fundamental_ransac(&matches, 1.0, 100, 0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn rectified_pair_has_pure_translation_fundamental() {
        let cl = CameraMatrix::<f64>::canonical();
        let cr =
            CameraMatrix::from_blocks(&Matrix3::identity(), &Vector3::new(1.0, 0.0, 0.0));
        let f = fundamental_from_cameras(&cl, &cr).unwrap();
        let expected =
            FundamentalMatrix::from_matrix(cross_matrix(&Vector3::new(1.0, 0.0, 0.0))).unwrap();
        assert!(f.approx_eq(&expected, 1e-10));
    }

    #[test]
    fn neutral_frame_gives_canonical_left_camera() {
        let f = FundamentalMatrix::from_matrix(Matrix3::new(
            0.0, -1.0, 0.2, 1.0, 0.0, -0.4, -0.1, 0.3, 0.0,
        ))
        .unwrap();
        let (cl, _) = cameras_from_fundamental(&f, &ProjectiveFrame::neutral());
        assert_eq!(cl.matrix(), CameraMatrix::canonical().matrix());
    }

    #[test]
    fn cameras_from_fundamental_round_trips() {
        let f = FundamentalMatrix::from_matrix(Matrix3::new(
            0.0, -0.8, 0.25, 0.9, 0.1, -0.35, -0.15, 0.3, 0.01,
        ))
        .unwrap();
        let frame = ProjectiveFrame::new(Vector3::new(0.2, -0.1, 0.4), 2.0).unwrap();
        let (cl, cr) = cameras_from_fundamental(&f, &frame);
        let back = fundamental_from_cameras(&cl, &cr).unwrap();
        assert!(back.approx_eq(&f, 1e-10));
    }

    #[test]
    fn triangulation_recovers_exact_point() {
        let k = Matrix3::new(1500.0, 0.0, 800.0, 0.0, 1500.0, 600.0, 0.0, 0.0, 1.0);
        let cl = CameraMatrix::from_blocks(&k, &Vector3::zeros());
        let cr = CameraMatrix::from_blocks(&k, &(k * Vector3::new(-170.0, 0.0, 0.0)));
        let p = HPoint3::euclidean(100.0, -50.0, 2000.0);
        let m = Correspondence2D2D::new(
            HPoint2::pixel(project(&cl, &p).x, project(&cl, &p).y),
            HPoint2::pixel(project(&cr, &p).x, project(&cr, &p).y),
        );
        let rec = triangulate(&cl, &cr, &m).unwrap().inhomogenize().unwrap();
        assert!((rec - p.inhomogenize().unwrap()).norm() / 2000.0 < 1e-6);
    }

    #[test]
    fn triangulation_rejects_coincident_cameras_and_baseline_points() {
        let k = Matrix3::new(1500.0, 0.0, 800.0, 0.0, 1500.0, 600.0, 0.0, 0.0, 1.0);
        let cl = CameraMatrix::from_blocks(&k, &Vector3::zeros());
        let m = Correspondence2D2D::new(HPoint2::pixel(1.0, 2.0), HPoint2::pixel(3.0, 4.0));
        assert!(matches!(triangulate(&cl, &cl.clone(), &m), Err(Error::DegenerateGeometry(_))));

        // A point on the baseline projects to the epipoles in both images.
        // The right camera is displaced in depth so the epipoles are finite.
        let cr = CameraMatrix::from_blocks(&k, &(k * Vector3::new(-170.0, 0.0, 300.0)));
        let on_baseline = HPoint3::euclidean(-170.0, 0.0, 300.0);
        let pl = project(&cl, &on_baseline);
        let pr = project(&cr, &on_baseline);
        let m = Correspondence2D2D::new(HPoint2::pixel(pl.x, pl.y), HPoint2::pixel(pr.x, pr.y));
        assert!(matches!(triangulate(&cl, &cr, &m), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn rank_two_is_enforced_and_epipole_cached() {
        let full_rank = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.2, 0.1, 0.0, 1.0);
        let f = FundamentalMatrix::from_matrix(full_rank).unwrap();
        let svd = f.matrix().svd(false, false);
        assert!(svd.singular_values[2] <= svd.singular_values[0] * 1e-12);
        let e = f.right_epipole();
        let res = f.matrix().transpose() * e.coords();
        assert!(res.norm() < 1e-10);
    }
}
