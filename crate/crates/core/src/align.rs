//! Range-to-stereo alignment: DLT estimation of the 4x4 space homography from
//! 3D point pairs, Levenberg-Marquardt refinement of the reprojection error
//! (joint over the homography, or separately per camera), and the
//! similarity-transform baseline via Procrustes initialization.

use nalgebra::{
    DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Rotation3, Vector2, Vector3, Vector4,
};

use crate::error::{Error, Result};
use crate::geom::{
    canonicalize_matrix, inhomog_distance, normalize_points, CameraMatrix, HPoint2, HPoint3,
    Homography3, Similarity3,
};
use crate::lm::{self, LmOptions};
use crate::scalar::{sc, Scalar};

/// Matched 3D points: one from the parallax reconstruction, one from the
/// range back-projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence3D3D<T: Scalar> {
    /// `P`: the stereo-reconstructed point, in the reconstruction frame.
    pub stereo_point: HPoint3<T>,
    /// `Q`: the back-projected range point, in the range frame.
    pub tof_point: HPoint3<T>,
    pub board_index: usize,
    pub vertex_index: usize,
}

/// Which objective a refinement optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementMode {
    DltOnly,
    Joint,
    Separate,
    Similarity,
}

/// Outcome of an alignment refinement.
#[derive(Debug, Clone)]
pub struct AlignmentResult<T: Scalar> {
    /// The space homography `H` with `Q ~ H P`. In separate mode this is the
    /// unrefined initial estimate; the refinement lives in the cameras.
    pub homography: Homography3<T>,
    pub refined_left: Option<CameraMatrix<T>>,
    pub refined_right: Option<CameraMatrix<T>>,
    pub refined_similarity: Option<Similarity3<T>>,
    pub mode: RefinementMode,
    pub iterations: usize,
    pub converged: bool,
    /// Objective values: summed squared pixel distances over both images.
    pub initial_sum_sq: T,
    pub final_sum_sq: T,
    pub final_sum_sq_left: T,
    pub final_sum_sq_right: T,
    /// Root-mean-square pixel error over all compared image points.
    pub initial_rms_px: T,
    pub final_rms_px: T,
    /// Objective after every accepted solver step (non-increasing).
    pub cost_trace: Vec<T>,
    /// Raw optimization variables and effective degrees of freedom after
    /// gauge fixing: 16/15 joint, 24/22 separate, 7/7 similarity.
    pub raw_parameter_count: usize,
    pub effective_parameter_count: usize,
}

/// Direct linear estimate of the space homography from point pairs.
///
/// Both point sets are conditioned with [`normalize_points`]; the wedge
/// constraints of all pairs are stacked into a `6k x 16` system whose
/// smallest right singular vector yields `H` after denormalization.
/// Rejects inputs whose design matrix is rank-deficient (degenerate point
/// configurations such as fewer than five points in general position, or all
/// points coplanar).
pub fn dlt_homography3<T: Scalar>(pairs: &[Correspondence3D3D<T>]) -> Result<Homography3<T>> {
    if pairs.len() < 5 {
        return Err(Error::InsufficientData { what: "point pairs", needed: 5, got: pairs.len() });
    }
    let stereo: Vec<HPoint3<T>> = pairs.iter().map(|c| c.stereo_point).collect();
    let tof: Vec<HPoint3<T>> = pairs.iter().map(|c| c.tof_point).collect();
    let (np, tp) = normalize_points(&stereo)?;
    let (nq, tq) = normalize_points(&tof)?;

    let rows = (6 * pairs.len()).max(16);
    let mut a = DMatrix::<T>::zeros(rows, 16);
    for (k, (p, q)) in np.iter().zip(nq.iter()).enumerate() {
        let w = q.wedge();
        let pc = p.coords();
        for col_block in 0..4 {
            let scale = pc[col_block];
            for i in 0..6 {
                for j in 0..4 {
                    a[(6 * k + i, 4 * col_block + j)] = scale * w[(i, j)];
                }
            }
        }
    }
    let svd = a.svd(false, true);
    let s = &svd.singular_values;
    if s[14] <= s[0] * sc(1e-10) {
        return Err(Error::DegenerateConfiguration(
            "design matrix is rank-deficient (points nearly coplanar or too few)",
        ));
    }
    let vt = svd.v_t.expect("svd vectors requested");
    let h = vt.row(15).transpose();
    // vec() is column-major.
    let h_norm = Matrix4::from_column_slice(h.as_slice());
    let h_full = tq.inverse()?.matrix() * h_norm * tp.matrix();
    Homography3::from_matrix(canonicalize_matrix(&h_full))
}

/// Summed squared reprojection error `sum_k D(C Q_k, p_k)^2` in pixels.
pub fn reprojection_error<T: Scalar>(
    camera: &CameraMatrix<T>,
    tof_points: &[HPoint3<T>],
    image_points: &[HPoint2<T>],
) -> Result<T> {
    assert_eq!(tof_points.len(), image_points.len(), "point lists must pair up");
    let mut sum = T::zero();
    for (q, p) in tof_points.iter().zip(image_points.iter()) {
        let d = inhomog_distance(&camera.project(q), p)?;
        sum += d * d;
    }
    Ok(sum)
}

/// Root-mean-square pixel error from a summed squared error over `n` points.
pub fn rms_from_sum_sq<T: Scalar>(sum_sq: T, n: usize) -> T {
    if n == 0 {
        T::zero()
    } else {
        (sum_sq / sc::<T>(n as f64)).sqrt()
    }
}

/// Prepared reprojection targets for the solvers.
struct ReprojectionProblem<T: Scalar> {
    qs: Vec<Vector4<T>>,
    left: Vec<Vector2<T>>,
    right: Vec<Vector2<T>>,
}

impl<T: Scalar> ReprojectionProblem<T> {
    fn new(
        pairs: &[Correspondence3D3D<T>],
        image_left: &[HPoint2<T>],
        image_right: &[HPoint2<T>],
    ) -> Result<Self> {
        assert_eq!(pairs.len(), image_left.len(), "one left image point per pair");
        assert_eq!(pairs.len(), image_right.len(), "one right image point per pair");
        let qs = pairs.iter().map(|c| *c.tof_point.coords()).collect();
        let left = image_left.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
        let right = image_right.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
        Ok(Self { qs, left, right })
    }

    fn count(&self) -> usize {
        self.qs.len()
    }
}

/// Residuals of one camera side: `(dx, dy)` per point through `m = C X`.
fn side_residuals<T: Scalar>(
    m: &Matrix3x4<T>,
    qs: &[Vector4<T>],
    targets: &[Vector2<T>],
    out: &mut Vec<T>,
) {
    let big = sc::<T>(1e12);
    for (q, t) in qs.iter().zip(targets.iter()) {
        let p = m * q;
        if p.z == T::zero() || !p.z.is_finite() {
            out.push(big);
            out.push(big);
            continue;
        }
        let dx = p.x / p.z - t.x;
        let dy = p.y / p.z - t.y;
        out.push(if dx.is_finite() { dx } else { big });
        out.push(if dy.is_finite() { dy } else { big });
    }
}

fn unit_norm_retract<T: Scalar>(x: &mut DVector<T>) {
    let canon = crate::geom::canonicalize_vector(&x.clone_owned());
    x.copy_from(&canon);
}

/// Minimizes the joint reprojection error
/// `E(X) = E_l(C_l X) + E_r(C_r X)` over the 16 entries of `X = H^-1`,
/// renormalized to unit norm after every accepted step (15 effective
/// parameters). The cameras, and hence the epipolar geometry, are untouched.
pub fn refine_joint<T: Scalar>(
    h_init: &Homography3<T>,
    pairs: &[Correspondence3D3D<T>],
    c_left: &CameraMatrix<T>,
    c_right: &CameraMatrix<T>,
    image_left: &[HPoint2<T>],
    image_right: &[HPoint2<T>],
    opts: &LmOptions<T>,
) -> Result<AlignmentResult<T>> {
    let problem = ReprojectionProblem::new(pairs, image_left, image_right)?;
    let x_init = h_init
        .inverse()
        .map_err(|_| Error::InvalidInitialization("initial homography is singular"))?;
    let x0 = DVector::from_column_slice(x_init.matrix().as_slice());

    let ml = *c_left.matrix();
    let mr = *c_right.matrix();
    let residuals = |x: &DVector<T>| {
        let xm = Matrix4::from_column_slice(x.as_slice());
        let proj_l = ml * xm;
        let proj_r = mr * xm;
        let mut out = Vec::with_capacity(4 * problem.count());
        side_residuals(&proj_l, &problem.qs, &problem.left, &mut out);
        side_residuals(&proj_r, &problem.qs, &problem.right, &mut out);
        DVector::from_vec(out)
    };

    let initial = residuals(&x0).norm_squared();
    if !initial.is_finite() {
        return Err(Error::InvalidInitialization("objective is not finite at the start"));
    }
    let outcome = lm::minimize(x0, residuals, unit_norm_retract, opts);

    let x_final = Matrix4::from_column_slice(outcome.params.as_slice());
    let homography = Homography3::from_matrix(x_final)
        .and_then(|h| h.inverse())
        .map(|h| h.canonicalized())?;

    let n = problem.count();
    let tof_points: Vec<HPoint3<T>> = pairs.iter().map(|c| c.tof_point).collect();
    let final_left = reprojection_error(
        &CameraMatrix::from_matrix_unchecked(ml * x_final),
        &tof_points,
        image_left,
    )?;
    let final_right = reprojection_error(
        &CameraMatrix::from_matrix_unchecked(mr * x_final),
        &tof_points,
        image_right,
    )?;
    Ok(AlignmentResult {
        homography,
        refined_left: None,
        refined_right: None,
        refined_similarity: None,
        mode: RefinementMode::Joint,
        iterations: outcome.iterations,
        converged: outcome.converged,
        initial_sum_sq: outcome.initial_cost,
        final_sum_sq: outcome.final_cost,
        final_sum_sq_left: final_left,
        final_sum_sq_right: final_right,
        initial_rms_px: rms_from_sum_sq(outcome.initial_cost, 2 * n),
        final_rms_px: rms_from_sum_sq(outcome.final_cost, 2 * n),
        cost_trace: outcome.cost_trace,
        raw_parameter_count: 16,
        effective_parameter_count: 15,
    })
}

/// Minimizes the per-camera reprojection errors independently over the 12
/// entries of each modified camera, starting from `C <- C H^-1` (11 effective
/// parameters each). This abandons the original epipolar geometry: the
/// refined cameras induce a new fundamental matrix.
pub fn refine_separate<T: Scalar>(
    h_init: &Homography3<T>,
    pairs: &[Correspondence3D3D<T>],
    c_left: &CameraMatrix<T>,
    c_right: &CameraMatrix<T>,
    image_left: &[HPoint2<T>],
    image_right: &[HPoint2<T>],
    opts: &LmOptions<T>,
) -> Result<AlignmentResult<T>> {
    let problem = ReprojectionProblem::new(pairs, image_left, image_right)?;
    let x_init = h_init
        .inverse()
        .map_err(|_| Error::InvalidInitialization("initial homography is singular"))?;

    let side = |camera: &CameraMatrix<T>, targets: &Vec<Vector2<T>>| {
        let m0 = canonicalize_matrix(&(camera.matrix() * x_init.matrix()));
        let x0 = DVector::from_column_slice(m0.as_slice());
        let residuals = |x: &DVector<T>| {
            let m = Matrix3x4::from_column_slice(x.as_slice());
            let mut out = Vec::with_capacity(2 * problem.count());
            side_residuals(&m, &problem.qs, targets, &mut out);
            DVector::from_vec(out)
        };
        let initial = residuals(&x0).norm_squared();
        if !initial.is_finite() {
            return Err(Error::InvalidInitialization("objective is not finite at the start"));
        }
        Ok(lm::minimize(x0, residuals, unit_norm_retract, opts))
    };

    let left_out = side(c_left, &problem.left)?;
    let right_out = side(c_right, &problem.right)?;

    let refined_left =
        CameraMatrix::from_matrix(Matrix3x4::from_column_slice(left_out.params.as_slice()))?;
    let refined_right =
        CameraMatrix::from_matrix(Matrix3x4::from_column_slice(right_out.params.as_slice()))?;

    let n = problem.count();
    let initial = left_out.initial_cost + right_out.initial_cost;
    let fin = left_out.final_cost + right_out.final_cost;
    let mut trace = left_out.cost_trace.clone();
    // Combined trace: left steps at the right's initial cost, then right steps.
    for t in trace.iter_mut() {
        *t += right_out.initial_cost;
    }
    for c in &right_out.cost_trace[1..] {
        trace.push(left_out.final_cost + *c);
    }
    Ok(AlignmentResult {
        homography: h_init.canonicalized(),
        refined_left: Some(refined_left),
        refined_right: Some(refined_right),
        refined_similarity: None,
        mode: RefinementMode::Separate,
        iterations: left_out.iterations + right_out.iterations,
        converged: left_out.converged && right_out.converged,
        initial_sum_sq: initial,
        final_sum_sq: fin,
        final_sum_sq_left: left_out.final_cost,
        final_sum_sq_right: right_out.final_cost,
        initial_rms_px: rms_from_sum_sq(initial, 2 * n),
        final_rms_px: rms_from_sum_sq(fin, 2 * n),
        cost_trace: trace,
        raw_parameter_count: 24,
        effective_parameter_count: 22,
    })
}

/// Closed-form least-squares similarity `Q ~ sigma R P + t` from point pairs,
/// with the reflection corrected so `det R = +1`.
pub fn procrustes_similarity<T: Scalar>(
    pairs: &[Correspondence3D3D<T>],
) -> Result<Similarity3<T>> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateData("similarity estimation needs at least 3 pairs"));
    }
    let ps: Vec<Vector3<T>> =
        pairs.iter().map(|c| c.stereo_point.inhomogenize()).collect::<Result<_>>()?;
    let qs: Vec<Vector3<T>> =
        pairs.iter().map(|c| c.tof_point.inhomogenize()).collect::<Result<_>>()?;
    let n = sc::<T>(pairs.len() as f64);
    let p_bar = ps.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let q_bar = qs.iter().fold(Vector3::zeros(), |a, q| a + q) / n;

    let mut cov = Matrix3::<T>::zeros();
    let mut p_var = T::zero();
    for (p, q) in ps.iter().zip(qs.iter()) {
        let pc = p - p_bar;
        let qc = q - q_bar;
        cov += qc * pc.transpose();
        p_var += pc.norm_squared();
    }
    cov /= n;
    p_var /= n;
    if p_var <= T::default_epsilon() {
        return Err(Error::DegenerateData("source points coincide"));
    }

    let svd = cov.svd(true, true);
    let s = svd.singular_values;
    if s[1] <= s[0] * sc(1e-10) {
        return Err(Error::DegenerateData("points are collinear"));
    }
    let u = svd.u.expect("svd vectors requested");
    let vt = svd.v_t.expect("svd vectors requested");
    let mut sign = Matrix3::identity();
    if (u.determinant() * vt.determinant()) < T::zero() {
        sign[(2, 2)] = -T::one();
    }
    let r = u * sign * vt;
    let trace_ds = s[0] * sign[(0, 0)] + s[1] * sign[(1, 1)] + s[2] * sign[(2, 2)];
    let scale = trace_ds / p_var;
    if scale <= T::zero() {
        return Err(Error::DegenerateData("estimated scale is not positive"));
    }
    let t = q_bar - r * p_bar * scale;
    Similarity3::new(scale, Rotation3::from_matrix(&r).scaled_axis(), t)
}

/// Minimizes the joint reprojection error over the 7 similarity parameters
/// (Rodrigues rotation vector, log scale, translation), with the homography
/// replaced by the similarity's inverse.
pub fn refine_similarity<T: Scalar>(
    s_init: &Similarity3<T>,
    pairs: &[Correspondence3D3D<T>],
    c_left: &CameraMatrix<T>,
    c_right: &CameraMatrix<T>,
    image_left: &[HPoint2<T>],
    image_right: &[HPoint2<T>],
    opts: &LmOptions<T>,
) -> Result<AlignmentResult<T>> {
    let problem = ReprojectionProblem::new(pairs, image_left, image_right)?;
    let mut x0 = DVector::zeros(7);
    for i in 0..3 {
        x0[i] = s_init.rotvec()[i];
        x0[4 + i] = s_init.translation()[i];
    }
    x0[3] = s_init.scale().ln();

    let ml = *c_left.matrix();
    let mr = *c_right.matrix();
    let similarity_from = |x: &DVector<T>| {
        Similarity3::new(
            x[3].exp(),
            Vector3::new(x[0], x[1], x[2]),
            Vector3::new(x[4], x[5], x[6]),
        )
        .expect("exp(log sigma) is positive")
    };
    let residuals = |x: &DVector<T>| {
        let s = similarity_from(x);
        let xm = *s.inverse().as_homography().matrix();
        let proj_l = ml * xm;
        let proj_r = mr * xm;
        let mut out = Vec::with_capacity(4 * problem.count());
        side_residuals(&proj_l, &problem.qs, &problem.left, &mut out);
        side_residuals(&proj_r, &problem.qs, &problem.right, &mut out);
        DVector::from_vec(out)
    };

    let initial = residuals(&x0).norm_squared();
    if !initial.is_finite() {
        return Err(Error::InvalidInitialization("objective is not finite at the start"));
    }
    let outcome = lm::minimize(x0, residuals, |_| {}, opts);
    let s_final = similarity_from(&outcome.params);
    let x_final = *s_final.inverse().as_homography().matrix();

    let n = problem.count();
    let tof_points: Vec<HPoint3<T>> = pairs.iter().map(|c| c.tof_point).collect();
    let final_left = reprojection_error(
        &CameraMatrix::from_matrix_unchecked(ml * x_final),
        &tof_points,
        image_left,
    )?;
    let final_right = reprojection_error(
        &CameraMatrix::from_matrix_unchecked(mr * x_final),
        &tof_points,
        image_right,
    )?;
    Ok(AlignmentResult {
        homography: s_final.as_homography().canonicalized(),
        refined_left: None,
        refined_right: None,
        refined_similarity: Some(s_final),
        mode: RefinementMode::Similarity,
        iterations: outcome.iterations,
        converged: outcome.converged,
        initial_sum_sq: outcome.initial_cost,
        final_sum_sq: outcome.final_cost,
        final_sum_sq_left: final_left,
        final_sum_sq_right: final_right,
        initial_rms_px: rms_from_sum_sq(outcome.initial_cost, 2 * n),
        final_rms_px: rms_from_sum_sq(outcome.final_cost, 2 * n),
        cost_trace: outcome.cost_trace,
        raw_parameter_count: 7,
        effective_parameter_count: 7,
    })
}

/// Space homography of the two-parameter inverse-disparity range calibration:
/// pixels are preserved and the inverse depth maps to `c0 + c1 / z`.
///
/// `(c0, c1) = (0, 1)` is the identity.
pub fn inverse_disparity_homography<T: Scalar>(c0: T, c1: T) -> Result<Homography3<T>> {
    let mut m = Matrix4::identity();
    m[(3, 2)] = c0;
    m[(3, 3)] = c1;
    Homography3::from_matrix(m)
}
