//! Range-camera model: back-projection of (pixel, range) samples, robust
//! plane fitting under the radial noise model, and ray-plane range refinement.
//!
//! Range perturbations occur radially along visual rays, so plane residuals
//! here are range differences along each point's own ray, not perpendicular
//! point-plane distances. The perpendicular distance stays available as a
//! diagnostic through [`crate::geom::HPlane3::signed_distance`].

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{CameraMatrix, HPlane3, HPoint2, HPoint3};
use crate::lm::{self, LmOptions};
use crate::scalar::{sc, Scalar};

/// Default sensor range ceiling in millimetres.
pub const DEFAULT_RANGE_MAX_MM: f64 = 5000.0;

/// One range-camera measurement: an image pixel and the radial distance of
/// the scene surface along that pixel's visual ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSample<T: Scalar> {
    pixel: HPoint2<T>,
    range: T,
}

impl<T: Scalar> RangeSample<T> {
    pub fn new(x: T, y: T, range_mm: T) -> Result<Self> {
        if !(range_mm > T::zero() && range_mm.is_finite()) {
            return Err(Error::DegenerateData("range must be positive and finite"));
        }
        Ok(Self { pixel: HPoint2::pixel(x, y), range: range_mm })
    }

    /// Builds from a homogeneous pixel, rescaling to unit last coordinate.
    pub fn from_pixel(pixel: &HPoint2<T>, range_mm: T) -> Result<Self> {
        let p = pixel.inhomogenize()?;
        Self::new(p.x, p.y, range_mm)
    }

    pub fn pixel(&self) -> &HPoint2<T> {
        &self.pixel
    }

    pub fn range(&self) -> T {
        self.range
    }

    pub fn within_range_max(&self, max_mm: T) -> bool {
        self.range <= max_mm
    }
}

/// Plane fitted to back-projected range samples, with unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPlane<T: Scalar> {
    pub plane: HPlane3<T>,
    pub inlier_mask: Vec<bool>,
    pub rms_radial_residual: T,
}

impl<T: Scalar> FittedPlane<T> {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|x| **x).count()
    }
}

/// Back-projects a range sample into the scene:
/// `Q = A^-1 ((rho / alpha) q - b)` with `alpha = |A^-1 q|`, placing the point
/// at distance `rho` from the optical centre along the pixel's visual ray.
pub fn backproject<T: Scalar>(
    camera: &CameraMatrix<T>,
    sample: &RangeSample<T>,
) -> Result<HPoint3<T>> {
    let a_inv = camera
        .a_block()
        .try_inverse()
        .ok_or(Error::InvalidCamera("A block is singular"))?;
    let dir = a_inv * sample.pixel.coords();
    let alpha = dir.norm();
    let q = dir * (sample.range / alpha) - a_inv * camera.b_block();
    Ok(HPoint3::euclidean(q.x, q.y, q.z))
}

/// Replaces a sample's range by intersecting its visual ray with a plane:
/// `rho_pi = (V . A^-1 b - V4) / ((1/alpha) V . A^-1 q)`.
///
/// Returns the refined range and the corresponding scene point, which lies on
/// the plane by construction.
pub fn refine_range<T: Scalar>(
    camera: &CameraMatrix<T>,
    q: &HPoint2<T>,
    plane: &HPlane3<T>,
) -> Result<(T, HPoint3<T>)> {
    let hessian = plane.hessian_normalized()?;
    let n = hessian.normal();
    let a_inv = camera
        .a_block()
        .try_inverse()
        .ok_or(Error::InvalidCamera("A block is singular"))?;
    let pix = q.inhomogenize()?;
    let dir = a_inv * Vector3::new(pix.x, pix.y, T::one());
    let alpha = dir.norm();
    let denom = n.dot(&dir) / alpha;
    if denom.abs() < sc(1e-12) {
        return Err(Error::RayParallelToPlane);
    }
    let a_inv_b = a_inv * camera.b_block();
    let rho = (n.dot(&a_inv_b) - hessian.offset()) / denom;
    if rho <= T::zero() {
        return Err(Error::PlaneBehindCamera);
    }
    let point = dir * (rho / alpha) - a_inv_b;
    Ok((rho, HPoint3::euclidean(point.x, point.y, point.z)))
}

/// Range difference along the visual ray of a back-projected point, given a
/// plane `(n, d)` and the camera centre. `None` when the ray is parallel to
/// the plane or the intersection lies behind the camera.
fn radial_residual<T: Scalar>(
    n: &Vector3<T>,
    d: T,
    center: &Vector3<T>,
    dir: &Vector3<T>,
    rho: T,
) -> Option<T> {
    let denom = n.dot(dir);
    if denom.abs() < sc(1e-12) {
        return None;
    }
    let t = -(n.dot(center) + d) / denom;
    if t <= T::zero() {
        return None;
    }
    Some(rho - t)
}

struct RayPoint<T: Scalar> {
    dir: Vector3<T>,
    rho: T,
}

/// Total-least-squares plane through a point set: unit normal, offset.
fn tls_plane<T: Scalar>(points: &[Vector3<T>]) -> Result<(Vector3<T>, T)> {
    let n = sc::<T>(points.len() as f64);
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut cov = nalgebra::Matrix3::<T>::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let svd = cov.svd(true, false);
    let s = svd.singular_values;
    if s[1] <= s[0] * sc(1e-10) {
        return Err(Error::DegenerateData("points are collinear"));
    }
    let u = svd.u.expect("svd vectors requested");
    let normal = u.column(2).into_owned();
    Ok((normal, -normal.dot(&centroid)))
}

/// Robust plane fit to back-projected range points under the radial noise
/// model.
///
/// RANSAC over 3-point samples scores candidates by the along-ray range
/// residual; the consensus set is then refined by Levenberg-Marquardt over a
/// 2-parameter tangent update of the unit normal plus the offset, minimizing
/// summed squared radial residuals from a total-least-squares start.
/// Deterministic given `(points, threshold, iters, seed)`.
pub fn fit_plane_ransac<T: Scalar>(
    points: &[HPoint3<T>],
    camera: &CameraMatrix<T>,
    threshold_mm: T,
    max_iters: usize,
    seed: u64,
) -> Result<FittedPlane<T>> {
    if points.len() < 3 {
        return Err(Error::DegenerateData("plane fitting needs at least 3 points"));
    }
    assert!(threshold_mm > T::zero(), "RANSAC threshold must be positive");
    let center = camera.center().inhomogenize()?;
    let euclid: Vec<Vector3<T>> =
        points.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
    // Collinear input can never define a plane.
    tls_plane(&euclid)?;

    let rays: Vec<RayPoint<T>> = euclid
        .iter()
        .map(|x| {
            let offset = x - center;
            let rho = offset.norm();
            RayPoint { dir: offset / rho, rho }
        })
        .collect();

    let n_pts = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, T, Vector3<T>, T)> = None;
    let mut needed = max_iters;
    let confidence = 0.99_f64;

    let mut iter = 0;
    while iter < max_iters.min(needed) {
        iter += 1;
        let idx = rand::seq::index::sample(&mut rng, n_pts, 3);
        let (p0, p1, p2) = (euclid[idx.index(0)], euclid[idx.index(1)], euclid[idx.index(2)]);
        let e1 = p1 - p0;
        let e2 = p2 - p0;
        let normal = e1.cross(&e2);
        let scale = e1.norm() * e2.norm();
        if scale == T::zero() || normal.norm() <= scale * sc(1e-10) {
            continue; // degenerate sample
        }
        let normal = normal / normal.norm();
        let d = -normal.dot(&p0);

        let mut count = 0usize;
        let mut residual_sum = T::zero();
        for ray in &rays {
            if let Some(r) = radial_residual(&normal, d, &center, &ray.dir, ray.rho) {
                if r.abs() <= threshold_mm {
                    count += 1;
                    residual_sum += r.abs();
                }
            }
        }
        let better = match &best {
            None => count >= 3,
            Some((bc, bs, _, _)) => count > *bc || (count == *bc && residual_sum < *bs),
        };
        if better {
            best = Some((count, residual_sum, normal, d));
            let w = count as f64 / n_pts as f64;
            let p_all = w.powi(3);
            if p_all > 0.0 && p_all < 1.0 {
                let bound = ((1.0 - confidence).ln() / (1.0 - p_all).ln()).ceil();
                needed = iter + bound.max(0.0) as usize;
            } else if p_all >= 1.0 {
                needed = iter;
            }
        }
    }

    let (_, _, normal, d) =
        best.ok_or(Error::NoConsensus("no 3-point sample reached 3 inliers"))?;
    let mask: Vec<bool> = rays
        .iter()
        .map(|ray| {
            radial_residual(&normal, d, &center, &ray.dir, ray.rho)
                .map(|r| r.abs() <= threshold_mm)
                .unwrap_or(false)
        })
        .collect();
    let inlier_euclid: Vec<Vector3<T>> = euclid
        .iter()
        .zip(mask.iter())
        .filter_map(|(p, keep)| keep.then_some(*p))
        .collect();
    let inlier_rays: Vec<&RayPoint<T>> =
        rays.iter().zip(mask.iter()).filter_map(|(r, keep)| keep.then_some(r)).collect();

    let (normal, d) = refine_plane_radial(&inlier_euclid, &inlier_rays, &center)?;

    // Re-score against the refined plane so the mask matches the output.
    let final_mask: Vec<bool> = rays
        .iter()
        .map(|ray| {
            radial_residual(&normal, d, &center, &ray.dir, ray.rho)
                .map(|r| r.abs() <= threshold_mm)
                .unwrap_or(false)
        })
        .collect();
    let inlier_count = final_mask.iter().filter(|x| **x).count();
    if inlier_count < 3 {
        return Err(Error::NoConsensus("refined plane keeps fewer than 3 inliers"));
    }
    let mut ss = T::zero();
    for (ray, keep) in rays.iter().zip(final_mask.iter()) {
        if *keep {
            if let Some(r) = radial_residual(&normal, d, &center, &ray.dir, ray.rho) {
                ss += r * r;
            }
        }
    }
    let rms = (ss / sc::<T>(inlier_count as f64)).sqrt();
    Ok(FittedPlane {
        plane: HPlane3::new(normal.x, normal.y, normal.z, d),
        inlier_mask: final_mask,
        rms_radial_residual: rms,
    })
}

/// LM refinement of a plane under radial residuals. The unit normal moves in
/// the tangent plane of the total-least-squares initialization.
fn refine_plane_radial<T: Scalar>(
    inliers: &[Vector3<T>],
    rays: &[&RayPoint<T>],
    center: &Vector3<T>,
) -> Result<(Vector3<T>, T)> {
    let (n0, d0) = tls_plane(inliers)?;
    // Orthonormal tangent basis at n0.
    let pick = if n0.x.abs() < sc(0.9) {
        Vector3::new(T::one(), T::zero(), T::zero())
    } else {
        Vector3::new(T::zero(), T::one(), T::zero())
    };
    let u = n0.cross(&pick).normalize();
    let v = n0.cross(&u);

    let center = *center;
    let ray_dirs: Vec<Vector3<T>> = rays.iter().map(|r| r.dir).collect();
    let ray_rhos: Vec<T> = rays.iter().map(|r| r.rho).collect();
    let residuals = move |x: &DVector<T>| {
        let n = (n0 + u * x[0] + v * x[1]).normalize();
        let d = d0 + x[2];
        DVector::from_iterator(
            ray_dirs.len(),
            ray_dirs.iter().zip(ray_rhos.iter()).map(|(dir, rho)| {
                radial_residual(&n, d, &center, dir, *rho).unwrap_or_else(|| sc(1e12))
            }),
        )
    };
    let out = lm::minimize(DVector::zeros(3), residuals, |_| {}, &LmOptions::default());
    let n = (n0 + u * out.params[0] + v * out.params[1]).normalize();
    let d = d0 + out.params[2];
    Ok((n, d))
}
