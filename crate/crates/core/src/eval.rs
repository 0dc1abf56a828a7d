//! Evaluation metrics: calibration error over plane-fitted board vertices,
//! total error over raw hull pixels via 2D transfer homographies, and
//! report/statistics generation.
//!
//! Calibration error isolates the quality of the estimated cameras and
//! transforms; total error additionally carries the instantaneous range
//! noise, since the raw per-pixel ranges enter it unfiltered.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::geom::{canonicalize_matrix, inhomog_distance, normalize_points_2d, HPoint2, HPoint3};
use crate::lm::{self, LmOptions};
use crate::network::{CameraSide, NetworkGraph};
use crate::scalar::{sc, Scalar};
use crate::tof::{backproject, refine_range, FittedPlane, RangeSample};

/// Invertible 3x3 image-to-image projective map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography2<T: Scalar> {
    m: Matrix3<T>,
}

impl<T: Scalar> Homography2<T> {
    pub fn from_matrix(m: Matrix3<T>) -> Result<Self> {
        if m.try_inverse().is_none() {
            return Err(Error::NotInvertible("3x3 homography"));
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.m
    }

    pub fn transform(&self, p: &HPoint2<T>) -> HPoint2<T> {
        p.transformed(&self.m)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.m.try_inverse().map(|m| Self { m }).ok_or(Error::NotInvertible("3x3 homography"))
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        crate::geom::projective_distance(&self.m, &other.m) <= tol
    }
}

/// Chequerboard square shade at a point, for attributing range noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BoardRegion {
    Black,
    White,
}

/// Everything one rig observed of one board: detected vertices in the three
/// images, the raw range samples across the board hull, and (once computed)
/// the robustly fitted plane.
///
/// Vertex lists are index-aligned across cameras and rigs: entry `v` is the
/// same physical board vertex everywhere. Lists are empty when the board is
/// not visible to that camera.
#[derive(Debug, Clone)]
pub struct BoardView<T: Scalar> {
    pub board_id: usize,
    pub rig_id: usize,
    /// Detected range-image vertices with their raw ranges.
    pub tof_vertices: Vec<(HPoint2<T>, T)>,
    pub rgb_left: Vec<HPoint2<T>>,
    pub rgb_right: Vec<HPoint2<T>>,
    /// Raw range samples across the board hull.
    pub hull_pixels: Vec<RangeSample<T>>,
    /// Per-hull-pixel board region, when the source provides it.
    pub hull_regions: Option<Vec<BoardRegion>>,
    pub fitted_plane: Option<FittedPlane<T>>,
}

impl<T: Scalar> BoardView<T> {
    pub fn has_tof(&self) -> bool {
        !self.tof_vertices.is_empty()
    }

    pub fn has_rgb(&self) -> bool {
        !self.rgb_left.is_empty() && !self.rgb_right.is_empty()
    }
}

/// All board observations of a dataset, indexed by `(rig, board)`.
#[derive(Debug, Clone)]
pub struct BoardViews<T: Scalar> {
    views: Vec<BoardView<T>>,
    index: BTreeMap<(usize, usize), usize>,
}

impl<T: Scalar> BoardViews<T> {
    /// Validates vertex-count consistency: every view of the same board must
    /// expose the same number of vertices in every camera that sees it.
    pub fn new(views: Vec<BoardView<T>>) -> Result<Self> {
        let mut per_board: BTreeMap<usize, usize> = BTreeMap::new();
        let mut index = BTreeMap::new();
        for (n, view) in views.iter().enumerate() {
            if index.insert((view.rig_id, view.board_id), n).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate view of board {} in rig {}",
                    view.board_id, view.rig_id
                )));
            }
            let mut counts = Vec::new();
            if view.has_tof() {
                counts.push(view.tof_vertices.len());
            }
            if !view.rgb_left.is_empty() {
                counts.push(view.rgb_left.len());
                counts.push(view.rgb_right.len());
            }
            for c in counts {
                let expected = per_board.entry(view.board_id).or_insert(c);
                if *expected != c {
                    return Err(Error::InvalidConfig(format!(
                        "inconsistent vertex count for board {}: {} vs {}",
                        view.board_id, expected, c
                    )));
                }
            }
            if let Some(regions) = &view.hull_regions {
                if regions.len() != view.hull_pixels.len() {
                    return Err(Error::InvalidConfig(
                        "hull region labels must pair with hull pixels".into(),
                    ));
                }
            }
        }
        Ok(Self { views, index })
    }

    pub fn get(&self, rig: usize, board: usize) -> Option<&BoardView<T>> {
        self.index.get(&(rig, board)).map(|n| &self.views[*n])
    }

    pub fn get_mut(&mut self, rig: usize, board: usize) -> Option<&mut BoardView<T>> {
        self.index.get(&(rig, board)).map(|n| &mut self.views[*n])
    }

    pub fn iter(&self) -> impl Iterator<Item = &BoardView<T>> {
        self.views.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut BoardView<T>> {
        self.views.iter_mut()
    }

    pub fn board_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.views.iter().map(|v| v.board_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn rig_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.views.iter().map(|v| v.rig_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// One evaluated image distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEntry<T: Scalar> {
    pub board_id: usize,
    /// Vertex index (calibration error) or hull-pixel index (total error).
    pub point_id: usize,
    pub rig_i: usize,
    pub rig_j: usize,
    pub side: CameraSide,
    pub region: Option<BoardRegion>,
    pub error_px: T,
}

/// Per-point unsquared pixel distances with summary statistics.
#[derive(Debug, Clone, Default)]
pub struct ErrorReport<T: Scalar> {
    pub entries: Vec<ErrorEntry<T>>,
}

impl<T: Scalar> ErrorReport<T> {
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean(&self) -> T {
        if self.entries.is_empty() {
            return T::zero();
        }
        self.entries.iter().fold(T::zero(), |a, e| a + e.error_px)
            / sc::<T>(self.entries.len() as f64)
    }

    pub fn median(&self) -> T {
        if self.entries.is_empty() {
            return T::zero();
        }
        let mut errs: Vec<T> = self.entries.iter().map(|e| e.error_px).collect();
        errs.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
        let n = errs.len();
        if n % 2 == 1 {
            errs[n / 2]
        } else {
            (errs[n / 2 - 1] + errs[n / 2]) / sc(2.0)
        }
    }

    pub fn max(&self) -> T {
        self.entries.iter().map(|e| e.error_px).fold(T::zero(), |a, b| a.max(b))
    }

    /// Concatenates another report; order-independent for mean/max/count.
    pub fn merge(&mut self, other: ErrorReport<T>) {
        self.entries.extend(other.entries);
    }

    /// Mean error per board region, when labels are present.
    pub fn mean_by_region(&self) -> BTreeMap<BoardRegion, T> {
        let mut sums: BTreeMap<BoardRegion, (T, usize)> = BTreeMap::new();
        for e in &self.entries {
            if let Some(region) = e.region {
                let slot = sums.entry(region).or_insert((T::zero(), 0));
                slot.0 += e.error_px;
                slot.1 += 1;
            }
        }
        sums.into_iter().map(|(k, (s, n))| (k, s / sc::<T>(n as f64))).collect()
    }
}

/// Summary row in the style of the evaluation tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<T: Scalar> {
    pub mean: T,
    pub median: T,
    pub max: T,
    pub count: usize,
}

/// Fixed-bin histogram: 30 bins of width 0.1 px on [0, 3), plus overflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub overflow: usize,
}

impl Histogram {
    pub const BIN_WIDTH: f64 = 0.1;
    pub const BIN_COUNT: usize = 30;

    pub fn bin_edges(bin: usize) -> (f64, f64) {
        (bin as f64 * Self::BIN_WIDTH, (bin + 1) as f64 * Self::BIN_WIDTH)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.overflow
    }
}

/// Summary statistics plus the display histogram; errors on empty reports.
pub fn summarize<T: Scalar>(report: &ErrorReport<T>) -> Result<(Summary<T>, Histogram)> {
    if report.is_empty() {
        return Err(Error::EmptyReport);
    }
    let summary = Summary {
        mean: report.mean(),
        median: report.median(),
        max: report.max(),
        count: report.count(),
    };
    let mut counts = vec![0usize; Histogram::BIN_COUNT];
    let mut overflow = 0usize;
    let width = sc::<T>(Histogram::BIN_WIDTH);
    for e in &report.entries {
        let bin = (e.error_px / width).floor();
        let bin = num_traits::ToPrimitive::to_usize(&bin).unwrap_or(usize::MAX);
        if bin < Histogram::BIN_COUNT {
            counts[bin] += 1;
        } else {
            overflow += 1;
        }
    }
    Ok((summary, Histogram { counts, overflow }))
}

/// Normalized 2D DLT followed by Levenberg-Marquardt refinement of the
/// symmetric transfer error. Subpixel on exact data.
pub fn dlt_homography2<T: Scalar>(
    src: &[HPoint2<T>],
    dst: &[HPoint2<T>],
) -> Result<Homography2<T>> {
    assert_eq!(src.len(), dst.len(), "point lists must pair up");
    if src.len() < 4 {
        return Err(Error::InsufficientData {
            what: "2D correspondences",
            needed: 4,
            got: src.len(),
        });
    }
    let (ns, ts) = normalize_points_2d(src)?;
    let (nd, td) = normalize_points_2d(dst)?;

    let rows = (2 * src.len()).max(9);
    let mut a = DMatrix::<T>::zeros(rows, 9);
    for (k, (s, d)) in ns.iter().zip(nd.iter()).enumerate() {
        let s = s.inhomogenize()?;
        let d = d.inhomogenize()?;
        let r0 = 2 * k;
        let r1 = 2 * k + 1;
        a[(r0, 0)] = -s.x;
        a[(r0, 1)] = -s.y;
        a[(r0, 2)] = -T::one();
        a[(r0, 6)] = d.x * s.x;
        a[(r0, 7)] = d.x * s.y;
        a[(r0, 8)] = d.x;
        a[(r1, 3)] = -s.x;
        a[(r1, 4)] = -s.y;
        a[(r1, 5)] = -T::one();
        a[(r1, 6)] = d.y * s.x;
        a[(r1, 7)] = d.y * s.y;
        a[(r1, 8)] = d.y;
    }
    let svd = a.svd(false, true);
    let s_vals = &svd.singular_values;
    if s_vals[7] <= s_vals[0] * sc(1e-10) {
        return Err(Error::DegenerateData("degenerate 2D configuration (collinear points)"));
    }
    let vt = svd.v_t.expect("svd vectors requested");
    let h = vt.row(8).transpose();
    let h_norm = Matrix3::from_row_slice(h.as_slice());
    let h_full = td.try_inverse().ok_or(Error::NotInvertible("conditioning transform"))? * h_norm * ts;

    // Geometric refinement: symmetric transfer error over the 9 entries with
    // unit-norm gauge.
    let srcs: Vec<Vector2<T>> = src.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
    let dsts: Vec<Vector2<T>> = dst.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
    let residuals = |x: &DVector<T>| {
        let m = Matrix3::from_column_slice(x.as_slice());
        let big = sc::<T>(1e12);
        let mut out = Vec::with_capacity(4 * srcs.len());
        match m.try_inverse() {
            Some(inv) => {
                for (s, d) in srcs.iter().zip(dsts.iter()) {
                    let fwd = m * nalgebra::Vector3::new(s.x, s.y, T::one());
                    let bwd = inv * nalgebra::Vector3::new(d.x, d.y, T::one());
                    if fwd.z == T::zero() || bwd.z == T::zero() {
                        out.extend_from_slice(&[big, big, big, big]);
                        continue;
                    }
                    out.push(fwd.x / fwd.z - d.x);
                    out.push(fwd.y / fwd.z - d.y);
                    out.push(bwd.x / bwd.z - s.x);
                    out.push(bwd.y / bwd.z - s.y);
                }
            }
            None => out.resize(4 * srcs.len(), big),
        }
        DVector::from_iterator(out.len(), out.into_iter().map(|v| if v.is_finite() { v } else { big }))
    };
    let x0 = DVector::from_column_slice(canonicalize_matrix(&h_full).as_slice());
    let out = lm::minimize(
        x0,
        residuals,
        |x: &mut DVector<T>| {
            let canon = crate::geom::canonicalize_vector(&x.clone_owned());
            x.copy_from(&canon);
        },
        &LmOptions::default(),
    );
    Homography2::from_matrix(canonicalize_matrix(&Matrix3::from_column_slice(
        out.params.as_slice(),
    )))
}

/// Robustly fits a plane to every view that has hull pixels, filling the
/// `fitted_plane` slots. Each view gets its own deterministic RANSAC stream
/// derived from `seed` and the `(rig, board)` key.
pub fn fit_board_planes<T: Scalar, F>(
    views: &mut BoardViews<T>,
    tof_camera_of: F,
    threshold_mm: T,
    max_iters: usize,
    seed: u64,
) -> Result<()>
where
    F: Fn(usize) -> Result<crate::geom::CameraMatrix<T>>,
{
    for view in views.iter_mut() {
        if view.hull_pixels.is_empty() {
            continue;
        }
        let camera = tof_camera_of(view.rig_id)?;
        let points: Vec<HPoint3<T>> = view
            .hull_pixels
            .iter()
            .map(|s| backproject(&camera, s))
            .collect::<Result<_>>()?;
        let view_seed = seed
            .wrapping_add((view.rig_id as u64).wrapping_mul(1_000_003))
            .wrapping_add((view.board_id as u64).wrapping_mul(7919));
        view.fitted_plane =
            Some(crate::tof::fit_plane_ransac(&points, &camera, threshold_mm, max_iters, view_seed)?);
    }
    Ok(())
}

/// Calibration error of rig pair `(i, j)`: board vertices are reconstructed
/// on the fitted plane in rig `j`'s range camera, mapped through `H_j^-1` and
/// `G_ij`, projected into rig `i`'s two colour images, and compared with the
/// detected vertices there. Unsquared pixel distances, one entry per vertex
/// and side.
pub fn calibration_error<T: Scalar>(
    network: &NetworkGraph<T>,
    views: &BoardViews<T>,
    i: usize,
    j: usize,
) -> Result<ErrorReport<T>> {
    let rig_j = network.rig(j)?;
    let cam_left = network.cross_camera(i, j, CameraSide::Left)?;
    let cam_right = network.cross_camera(i, j, CameraSide::Right)?;

    let mut report = ErrorReport::default();
    for board in views.board_ids() {
        let Some(view_j) = views.get(j, board) else { continue };
        if !view_j.has_tof() {
            continue;
        }
        let Some(view_i) = views.get(i, board) else { continue };
        if !view_i.has_rgb() {
            continue;
        }
        let plane = view_j
            .fitted_plane
            .as_ref()
            .ok_or(Error::MissingPlane { rig: j, board })?;

        for (v, (pixel, _raw_range)) in view_j.tof_vertices.iter().enumerate() {
            let (_, q_pi) = refine_range(&rig_j.tof_camera, pixel, &plane.plane)?;
            let in_rgb_j = rig_j.tof_point_to_rgb(&q_pi);
            for (side, camera, detected) in [
                (CameraSide::Left, &cam_left, &view_i.rgb_left[v]),
                (CameraSide::Right, &cam_right, &view_i.rgb_right[v]),
            ] {
                let projected = camera.project(&in_rgb_j);
                report.entries.push(ErrorEntry {
                    board_id: board,
                    point_id: v,
                    rig_i: i,
                    rig_j: j,
                    side,
                    region: None,
                    error_px: inhomog_distance(&projected, detected)?,
                });
            }
        }
    }
    Ok(report)
}

/// Total error of rig pair `(i, j)`: every raw hull pixel is back-projected
/// with its measured range (no plane fitting), reprojected into rig `i`'s
/// images, and compared against the direct 2D transfer of the pixel through
/// the vertex-fitted transfer homography.
pub fn total_error<T: Scalar>(
    network: &NetworkGraph<T>,
    views: &BoardViews<T>,
    i: usize,
    j: usize,
) -> Result<ErrorReport<T>> {
    let rig_j = network.rig(j)?;
    let cam_left = network.cross_camera(i, j, CameraSide::Left)?;
    let cam_right = network.cross_camera(i, j, CameraSide::Right)?;

    let mut report = ErrorReport::default();
    for board in views.board_ids() {
        let Some(view_j) = views.get(j, board) else { continue };
        if !view_j.has_tof() || view_j.hull_pixels.is_empty() {
            continue;
        }
        let Some(view_i) = views.get(i, board) else { continue };
        if !view_i.has_rgb() {
            continue;
        }

        let tof_pixels: Vec<HPoint2<T>> =
            view_j.tof_vertices.iter().map(|(p, _)| *p).collect();
        let transfer_left = dlt_homography2(&tof_pixels, &view_i.rgb_left)?;
        let transfer_right = dlt_homography2(&tof_pixels, &view_i.rgb_right)?;

        for (px, sample) in view_j.hull_pixels.iter().enumerate() {
            let q_raw = backproject(&rig_j.tof_camera, sample)?;
            let in_rgb_j = rig_j.tof_point_to_rgb(&q_raw);
            let region = view_j.hull_regions.as_ref().map(|r| r[px]);
            for (side, camera, transfer) in [
                (CameraSide::Left, &cam_left, &transfer_left),
                (CameraSide::Right, &cam_right, &transfer_right),
            ] {
                let projected = camera.project(&in_rgb_j);
                let transferred = transfer.transform(sample.pixel());
                report.entries.push(ErrorEntry {
                    board_id: board,
                    point_id: px,
                    rig_i: i,
                    rig_j: j,
                    side,
                    region,
                    error_px: inhomog_distance(&projected, &transferred)?,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn summarize_single_and_hand_values() {
        let entry = |e: f64| ErrorEntry {
            board_id: 0,
            point_id: 0,
            rig_i: 0,
            rig_j: 0,
            side: CameraSide::Left,
            region: None,
            error_px: e,
        };
        let report = ErrorReport { entries: vec![entry(0.5)] };
        let (s, _) = summarize(&report).unwrap();
        assert_eq!((s.mean, s.median, s.max, s.count), (0.5, 0.5, 0.5, 1));

        let report = ErrorReport { entries: vec![entry(1.0), entry(2.0), entry(6.0)] };
        let (s, h) = summarize(&report).unwrap();
        assert_eq!((s.mean, s.median, s.max, s.count), (3.0, 2.0, 6.0, 3));
        assert_eq!(h.total(), 3);
        assert_eq!(h.overflow, 1);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.counts[20], 1);

        let empty = ErrorReport::<f64>::default();
        assert!(matches!(summarize(&empty), Err(Error::EmptyReport)));
    }

    #[test]
    fn histogram_partitions_the_report() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let entries: Vec<ErrorEntry<f64>> = (0..500)
            .map(|k| ErrorEntry {
                board_id: 0,
                point_id: k,
                rig_i: 0,
                rig_j: 0,
                side: CameraSide::Left,
                region: None,
                error_px: rng.random_range(0.0..5.0),
            })
            .collect();
        let report = ErrorReport { entries };
        let (s, h) = summarize(&report).unwrap();
        assert_eq!(h.total(), s.count);
        assert!(h.overflow > 0);
    }

    #[test]
    fn dlt2_identity_and_exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid: Vec<HPoint2<f64>> = (0..35)
            .map(|k| {
                HPoint2::pixel(
                    (k % 7) as f64 * 20.0 + rng.random_range(-2.0..2.0),
                    (k / 7) as f64 * 20.0 + rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let h = dlt_homography2(&grid, &grid).unwrap();
        assert!(h.approx_eq(&Homography2::identity(), 1e-12));

        let warp = Matrix3::new(0.9, 0.1, 5.0, -0.08, 1.05, -3.0, 1e-4, -5e-5, 1.0);
        let warped: Vec<HPoint2<f64>> = grid.iter().map(|p| p.transformed(&warp)).collect();
        let h = dlt_homography2(&grid, &warped).unwrap();
        let expected = Homography2::from_matrix(warp).unwrap();
        assert!(h.approx_eq(&expected, 1e-9));
    }

    #[test]
    fn dlt2_rejects_underdetermined_and_collinear_input() {
        let three: Vec<HPoint2<f64>> =
            (0..3).map(|k| HPoint2::pixel(k as f64, 0.0)).collect();
        assert!(matches!(
            dlt_homography2(&three, &three),
            Err(Error::InsufficientData { .. })
        ));
        let collinear: Vec<HPoint2<f64>> = vec![
            HPoint2::pixel(0.0, 0.0),
            HPoint2::pixel(10.0, 0.0),
            HPoint2::pixel(20.0, 0.0),
            HPoint2::pixel(5.0, 7.0),
        ];
        assert!(matches!(
            dlt_homography2(&collinear, &collinear),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn region_partition_averages_by_label() {
        let entry = |e: f64, r: BoardRegion| ErrorEntry {
            board_id: 0,
            point_id: 0,
            rig_i: 0,
            rig_j: 0,
            side: CameraSide::Left,
            region: Some(r),
            error_px: e,
        };
        let report = ErrorReport {
            entries: vec![
                entry(2.0, BoardRegion::Black),
                entry(4.0, BoardRegion::Black),
                entry(1.0, BoardRegion::White),
            ],
        };
        let means = report.mean_by_region();
        assert_eq!(means[&BoardRegion::Black], 3.0);
        assert_eq!(means[&BoardRegion::White], 1.0);
    }
}
