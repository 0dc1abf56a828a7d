//! Ground-truth synthetic scene generator: rig layouts, chequerboard poses,
//! detection and range noise, outliers, and ray-preserving depth distortion.
//!
//! The generated data is exactly consistent with its ground-truth bundle in
//! noise-free mode, and every emitted point carries labels (board, vertex or
//! pixel id, square shade, outlier flag), so estimator output can be scored
//! against the generator.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::eval::{BoardRegion, BoardView, BoardViews};
use crate::geom::{CameraMatrix, HPlane3, HPoint2, HPoint3, Homography3, RigidTransform3};
use crate::tof::RangeSample;

type Camera = CameraMatrix<f64>;

/// Colour-camera model: square pixels, principal point, image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgbIntrinsics {
    pub focal_px: f64,
    pub principal: (f64, f64),
    pub image_size: (usize, usize),
}

impl Default for RgbIntrinsics {
    fn default() -> Self {
        // Wide-angle colour model: keeps the colour/range focal ratio near 2
        // so default detection noise lands in the subpixel regime.
        Self { focal_px: 640.0, principal: (811.5, 611.5), image_size: (1624, 1224) }
    }
}

/// Range-camera model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofIntrinsics {
    pub focal_px: f64,
    pub principal: (f64, f64),
    pub image_size: (usize, usize),
    pub range_max_mm: f64,
}

impl Default for TofIntrinsics {
    fn default() -> Self {
        Self {
            focal_px: 320.0,
            principal: (87.5, 71.5),
            image_size: (176, 144),
            range_max_mm: crate::tof::DEFAULT_RANGE_MAX_MM,
        }
    }
}

/// Chequerboard geometry: `cols x rows` inner vertices, so
/// `(cols+1) x (rows+1)` squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoardSpec {
    pub cols: usize,
    pub rows: usize,
    pub square_mm: f64,
}

impl Default for BoardSpec {
    fn default() -> Self {
        Self { cols: 7, rows: 5, square_mm: 80.0 }
    }
}

impl BoardSpec {
    pub fn vertex_count(&self) -> usize {
        self.cols * self.rows
    }

    /// Half-extent of the physical board in millimetres.
    pub fn half_extent(&self) -> (f64, f64) {
        (
            (self.cols + 1) as f64 * self.square_mm / 2.0,
            (self.rows + 1) as f64 * self.square_mm / 2.0,
        )
    }

    /// Inner vertex positions in the board frame (z = 0), row-major.
    pub fn vertices(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.vertex_count());
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(Vector3::new(
                    (c as f64 - (self.cols - 1) as f64 / 2.0) * self.square_mm,
                    (r as f64 - (self.rows - 1) as f64 / 2.0) * self.square_mm,
                    0.0,
                ));
            }
        }
        out
    }

    /// Square shade at a board-frame point.
    pub fn region_at(&self, x: f64, y: f64) -> BoardRegion {
        let (hx, hy) = self.half_extent();
        let col = (((x + hx) / self.square_mm).floor() as i64).clamp(0, self.cols as i64);
        let row = (((y + hy) / self.square_mm).floor() as i64).clamp(0, self.rows as i64);
        if (col + row) % 2 == 0 {
            BoardRegion::Black
        } else {
            BoardRegion::White
        }
    }
}

/// Noise and distortion model applied to the synthetic measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub rgb_vertex_sigma_px: f64,
    pub tof_vertex_sigma_px: f64,
    pub range_sigma_mm: f64,
    pub outlier_rate: f64,
    pub outlier_scale_mm: f64,
    /// Range-noise multiplier on pixels inside absorbing (black) squares.
    pub black_square_sigma_multiplier: f64,
    /// Optional ray-preserving space homography applied to range-frame
    /// points before the range is read off.
    pub depth_distortion: Option<Homography3<f64>>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            rgb_vertex_sigma_px: 0.1,
            tof_vertex_sigma_px: 0.3,
            range_sigma_mm: 10.0,
            outlier_rate: 0.05,
            outlier_scale_mm: 300.0,
            black_square_sigma_multiplier: 3.0,
            depth_distortion: None,
        }
    }
}

impl NoiseConfig {
    pub fn noise_free() -> Self {
        Self {
            rgb_vertex_sigma_px: 0.0,
            tof_vertex_sigma_px: 0.0,
            range_sigma_mm: 0.0,
            outlier_rate: 0.0,
            outlier_scale_mm: 0.0,
            black_square_sigma_multiplier: 1.0,
            depth_distortion: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.rgb_vertex_sigma_px,
            self.tof_vertex_sigma_px,
            self.range_sigma_mm,
            self.outlier_scale_mm,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidConfig("noise magnitudes must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(Error::InvalidConfig("outlier rate must be in [0, 1]".into()));
        }
        if self.black_square_sigma_multiplier < 0.0 {
            return Err(Error::InvalidConfig("square multiplier must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Full scene description; deterministic given `(config, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub rig_count: usize,
    pub rgb: RgbIntrinsics,
    pub tof: TofIntrinsics,
    pub stereo_baseline_mm: f64,
    pub rig_spacing_mm: f64,
    /// Range-camera mounting offset within the rig frame.
    pub tof_mount_offset_mm: [f64; 3],
    pub board: BoardSpec,
    /// Board poses: board frame to world frame.
    pub board_poses: Vec<RigidTransform3<f64>>,
    /// Indices into `board_poses` reserved for evaluation.
    pub eval_boards: Vec<usize>,
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Separate stream for hull-pixel range noise; derived from `seed` when
    /// absent.
    pub range_noise_seed: Option<u64>,
}

impl SceneConfig {
    /// Standard rail-mounted scene: rigs spaced along x, yawed towards a
    /// common workspace, with `fit_boards + eval_boards` poses spread through
    /// the shared viewing volume.
    pub fn standard(rig_count: usize, fit_boards: usize, eval_boards: usize, seed: u64) -> Self {
        let total = fit_boards + eval_boards;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0a2d5_u64);
        let mut poses = Vec::with_capacity(total);
        for _ in 0..total {
            let angle: f64 = rng.random_range(0.05..0.38);
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.3..0.3),
            );
            let axis = if axis.norm() < 1e-9 { Vector3::x() } else { axis.normalize() };
            poses.push(RigidTransform3::new(
                axis * angle,
                Vector3::new(
                    rng.random_range(-200.0..200.0),
                    rng.random_range(-140.0..140.0),
                    rng.random_range(2300.0..3100.0),
                ),
            ));
        }
        Self {
            rig_count,
            rgb: RgbIntrinsics::default(),
            tof: TofIntrinsics::default(),
            stereo_baseline_mm: 170.0,
            rig_spacing_mm: 1070.0,
            tof_mount_offset_mm: [85.0, -40.0, 0.0],
            board: BoardSpec::default(),
            board_poses: poses,
            eval_boards: (fit_boards..total).collect(),
            noise: NoiseConfig::default(),
            seed,
            range_noise_seed: None,
        }
    }

    /// Variant of [`SceneConfig::standard`] whose evaluation boards are
    /// strongly oblique (> 60 degrees) to the viewing direction.
    pub fn standard_slanted(
        rig_count: usize,
        fit_boards: usize,
        eval_boards: usize,
        seed: u64,
    ) -> Self {
        let mut config = Self::standard(rig_count, fit_boards, eval_boards, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51a47_u64);
        for idx in config.eval_boards.clone() {
            let angle: f64 = rng.random_range(62.0..68.0_f64).to_radians();
            let translation = *config.board_poses[idx].translation();
            config.board_poses[idx] = RigidTransform3::new(Vector3::y() * angle, translation);
        }
        config
    }

    pub fn validate(&self) -> Result<()> {
        if self.rig_count == 0 {
            return Err(Error::InvalidConfig("need at least one rig".into()));
        }
        if self.board_poses.is_empty() {
            return Err(Error::EmptyScene("no board poses configured"));
        }
        if self.rgb.focal_px <= 0.0 || self.tof.focal_px <= 0.0 {
            return Err(Error::InvalidConfig("focal lengths must be positive".into()));
        }
        if self.stereo_baseline_mm <= 0.0 || self.rig_spacing_mm <= 0.0 {
            return Err(Error::InvalidConfig("baseline and spacing must be positive".into()));
        }
        if self.board.cols < 2 || self.board.rows < 2 || self.board.square_mm <= 0.0 {
            return Err(Error::InvalidConfig("board needs at least 2x2 vertices".into()));
        }
        for b in &self.eval_boards {
            if *b >= self.board_poses.len() {
                return Err(Error::InvalidConfig(format!("evaluation board {b} out of range")));
            }
        }
        self.noise.validate()?;
        if let Some(d) = &self.noise.depth_distortion {
            ensure_ray_preserving(d)?;
        }
        Ok(())
    }

    pub fn fitting_boards(&self) -> Vec<usize> {
        (0..self.board_poses.len()).filter(|b| !self.eval_boards.contains(b)).collect()
    }
}

/// A ray-preserving map keeps directions from the range-camera origin fixed.
fn ensure_ray_preserving(d: &Homography3<f64>) -> Result<()> {
    for probe in [
        Vector3::new(120.0, -340.0, 2000.0),
        Vector3::new(-500.0, 210.0, 3600.0),
        Vector3::new(40.0, 80.0, 900.0),
    ] {
        let mapped = d
            .transform_point(&HPoint3::from_euclidean(&probe))
            .inhomogenize()
            .map_err(|_| Error::InvalidConfig("depth distortion maps probe to infinity".into()))?;
        let cosine = mapped.normalize().dot(&probe.normalize());
        if (cosine - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "depth distortion must preserve visual rays".into(),
            ));
        }
    }
    Ok(())
}

/// Per-rig ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RigTruth {
    pub world_from_rig: RigidTransform3<f64>,
    pub world_from_tof: RigidTransform3<f64>,
    /// `Q ~ H P`: maps rig-frame points to observed range-frame points,
    /// including any depth distortion.
    pub h_true: Homography3<f64>,
}

/// Ground-truth bundle accompanying a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rigs: Vec<RigTruth>,
    pub board_planes_world: Vec<HPlane3<f64>>,
    /// Observed (distortion-included) board plane in each rig's range frame.
    pub tof_planes: BTreeMap<(usize, usize), HPlane3<f64>>,
    /// Noise-free range per hull pixel, keyed by `(rig, board)`.
    pub true_hull_ranges: BTreeMap<(usize, usize), Vec<f64>>,
    /// Injected-outlier labels per hull pixel, keyed by `(rig, board)`.
    pub hull_outliers: BTreeMap<(usize, usize), Vec<bool>>,
    /// True vertex positions in the world frame, `[board][vertex]`.
    pub true_vertices_world: Vec<Vec<Vector3<f64>>>,
}

impl GroundTruth {
    /// True `G_ij`: maps rig-`j` coordinates to rig-`i` coordinates.
    pub fn g_true(&self, i: usize, j: usize) -> RigidTransform3<f64> {
        self.rigs[i].world_from_rig.inverse().compose(&self.rigs[j].world_from_rig)
    }
}

/// Rig-local camera matrices, the calibrated inputs of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RigCameras {
    pub tof: Camera,
    pub left: Camera,
    pub right: Camera,
}

/// A complete synthetic capture: calibrated rig cameras plus all board
/// observations. The fitted-plane slots start empty.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: SceneConfig,
    pub rig_cameras: Vec<RigCameras>,
    pub views: BoardViews<f64>,
}

fn intrinsic_matrix(focal: f64, principal: (f64, f64)) -> Matrix3<f64> {
    Matrix3::new(focal, 0.0, principal.0, 0.0, focal, principal.1, 0.0, 0.0, 1.0)
}

struct RigGeometry {
    cameras: RigCameras,
    world_from_rig: RigidTransform3<f64>,
    world_from_tof: RigidTransform3<f64>,
    left_world: Camera,
    right_world: Camera,
    tof_world: Camera,
}

fn build_rig(config: &SceneConfig, index: usize) -> RigGeometry {
    let n = config.rig_count as f64;
    let x = (index as f64 - (n - 1.0) / 2.0) * config.rig_spacing_mm;
    // Yaw every rig towards a common workspace point on the rail axis.
    let workspace_z = 2700.0;
    let yaw = (-x).atan2(workspace_z);
    let world_from_rig = RigidTransform3::new(Vector3::y() * yaw, Vector3::new(x, 0.0, 0.0));
    let mount = Vector3::from_column_slice(&config.tof_mount_offset_mm);
    let world_from_tof = world_from_rig.compose(&RigidTransform3::new(Vector3::zeros(), mount));

    let k_rgb = intrinsic_matrix(config.rgb.focal_px, config.rgb.principal);
    let k_tof = intrinsic_matrix(config.tof.focal_px, config.tof.principal);
    let left = CameraMatrix::from_blocks(&k_rgb, &Vector3::zeros());
    let right = CameraMatrix::from_blocks(
        &k_rgb,
        &(k_rgb * Vector3::new(-config.stereo_baseline_mm, 0.0, 0.0)),
    );
    let tof = CameraMatrix::from_blocks(&k_tof, &Vector3::zeros());

    RigGeometry {
        left_world: left.compose_rigid(&world_from_rig.inverse()),
        right_world: right.compose_rigid(&world_from_rig.inverse()),
        tof_world: tof.compose_rigid(&world_from_tof.inverse()),
        cameras: RigCameras { tof, left, right },
        world_from_rig,
        world_from_tof,
    }
}

fn project(camera: &Camera, p: &Vector3<f64>) -> Option<Vector2<f64>> {
    let h = camera.project(&HPoint3::from_euclidean(p));
    if h.coords().z <= 0.0 {
        return None;
    }
    h.inhomogenize().ok()
}

fn inside(p: &Vector2<f64>, size: (usize, usize)) -> bool {
    let margin = 1.0;
    p.x >= margin
        && p.x <= size.0 as f64 - 1.0 - margin
        && p.y >= margin
        && p.y <= size.1 as f64 - 1.0 - margin
}

/// Intersects the pixel ray of `camera` with a world plane; `None` when the
/// ray is parallel or the hit is behind the camera.
fn ray_plane_hit(
    camera_center: &Vector3<f64>,
    world_dir: &Vector3<f64>,
    plane: &HPlane3<f64>,
) -> Option<Vector3<f64>> {
    let n = plane.normal();
    let denom = n.dot(world_dir);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = -(n.dot(camera_center) + plane.offset()) / denom;
    if t <= 0.0 {
        return None;
    }
    Some(camera_center + world_dir * t)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    }
}

/// Converts a (pixel, range) measurement through the depth distortion: the
/// range-frame point is mapped by `h_d` and re-imaged through the camera.
///
/// When `h_d` preserves visual rays the pixel is unchanged and only the range
/// moves; the general case lands on a new pixel. Errors when the mapped point
/// falls behind the camera.
pub fn apply_depth_distortion(
    h_d: &Homography3<f64>,
    q: &HPoint3<f64>,
    camera: &Camera,
) -> Result<RangeSample<f64>> {
    let mapped = h_d.transform_point(q);
    let image = camera.project(&mapped);
    if image.coords().z <= 0.0 {
        return Err(Error::BehindCamera("distorted point is behind the range camera"));
    }
    let pixel = image.inhomogenize()?;
    let center = camera.center().inhomogenize()?;
    let rho = (mapped.inhomogenize()? - center).norm();
    RangeSample::new(pixel.x, pixel.y, rho)
}

/// Range in the distorted range frame of the world-space point `hit`.
fn observed_range(
    hit_world: &Vector3<f64>,
    tof_from_world: &RigidTransform3<f64>,
    distortion: Option<&Homography3<f64>>,
) -> Result<f64> {
    let q_true = tof_from_world.transform_euclidean(hit_world);
    let q_obs = match distortion {
        Some(d) => {
            let mapped =
                d.transform_point(&HPoint3::from_euclidean(&q_true)).inhomogenize()?;
            if mapped.z <= 0.0 {
                return Err(Error::BehindCamera("distorted point is behind the range camera"));
            }
            mapped
        }
        None => q_true,
    };
    Ok(q_obs.norm())
}

/// Generates a synthetic capture and its ground truth.
///
/// Deterministic given the configuration: detection noise and hull range
/// noise are drawn from two independent seeded streams, so hull ranges can be
/// re-sampled without disturbing anything else (see [`resample_hull_ranges`]).
pub fn generate_dataset(config: &SceneConfig) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let rigs: Vec<RigGeometry> =
        (0..config.rig_count).map(|i| build_rig(config, i)).collect();
    let board_vertices = config.board.vertices();
    let (hx, hy) = config.board.half_extent();
    let corners = [
        Vector3::new(-hx, -hy, 0.0),
        Vector3::new(hx, -hy, 0.0),
        Vector3::new(hx, hy, 0.0),
        Vector3::new(-hx, hy, 0.0),
    ];

    // World-frame board geometry.
    let mut planes_world = Vec::new();
    let mut vertices_world = Vec::new();
    for pose in &config.board_poses {
        let normal = pose.rotation_matrix() * Vector3::z();
        let point = pose.translation();
        planes_world.push(HPlane3::from_unit_normal_and_distance(&normal, normal.dot(point)));
        vertices_world
            .push(board_vertices.iter().map(|v| pose.transform_euclidean(v)).collect::<Vec<_>>());
    }

    // Visibility: vertices inside both colour images; vertices and the full
    // board outline inside the range image.
    let mut rgb_visible = vec![vec![false; config.board_poses.len()]; config.rig_count];
    let mut tof_visible = vec![vec![false; config.board_poses.len()]; config.rig_count];
    for (ri, rig) in rigs.iter().enumerate() {
        for (bi, pose) in config.board_poses.iter().enumerate() {
            let verts = &vertices_world[bi];
            rgb_visible[ri][bi] = verts.iter().all(|v| {
                project(&rig.left_world, v).map(|p| inside(&p, config.rgb.image_size))
                    == Some(true)
                    && project(&rig.right_world, v).map(|p| inside(&p, config.rgb.image_size))
                        == Some(true)
            });
            let outline_ok = corners.iter().all(|c| {
                let w = pose.transform_euclidean(c);
                project(&rig.tof_world, &w).map(|p| inside(&p, config.tof.image_size))
                    == Some(true)
            });
            tof_visible[ri][bi] = outline_ok
                && verts.iter().all(|v| {
                    project(&rig.tof_world, v).map(|p| inside(&p, config.tof.image_size))
                        == Some(true)
                });
        }
    }
    let mut any_triplet = false;
    for bi in 0..config.board_poses.len() {
        let full = (0..config.rig_count).any(|ri| rgb_visible[ri][bi] && tof_visible[ri][bi]);
        if !full {
            return Err(Error::EmptyScene("a board is not fully visible in any rig"));
        }
        any_triplet = true;
    }
    if !any_triplet {
        return Err(Error::EmptyScene("no boards visible"));
    }

    let mut rng_detect = ChaCha8Rng::seed_from_u64(config.seed);
    let range_seed = config.range_noise_seed.unwrap_or(config.seed ^ 0x9e3779b97f4a7c15);
    let mut rng_range = ChaCha8Rng::seed_from_u64(range_seed);

    let distortion = config.noise.depth_distortion.as_ref();
    let mut views = Vec::new();
    let mut tof_planes = BTreeMap::new();
    let mut true_hull_ranges = BTreeMap::new();
    let mut hull_outliers = BTreeMap::new();

    for (ri, rig) in rigs.iter().enumerate() {
        let tof_from_world = rig.world_from_tof.inverse();
        let tof_center_world = *rig.world_from_tof.translation();
        let k_tof_inv = rig
            .cameras
            .tof
            .a_block()
            .try_inverse()
            .expect("intrinsic matrices are invertible");
        let rot_world_from_tof = rig.world_from_tof.rotation_matrix();

        for (bi, pose) in config.board_poses.iter().enumerate() {
            let sees_rgb = rgb_visible[ri][bi];
            let sees_tof = tof_visible[ri][bi];
            if !sees_rgb && !sees_tof {
                continue;
            }
            let plane_world = &planes_world[bi];
            let board_from_world = pose.inverse();

            let mut view = BoardView {
                board_id: bi,
                rig_id: ri,
                tof_vertices: Vec::new(),
                rgb_left: Vec::new(),
                rgb_right: Vec::new(),
                hull_pixels: Vec::new(),
                hull_regions: None,
                fitted_plane: None,
            };

            if sees_rgb {
                for v in &vertices_world[bi] {
                    let pl = project(&rig.left_world, v).expect("visibility checked");
                    let pr = project(&rig.right_world, v).expect("visibility checked");
                    view.rgb_left.push(HPoint2::pixel(
                        pl.x + gaussian(&mut rng_detect, config.noise.rgb_vertex_sigma_px),
                        pl.y + gaussian(&mut rng_detect, config.noise.rgb_vertex_sigma_px),
                    ));
                    view.rgb_right.push(HPoint2::pixel(
                        pr.x + gaussian(&mut rng_detect, config.noise.rgb_vertex_sigma_px),
                        pr.y + gaussian(&mut rng_detect, config.noise.rgb_vertex_sigma_px),
                    ));
                }
            }

            if sees_tof {
                // Observed plane in the range frame, distortion included.
                let to_tof = match distortion {
                    Some(d) => d.compose(&tof_from_world.as_homography()),
                    None => tof_from_world.as_homography(),
                };
                tof_planes.insert((ri, bi), to_tof.transform_plane(plane_world)?.canonicalized());

                // Vertex detections: noisy pixel, range read off the true
                // plane along the detected pixel's ray.
                for v in &vertices_world[bi] {
                    let p = project(&rig.tof_world, v).expect("visibility checked");
                    let px = p.x + gaussian(&mut rng_detect, config.noise.tof_vertex_sigma_px);
                    let py = p.y + gaussian(&mut rng_detect, config.noise.tof_vertex_sigma_px);
                    let dir_world =
                        rot_world_from_tof * (k_tof_inv * Vector3::new(px, py, 1.0));
                    let hit = ray_plane_hit(&tof_center_world, &dir_world, plane_world)
                        .ok_or(Error::DegenerateGeometry("vertex ray misses the board plane"))?;
                    let rho_true = observed_range(&hit, &tof_from_world, distortion)?;
                    let rho =
                        rho_true + gaussian(&mut rng_detect, config.noise.range_sigma_mm);
                    view.tof_vertices.push((HPoint2::pixel(px, py), rho.max(1.0)));
                }

                // Hull pixels: every integer range pixel inside the projected
                // board outline.
                let outline: Vec<Vector2<f64>> = corners
                    .iter()
                    .map(|c| {
                        project(&rig.tof_world, &pose.transform_euclidean(c))
                            .expect("visibility checked")
                    })
                    .collect();
                let min_x = outline.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
                let max_x = outline.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
                let min_y = outline.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
                let max_y = outline.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);

                let mut regions = Vec::new();
                let mut true_ranges = Vec::new();
                let mut outliers = Vec::new();
                for py in (min_y.ceil() as i64)..=(max_y.floor() as i64) {
                    for px in (min_x.ceil() as i64)..=(max_x.floor() as i64) {
                        let p = Vector2::new(px as f64, py as f64);
                        if !point_in_convex_quad(&p, &outline) {
                            continue;
                        }
                        let dir_world =
                            rot_world_from_tof * (k_tof_inv * Vector3::new(p.x, p.y, 1.0));
                        let Some(hit) = ray_plane_hit(&tof_center_world, &dir_world, plane_world)
                        else {
                            continue;
                        };
                        let in_board = board_from_world.transform_euclidean(&hit);
                        let region = config.board.region_at(in_board.x, in_board.y);
                        let rho_true = observed_range(&hit, &tof_from_world, distortion)?;

                        let mult = if region == BoardRegion::Black {
                            config.noise.black_square_sigma_multiplier
                        } else {
                            1.0
                        };
                        let mut rho = rho_true
                            + gaussian(&mut rng_range, config.noise.range_sigma_mm * mult);
                        let is_outlier = config.noise.outlier_rate > 0.0
                            && rng_range.random_bool(config.noise.outlier_rate);
                        if is_outlier {
                            let magnitude: f64 = rng_range.random_range(0.5..1.5);
                            let sign = if rng_range.random_bool(0.5) { 1.0 } else { -1.0 };
                            rho += sign * magnitude * config.noise.outlier_scale_mm;
                        }
                        view.hull_pixels
                            .push(RangeSample::new(p.x, p.y, rho.max(1.0))?);
                        regions.push(region);
                        true_ranges.push(rho_true);
                        outliers.push(is_outlier);
                    }
                }
                view.hull_regions = Some(regions);
                true_hull_ranges.insert((ri, bi), true_ranges);
                hull_outliers.insert((ri, bi), outliers);
            }

            views.push(view);
        }
    }

    let ground_truth = GroundTruth {
        rigs: rigs
            .iter()
            .map(|r| {
                let rig_from_tof_inv = r.world_from_tof.inverse().compose(&r.world_from_rig);
                let h_rigid = rig_from_tof_inv.as_homography();
                let h_true = match distortion {
                    Some(d) => d.compose(&h_rigid),
                    None => h_rigid,
                };
                RigTruth {
                    world_from_rig: r.world_from_rig,
                    world_from_tof: r.world_from_tof,
                    h_true: h_true.canonicalized(),
                }
            })
            .collect(),
        board_planes_world: planes_world,
        tof_planes,
        true_hull_ranges,
        hull_outliers,
        true_vertices_world: vertices_world,
    };
    let dataset = Dataset {
        config: config.clone(),
        rig_cameras: rigs.into_iter().map(|r| r.cameras).collect(),
        views: BoardViews::new(views)?,
    };
    Ok((dataset, ground_truth))
}

fn point_in_convex_quad(p: &Vector2<f64>, quad: &[Vector2<f64>]) -> bool {
    let mut sign = 0.0_f64;
    for k in 0..quad.len() {
        let a = quad[k];
        let b = quad[(k + 1) % quad.len()];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Re-draws the range noise of every hull pixel from a fresh stream, leaving
/// detections, vertex ranges and any fitted planes untouched.
pub fn resample_hull_ranges(
    views: &BoardViews<f64>,
    gt: &GroundTruth,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<BoardViews<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = views.clone();
    for view in out.iter_mut() {
        if view.hull_pixels.is_empty() {
            continue;
        }
        let key = (view.rig_id, view.board_id);
        let true_ranges = gt
            .true_hull_ranges
            .get(&key)
            .ok_or(Error::InvalidConfig("ground truth does not cover this view".into()))?;
        let regions = view.hull_regions.clone();
        for (px, sample) in view.hull_pixels.iter_mut().enumerate() {
            let region = regions.as_ref().map(|r| r[px]).unwrap_or(BoardRegion::White);
            let mult = if region == BoardRegion::Black {
                noise.black_square_sigma_multiplier
            } else {
                1.0
            };
            let mut rho = true_ranges[px] + gaussian(&mut rng, noise.range_sigma_mm * mult);
            if noise.outlier_rate > 0.0 && rng.random_bool(noise.outlier_rate) {
                let magnitude: f64 = rng.random_range(0.5..1.5);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                rho += sign * magnitude * noise.outlier_scale_mm;
            }
            let pixel = sample.pixel().inhomogenize()?;
            *sample = RangeSample::new(pixel.x, pixel.y, rho.max(1.0))?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tof::backproject;

    fn small_config() -> SceneConfig {
        let mut config = SceneConfig::standard(2, 3, 1, 7);
        config.noise = NoiseConfig::noise_free();
        config
    }

    #[test]
    fn standard_scene_is_fully_visible_everywhere() {
        let config = SceneConfig::standard(3, 10, 7, 42);
        let (dataset, _) = generate_dataset(&config).unwrap();
        for ri in 0..3 {
            for bi in 0..17 {
                let view = dataset.views.get(ri, bi).expect("view present");
                assert!(view.has_tof(), "rig {ri} board {bi} lacks range data");
                assert!(view.has_rgb(), "rig {ri} board {bi} lacks colour data");
                assert_eq!(view.tof_vertices.len(), 35);
                assert!(view.hull_pixels.len() > 10 * view.tof_vertices.len());
            }
        }
    }

    #[test]
    fn same_seed_reproduces_identical_data() {
        let config = SceneConfig::standard(2, 4, 2, 11);
        let (a, _) = generate_dataset(&config).unwrap();
        let (b, _) = generate_dataset(&config).unwrap();
        for (va, vb) in a.views.iter().zip(b.views.iter()) {
            assert_eq!(va.rgb_left, vb.rgb_left);
            assert_eq!(va.tof_vertices, vb.tof_vertices);
            assert_eq!(va.hull_pixels, vb.hull_pixels);
        }
    }

    #[test]
    fn noise_free_data_is_exactly_consistent() {
        let (dataset, gt) = generate_dataset(&small_config()).unwrap();
        for view in dataset.views.iter() {
            let rig = &dataset.rig_cameras[view.rig_id];
            let truth = &gt.rigs[view.rig_id];
            // Colour detections are exact projections of the true vertices.
            for (v, p) in view.rgb_left.iter().enumerate() {
                let world = gt.true_vertices_world[view.board_id][v];
                let in_rig = truth.world_from_rig.inverse().transform_euclidean(&world);
                let proj =
                    rig.left.project(&HPoint3::from_euclidean(&in_rig)).inhomogenize().unwrap();
                assert!((proj - p.inhomogenize().unwrap()).norm() < 1e-9);
            }
            // Hull samples back-project onto the observed range-frame plane.
            let plane = &gt.tof_planes[&(view.rig_id, view.board_id)];
            for sample in view.hull_pixels.iter().step_by(97) {
                let q = backproject(&rig.tof, sample).unwrap();
                let d = plane.hessian_normalized().unwrap().incidence(&q).abs();
                assert!(d < 1e-6, "hull point off plane by {d} mm");
            }
        }
    }

    #[test]
    fn outlier_rate_matches_injected_labels() {
        let mut config = SceneConfig::standard(1, 2, 1, 3);
        config.noise = NoiseConfig {
            outlier_rate: 0.3,
            outlier_scale_mm: 300.0,
            ..NoiseConfig::noise_free()
        };
        let (dataset, gt) = generate_dataset(&config).unwrap();
        let mut total = 0usize;
        let mut outliers = 0usize;
        for view in dataset.views.iter() {
            if let Some(flags) = gt.hull_outliers.get(&(view.rig_id, view.board_id)) {
                total += flags.len();
                outliers += flags.iter().filter(|f| **f).count();
            }
        }
        let rate = outliers as f64 / total as f64;
        let sigma = (0.3 * 0.7 / total as f64).sqrt();
        assert!((rate - 0.3).abs() < 3.0 * sigma, "rate {rate} over {total} samples");
    }

    #[test]
    fn depth_distortion_application_matches_spec_examples() {
        let camera = CameraMatrix::from_blocks(
            &intrinsic_matrix(320.0, (87.5, 71.5)),
            &Vector3::zeros(),
        );
        let q = HPoint3::euclidean(200.0, -100.0, 2500.0);

        let identity = Homography3::identity();
        let s = apply_depth_distortion(&identity, &q, &camera).unwrap();
        let reproj = camera.project(&q).inhomogenize().unwrap();
        assert!((s.pixel().inhomogenize().unwrap() - reproj).norm() < 1e-12);
        assert!((s.range() - q.inhomogenize().unwrap().norm()).abs() < 1e-9);

        let neutral = crate::align::inverse_disparity_homography(0.0, 1.0).unwrap();
        let s2 = apply_depth_distortion(&neutral, &q, &camera).unwrap();
        assert!((s2.range() - s.range()).abs() < 1e-9);

        let warp = crate::align::inverse_disparity_homography(1e-4, 0.97).unwrap();
        let s3 = apply_depth_distortion(&warp, &q, &camera).unwrap();
        assert!((s3.pixel().inhomogenize().unwrap() - reproj).norm() < 1e-9);
        assert!(s3.range() < s.range());

        let behind = Homography3::from_matrix({
            let mut m = nalgebra::Matrix4::identity();
            m[(2, 2)] = -1.0;
            m
        })
        .unwrap();
        assert!(matches!(
            apply_depth_distortion(&behind, &q, &camera),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn resampling_changes_only_hull_ranges() {
        let mut config = SceneConfig::standard(1, 2, 1, 5);
        config.noise.outlier_rate = 0.0;
        let (dataset, gt) = generate_dataset(&config).unwrap();
        let resampled =
            resample_hull_ranges(&dataset.views, &gt, &config.noise, 999).unwrap();
        let mut any_range_changed = false;
        for (va, vb) in dataset.views.iter().zip(resampled.iter()) {
            assert_eq!(va.rgb_left, vb.rgb_left);
            assert_eq!(va.tof_vertices, vb.tof_vertices);
            for (sa, sb) in va.hull_pixels.iter().zip(vb.hull_pixels.iter()) {
                assert_eq!(sa.pixel(), sb.pixel());
                if (sa.range() - sb.range()).abs() > 1e-12 {
                    any_range_changed = true;
                }
            }
        }
        assert!(any_range_changed);
    }

    #[test]
    fn empty_scene_is_rejected() {
        let mut config = small_config();
        config.board_poses.clear();
        assert!(matches!(generate_dataset(&config), Err(Error::EmptyScene(_))));

        let mut config = small_config();
        // A board far outside every frustum.
        config.board_poses
            .push(RigidTransform3::new(Vector3::zeros(), Vector3::new(50_000.0, 0.0, 2500.0)));
        assert!(matches!(generate_dataset(&config), Err(Error::EmptyScene(_))));
    }
}
