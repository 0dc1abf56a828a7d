//! Refinement-mode oracles on depth-distorted synthetic rigs: epipolar
//! preservation in joint mode, the new fundamental matrix after separate
//! refinement, model nesting against the similarity baseline, and the
//! chi-square scale of the reprojection objective.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use xcal_core::align::{
    dlt_homography3, procrustes_similarity, refine_joint, refine_separate, refine_similarity,
    reprojection_error, Correspondence3D3D,
};
use xcal_core::eval::fit_board_planes;
use xcal_core::geom::{projective_distance, HPoint2, HPoint3};
use xcal_core::lm::LmOptions;
use xcal_core::stereo::{fundamental_from_cameras, triangulate, Correspondence2D2D};
use xcal_core::synth::{generate_dataset, Dataset, NoiseConfig, SceneConfig};
use xcal_core::tof::refine_range;

/// Runs the single-rig fitting front end: plane fits, vertex refinement and
/// stereo triangulation, producing aligned 3D pairs and image points.
fn rig_pairs(
    dataset: &Dataset,
    rig: usize,
) -> (Vec<Correspondence3D3D<f64>>, Vec<HPoint2<f64>>, Vec<HPoint2<f64>>) {
    let mut views = dataset.views.clone();
    let cams = dataset.rig_cameras.clone();
    fit_board_planes(&mut views, |r| Ok(cams[r].tof.clone()), 15.0, 2000, 17).unwrap();

    let cams = &dataset.rig_cameras[rig];
    let mut pairs = Vec::new();
    let mut img_l = Vec::new();
    let mut img_r = Vec::new();
    for board in views.board_ids() {
        let Some(view) = views.get(rig, board) else { continue };
        if !view.has_tof() || !view.has_rgb() {
            continue;
        }
        let plane = view.fitted_plane.as_ref().unwrap();
        for (v, (pixel, _)) in view.tof_vertices.iter().enumerate() {
            let (_, q_pi) = refine_range(&cams.tof, pixel, &plane.plane).unwrap();
            let p = triangulate(
                &cams.left,
                &cams.right,
                &Correspondence2D2D::new(view.rgb_left[v], view.rgb_right[v]),
            )
            .unwrap();
            pairs.push(Correspondence3D3D {
                stereo_point: p,
                tof_point: q_pi,
                board_index: board,
                vertex_index: v,
            });
            img_l.push(view.rgb_left[v]);
            img_r.push(view.rgb_right[v]);
        }
    }
    (pairs, img_l, img_r)
}

fn distorted_noisy_config() -> SceneConfig {
    let mut config = SceneConfig::standard(1, 10, 0, 23);
    config.noise = NoiseConfig {
        outlier_rate: 0.0,
        depth_distortion: Some(
            xcal_core::align::inverse_disparity_homography(3e-4, 0.97).unwrap(),
        ),
        ..NoiseConfig::default()
    };
    config
}

#[test]
fn separate_mode_beats_joint_and_bends_the_epipolar_geometry() {
    let (dataset, _) = generate_dataset(&distorted_noisy_config()).unwrap();
    let (pairs, img_l, img_r) = rig_pairs(&dataset, 0);
    let cams = &dataset.rig_cameras[0];

    let h_dlt = dlt_homography3(&pairs).unwrap();
    let opts = LmOptions::default();
    let joint =
        refine_joint(&h_dlt, &pairs, &cams.left, &cams.right, &img_l, &img_r, &opts).unwrap();
    let separate =
        refine_separate(&h_dlt, &pairs, &cams.left, &cams.right, &img_l, &img_r, &opts).unwrap();

    // Joint mode never touches the cameras, so F is bit-identical.
    let f_before = fundamental_from_cameras(&cams.left, &cams.right).unwrap();
    assert!(joint.refined_left.is_none());
    let f_after = fundamental_from_cameras(&cams.left, &cams.right).unwrap();
    assert_eq!(f_before.matrix(), f_after.matrix());

    // Separate mode relaxes the joint optimum per camera.
    assert!(
        separate.final_sum_sq_left <= joint.final_sum_sq_left + 1e-9,
        "left: separate {} vs joint {}",
        separate.final_sum_sq_left,
        joint.final_sum_sq_left
    );
    assert!(
        separate.final_sum_sq_right <= joint.final_sum_sq_right + 1e-9,
        "right: separate {} vs joint {}",
        separate.final_sum_sq_right,
        joint.final_sum_sq_right
    );

    // And induces a different fundamental matrix.
    let f_star = fundamental_from_cameras(
        separate.refined_left.as_ref().unwrap(),
        separate.refined_right.as_ref().unwrap(),
    )
    .unwrap();
    let dist = projective_distance(f_before.matrix(), f_star.matrix());
    assert!(dist > 1e-6, "fundamental matrix unchanged: {dist}");

    // Parameter-count audit.
    assert_eq!(
        (joint.raw_parameter_count, joint.effective_parameter_count),
        (16, 15)
    );
    assert_eq!(
        (separate.raw_parameter_count, separate.effective_parameter_count),
        (24, 22)
    );
}

#[test]
fn homography_joint_error_is_nested_below_similarity() {
    let (dataset, _) = generate_dataset(&distorted_noisy_config()).unwrap();
    let (pairs, img_l, img_r) = rig_pairs(&dataset, 0);
    let cams = &dataset.rig_cameras[0];
    let opts = LmOptions::default();

    let h_dlt = dlt_homography3(&pairs).unwrap();
    let joint =
        refine_joint(&h_dlt, &pairs, &cams.left, &cams.right, &img_l, &img_r, &opts).unwrap();

    let s_init = procrustes_similarity(&pairs).unwrap();
    let similarity =
        refine_similarity(&s_init, &pairs, &cams.left, &cams.right, &img_l, &img_r, &opts)
            .unwrap();

    assert!(
        joint.final_sum_sq <= similarity.final_sum_sq + 1e-9,
        "joint {} vs similarity {}",
        joint.final_sum_sq,
        similarity.final_sum_sq
    );
    // With a projective depth distortion the 7-DoF model is strictly worse.
    assert!(similarity.final_sum_sq > 2.0 * joint.final_sum_sq);

    for out in [&joint, &similarity] {
        for w in out.cost_trace.windows(2) {
            assert!(w[1] <= w[0], "objective increased across an accepted step");
        }
    }
}

#[test]
fn reprojection_objective_matches_chi_square_expectation() {
    // Exact projections offset by isotropic sigma = 0.5 px give
    // E / n = 2 sigma^2 in expectation.
    let k = nalgebra::Matrix3::new(640.0, 0.0, 812.0, 0.0, 640.0, 612.0, 0.0, 0.0, 1.0);
    let camera =
        xcal_core::geom::CameraMatrix::from_blocks(&k, &nalgebra::Vector3::zeros());
    let sigma = 0.5f64;
    for seed in [1u64, 2, 3, 4, 5] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut points = Vec::new();
        let mut noisy = Vec::new();
        for _ in 0..350 {
            let p = HPoint3::euclidean(
                rng.random_range(-800.0..800.0),
                rng.random_range(-600.0..600.0),
                rng.random_range(1500.0..3500.0),
            );
            let exact = camera.project(&p).inhomogenize().unwrap();
            points.push(p);
            noisy.push(HPoint2::pixel(
                exact.x + normal.sample(&mut rng),
                exact.y + normal.sample(&mut rng),
            ));
        }
        let e = reprojection_error(&camera, &points, &noisy).unwrap();
        let per_point = e / 350.0;
        let expected = 2.0 * sigma * sigma;
        assert!(
            (per_point - expected).abs() < 0.15 * expected,
            "seed {seed}: E/n = {per_point}, expected {expected}"
        );
    }
}
