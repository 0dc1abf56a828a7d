//! Shared helpers for the oracle test suites.

use xcal_core::eval::{fit_board_planes, BoardViews};
use xcal_core::network::{NetworkBuilder, NetworkGraph, Rig};
use xcal_core::synth::{Dataset, GroundTruth};

/// Network assembled from ground truth: true homographies and true edges.
pub fn ground_truth_network(dataset: &Dataset, gt: &GroundTruth) -> NetworkGraph<f64> {
    let rigs: Vec<Rig<f64>> = dataset
        .rig_cameras
        .iter()
        .enumerate()
        .map(|(i, cams)| {
            Rig::new(
                i,
                cams.tof.clone(),
                cams.left.clone(),
                cams.right.clone(),
                gt.rigs[i].h_true.inverse().expect("true homography is invertible"),
            )
            .expect("rig-local cameras are canonical")
        })
        .collect();
    let n = rigs.len();
    let mut builder = NetworkBuilder::new(rigs, 0).expect("valid rig set");
    for i in 0..n {
        for j in (i + 1)..n {
            builder.add_edge(i, j, gt.g_true(i, j)).expect("consistent edges");
        }
    }
    if n == 1 {
        // Single-rig networks have no edges; finalize still works.
    }
    builder.finalize().expect("ground-truth network is connected")
}

/// Fits planes for every view in place, using each rig's range camera.
pub fn fit_planes(views: &mut BoardViews<f64>, dataset: &Dataset, threshold_mm: f64, seed: u64) {
    let cameras = dataset.rig_cameras.clone();
    fit_board_planes(
        views,
        |rig| Ok(cameras[rig].tof.clone()),
        threshold_mm,
        2000,
        seed,
    )
    .expect("plane fitting succeeds on synthetic data");
}
