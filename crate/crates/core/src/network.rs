//! Multi-system alignment: closed-form estimation of inter-rig rigid
//! transforms, transitive composition across the rig graph, and construction
//! of cross-system cameras.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{CameraMatrix, HPoint3, Homography3, RigidTransform3};
use crate::scalar::{sc, Scalar};

/// One range+stereo camera triple sharing a physical mounting.
///
/// The left camera's frame is the rig frame, so `left_camera` must be in the
/// canonical form `(A | 0)`; the range camera likewise anchors its own frame.
#[derive(Debug, Clone)]
pub struct Rig<T: Scalar> {
    pub id: usize,
    /// Range camera in its own (range) frame: `(A | 0)`.
    pub tof_camera: CameraMatrix<T>,
    /// Left colour camera in the rig frame: `(A_l | 0)`.
    pub left_camera: CameraMatrix<T>,
    /// Right colour camera in the rig frame: `(A_r | b_r)`.
    pub right_camera: CameraMatrix<T>,
    /// `H^-1`: maps range points into the rig frame.
    pub tof_to_rgb: Homography3<T>,
}

impl<T: Scalar> Rig<T> {
    pub fn new(
        id: usize,
        tof_camera: CameraMatrix<T>,
        left_camera: CameraMatrix<T>,
        right_camera: CameraMatrix<T>,
        tof_to_rgb: Homography3<T>,
    ) -> Result<Self> {
        for camera in [&tof_camera, &left_camera] {
            let b = camera.b_block();
            if b.norm() > camera.a_block().norm() * sc(1e-9) {
                return Err(Error::InvalidCamera("camera must be canonical (A | 0) in its frame"));
            }
        }
        Ok(Self { id, tof_camera, left_camera, right_camera, tof_to_rgb })
    }

    /// `H_i^-1 Q`: a range point expressed in the rig frame.
    pub fn tof_point_to_rgb(&self, q: &HPoint3<T>) -> HPoint3<T> {
        self.tof_to_rgb.transform_point(q)
    }
}

/// Which colour camera of a rig.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraSide {
    Left,
    Right,
}

/// How an inter-rig transform was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeProvenance {
    Direct,
    Composed,
}

#[derive(Debug, Clone)]
pub struct NetworkEdge<T: Scalar> {
    pub transform: RigidTransform3<T>,
    pub provenance: EdgeProvenance,
}

/// Closed-form least-squares rigid transform mapping `source` points onto
/// `target` points (SVD of the cross-covariance, reflection-corrected).
pub fn estimate_rigid<T: Scalar>(
    source: &[HPoint3<T>],
    target: &[HPoint3<T>],
) -> Result<RigidTransform3<T>> {
    assert_eq!(source.len(), target.len(), "point lists must pair up");
    if source.len() < 3 {
        return Err(Error::DegenerateData("rigid estimation needs at least 3 pairs"));
    }
    let ps: Vec<Vector3<T>> = source.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
    let qs: Vec<Vector3<T>> = target.iter().map(|p| p.inhomogenize()).collect::<Result<_>>()?;
    let n = sc::<T>(ps.len() as f64);
    let p_bar = ps.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let q_bar = qs.iter().fold(Vector3::zeros(), |a, q| a + q) / n;

    let mut cov = Matrix3::<T>::zeros();
    for (p, q) in ps.iter().zip(qs.iter()) {
        cov += (q - q_bar) * (p - p_bar).transpose();
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
    let t = q_bar - r * p_bar;
    Ok(RigidTransform3::new(Rotation3::from_matrix(&r).scaled_axis(), t))
}

/// Camera that projects points expressed in rig `j`'s frame into one of rig
/// `i`'s colour images: `C_ij = C_i G_ij`.
pub fn cross_camera<T: Scalar>(
    rig_i: &Rig<T>,
    g_ij: &RigidTransform3<T>,
    side: CameraSide,
) -> CameraMatrix<T> {
    let camera = match side {
        CameraSide::Left => &rig_i.left_camera,
        CameraSide::Right => &rig_i.right_camera,
    };
    camera.compose_rigid(g_ij)
}

/// Assembles rigs and directly-estimated edges into a [`NetworkGraph`].
#[derive(Debug, Clone)]
pub struct NetworkBuilder<T: Scalar> {
    rigs: Vec<Rig<T>>,
    reference_rig: usize,
    direct: BTreeMap<(usize, usize), RigidTransform3<T>>,
}

impl<T: Scalar> NetworkBuilder<T> {
    pub fn new(rigs: Vec<Rig<T>>, reference_rig: usize) -> Result<Self> {
        if rigs.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one rig".into()));
        }
        let mut ids: Vec<usize> = rigs.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != rigs.len() {
            return Err(Error::InvalidConfig("rig ids must be unique".into()));
        }
        if !rigs.iter().any(|r| r.id == reference_rig) {
            return Err(Error::InvalidConfig(format!(
                "reference rig {reference_rig} is not in the network"
            )));
        }
        Ok(Self { rigs, reference_rig, direct: BTreeMap::new() })
    }

    /// Registers a directly-estimated transform mapping rig `j` points into
    /// rig `i`'s frame. When the reverse edge is already stored the pair is
    /// checked for inverse consistency.
    pub fn add_edge(&mut self, i: usize, j: usize, g_ij: RigidTransform3<T>) -> Result<()> {
        if i == j {
            return Err(Error::InvalidConfig("self edges are implicit identities".into()));
        }
        for id in [i, j] {
            if !self.rigs.iter().any(|r| r.id == id) {
                return Err(Error::InvalidConfig(format!("rig {id} is not in the network")));
            }
        }
        if let Some(reverse) = self.direct.get(&(j, i)) {
            let round = g_ij.compose(reverse);
            let identity = RigidTransform3::identity();
            if round.rotation_angle_to(&identity) > sc(1e-9)
                || round.translation().norm() > sc(1e-6)
            {
                return Err(Error::InvalidConfig(format!(
                    "edges {i}->{j} and {j}->{i} are not mutually inverse"
                )));
            }
        }
        self.direct.insert((i, j), g_ij);
        Ok(())
    }

    /// Checks connectivity and precomputes all pairwise transforms along
    /// shortest edge paths (ties broken towards lower intermediate rig ids).
    pub fn finalize(self) -> Result<NetworkGraph<T>> {
        let ids: Vec<usize> = self.rigs.iter().map(|r| r.id).collect();
        let mut adjacency: BTreeMap<usize, Vec<usize>> =
            ids.iter().map(|id| (*id, Vec::new())).collect();
        for (i, j) in self.direct.keys() {
            adjacency.get_mut(i).expect("validated").push(*j);
            adjacency.get_mut(j).expect("validated").push(*i);
        }
        for neighbors in adjacency.values_mut() {
            neighbors.sort_unstable();
            neighbors.dedup();
        }

        let mut edges: BTreeMap<(usize, usize), NetworkEdge<T>> = BTreeMap::new();
        for id in &ids {
            edges.insert(
                (*id, *id),
                NetworkEdge {
                    transform: RigidTransform3::identity(),
                    provenance: EdgeProvenance::Direct,
                },
            );
        }

        // Breadth-first search from every source; visiting neighbours in
        // ascending id order makes shortest-path tie-breaking deterministic.
        for start in &ids {
            let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
            let mut queue = std::collections::VecDeque::new();
            queue.push_back(*start);
            parent.insert(*start, *start);
            while let Some(v) = queue.pop_front() {
                for w in &adjacency[&v] {
                    if !parent.contains_key(w) {
                        parent.insert(*w, v);
                        queue.push_back(*w);
                    }
                }
            }
            for goal in &ids {
                if goal == start {
                    continue;
                }
                if !parent.contains_key(goal) {
                    return Err(Error::DisconnectedNetwork(*start, *goal));
                }
                // Walk goal -> start, composing start <- ... <- goal.
                let mut transform = RigidTransform3::identity();
                let mut hops = 0usize;
                let mut node = *goal;
                while node != *start {
                    let up = parent[&node];
                    let step = self.step_transform(up, node);
                    transform = step.compose(&transform);
                    node = up;
                    hops += 1;
                }
                let provenance = if hops == 1 && self.direct.contains_key(&(*start, *goal)) {
                    EdgeProvenance::Direct
                } else {
                    EdgeProvenance::Composed
                };
                let transform = if provenance == EdgeProvenance::Direct {
                    self.direct[&(*start, *goal)]
                } else {
                    transform
                };
                edges.insert((*start, *goal), NetworkEdge { transform, provenance });
            }
        }
        Ok(NetworkGraph { rigs: self.rigs, reference_rig: self.reference_rig, edges })
    }

    /// Transform for one hop `i <- j`, using the stored direction or the
    /// inverse of its reverse.
    fn step_transform(&self, i: usize, j: usize) -> RigidTransform3<T> {
        if let Some(g) = self.direct.get(&(i, j)) {
            *g
        } else {
            self.direct[&(j, i)].inverse()
        }
    }
}

/// Finalized, immutable rig network with all pairwise transforms resolved.
#[derive(Debug, Clone)]
pub struct NetworkGraph<T: Scalar> {
    rigs: Vec<Rig<T>>,
    reference_rig: usize,
    edges: BTreeMap<(usize, usize), NetworkEdge<T>>,
}

impl<T: Scalar> NetworkGraph<T> {
    pub fn rigs(&self) -> &[Rig<T>] {
        &self.rigs
    }

    pub fn rig(&self, id: usize) -> Result<&Rig<T>> {
        self.rigs
            .iter()
            .find(|r| r.id == id)
            .ok_or(Error::InvalidConfig(format!("rig {id} is not in the network")))
    }

    pub fn reference_rig(&self) -> usize {
        self.reference_rig
    }

    pub fn edges(&self) -> impl Iterator<Item = (&(usize, usize), &NetworkEdge<T>)> {
        self.edges.iter()
    }

    /// `G_ij`: maps rig `j` coordinates back to rig `i`.
    pub fn transform(&self, i: usize, j: usize) -> Result<&NetworkEdge<T>> {
        self.edges.get(&(i, j)).ok_or(Error::DisconnectedNetwork(i, j))
    }

    /// Pose of rig `i` relative to the reference rig.
    pub fn world_transform(&self, i: usize) -> Result<&NetworkEdge<T>> {
        self.transform(self.reference_rig, i)
    }

    /// Camera projecting rig-`j` points into rig `i`'s chosen colour image.
    pub fn cross_camera(&self, i: usize, j: usize, side: CameraSide) -> Result<CameraMatrix<T>> {
        let edge = self.transform(i, j)?;
        Ok(cross_camera(self.rig(i)?, &edge.transform, side))
    }
}
