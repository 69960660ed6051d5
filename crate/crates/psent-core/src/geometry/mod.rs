//! Rigid transforms, registration, and breach localization from tracking.
//!
//! The automatic-labeling pipeline works in two frames: the CT frame of the
//! preoperative model (mesh, planned pin axis) and the camera frame of the
//! optical tracker (drill-tip trajectory). `icp_register` recovers the
//! CT-to-camera transform from paired point clouds; the pin axis cut against
//! the vertebra mesh gives planned entry/exit points; nearest-sample scans
//! over the tracked trajectory then locate the instants of entry, exit, and
//! the breach itself.

pub mod icp;
mod intersect;
mod kdtree;
pub mod linalg;

use alloc::vec::Vec;
use core::fmt;
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub use icp::{icp_register, IcpParams, IcpResult};
pub use intersect::{closest_point_on_triangle, pin_mesh_intersection, surface_distance, LineHit};
pub use kdtree::KdTree;
pub use linalg::{rotation_angle, rotation_from_axis_angle, Mat3, Vec3};

use linalg::{dot, mat_mul, mat_vec, norm, normalize, sub, transpose};

/// Coordinate frame tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameId {
    /// Preoperative CT frame (mesh, planned axis).
    Ct,
    /// Optical tracker (camera) frame.
    Camera,
    /// Drill-body frame.
    Drill,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameId::Ct => "ct",
            FrameId::Camera => "camera",
            FrameId::Drill => "drill",
        })
    }
}

/// Rigid motion between two tagged frames. Construction verifies the
/// rotation is orthonormal with determinant +1 (tolerance 1e-9), so a value
/// of this type is always a valid isometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
    from: FrameId,
    to: FrameId,
}

impl RigidTransform {
    /// Validate and build.
    pub fn new(
        rotation: Mat3,
        translation: Vec3,
        from: FrameId,
        to: FrameId,
    ) -> Result<Self, GeometryError> {
        let rtr = mat_mul(&transpose(&rotation), &rotation);
        let mut dev = 0.0f64;
        for (i, row) in rtr.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((v - target).abs());
            }
        }
        let d = linalg::det(&rotation);
        dev = dev.max((d - 1.0).abs());
        if dev > 1e-9 {
            return Err(GeometryError::InvalidRotation { max_deviation: dev });
        }
        Ok(Self {
            rotation,
            translation,
            from,
            to,
        })
    }

    /// Identity within one frame.
    pub fn identity(frame: FrameId) -> Self {
        Self {
            rotation: linalg::IDENTITY,
            translation: [0.0; 3],
            from: frame,
            to: frame,
        }
    }

    /// Rotation matrix.
    pub fn rotation(&self) -> Mat3 {
        self.rotation
    }

    /// Translation vector, mm.
    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Source frame.
    pub fn from_frame(&self) -> FrameId {
        self.from
    }

    /// Destination frame.
    pub fn to_frame(&self) -> FrameId {
        self.to
    }

    /// Map one point.
    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        let r = mat_vec(&self.rotation, p);
        [
            r[0] + self.translation[0],
            r[1] + self.translation[1],
            r[2] + self.translation[2],
        ]
    }

    /// Map many points.
    pub fn apply(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|&p| self.apply_point(p)).collect()
    }

    /// `next` after `self`; frames must chain (`self.to == next.from`).
    pub fn then(&self, next: &RigidTransform) -> Result<RigidTransform, GeometryError> {
        if self.to != next.from {
            return Err(GeometryError::FrameMismatch {
                expected: self.to,
                got: next.from,
            });
        }
        Ok(RigidTransform {
            rotation: mat_mul(&next.rotation, &self.rotation),
            translation: {
                let rt = mat_vec(&next.rotation, self.translation);
                [
                    rt[0] + next.translation[0],
                    rt[1] + next.translation[1],
                    rt[2] + next.translation[2],
                ]
            },
            from: self.from,
            to: next.to,
        })
    }

    /// Inverse motion with frames swapped.
    pub fn inverse(&self) -> RigidTransform {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, self.translation);
        RigidTransform {
            rotation: rt,
            translation: [-t[0], -t[1], -t[2]],
            from: self.to,
            to: self.from,
        }
    }
}

/// Triangle mesh in mm. Indices are validated at construction.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Validate and build.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= vertices.len() {
                    return Err(GeometryError::TriangleOutOfBounds {
                        triangle: t,
                        index: i,
                    });
                }
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    /// Vertex positions.
    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Triangle vertex indices.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Largest vertex distance from the origin; a cheap size scale.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|&v| norm(v)).fold(0.0, f64::max)
    }
}

/// Timestamped drill-tip positions in a single frame.
#[derive(Clone, Debug)]
pub struct TrackedTrajectory {
    timestamps_ms: Vec<f64>,
    positions_mm: Vec<Vec3>,
    frame: FrameId,
}

impl TrackedTrajectory {
    /// Validate and build: equal lengths, at least one sample, strictly
    /// increasing timestamps.
    pub fn new(
        timestamps_ms: Vec<f64>,
        positions_mm: Vec<Vec3>,
        frame: FrameId,
    ) -> Result<Self, GeometryError> {
        if timestamps_ms.len() != positions_mm.len() {
            return Err(GeometryError::LengthMismatch {
                timestamps: timestamps_ms.len(),
                positions: positions_mm.len(),
            });
        }
        if timestamps_ms.is_empty() {
            return Err(GeometryError::InvalidParam(
                "trajectory needs at least one sample",
            ));
        }
        for (i, w) in timestamps_ms.windows(2).enumerate() {
            // NaN timestamps must fail this guard too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(w[1] > w[0]) {
                return Err(GeometryError::NonIncreasingTimestamps { index: i + 1 });
            }
        }
        Ok(Self {
            timestamps_ms,
            positions_mm,
            frame,
        })
    }

    /// Sample count.
    pub fn len(&self) -> usize {
        self.timestamps_ms.len()
    }

    /// True when empty (never, post-validation; kept for symmetry).
    pub fn is_empty(&self) -> bool {
        self.timestamps_ms.is_empty()
    }

    /// Timestamps, ms.
    pub fn timestamps_ms(&self) -> &[f64] {
        &self.timestamps_ms
    }

    /// Positions, mm.
    pub fn positions_mm(&self) -> &[Vec3] {
        &self.positions_mm
    }

    /// Frame the positions live in.
    pub fn frame(&self) -> FrameId {
        self.frame
    }
}

/// Entry/exit placement of one drilling pass within a trajectory.
#[derive(Clone, Copy, Debug)]
pub struct DrillPath {
    /// Trajectory sample closest to the planned entry point.
    pub entry_index: usize,
    /// Trajectory sample closest to the planned exit point.
    pub exit_index: usize,
    /// Planned entry point, camera frame, mm.
    pub entry_mm: Vec3,
    /// Planned exit point, camera frame, mm.
    pub exit_mm: Vec3,
    /// Unit drilling axis from entry toward exit, camera frame.
    pub axis: Vec3,
}

/// Locate the trajectory samples nearest the planned entry and exit points.
///
/// `ep_ct` and `sp_ct` are the pin-axis intersections with the vertebra in
/// the CT frame; `ct_to_cam` maps them into the trajectory's frame. Each is
/// matched to the closest trajectory sample (ties to the earliest sample).
/// The pass must run forward: an exit matched before the entry is an error.
pub fn find_entry_exit(
    traj: &TrackedTrajectory,
    ep_ct: Vec3,
    sp_ct: Vec3,
    ct_to_cam: &RigidTransform,
) -> Result<DrillPath, GeometryError> {
    check_ct_to_cam(traj, ct_to_cam)?;
    let entry_mm = ct_to_cam.apply_point(ep_ct);
    let exit_mm = ct_to_cam.apply_point(sp_ct);
    let axis = normalize(sub(exit_mm, entry_mm)).ok_or(GeometryError::ZeroDirection)?;

    let entry_index = argmin_distance(traj.positions_mm(), entry_mm);
    let exit_index = argmin_distance(traj.positions_mm(), exit_mm);
    if entry_index > exit_index {
        return Err(GeometryError::PathInverted {
            entry_index,
            exit_index,
        });
    }
    Ok(DrillPath {
        entry_index,
        exit_index,
        entry_mm,
        exit_mm,
        axis,
    })
}

fn argmin_distance(points: &[Vec3], target: Vec3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &p) in points.iter().enumerate() {
        let d = linalg::dist2(p, target);
        // Strict improvement only: ties resolve to the earliest sample.
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn check_ct_to_cam(
    traj: &TrackedTrajectory,
    ct_to_cam: &RigidTransform,
) -> Result<(), GeometryError> {
    if ct_to_cam.from_frame() != FrameId::Ct {
        return Err(GeometryError::FrameMismatch {
            expected: FrameId::Ct,
            got: ct_to_cam.from_frame(),
        });
    }
    if ct_to_cam.to_frame() != traj.frame() {
        return Err(GeometryError::FrameMismatch {
            expected: traj.frame(),
            got: ct_to_cam.to_frame(),
        });
    }
    Ok(())
}

/// Scalar drilling depths: each trajectory sample in `[entry, exit]`
/// projected onto the unit drilling axis, measured from the planned entry
/// point (positive toward the exit).
pub fn project_to_axis(traj: &TrackedTrajectory, path: &DrillPath) -> Vec<f64> {
    traj.positions_mm()[path.entry_index..=path.exit_index]
        .iter()
        .map(|&p| dot(sub(p, path.entry_mm), path.axis))
        .collect()
}

/// How point-to-mesh distance is measured in [`find_breach`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DistanceMode {
    /// Distance to the nearest mesh vertex. This is the canonical labeling
    /// geometry; on the densely tessellated meshes it was designed for,
    /// vertex distance tracks surface distance closely.
    #[default]
    Vertex,
    /// Exact distance to the nearest surface point (slower; for QA).
    Surface,
}

/// The located breach instant.
#[derive(Clone, Copy, Debug)]
pub struct BreachPoint {
    /// Trajectory sample index of the breach.
    pub index: usize,
    /// Timestamp of that sample, ms.
    pub time_ms: f64,
    /// Tip-to-mesh distance at the breach sample, mm.
    pub distance_mm: f64,
}

/// Locate the breach: among trajectory samples within the entry-exit window,
/// the one closest to the vertebra (mesh transformed into the camera frame by
/// `ct_to_cam`). Distance ties resolve to the earliest sample.
pub fn find_breach(
    traj: &TrackedTrajectory,
    mesh: &TriMesh,
    ct_to_cam: &RigidTransform,
    path: &DrillPath,
    mode: DistanceMode,
) -> Result<BreachPoint, GeometryError> {
    check_ct_to_cam(traj, ct_to_cam)?;
    if path.exit_index >= traj.len() || path.entry_index > path.exit_index {
        return Err(GeometryError::InvalidParam(
            "drill path indices do not fit the trajectory",
        ));
    }

    let window = &traj.positions_mm()[path.entry_index..=path.exit_index];
    let mut best_local = 0usize;
    let mut best_d = f64::INFINITY;
    match mode {
        DistanceMode::Vertex => {
            let verts_cam = ct_to_cam.apply(mesh.vertices());
            let tree = KdTree::build(&verts_cam);
            for (i, &p) in window.iter().enumerate() {
                let (_, d2) = tree.nearest(p).ok_or(GeometryError::EmptyMesh)?;
                if d2 < best_d {
                    best_d = d2;
                    best_local = i;
                }
            }
            best_d = best_d.sqrt();
        }
        DistanceMode::Surface => {
            // Move the tip into the CT frame instead of rebuilding the mesh.
            let cam_to_ct = ct_to_cam.inverse();
            for (i, &p) in window.iter().enumerate() {
                let d = surface_distance(mesh, cam_to_ct.apply_point(p));
                if d < best_d {
                    best_d = d;
                    best_local = i;
                }
            }
        }
    }

    let index = path.entry_index + best_local;
    Ok(BreachPoint {
        index,
        time_ms: traj.timestamps_ms()[index],
        distance_mm: best_d,
    })
}

/// Time-aligned QA curves over a whole trajectory: distance to the planned
/// entry point, to the planned exit point, and to the nearest mesh vertex.
#[derive(Clone, Debug)]
pub struct DistanceCurves {
    /// Sample timestamps, ms.
    pub time_ms: Vec<f64>,
    /// Distance to planned entry, mm.
    pub to_entry_mm: Vec<f64>,
    /// Distance to planned exit, mm.
    pub to_exit_mm: Vec<f64>,
    /// Distance to nearest mesh vertex, mm.
    pub to_mesh_mm: Vec<f64>,
}

/// Compute [`DistanceCurves`] for a trajectory against planned points and
/// the vertebra mesh (all mapped into the trajectory frame by `ct_to_cam`).
pub fn distance_curves(
    traj: &TrackedTrajectory,
    mesh: &TriMesh,
    ep_ct: Vec3,
    sp_ct: Vec3,
    ct_to_cam: &RigidTransform,
) -> Result<DistanceCurves, GeometryError> {
    check_ct_to_cam(traj, ct_to_cam)?;
    let ep = ct_to_cam.apply_point(ep_ct);
    let sp = ct_to_cam.apply_point(sp_ct);
    let verts_cam = ct_to_cam.apply(mesh.vertices());
    let tree = KdTree::build(&verts_cam);
    let n = traj.len();
    let mut curves = DistanceCurves {
        time_ms: traj.timestamps_ms().to_vec(),
        to_entry_mm: Vec::with_capacity(n),
        to_exit_mm: Vec::with_capacity(n),
        to_mesh_mm: Vec::with_capacity(n),
    };
    for &p in traj.positions_mm() {
        curves.to_entry_mm.push(norm(sub(p, ep)));
        curves.to_exit_mm.push(norm(sub(p, sp)));
        let (_, d2) = tree.nearest(p).ok_or(GeometryError::EmptyMesh)?;
        curves.to_mesh_mm.push(d2.sqrt());
    }
    Ok(curves)
}

/// Geometry pipeline errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeometryError {
    /// Rotation failed the orthonormality/determinant check.
    InvalidRotation {
        /// Largest deviation found.
        max_deviation: f64,
    },
    /// Transform chain or input frame does not match.
    FrameMismatch {
        /// Frame required here.
        expected: FrameId,
        /// Frame provided.
        got: FrameId,
    },
    /// Too few points for the operation.
    NotEnoughPoints {
        /// Points available.
        got: usize,
        /// Points required.
        needed: usize,
    },
    /// Point cloud is (near-)collinear; rotation underdetermined.
    DegenerateCloud,
    /// Mesh without vertices.
    EmptyMesh,
    /// Triangle references a vertex outside the mesh.
    TriangleOutOfBounds {
        /// Offending triangle.
        triangle: usize,
        /// Offending vertex index.
        index: usize,
    },
    /// Direction vector is (near-)zero.
    ZeroDirection,
    /// Trajectory timestamps must strictly increase.
    NonIncreasingTimestamps {
        /// First offending sample.
        index: usize,
    },
    /// Timestamp and position arrays differ in length.
    LengthMismatch {
        /// Timestamps provided.
        timestamps: usize,
        /// Positions provided.
        positions: usize,
    },
    /// Exit matched an earlier sample than entry.
    PathInverted {
        /// Matched entry sample.
        entry_index: usize,
        /// Matched exit sample.
        exit_index: usize,
    },
    /// Parameter failed validation; the message says which.
    InvalidParam(&'static str),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidRotation { max_deviation } => write!(
                f,
                "rotation is not orthonormal with determinant +1 (max deviation {max_deviation:.3e})"
            ),
            GeometryError::FrameMismatch { expected, got } => {
                write!(f, "frame mismatch: expected {expected}, got {got}")
            }
            GeometryError::NotEnoughPoints { got, needed } => {
                write!(f, "need at least {needed} points, got {got}")
            }
            GeometryError::DegenerateCloud => {
                write!(f, "point cloud is collinear; rotation is underdetermined")
            }
            GeometryError::EmptyMesh => write!(f, "mesh has no vertices"),
            GeometryError::TriangleOutOfBounds { triangle, index } => {
                write!(f, "triangle {triangle} references missing vertex {index}")
            }
            GeometryError::ZeroDirection => write!(f, "direction vector is zero"),
            GeometryError::NonIncreasingTimestamps { index } => {
                write!(f, "trajectory timestamps must strictly increase (sample {index})")
            }
            GeometryError::LengthMismatch {
                timestamps,
                positions,
            } => write!(
                f,
                "trajectory has {timestamps} timestamps but {positions} positions"
            ),
            GeometryError::PathInverted {
                entry_index,
                exit_index,
            } => write!(
                f,
                "exit point matched sample {exit_index} before entry sample {entry_index}"
            ),
            GeometryError::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

impl core::error::Error for GeometryError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t_ct_cam() -> RigidTransform {
        let r = rotation_from_axis_angle(
            linalg::normalize([1.0, 2.0, 0.5]).unwrap(),
            0.4,
        );
        RigidTransform::new(r, [10.0, -5.0, 2.0], FrameId::Ct, FrameId::Camera).unwrap()
    }

    #[test]
    fn transform_rejects_non_orthonormal() {
        let bad = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            RigidTransform::new(bad, [0.0; 3], FrameId::Ct, FrameId::Camera),
            Err(GeometryError::InvalidRotation { .. })
        ));
        // Reflection: orthonormal but det = -1.
        let refl = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(RigidTransform::new(refl, [0.0; 3], FrameId::Ct, FrameId::Camera).is_err());
    }

    #[test]
    fn apply_then_inverse_is_identity() {
        let t = t_ct_cam();
        let p = [3.0, -7.0, 11.0];
        let q = t.apply_point(p);
        let back = t.inverse().apply_point(q);
        assert!(norm(sub(back, p)) < 1e-12);
        assert_eq!(t.inverse().from_frame(), FrameId::Camera);
        assert_eq!(t.inverse().to_frame(), FrameId::Ct);
    }

    #[test]
    fn compose_checks_frames_and_chains() {
        let t = t_ct_cam();
        let u = RigidTransform::new(
            rotation_from_axis_angle([0.0, 0.0, 1.0], 0.3),
            [1.0, 1.0, 1.0],
            FrameId::Camera,
            FrameId::Drill,
        )
        .unwrap();
        let chained = t.then(&u).unwrap();
        let p = [1.0, 2.0, 3.0];
        assert!(norm(sub(chained.apply_point(p), u.apply_point(t.apply_point(p)))) < 1e-12);
        assert!(matches!(
            u.then(&u),
            Err(GeometryError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn mesh_validates_indices() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(vec![], vec![]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn trajectory_validates_timestamps() {
        let err = TrackedTrajectory::new(
            vec![0.0, 1.0, 1.0],
            vec![[0.0; 3]; 3],
            FrameId::Camera,
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::NonIncreasingTimestamps { index: 2 });
        assert!(TrackedTrajectory::new(vec![0.0], vec![[0.0; 3]; 2], FrameId::Camera).is_err());
    }

    fn straight_trajectory() -> TrackedTrajectory {
        // Tip advances 0.2 mm per 10 ms sample along +z in the CT frame,
        // from -4 mm to +16 mm; mapped to camera by t_ct_cam.
        let t = t_ct_cam();
        let mut ts = Vec::new();
        let mut ps = Vec::new();
        for i in 0..101 {
            ts.push(10.0 * i as f64);
            ps.push(t.apply_point([0.0, 0.0, -4.0 + 0.2 * i as f64]));
        }
        TrackedTrajectory::new(ts, ps, FrameId::Camera).unwrap()
    }

    #[test]
    fn entry_exit_found_on_straight_pass() {
        let traj = straight_trajectory();
        let path = find_entry_exit(&traj, [0.0, 0.0, 0.0], [0.0, 0.0, 12.0], &t_ct_cam()).unwrap();
        // z = 0 at sample 20, z = 12 at sample 80.
        assert_eq!(path.entry_index, 20);
        assert_eq!(path.exit_index, 80);
        let depths = project_to_axis(&traj, &path);
        assert_eq!(depths.len(), 61);
        assert!((depths[0] - 0.0).abs() < 1e-9);
        assert!((depths[60] - 12.0).abs() < 1e-9);
        // Monotone feed: depths increase.
        for w in depths.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn entry_exit_rejects_backward_pass() {
        let traj = straight_trajectory();
        let err =
            find_entry_exit(&traj, [0.0, 0.0, 12.0], [0.0, 0.0, 0.0], &t_ct_cam()).unwrap_err();
        assert!(matches!(err, GeometryError::PathInverted { .. }));
    }

    #[test]
    fn entry_exit_checks_frames() {
        let traj = straight_trajectory();
        let wrong = RigidTransform::identity(FrameId::Camera);
        assert!(matches!(
            find_entry_exit(&traj, [0.0; 3], [0.0, 0.0, 1.0], &wrong),
            Err(GeometryError::FrameMismatch { .. })
        ));
    }

    #[test]
    fn find_breach_picks_closest_vertex_sample_with_earliest_tie() {
        // Mesh = two isolated vertices near depth 5 and depth 12; tie
        // engineered by symmetric placement around a sample.
        let traj = straight_trajectory();
        let mesh = TriMesh::new(
            vec![[0.3, 0.0, 5.0], [0.0, 0.0, 12.0], [5.0, 5.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let path = find_entry_exit(&traj, [0.0, 0.0, 0.0], [0.0, 0.0, 12.0], &t_ct_cam()).unwrap();
        let b = find_breach(&traj, &mesh, &t_ct_cam(), &path, DistanceMode::Vertex).unwrap();
        // Sample 80 sits exactly on vertex (0,0,12): distance 0.
        assert_eq!(b.index, 80);
        assert!(b.distance_mm < 1e-9);
        assert!((b.time_ms - 800.0).abs() < 1e-9);
    }

    #[test]
    fn find_breach_is_invariant_under_global_rigid_motion() {
        // Applying one extra rigid motion to trajectory and ct_to_cam alike
        // must not change the breach index.
        let traj = straight_trajectory();
        let mesh = TriMesh::new(
            vec![[0.1, 0.2, 4.4], [0.0, -0.1, 11.8], [4.0, 4.0, 1.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let t = t_ct_cam();
        let path = find_entry_exit(&traj, [0.0, 0.0, 0.0], [0.0, 0.0, 12.0], &t).unwrap();
        let b0 = find_breach(&traj, &mesh, &t, &path, DistanceMode::Vertex).unwrap();

        let extra = RigidTransform::new(
            rotation_from_axis_angle(linalg::normalize([0.2, 1.0, -0.4]).unwrap(), 0.9),
            [-30.0, 4.0, 17.0],
            FrameId::Camera,
            FrameId::Camera,
        )
        .unwrap();
        let moved = TrackedTrajectory::new(
            traj.timestamps_ms().to_vec(),
            extra.apply(traj.positions_mm()),
            FrameId::Camera,
        )
        .unwrap();
        let t2 = t.then(&extra).unwrap();
        let path2 = find_entry_exit(&moved, [0.0, 0.0, 0.0], [0.0, 0.0, 12.0], &t2).unwrap();
        let b2 = find_breach(&moved, &mesh, &t2, &path2, DistanceMode::Vertex).unwrap();
        assert_eq!(b0.index, b2.index);
        assert!((b0.distance_mm - b2.distance_mm).abs() < 1e-9);
    }

    #[test]
    fn surface_mode_differs_from_vertex_mode_on_coarse_mesh() {
        // A huge triangle: its surface passes near the trajectory while its
        // vertices stay far away.
        let traj = straight_trajectory();
        let mesh = TriMesh::new(
            vec![[-100.0, -100.0, 6.0], [100.0, -100.0, 6.0], [0.0, 200.0, 6.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let t = t_ct_cam();
        let path = find_entry_exit(&traj, [0.0, 0.0, 0.0], [0.0, 0.0, 12.0], &t).unwrap();
        let bv = find_breach(&traj, &mesh, &t, &path, DistanceMode::Vertex).unwrap();
        let bs = find_breach(&traj, &mesh, &t, &path, DistanceMode::Surface).unwrap();
        // Surface mode finds the plane crossing at depth 6 (sample 50).
        assert_eq!(bs.index, 50);
        assert!(bs.distance_mm < 1e-9);
        assert!(bv.distance_mm > 50.0);
    }

    #[test]
    fn distance_curves_shapes_and_minima() {
        let traj = straight_trajectory();
        let mesh = TriMesh::new(
            vec![[0.0, 0.0, 0.0], [0.0, 0.0, 12.0], [8.0, 0.0, 6.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let c = distance_curves(&traj, &mesh, [0.0, 0.0, 0.0], [0.0, 0.0, 12.0], &t_ct_cam())
            .unwrap();
        assert_eq!(c.time_ms.len(), traj.len());
        let argmin_entry = c
            .to_entry_mm
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let argmin_exit = c
            .to_exit_mm
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin_entry, 20);
        assert_eq!(argmin_exit, 80);
    }
}
