//! Iterative closest point registration between point clouds.

use alloc::vec::Vec;

use super::kdtree::KdTree;
use super::linalg::{kabsch, mat_vec, Vec3};
use super::{FrameId, GeometryError, RigidTransform};

/// ICP iteration controls.
#[derive(Clone, Copy, Debug)]
pub struct IcpParams {
    /// Iteration cap.
    pub max_iterations: usize,
    /// Convergence threshold on the relative change of mean squared
    /// correspondence distance between iterations.
    pub tolerance: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-12,
        }
    }
}

/// Registration result.
#[derive(Clone, Debug)]
pub struct IcpResult {
    /// Source-to-target transform.
    pub transform: RigidTransform,
    /// Iterations performed.
    pub iterations: usize,
    /// Mean squared nearest-neighbor distance at the final transform.
    pub mse: f64,
}

/// Register `source` onto `target`: the returned transform maps source
/// coordinates into the target frame, minimizing mean squared distance to
/// nearest target points.
///
/// Correspondences are nearest target points (no outlier rejection), and the
/// per-iteration alignment is solved in closed form from the cross-covariance
/// SVD with reflection correction. Iteration stops when the relative MSE
/// improvement drops below `params.tolerance` or the cap is reached.
///
/// At least three points on each side are required, and the clouds must not
/// be collinear; both conditions otherwise leave the rotation underdetermined.
pub fn icp_register(
    source: &[Vec3],
    target: &[Vec3],
    from: FrameId,
    to: FrameId,
    params: &IcpParams,
) -> Result<IcpResult, GeometryError> {
    if source.len() < 3 || target.len() < 3 {
        return Err(GeometryError::NotEnoughPoints {
            got: source.len().min(target.len()),
            needed: 3,
        });
    }
    if params.max_iterations == 0 {
        return Err(GeometryError::InvalidParam("max_iterations must be >= 1"));
    }

    let tree = KdTree::build(target);
    let mut rotation = super::linalg::IDENTITY;
    let mut translation = [0.0f64; 3];
    let mut moved: Vec<Vec3> = source.to_vec();
    let mut prev_mse = f64::INFINITY;
    let mut mse = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..params.max_iterations {
        iterations = iter + 1;
        // Current placement of the source cloud.
        for (m, s) in moved.iter_mut().zip(source) {
            let r = mat_vec(&rotation, *s);
            *m = [
                r[0] + translation[0],
                r[1] + translation[1],
                r[2] + translation[2],
            ];
        }
        let mut pairs: Vec<(Vec3, Vec3)> = Vec::with_capacity(source.len());
        let mut acc = 0.0;
        for (s, m) in source.iter().zip(&moved) {
            let (j, d2) = tree.nearest(*m).expect("target cloud is nonempty");
            pairs.push((*s, target[j]));
            acc += d2;
        }
        mse = acc / source.len() as f64;

        if prev_mse.is_finite() {
            let rel = (prev_mse - mse).abs() / prev_mse.max(1e-300);
            if rel <= params.tolerance {
                break;
            }
        }
        prev_mse = mse;

        // Absolute refit against the current correspondences.
        let (r, t) = kabsch(&pairs).ok_or(GeometryError::DegenerateCloud)?;
        rotation = r;
        translation = t;
    }

    Ok(IcpResult {
        transform: RigidTransform::new(rotation, translation, from, to)?,
        iterations,
        mse,
    })
}
