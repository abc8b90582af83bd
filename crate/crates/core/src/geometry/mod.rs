//! Shape representation, contact detection and hull queries.

use nalgebra::{Isometry3, Unit, Vector3};
use thiserror::Error;

mod collide;
mod contact;
mod hull;
mod shape;

pub use collide::{obb_hits_collider, penetration_exceeding, swept_collision, Collider, Obb};
pub use contact::{detect_contacts, ContactPatch};
pub use hull::convex_hull_margin;
pub use shape::{build_shape, Shape, VoxelGrid};

/// Rigid transform of a body: rotation (unit quaternion internally) plus
/// translation in meters.
pub type Pose = Isometry3<f64>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("shape has no voxels")]
    EmptyShape,
    #[error("voxel set is not 6-connected ({reachable} of {total} cells reachable)")]
    Disconnected { reachable: usize, total: usize },
    #[error("hull points are not full-dimensional")]
    DegenerateHull,
    #[error("bodies interpenetrate by {depth:.6e} m (allowed {allowed:.6e} m)")]
    Interpenetration { depth: f64, allowed: f64 },
    #[error("mesh is not closed: edge ({0}, {1}) is unpaired")]
    OpenMesh(u32, u32),
    #[error("mesh is inside-out (signed volume {0:.6e} <= 0)")]
    InsideOut(f64),
}

/// Numerical tolerances shared by the contact and collision queries.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Coplanarity / separation tolerance for contact detection (m).
    pub contact_gap: f64,
    /// Contact regions smaller than this are discarded (m^2).
    pub min_patch_area: f64,
    /// Number of uniform stations sampled along a swept translation.
    pub sweep_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            contact_gap: 1e-4,
            min_patch_area: 1e-7,
            sweep_steps: 16,
        }
    }
}

/// Deterministic tangent for a unit direction. Equivariant under rotations
/// about the z axis away from the poles, so analyses that seed local frames
/// from it rotate cleanly with the scene.
pub(crate) fn tangent_of(n: &Unit<Vector3<f64>>) -> Unit<Vector3<f64>> {
    let t = Vector3::z().cross(n);
    if t.norm() > 1e-9 {
        Unit::new_normalize(t)
    } else {
        Unit::new_unchecked(Vector3::x())
    }
}

/// Orthonormal in-plane basis `(t1, t2)` for a plane with normal `n`, with
/// `t1 x t2 = n` so that counter-clockwise 2-D loops wind positively about
/// the normal.
pub(crate) fn plane_basis(n: &Unit<Vector3<f64>>) -> (Vector3<f64>, Vector3<f64>) {
    let t1 = tangent_of(n).into_inner();
    let t2 = n.cross(&t1);
    (t1, t2)
}
