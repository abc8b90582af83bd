//! Quasi-static stability via linearized friction cones and a
//! grasp-wrench-space margin.
//!
//! Every contact point contributes one linearized friction cone. The
//! wrenches its edges can exert (at a bounded total normal force) span a
//! convex resistable set; a body is stable when the negated gravity wrench
//! lies strictly inside that set, and the stability quality is its
//! distance to the set's boundary. Forces are nondimensionalized by `m*g`
//! and torques additionally by the characteristic length `rho`, so the
//! quality is scale- and mass-invariant.

use nalgebra::{Point3, Unit, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{convex_hull_margin, GeometryError};

/// Coulomb friction at one contact interface, with the pyramid
/// linearization order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrictionModel {
    pub mu: f64,
    pub cone_sides: usize,
}

impl Default for FrictionModel {
    fn default() -> Self {
        Self {
            mu: 0.3,
            cone_sides: 6,
        }
    }
}

/// How the torque-normalization length is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoMode {
    /// Maximum distance from the center of mass to any contact point.
    MaxContactDistance,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityParams {
    /// Total normal-force budget across all contacts (N). There is no
    /// default in newtons: pass ten times the heaviest workpiece's weight
    /// unless the caller has a reason to bound contact forces differently.
    pub force_cap: f64,
    pub rho_mode: RhoMode,
    /// Margins below this count as unstable.
    pub min_margin: f64,
}

impl StabilityParams {
    pub fn with_budget(force_cap: f64) -> Self {
        assert!(force_cap > 0.0, "force budget must be positive");
        Self {
            force_cap,
            rho_mode: RhoMode::MaxContactDistance,
            min_margin: 1e-6,
        }
    }
}

/// Stability quality: 0 (unstable), a finite positive margin, or positive
/// infinity for a workpiece held by an assisting hand.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StabilityQuality(pub f64);

impl StabilityQuality {
    pub const UNSTABLE: Self = Self(0.0);
    pub const HELD: Self = Self(f64::INFINITY);

    pub fn is_stable(&self) -> bool {
        self.0 > 0.0
    }

    pub fn is_held(&self) -> bool {
        self.0.is_infinite()
    }
}

/// One contact patch feeding the wrench construction: its vertices are the
/// contact points, the normal points into the analyzed body.
#[derive(Debug, Clone)]
pub struct PatchContacts {
    pub points: Vec<Point3<f64>>,
    pub normal: Unit<Vector3<f64>>,
    pub centroid: Point3<f64>,
    pub friction: FrictionModel,
}

/// Nondimensionalized wrench generators for one analyzed body.
#[derive(Debug, Clone)]
pub struct WrenchSet {
    /// One 6-vector per contact point per pyramid edge; force part in units
    /// of `m*g`, torque part additionally divided by `rho`.
    pub generators: Vec<Vector6<f64>>,
    /// Unit-normalized gravity wrench (reference frame at the COM, so the
    /// torque part is zero).
    pub gravity_wrench: Vector6<f64>,
    pub rho: f64,
}

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("body has no contacts")]
    NoContacts,
    #[error("unknown body id {0:?}")]
    UnknownBody(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Edge vectors of a linearized friction cone. Each edge has unit
/// component along the normal and tangential magnitude exactly `mu`, so
/// the edges lie on the cone surface; azimuths are evenly spaced starting
/// at a deterministic tangent derived from the normal.
pub fn friction_pyramid(normal: &Unit<Vector3<f64>>, mu: f64, sides: usize) -> Vec<Vector3<f64>> {
    friction_pyramid_with_tangent(normal, &crate::geometry::tangent_of(normal), mu, sides)
}

/// Same as [`friction_pyramid`] with an explicit tangent seed. The wrench
/// construction seeds the tangent from the patch centroid, which makes the
/// analysis equivariant under arbitrary scene rotations.
pub fn friction_pyramid_with_tangent(
    normal: &Unit<Vector3<f64>>,
    tangent: &Unit<Vector3<f64>>,
    mu: f64,
    sides: usize,
) -> Vec<Vector3<f64>> {
    assert!(sides >= 3, "cone needs at least 3 sides");
    assert!(mu >= 0.0, "negative friction coefficient");
    let t1 = tangent.into_inner();
    let t2 = normal.cross(&t1);
    (0..sides)
        .map(|k| {
            let az = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
            normal.into_inner() + (t1 * az.cos() + t2 * az.sin()) * mu
        })
        .collect()
}

/// Assembles the wrench generators for a body under gravity given its
/// contact patches. Generators are scaled so a unit convex combination
/// spends the whole `force_cap` normal-force budget.
pub fn build_wrench_set(
    patches: &[PatchContacts],
    com: &Point3<f64>,
    mass: f64,
    gravity: &Vector3<f64>,
    params: &StabilityParams,
) -> Result<WrenchSet, StabilityError> {
    assert!(mass > 0.0, "mass must be positive");
    if patches.iter().all(|p| p.points.is_empty()) {
        return Err(StabilityError::NoContacts);
    }
    let g = gravity.norm();
    let rho = match params.rho_mode {
        RhoMode::Fixed(r) => r,
        RhoMode::MaxContactDistance => patches
            .iter()
            .flat_map(|p| p.points.iter())
            .map(|p| (p - com).norm())
            .fold(0.0, f64::max)
            .max(1e-12),
    };
    let scale = params.force_cap / (mass * g);
    let mut generators = Vec::new();
    for patch in patches {
        for point in &patch.points {
            let seed = patch.centroid - point;
            let tangent = if seed.norm() > 1e-12 {
                Unit::new_normalize(seed - patch.normal.into_inner() * patch.normal.dot(&seed))
            } else {
                crate::geometry::tangent_of(&patch.normal)
            };
            for edge in friction_pyramid_with_tangent(
                &patch.normal,
                &tangent,
                patch.friction.mu,
                patch.friction.cone_sides,
            ) {
                let torque = (point - com).cross(&edge) / rho;
                let mut w = Vector6::zeros();
                w.fixed_rows_mut::<3>(0).copy_from(&(edge * scale));
                w.fixed_rows_mut::<3>(3).copy_from(&(torque * scale));
                generators.push(w);
            }
        }
    }
    let mut w0 = Vector6::zeros();
    w0.fixed_rows_mut::<3>(0).copy_from(&(gravity / g));
    Ok(WrenchSet {
        generators,
        gravity_wrench: w0,
        rho,
    })
}

/// Stability margin of the body described by `wrench_set`: the distance of
/// the negated gravity wrench from the boundary of the resistable set
/// `conv({0} U generators)`, clamped to zero when outside, degenerate, or
/// below `min_margin`. The zero point is included because contacts may
/// also push with any fraction of the force budget.
pub fn stability_margin(wrench_set: &WrenchSet, params: &StabilityParams) -> StabilityQuality {
    let dim = 6;
    let mut pts: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(wrench_set.generators.len() + 1);
    pts.push(nalgebra::DVector::zeros(dim));
    for gen in &wrench_set.generators {
        pts.push(nalgebra::DVector::from_column_slice(gen.as_slice()));
    }
    let query = nalgebra::DVector::from_column_slice((-wrench_set.gravity_wrench).as_slice());
    match convex_hull_margin(&pts, &query) {
        Ok(margin) if margin >= params.min_margin => StabilityQuality(margin),
        Ok(_) => StabilityQuality::UNSTABLE,
        Err(GeometryError::DegenerateHull) => StabilityQuality::UNSTABLE,
        Err(_) => StabilityQuality::UNSTABLE,
    }
}

/// Stability of one workpiece at its goal pose against the table and a set
/// of placed bodies (all treated as immovable). Zero when floating, when
/// the wrench hull is degenerate, or when the margin is below
/// `min_margin`.
pub fn stability_quality(
    scene: &crate::scene::Scene,
    piece: &str,
    fixed_bodies: &[&str],
    params: &StabilityParams,
    tol: &crate::geometry::Tolerances,
) -> Result<StabilityQuality, StabilityError> {
    let piece_idx = scene
        .index_of(piece)
        .ok_or_else(|| StabilityError::UnknownBody(piece.to_string()))?;
    let placed: Vec<usize> = fixed_bodies
        .iter()
        .filter(|&&id| id != crate::scene::TABLE_ID)
        .map(|&id| {
            scene
                .index_of(id)
                .ok_or_else(|| StabilityError::UnknownBody(id.to_string()))
        })
        .collect::<Result<_, _>>()?;
    stability_quality_indexed(scene, piece_idx, &placed, params, tol)
}

/// Index-based variant of [`stability_quality`], used by the planner.
pub fn stability_quality_indexed(
    scene: &crate::scene::Scene,
    piece: usize,
    placed: &[usize],
    params: &StabilityParams,
    tol: &crate::geometry::Tolerances,
) -> Result<StabilityQuality, StabilityError> {
    let contacts = scene.contacts_onto(piece, placed, tol)?;
    Ok(stability_from_contacts(scene, piece, &contacts, params))
}

/// Margin from already-detected contacts (source body per patch, `None` =
/// table). Zero when there are none.
pub fn stability_from_contacts(
    scene: &crate::scene::Scene,
    piece: usize,
    contacts: &[(Option<usize>, crate::geometry::ContactPatch)],
    params: &StabilityParams,
) -> StabilityQuality {
    if contacts.is_empty() {
        return StabilityQuality::UNSTABLE;
    }
    let cone_sides = scene.friction.cone_sides;
    let patches: Vec<PatchContacts> = contacts
        .iter()
        .map(|(source, patch)| PatchContacts {
            points: patch.contact_points().to_vec(),
            normal: patch.normal,
            centroid: patch.centroid(),
            friction: FrictionModel {
                mu: scene.mu_between(*source, Some(piece)),
                cone_sides,
            },
        })
        .collect();
    let body = &scene.workpieces()[piece];
    match build_wrench_set(&patches, &body.com_world(), body.mass, &scene.gravity, params) {
        Ok(ws) => stability_margin(&ws, params),
        Err(_) => StabilityQuality::UNSTABLE,
    }
}

/// Per-step stability of an assembly order: entry `j` is the quality of
/// the j-th workpiece against the table plus the j-1 pieces before it.
pub fn stability_row(
    scene: &crate::scene::Scene,
    order: &[usize],
    params: &StabilityParams,
    tol: &crate::geometry::Tolerances,
) -> Result<Vec<StabilityQuality>, StabilityError> {
    let mut row = Vec::with_capacity(order.len());
    for (j, &piece) in order.iter().enumerate() {
        row.push(stability_quality_indexed(
            scene,
            piece,
            &order[..j],
            params,
            tol,
        )?);
    }
    Ok(row)
}
