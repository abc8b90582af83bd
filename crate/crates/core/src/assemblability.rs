//! Insertion-direction analysis.
//!
//! The contact normals between the upcoming workpiece and the assembled
//! component (table included) constrain the straight-line motion that can
//! form those contacts: retracting along `-d` must not drive any contact
//! into its counterpart. The insertion direction maximizes the worst
//! clearance `margin(d) = min_j(-d . n_j)`; a negative optimum means no
//! straight translation can assemble the piece.

use nalgebra::{Unit, Vector3};

use crate::geometry::Tolerances;
use crate::scene::Scene;

/// Deduplicated contact normals pointing from the assembled component into
/// the upcoming workpiece.
#[derive(Debug, Clone, Default)]
pub struct DirectionConstraintSet {
    pub normals: Vec<Unit<Vector3<f64>>>,
}

/// Insertion motion direction together with its clearance margin in
/// `[-1, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct AssemblyDirection {
    pub direction: Unit<Vector3<f64>>,
    pub margin: f64,
}

/// Assemblability quality in `{0} U [0.5, 1]`: zero when insertion is
/// blocked, `(1 + margin) / 2` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AssemblabilityQuality(pub f64);

const DEDUP_COS: f64 = 1.0 - 5e-13; // cos(1e-6 rad)

/// Contact normals of `piece` against the table plus `prefix`, oriented
/// into `piece` and deduplicated within 1e-6 rad.
pub fn constraint_normals(
    scene: &Scene,
    piece: usize,
    prefix: &[usize],
    tol: &Tolerances,
) -> Result<DirectionConstraintSet, crate::geometry::GeometryError> {
    let contacts = scene.contacts_onto(piece, prefix, tol)?;
    let mut normals: Vec<Unit<Vector3<f64>>> = Vec::new();
    for (_, patch) in contacts {
        if !normals.iter().any(|n| n.dot(&patch.normal) >= DEDUP_COS) {
            normals.push(patch.normal);
        }
    }
    Ok(DirectionConstraintSet { normals })
}

/// Direction maximizing `min_j(-d . n_j)` over the unit sphere, solved by
/// enumerating the critical directions of every subset of up to three
/// normals: negated single normals, pair bisectors, and spherical
/// circumcenters of triples. Ties (within 1e-12) resolve to the direction
/// closest to gravity, then lexicographically smallest.
///
/// An empty constraint set yields straight-down insertion with margin 1.
pub fn optimal_direction(
    constraints: &DirectionConstraintSet,
    gravity_dir: &Unit<Vector3<f64>>,
) -> AssemblyDirection {
    let normals = &constraints.normals;
    if normals.is_empty() {
        return AssemblyDirection {
            direction: *gravity_dir,
            margin: 1.0,
        };
    }

    let mut candidates: Vec<Vector3<f64>> = Vec::new();
    for n in normals {
        candidates.push(-n.into_inner());
    }
    for i in 0..normals.len() {
        for j in (i + 1)..normals.len() {
            let sum = normals[i].into_inner() + normals[j].into_inner();
            if sum.norm() > 1e-9 {
                candidates.push(-sum);
            }
        }
    }
    for i in 0..normals.len() {
        for j in (i + 1)..normals.len() {
            for k in (j + 1)..normals.len() {
                // d with equal clearance against all three normals: the
                // nullspace of (n_i - n_j, n_i - n_k), both signs.
                let a = normals[i].into_inner() - normals[j].into_inner();
                let b = normals[i].into_inner() - normals[k].into_inner();
                let v = a.cross(&b);
                if v.norm() > 1e-9 {
                    candidates.push(v);
                    candidates.push(-v);
                }
            }
        }
    }

    let margin_of = |d: &Unit<Vector3<f64>>| {
        normals
            .iter()
            .map(|n| -d.dot(n))
            .fold(f64::INFINITY, f64::min)
    };

    let mut best: Option<(Unit<Vector3<f64>>, f64)> = None;
    for c in candidates {
        let d = Unit::new_normalize(c);
        let m = margin_of(&d);
        let better = match &best {
            None => true,
            Some((bd, bm)) => {
                if m > bm + 1e-12 {
                    true
                } else if m < bm - 1e-12 {
                    false
                } else {
                    let ga = d.dot(gravity_dir);
                    let gb = bd.dot(gravity_dir);
                    if ga > gb + 1e-12 {
                        true
                    } else if ga < gb - 1e-12 {
                        false
                    } else {
                        lex_less(&d, bd)
                    }
                }
            }
        };
        if better {
            best = Some((d, m));
        }
    }
    let (direction, margin) = best.expect("at least one candidate");
    AssemblyDirection {
        direction,
        margin: margin.clamp(-1.0, 1.0),
    }
}

fn lex_less(a: &Unit<Vector3<f64>>, b: &Unit<Vector3<f64>>) -> bool {
    for k in 0..3 {
        if a[k] < b[k] - 1e-12 {
            return true;
        }
        if a[k] > b[k] + 1e-12 {
            return false;
        }
    }
    false
}

/// Quality surrogate: zero when blocked, otherwise affine in the margin so
/// that unobstructed stacking scores 1 and tangential sliding scores 0.5.
pub fn assemblability_quality(dir: &AssemblyDirection) -> AssemblabilityQuality {
    if dir.margin < 0.0 {
        AssemblabilityQuality(0.0)
    } else {
        AssemblabilityQuality((1.0 + dir.margin) / 2.0)
    }
}

/// Per-step insertion directions and qualities for an assembly order.
pub fn assemblability_row(
    scene: &Scene,
    order: &[usize],
    tol: &Tolerances,
) -> Result<(Vec<AssemblabilityQuality>, Vec<AssemblyDirection>), crate::geometry::GeometryError> {
    let gravity = scene.gravity_dir();
    let mut qualities = Vec::with_capacity(order.len());
    let mut directions = Vec::with_capacity(order.len());
    for (j, &piece) in order.iter().enumerate() {
        let constraints = constraint_normals(scene, piece, &order[..j], tol)?;
        let dir = optimal_direction(&constraints, &gravity);
        qualities.push(assemblability_quality(&dir));
        directions.push(dir);
    }
    Ok((qualities, directions))
}
