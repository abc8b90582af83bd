//! Volumetric collision queries.
//!
//! Shapes built from voxels decompose into oriented boxes (one per cell),
//! and all queries reduce to box/box separating-axis tests with an exact
//! penetration depth. Touching surfaces report zero depth, so resting and
//! sliding contact never count as collision. Shapes loaded as raw meshes
//! fall back to vertex-containment plus transversal triangle crossing
//! tests; a crossing is reported as unbounded depth since the true overlap
//! is not resolved (scenes are expected to keep meshes either separated or
//! in face contact).

use nalgebra::{Matrix3, Point3, Unit, Vector3};

use super::{Pose, Shape, Tolerances};

/// Oriented box: center, rotation (columns are the box axes) and
/// half-extents.
#[derive(Debug, Clone, Copy)]
pub struct Obb {
    pub center: Point3<f64>,
    pub axes: Matrix3<f64>,
    pub half: Vector3<f64>,
}

impl Obb {
    pub fn new(center: Point3<f64>, axes: Matrix3<f64>, half: Vector3<f64>) -> Self {
        Self { center, axes, half }
    }

    /// Axis-aligned box in world frame.
    pub fn from_aabb(lo: Point3<f64>, hi: Point3<f64>) -> Self {
        Self {
            center: nalgebra::center(&lo, &hi),
            axes: Matrix3::identity(),
            half: (hi - lo) * 0.5,
        }
    }

    fn projection_radius(&self, axis: &Vector3<f64>) -> f64 {
        (0..3)
            .map(|k| self.half[k] * self.axes.column(k).dot(axis).abs())
            .sum()
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let mut out = [self.center; 8];
        for (i, c) in out.iter_mut().enumerate() {
            for k in 0..3 {
                let s = if (i >> k) & 1 == 0 { -1.0 } else { 1.0 };
                *c += self.axes.column(k) * (s * self.half[k]);
            }
        }
        out
    }

    pub fn min_z(&self) -> f64 {
        self.center.z - (0..3).map(|k| self.half[k] * self.axes[(2, k)].abs()).sum::<f64>()
    }
}

/// Penetration depth between two oriented boxes, `None` when separated or
/// touching. For boxes the minimum-translation depth is attained on one of
/// the 15 separating-axis candidates, so this is exact.
pub fn obb_overlap_depth(a: &Obb, b: &Obb) -> Option<f64> {
    let d = b.center - a.center;
    let mut depth = f64::INFINITY;
    let mut check = |axis: Vector3<f64>| -> bool {
        let len = axis.norm();
        if len < 1e-12 {
            return true; // degenerate cross product, not a separating axis
        }
        let u = axis / len;
        let overlap = a.projection_radius(&u) + b.projection_radius(&u) - d.dot(&u).abs();
        if overlap <= 0.0 {
            return false;
        }
        depth = depth.min(overlap);
        true
    };
    for k in 0..3 {
        if !check(a.axes.column(k).into_owned()) {
            return None;
        }
        if !check(b.axes.column(k).into_owned()) {
            return None;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            if !check(a.axes.column(i).cross(&b.axes.column(j))) {
                return None;
            }
        }
    }
    Some(depth)
}

/// A positioned body for collision purposes: either a posed shape or the
/// worktable half-space `z <= height`.
#[derive(Debug, Clone, Copy)]
pub enum Collider<'a> {
    Mesh { shape: &'a Shape, pose: Pose },
    HalfSpace { z: f64 },
}

impl<'a> Collider<'a> {
    /// One oriented box per voxel cell, when the shape carries its grid.
    pub fn cell_obbs(&self) -> Option<Vec<Obb>> {
        match self {
            Collider::Mesh { shape, pose } => shape.voxels().map(|v| {
                let axes = pose.rotation.to_rotation_matrix().into_inner();
                let half = Vector3::repeat(v.size() * 0.5);
                v.cells()
                    .iter()
                    .map(|&c| Obb::new(*pose * v.cell_center(c), axes, half))
                    .collect()
            }),
            Collider::HalfSpace { .. } => None,
        }
    }

    pub fn aabb(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        match self {
            Collider::Mesh { shape, pose } => Some(shape.aabb(pose)),
            Collider::HalfSpace { .. } => None,
        }
    }
}

fn aabbs_clear(a: &Collider, b: &Collider, margin: f64) -> bool {
    match (a.aabb(), b.aabb()) {
        (Some((alo, ahi)), Some((blo, bhi))) => (0..3)
            .any(|k| alo[k] > bhi[k] + margin || blo[k] > ahi[k] + margin),
        (Some((alo, _)), None) => {
            let Collider::HalfSpace { z } = b else {
                unreachable!()
            };
            alo.z > *z + margin
        }
        (None, Some((blo, _))) => {
            let Collider::HalfSpace { z } = a else {
                unreachable!()
            };
            blo.z > *z + margin
        }
        (None, None) => false,
    }
}

/// First penetration exceeding `gap`, if any. Depth is exact for
/// voxel-backed shapes; `f64::INFINITY` marks an unresolved transversal
/// mesh crossing.
pub fn penetration_exceeding(a: &Collider, b: &Collider, gap: f64) -> Option<f64> {
    if aabbs_clear(a, b, gap) {
        return None;
    }
    match (a, b) {
        (Collider::HalfSpace { .. }, Collider::HalfSpace { .. }) => None,
        (Collider::HalfSpace { z }, m @ Collider::Mesh { .. })
        | (m @ Collider::Mesh { .. }, Collider::HalfSpace { z }) => {
            let Collider::Mesh { shape, pose } = m else {
                unreachable!()
            };
            let min_z = shape
                .vertices()
                .iter()
                .map(|v| (*pose * v).z)
                .fold(f64::INFINITY, f64::min);
            let depth = z - min_z;
            (depth > gap).then_some(depth)
        }
        (Collider::Mesh { .. }, Collider::Mesh { .. }) => {
            match (a.cell_obbs(), b.cell_obbs()) {
                (Some(ca), Some(cb)) => {
                    for oa in &ca {
                        for ob in &cb {
                            if let Some(depth) = obb_overlap_depth(oa, ob) {
                                if depth > gap {
                                    return Some(depth);
                                }
                            }
                        }
                    }
                    None
                }
                _ => mesh_fallback_penetration(a, b, gap),
            }
        }
    }
}

/// True when the shape, translated from `start_pose` along `direction` and
/// sampled at `tol.sweep_steps` uniform stations over `[0, distance]`,
/// penetrates any obstacle by more than `tol.contact_gap`.
pub fn swept_collision(
    shape: &Shape,
    start_pose: &Pose,
    direction: &Unit<Vector3<f64>>,
    distance: f64,
    obstacles: &[Collider],
    tol: &Tolerances,
) -> bool {
    let stations = if distance <= 0.0 || tol.sweep_steps < 2 {
        1
    } else {
        tol.sweep_steps
    };
    for k in 0..stations {
        let t = if stations == 1 {
            0.0
        } else {
            distance * k as f64 / (stations - 1) as f64
        };
        let mut pose = *start_pose;
        pose.translation.vector += direction.into_inner() * t;
        let moving = Collider::Mesh { shape, pose };
        for obs in obstacles {
            if penetration_exceeding(&moving, obs, tol.contact_gap).is_some() {
                return true;
            }
        }
    }
    false
}

/// Gripper-style query: one oriented box against a body.
pub fn obb_hits_collider(obb: &Obb, body: &Collider, gap: f64) -> bool {
    match body {
        Collider::HalfSpace { z } => obb.min_z() < z - gap,
        Collider::Mesh { shape, pose } => {
            if let Some(cells) = body.cell_obbs() {
                cells.iter().any(|c| {
                    obb_overlap_depth(obb, c).is_some_and(|d| d > gap)
                })
            } else {
                // Raw mesh: triangle/box crossing or box center swallowed.
                shape.world_triangles(pose).iter().any(|(tri, _)| {
                    triangle_obb_depth(tri, obb).is_some_and(|d| d > gap)
                }) || point_in_mesh(shape, pose, &obb.center)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Raw-mesh fallbacks.
// ---------------------------------------------------------------------------

fn mesh_fallback_penetration(a: &Collider, b: &Collider, gap: f64) -> Option<f64> {
    let (Collider::Mesh { shape: sa, pose: pa }, Collider::Mesh { shape: sb, pose: pb }) = (a, b)
    else {
        unreachable!()
    };
    // Vertices of one body strictly inside the other.
    for (s, p, os, op) in [(sa, pa, sb, pb), (sb, pb, sa, pa)] {
        for v in s.vertices() {
            let w = *p * v;
            if point_in_mesh(os, op, &w) {
                let depth = point_mesh_distance(os, op, &w);
                if depth > gap {
                    return Some(depth);
                }
            }
        }
    }
    // Transversal surface crossings. Near-parallel triangle pairs are
    // resting/sliding contact and are not penetration.
    let ta = sa.world_triangles(pa);
    let tb = sb.world_triangles(pb);
    for (pa3, na) in &ta {
        for (pb3, nb) in &tb {
            let denom = na.norm() * nb.norm();
            if denom < 1e-24 {
                continue;
            }
            if na.dot(nb).abs() / denom > 0.999_999 {
                continue;
            }
            if triangles_cross(pa3, pb3) {
                return Some(f64::INFINITY);
            }
        }
    }
    None
}

fn point_in_mesh(shape: &Shape, pose: &Pose, p: &Point3<f64>) -> bool {
    let local = pose.inverse() * p;
    // Fixed skew direction avoids grazing lattice-aligned faces.
    let dir = Vector3::new(0.540_302_305_868, 0.841_470_984_808, 0.173_648_177_667);
    let mut crossings = 0usize;
    for t in 0..shape.triangles().len() {
        let tri = shape.triangle_points(t);
        if let Some(hit_t) = ray_triangle(&local, &dir, &tri) {
            if hit_t > 1e-12 {
                crossings += 1;
            }
        }
    }
    crossings % 2 == 1
}

fn point_mesh_distance(shape: &Shape, pose: &Pose, p: &Point3<f64>) -> f64 {
    let local = pose.inverse() * p;
    let mut best = f64::INFINITY;
    for t in 0..shape.triangles().len() {
        let tri = shape.triangle_points(t);
        best = best.min((closest_point_on_triangle(&local, &tri) - local).norm());
    }
    best
}

fn ray_triangle(origin: &Point3<f64>, dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() < 1e-16 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&h) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

fn closest_point_on_triangle(p: &Point3<f64>, tri: &[Point3<f64>; 3]) -> Point3<f64> {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Strict transversal intersection of two non-parallel triangles
/// (Moller's interval test). Touching configurations report false.
fn triangles_cross(a: &[Point3<f64>; 3], b: &[Point3<f64>; 3]) -> bool {
    const EPS: f64 = 1e-12;
    let n1 = (a[1] - a[0]).cross(&(a[2] - a[0]));
    let db: Vec<f64> = b.iter().map(|v| n1.dot(&(v - a[0]))).collect();
    if db.iter().all(|&d| d >= -EPS) || db.iter().all(|&d| d <= EPS) {
        return false;
    }
    let n2 = (b[1] - b[0]).cross(&(b[2] - b[0]));
    let da: Vec<f64> = a.iter().map(|v| n2.dot(&(v - b[0]))).collect();
    if da.iter().all(|&d| d >= -EPS) || da.iter().all(|&d| d <= EPS) {
        return false;
    }
    let dir = n1.cross(&n2);
    let axis = (0..3).max_by(|&i, &j| dir[i].abs().partial_cmp(&dir[j].abs()).unwrap())
        .unwrap();
    let (Some((a0, a1)), Some((b0, b1))) =
        (straddle_interval(a, &da, axis), straddle_interval(b, &db, axis))
    else {
        return false;
    };
    a0.max(b0) + EPS < a1.min(b1)
}

fn straddle_interval(p: &[Point3<f64>; 3], d: &[f64], axis: usize) -> Option<(f64, f64)> {
    let mut ts: Vec<f64> = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        if d[i] * d[j] < 0.0 {
            ts.push(p[i][axis] + (p[j][axis] - p[i][axis]) * d[i] / (d[i] - d[j]));
        }
    }
    if ts.len() != 2 {
        return None;
    }
    Some((ts[0].min(ts[1]), ts[0].max(ts[1])))
}

/// Penetration of a triangle into a box (SAT over 13 axes), `None` when
/// separated or touching.
fn triangle_obb_depth(tri: &[Point3<f64>; 3], obb: &Obb) -> Option<f64> {
    let verts: Vec<Vector3<f64>> = tri.iter().map(|v| v - obb.center).collect();
    let mut depth = f64::INFINITY;
    let mut check = |axis: Vector3<f64>| -> bool {
        let len = axis.norm();
        if len < 1e-12 {
            return true;
        }
        let u = axis / len;
        let r = obb.projection_radius(&u);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &verts {
            let d = v.dot(&u);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let overlap = (hi.min(r) - lo.max(-r)).min(hi - lo).min(2.0 * r);
        if hi < -r || lo > r {
            return false;
        }
        depth = depth.min(overlap.max(0.0));
        true
    };
    for k in 0..3 {
        if !check(obb.axes.column(k).into_owned()) {
            return None;
        }
    }
    let edges = [
        tri[1] - tri[0],
        tri[2] - tri[1],
        tri[0] - tri[2],
    ];
    if !check(edges[0].cross(&edges[1])) {
        return None;
    }
    for e in &edges {
        for k in 0..3 {
            if !check(e.cross(&obb.axes.column(k))) {
                return None;
            }
        }
    }
    (depth > 0.0).then_some(depth)
}
