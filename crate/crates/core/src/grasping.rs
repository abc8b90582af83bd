//! Parallel-jaw grasp enumeration.
//!
//! The gripper is a parameterized three-box model: two fingers and a palm.
//! Grasps are sampled on pairs of anti-parallel planar facets, so every
//! candidate is antipodal and force-closed for any positive friction
//! coefficient; the accessibility filter then removes grasps whose boxes
//! collide with the workpiece itself, the already-assembled bodies or the
//! table.
//!
//! Gripper frame: the jaw axis is local +y (fingers close along it), the
//! approach direction is local -z (the palm sits on +z), and the origin is
//! the midpoint of the two face contact points.

use nalgebra::{Matrix3, Point2, Point3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{obb_hits_collider, tangent_of, Collider, Obb, Pose, Shape, Tolerances};

/// Box dimensions of the two-finger gripper (meters).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperSpec {
    pub max_opening: f64,
    pub finger_width: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub palm_depth: f64,
}

impl Default for GripperSpec {
    /// Sized after a common 85 mm-stroke two-finger gripper.
    fn default() -> Self {
        Self {
            max_opening: 0.085,
            finger_width: 0.02,
            finger_length: 0.04,
            finger_thickness: 0.012,
            palm_depth: 0.03,
        }
    }
}

impl GripperSpec {
    /// The three collision boxes in gripper frame at a given opening:
    /// `(center, half_extents)`.
    pub fn collision_boxes(&self, opening: f64) -> [(Point3<f64>, Vector3<f64>); 3] {
        let finger_half = Vector3::new(
            self.finger_width / 2.0,
            self.finger_thickness / 2.0,
            self.finger_length / 2.0,
        );
        let fy = opening / 2.0 + self.finger_thickness / 2.0;
        let palm_half = Vector3::new(
            self.finger_width / 2.0,
            self.max_opening / 2.0 + self.finger_thickness,
            self.palm_depth / 2.0,
        );
        let palm_z = self.finger_length / 2.0 + self.palm_depth / 2.0;
        [
            (Point3::new(0.0, fy, 0.0), finger_half),
            (Point3::new(0.0, -fy, 0.0), finger_half),
            (Point3::new(0.0, 0.0, palm_z), palm_half),
        ]
    }
}

/// A parallel-jaw grasp: gripper pose, jaw opening and the two antipodal
/// face contact points.
#[derive(Debug, Clone)]
pub struct Grasp {
    pub pose: Pose,
    pub opening: f64,
    pub contact_pair: (Point3<f64>, Point3<f64>),
}

impl Grasp {
    /// World-frame collision boxes of the gripper executing this grasp.
    pub fn boxes(&self, spec: &GripperSpec) -> [Obb; 3] {
        let axes: Matrix3<f64> = self.pose.rotation.to_rotation_matrix().into_inner();
        self.collision_boxes_with(spec, &axes)
    }

    fn collision_boxes_with(&self, spec: &GripperSpec, axes: &Matrix3<f64>) -> [Obb; 3] {
        let local = spec.collision_boxes(self.opening);
        [0, 1, 2].map(|i| {
            let (c, h) = local[i];
            Obb::new(self.pose * c, *axes, h)
        })
    }
}

/// Grid pitch and roll count for grasp sampling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    /// Grid pitch on the facet overlap (m).
    pub pitch: f64,
    /// Gripper rolls about the jaw axis per sample point; roll k is
    /// `k * 180deg / rotations`.
    pub rotations: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            pitch: 0.01,
            rotations: 2,
        }
    }
}

/// Maximal coplanar connected facet of a mesh.
#[derive(Debug, Clone)]
pub struct Facet {
    pub normal: Unit<Vector3<f64>>,
    /// Signed plane offset: `normal . x` for x on the facet.
    pub offset: f64,
    pub triangles: Vec<usize>,
}

/// Pair of anti-parallel facets the jaws can span.
#[derive(Debug, Clone)]
pub struct FacetPair {
    pub a: usize,
    pub b: usize,
    pub separation: f64,
}

const ANGLE_COS: f64 = 1.0 - 5e-13; // cos(1e-6 rad)

/// Clusters mesh triangles into maximal coplanar connected facets
/// (body frame).
pub fn cluster_facets(shape: &Shape) -> Vec<Facet> {
    let tris = shape.world_triangles(&Pose::identity());
    let n = tris.len();
    let mut facet_of: Vec<Option<usize>> = vec![None; n];
    let mut facets: Vec<Facet> = Vec::new();

    // Edge adjacency keyed on undirected vertex pairs.
    let mut edge_map: std::collections::HashMap<(u32, u32), Vec<usize>> =
        std::collections::HashMap::new();
    for (t, tri) in shape.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            edge_map.entry(key).or_default().push(t);
        }
    }

    for start in 0..n {
        if facet_of[start].is_some() {
            continue;
        }
        let n0 = tris[start].1;
        let len0 = n0.norm();
        if len0 < 1e-18 {
            continue;
        }
        let normal = Unit::new_unchecked(n0 / len0);
        let offset = normal.dot(&tris[start].0[0].coords);
        let id = facets.len();
        let mut members = Vec::new();
        let mut stack = vec![start];
        facet_of[start] = Some(id);
        while let Some(t) = stack.pop() {
            members.push(t);
            let tri = shape.triangles()[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                for &other in &edge_map[&key] {
                    if facet_of[other].is_some() {
                        continue;
                    }
                    let no = tris[other].1;
                    let lo = no.norm();
                    if lo < 1e-18 || normal.dot(&no) / lo < ANGLE_COS {
                        continue;
                    }
                    facet_of[other] = Some(id);
                    stack.push(other);
                }
            }
        }
        members.sort_unstable();
        facets.push(Facet {
            normal,
            offset,
            triangles: members,
        });
    }
    facets
}

/// All pairs of anti-parallel facets with separation in `(0, max_opening]`
/// and overlapping projections.
pub fn enumerate_facet_pairs(shape: &Shape, gripper: &GripperSpec) -> Vec<FacetPair> {
    let facets = cluster_facets(shape);
    enumerate_pairs_of(shape, &facets, gripper)
        .into_iter()
        .map(|(a, b, separation)| FacetPair { a, b, separation })
        .collect()
}

fn enumerate_pairs_of(
    shape: &Shape,
    facets: &[Facet],
    gripper: &GripperSpec,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for a in 0..facets.len() {
        for b in (a + 1)..facets.len() {
            if facets[a].normal.dot(&facets[b].normal) > -ANGLE_COS {
                continue;
            }
            // Separation along a's outward normal; b's plane must be behind.
            let separation = facets[a].offset + facets[b].offset;
            if separation <= 1e-9 || separation > gripper.max_opening {
                continue;
            }
            if overlap_region(shape, &facets[a], &facets[b]).is_none() {
                continue;
            }
            out.push((a, b, separation));
        }
    }
    out
}

/// 2-D overlap data of a facet pair in the plane basis of facet `a`:
/// triangles of both facets projected into that basis, plus the overlap
/// bounding box. `None` when the projections do not overlap.
struct Overlap {
    t1: Vector3<f64>,
    t2: Vector3<f64>,
    anchor: Point3<f64>,
    tris_a: Vec<[Point2<f64>; 3]>,
    tris_b: Vec<[Point2<f64>; 3]>,
    lo: Point2<f64>,
    hi: Point2<f64>,
}

fn overlap_region(shape: &Shape, fa: &Facet, fb: &Facet) -> Option<Overlap> {
    let (t1, t2) = crate::geometry::plane_basis(&fa.normal);
    let anchor = Point3::from(fa.normal.into_inner() * fa.offset);
    let project = |p: &Point3<f64>| {
        let d = p - anchor;
        Point2::new(d.dot(&t1), d.dot(&t2))
    };
    let tri2d = |t: usize| -> [Point2<f64>; 3] {
        let p = shape.triangle_points(t);
        [project(&p[0]), project(&p[1]), project(&p[2])]
    };
    let tris_a: Vec<_> = fa.triangles.iter().map(|&t| tri2d(t)).collect();
    let tris_b: Vec<_> = fb.triangles.iter().map(|&t| tri2d(t)).collect();
    let bbox = |tris: &[[Point2<f64>; 3]]| {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for t in tris {
            for p in t {
                lo.x = lo.x.min(p.x);
                lo.y = lo.y.min(p.y);
                hi.x = hi.x.max(p.x);
                hi.y = hi.y.max(p.y);
            }
        }
        (lo, hi)
    };
    let (alo, ahi) = bbox(&tris_a);
    let (blo, bhi) = bbox(&tris_b);
    let lo = Point2::new(alo.x.max(blo.x), alo.y.max(blo.y));
    let hi = Point2::new(ahi.x.min(bhi.x), ahi.y.min(bhi.y));
    if lo.x >= hi.x - 1e-12 || lo.y >= hi.y - 1e-12 {
        return None;
    }
    let ov = Overlap {
        t1,
        t2,
        anchor,
        tris_a,
        tris_b,
        lo,
        hi,
    };
    // Bounding boxes overlap; require an actual common interior point.
    if sample_points_in(&ov, f64::INFINITY).is_empty() && centroid_fallback(&ov).is_none() {
        return None;
    }
    Some(ov)
}

fn point_in_tris(p: &Point2<f64>, tris: &[[Point2<f64>; 3]]) -> bool {
    const EPS: f64 = 1e-12;
    tris.iter().any(|t| {
        let mut sign = 0.0_f64;
        for k in 0..3 {
            let a = t[k];
            let b = t[(k + 1) % 3];
            let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
            if cross.abs() <= EPS {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if sign != cross.signum() {
                return false;
            }
        }
        true
    })
}

fn in_both(ov: &Overlap, p: &Point2<f64>) -> bool {
    point_in_tris(p, &ov.tris_a) && point_in_tris(p, &ov.tris_b)
}

/// Grid points (pitch-spaced, half-pitch inset) inside both facets.
fn sample_points_in(ov: &Overlap, pitch: f64) -> Vec<Point2<f64>> {
    let mut pts = Vec::new();
    if !pitch.is_finite() {
        // Single probe at the bbox center, used for the overlap existence
        // check.
        let c = nalgebra::center(&ov.lo, &ov.hi);
        if in_both(ov, &c) {
            pts.push(c);
        }
        return pts;
    }
    let nx = ((ov.hi.x - ov.lo.x) / pitch).floor() as i64 + 1;
    let ny = ((ov.hi.y - ov.lo.y) / pitch).floor() as i64 + 1;
    for iy in 0..ny {
        for ix in 0..nx {
            let p = Point2::new(
                ov.lo.x + (ix as f64 + 0.5) * pitch,
                ov.lo.y + (iy as f64 + 0.5) * pitch,
            );
            if p.x < ov.hi.x && p.y < ov.hi.y && in_both(ov, &p) {
                pts.push(p);
            }
        }
    }
    pts
}

/// Area-weighted centroid of the intersection, for facets smaller than the
/// grid pitch.
fn centroid_fallback(ov: &Overlap) -> Option<Point2<f64>> {
    let mut area_sum = 0.0;
    let mut acc = nalgebra::Vector2::zeros();
    for ta in &ov.tris_a {
        for tb in &ov.tris_b {
            let frag = clip_tri_tri(ta, tb);
            if frag.len() < 3 {
                continue;
            }
            let a = shoelace2(&frag);
            if a.abs() < 1e-16 {
                continue;
            }
            let mut c = nalgebra::Vector2::zeros();
            for p in &frag {
                c += p.coords;
            }
            c /= frag.len() as f64;
            area_sum += a.abs();
            acc += c * a.abs();
        }
    }
    if area_sum < 1e-16 {
        return None;
    }
    let c = Point2::from(acc / area_sum);
    in_both(ov, &c).then_some(c)
}

fn clip_tri_tri(subject: &[Point2<f64>; 3], clip: &[Point2<f64>; 3]) -> Vec<Point2<f64>> {
    let mut subj = subject.to_vec();
    if shoelace2(&subj) < 0.0 {
        subj.reverse();
    }
    let mut clp = clip.to_vec();
    if shoelace2(&clp) < 0.0 {
        clp.reverse();
    }
    let mut poly = subj;
    for i in 0..clp.len() {
        if poly.is_empty() {
            break;
        }
        let a = clp[i];
        let b = clp[(i + 1) % clp.len()];
        let e = b - a;
        let inside = |p: &Point2<f64>| e.x * (p.y - a.y) - e.y * (p.x - a.x) >= -1e-15;
        let input = std::mem::take(&mut poly);
        for j in 0..input.len() {
            let cur = input[j];
            let nxt = input[(j + 1) % input.len()];
            if inside(&cur) {
                poly.push(cur);
            }
            if inside(&cur) != inside(&nxt) {
                let den = e.x * (nxt.y - cur.y) - e.y * (nxt.x - cur.x);
                if den.abs() > 1e-30 {
                    let t = (e.x * (a.y - cur.y) - e.y * (a.x - cur.x)) / den;
                    poly.push(cur + (nxt - cur) * t);
                }
            }
        }
    }
    poly
}

fn shoelace2(poly: &[Point2<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a.x * b.y - a.y * b.x;
    }
    0.5 * s
}

/// Samples antipodal grasps on every facet pair, in the shape's body
/// frame. Output order is deterministic: facet pair, grid point, jaw sign,
/// roll.
pub fn sample_grasps(shape: &Shape, gripper: &GripperSpec, sampling: &SamplingParams) -> Vec<Grasp> {
    assert!(sampling.pitch > 0.0 && sampling.rotations >= 1);
    let facets = cluster_facets(shape);
    let pairs = enumerate_pairs_of(shape, &facets, gripper);
    let mut grasps = Vec::new();
    for (a, b, separation) in pairs {
        let Some(ov) = overlap_region(shape, &facets[a], &facets[b]) else {
            continue;
        };
        let mut samples = sample_points_in(&ov, sampling.pitch);
        if samples.is_empty() {
            if let Some(c) = centroid_fallback(&ov) {
                samples.push(c);
            } else {
                continue;
            }
        }
        let na = facets[a].normal;
        for s in samples {
            let on_a = ov.anchor + ov.t1 * s.x + ov.t2 * s.y;
            let on_b = on_a - na.into_inner() * separation;
            let mid = nalgebra::center(&on_a, &on_b);
            for sign in [1.0, -1.0] {
                // Jaw axis: from one contact to the other.
                let jaw = Unit::new_normalize(na.into_inner() * sign);
                let seed = tangent_of(&jaw);
                for roll in 0..sampling.rotations {
                    let angle =
                        std::f64::consts::PI * roll as f64 / sampling.rotations as f64;
                    let zg = UnitQuaternion::from_axis_angle(&jaw, angle) * seed.into_inner();
                    let xg = jaw.cross(&zg);
                    let rot = Matrix3::from_columns(&[xg, jaw.into_inner(), zg]);
                    let pose = Pose::from_parts(
                        mid.coords.into(),
                        UnitQuaternion::from_rotation_matrix(
                            &nalgebra::Rotation3::from_matrix_unchecked(rot),
                        ),
                    );
                    grasps.push(Grasp {
                        pose,
                        opening: separation,
                        contact_pair: if sign > 0.0 {
                            (on_b, on_a)
                        } else {
                            (on_a, on_b)
                        },
                    });
                }
            }
        }
    }
    grasps
}

/// Keeps the grasps whose gripper boxes clear the workpiece itself (beyond
/// jaw-face contact), every obstacle, and the table. Grasps must be in
/// world frame, `obstacles` includes the table half-space.
pub fn filter_accessible(
    grasps: &[Grasp],
    workpiece: &Collider,
    gripper: &GripperSpec,
    obstacles: &[Collider],
    tol: &Tolerances,
) -> Vec<Grasp> {
    grasps
        .iter()
        .filter(|g| {
            let boxes = g.boxes(gripper);
            boxes.iter().all(|b| {
                !obb_hits_collider(b, workpiece, tol.contact_gap)
                    && obstacles
                        .iter()
                        .all(|o| !obb_hits_collider(b, o, tol.contact_gap))
            })
        })
        .cloned()
        .collect()
}

/// Per-step graspability of an assembly order: entry `j` counts the
/// accessible grasps of the j-th workpiece against the table plus the
/// pieces placed before it. Returns the counts and the retained grasp
/// lists (world frame).
pub fn graspability_row(
    scene: &crate::scene::Scene,
    order: &[usize],
    sampling: &SamplingParams,
    tol: &Tolerances,
) -> (Vec<usize>, Vec<Vec<Grasp>>) {
    let gripper = &scene.gripper;
    let mut counts = Vec::with_capacity(order.len());
    let mut lists = Vec::with_capacity(order.len());
    for (j, &piece) in order.iter().enumerate() {
        let body = &scene.workpieces()[piece];
        let world: Vec<Grasp> = sample_grasps(&body.shape, gripper, sampling)
            .iter()
            .map(|g| grasp_to_world(g, &body.goal_pose))
            .collect();
        let mut obstacles = vec![scene.table_collider()];
        for &other in &order[..j] {
            obstacles.push(scene.workpieces()[other].collider());
        }
        let accessible = filter_accessible(&world, &body.collider(), gripper, &obstacles, tol);
        counts.push(accessible.len());
        lists.push(accessible);
    }
    (counts, lists)
}

/// Transforms a body-frame grasp to world frame.
pub fn grasp_to_world(grasp: &Grasp, pose: &Pose) -> Grasp {
    Grasp {
        pose: pose * grasp.pose,
        opening: grasp.opening,
        contact_pair: (pose * grasp.contact_pair.0, pose * grasp.contact_pair.1),
    }
}
