//! Coplanar face-face contact patch detection.
//!
//! Contacts are modelled as planar patches only: pairs of anti-parallel
//! coplanar faces are clipped against each other, the resulting convex
//! fragments are grouped per contact plane, and each connected group is
//! merged into one maximal region whose boundary loop provides the patch
//! polygon and contact points. Edge and vertex contacts are ignored.

use std::collections::HashMap;

use nalgebra::{Point2, Point3, Unit, Vector2, Vector3};

use super::collide::{penetration_exceeding, Collider};
use super::{plane_basis, GeometryError, Tolerances};

/// Maximal coplanar contact region between two bodies. The normal points
/// from body `a` into body `b`; the polygon is the region's outer boundary
/// loop, wound counter-clockwise about the normal, and its vertices are
/// the contact points used by the stability analysis.
#[derive(Debug, Clone)]
pub struct ContactPatch {
    pub normal: Unit<Vector3<f64>>,
    pub polygon: Vec<Point3<f64>>,
    pub area: f64,
}

impl ContactPatch {
    pub fn contact_points(&self) -> &[Point3<f64>] {
        &self.polygon
    }

    /// Vertex mean; strictly interior for convex regions and a stable
    /// tangent-seed anchor in general.
    pub fn centroid(&self) -> Point3<f64> {
        let mut acc = Vector3::zeros();
        for p in &self.polygon {
            acc += p.coords;
        }
        Point3::from(acc / self.polygon.len() as f64)
    }
}

const ANGLE_COS: f64 = 1.0 - 5e-13; // cos(1e-6 rad)
const FRAG_MIN_AREA: f64 = 1e-16;
const SNAP: f64 = 1e-9;

struct Fragment {
    verts: Vec<Point3<f64>>,
    normal: Unit<Vector3<f64>>,
}

/// Finds every maximal coplanar contact region between two bodies, with
/// normals pointing from `a` into `b`. Errors when the bodies overlap by
/// more than `tol.contact_gap`.
pub fn detect_contacts(
    a: &Collider,
    b: &Collider,
    tol: &Tolerances,
) -> Result<Vec<ContactPatch>, GeometryError> {
    if let Some(depth) = penetration_exceeding(a, b, tol.contact_gap) {
        return Err(GeometryError::Interpenetration {
            depth,
            allowed: tol.contact_gap,
        });
    }
    let fragments = match (a, b) {
        (Collider::HalfSpace { .. }, Collider::HalfSpace { .. }) => Vec::new(),
        (Collider::HalfSpace { z }, Collider::Mesh { shape, pose }) => {
            halfspace_fragments(*z, shape, pose, tol, 1.0)
        }
        (Collider::Mesh { shape, pose }, Collider::HalfSpace { z }) => {
            halfspace_fragments(*z, shape, pose, tol, -1.0)
        }
        (
            Collider::Mesh { shape: sa, pose: pa },
            Collider::Mesh { shape: sb, pose: pb },
        ) => mesh_fragments(sa, pa, sb, pb, tol),
    };
    Ok(merge_fragments(fragments, tol))
}

/// Fragments of `piece` faces resting on the table plane. `orient` is +1
/// when the table is body `a` (patch normal +z), -1 otherwise.
fn halfspace_fragments(
    z: f64,
    piece: &crate::geometry::Shape,
    pose: &super::Pose,
    tol: &Tolerances,
    orient: f64,
) -> Vec<Fragment> {
    let normal = Unit::new_unchecked(Vector3::new(0.0, 0.0, orient));
    let mut out = Vec::new();
    for (tri, n_raw) in piece.world_triangles(pose) {
        let len = n_raw.norm();
        if len < 1e-18 {
            continue;
        }
        // Piece faces must point down into the table.
        if n_raw.z / len > -ANGLE_COS {
            continue;
        }
        if tri.iter().any(|v| (v.z - z).abs() > tol.contact_gap) {
            continue;
        }
        out.push(Fragment {
            verts: tri.to_vec(),
            normal,
        });
    }
    out
}

fn mesh_fragments(
    sa: &crate::geometry::Shape,
    pa: &super::Pose,
    sb: &crate::geometry::Shape,
    pb: &super::Pose,
    tol: &Tolerances,
) -> Vec<Fragment> {
    let tris_a = sa.world_triangles(pa);
    let tris_b = sb.world_triangles(pb);
    let mut out = Vec::new();
    for (ta, na_raw) in &tris_a {
        let la = na_raw.norm();
        if la < 1e-18 {
            continue;
        }
        let na = Unit::new_unchecked(na_raw / la);
        let (t1, t2) = plane_basis(&na);
        let anchor = ta[0];
        let project = |p: &Point3<f64>| {
            let d = p - anchor;
            Point2::new(d.dot(&t1), d.dot(&t2))
        };
        let clip_poly: Vec<Point2<f64>> = ta.iter().map(project).collect();
        for (tb, nb_raw) in &tris_b {
            let lb = nb_raw.norm();
            if lb < 1e-18 {
                continue;
            }
            if na.dot(nb_raw) / lb > -ANGLE_COS {
                continue;
            }
            if tb.iter().any(|v| na.dot(&(v - anchor)).abs() > tol.contact_gap) {
                continue;
            }
            let mut subject: Vec<Point2<f64>> = tb.iter().map(project).collect();
            if shoelace(&subject) < 0.0 {
                subject.reverse();
            }
            let frag = clip_convex(&subject, &clip_poly);
            if frag.len() < 3 || shoelace(&frag).abs() < FRAG_MIN_AREA {
                continue;
            }
            out.push(Fragment {
                verts: frag
                    .iter()
                    .map(|p| anchor + t1 * p.x + t2 * p.y)
                    .collect(),
                normal: na,
            });
        }
    }
    out
}

/// Sutherland-Hodgman clip of a convex subject by a convex CCW clip
/// polygon.
fn clip_convex(subject: &[Point2<f64>], clip: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut poly: Vec<Point2<f64>> = subject.to_vec();
    for i in 0..clip.len() {
        if poly.is_empty() {
            return poly;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let inside = |p: &Point2<f64>| edge.x * (p.y - a.y) - edge.y * (p.x - a.x) >= -1e-15;
        let input = std::mem::take(&mut poly);
        for j in 0..input.len() {
            let cur = input[j];
            let next = input[(j + 1) % input.len()];
            let cur_in = inside(&cur);
            let next_in = inside(&next);
            if cur_in {
                poly.push(cur);
            }
            if cur_in != next_in {
                let denom = edge.x * (next.y - cur.y) - edge.y * (next.x - cur.x);
                if denom.abs() > 1e-30 {
                    let t = (edge.x * (a.y - cur.y) - edge.y * (a.x - cur.x)) / denom;
                    poly.push(cur + (next - cur) * t);
                }
            }
        }
    }
    poly
}

fn shoelace(poly: &[Point2<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a.x * b.y - a.y * b.x;
    }
    0.5 * s
}

// ---------------------------------------------------------------------------
// Fragment merging.
// ---------------------------------------------------------------------------

fn merge_fragments(fragments: Vec<Fragment>, tol: &Tolerances) -> Vec<ContactPatch> {
    if fragments.is_empty() {
        return Vec::new();
    }
    // Group fragments per contact plane.
    let mut group_of: Vec<usize> = Vec::with_capacity(fragments.len());
    let mut reps: Vec<usize> = Vec::new();
    for (i, f) in fragments.iter().enumerate() {
        let mut assigned = None;
        for (g, &r) in reps.iter().enumerate() {
            let rep = &fragments[r];
            if f.normal.dot(&rep.normal) >= ANGLE_COS
                && rep.normal.dot(&(f.verts[0] - rep.verts[0])).abs() <= tol.contact_gap
            {
                assigned = Some(g);
                break;
            }
        }
        match assigned {
            Some(g) => group_of.push(g),
            None => {
                group_of.push(reps.len());
                reps.push(i);
            }
        }
    }

    let mut patches = Vec::new();
    for (g, &rep) in reps.iter().enumerate() {
        let normal = fragments[rep].normal;
        let anchor = fragments[rep].verts[0];
        let (t1, t2) = plane_basis(&normal);
        let polys: Vec<Vec<Point2<f64>>> = fragments
            .iter()
            .zip(&group_of)
            .filter(|(_, &fg)| fg == g)
            .map(|(f, _)| {
                let mut p: Vec<Point2<f64>> = f
                    .verts
                    .iter()
                    .map(|v| {
                        let d = v - anchor;
                        Point2::new(d.dot(&t1), d.dot(&t2))
                    })
                    .collect();
                if shoelace(&p) < 0.0 {
                    p.reverse();
                }
                p
            })
            .collect();

        for (loop2, area) in region_boundaries(&polys) {
            if area < tol.min_patch_area {
                continue;
            }
            patches.push(ContactPatch {
                normal,
                polygon: loop2
                    .iter()
                    .map(|p| anchor + t1 * p.x + t2 * p.y)
                    .collect(),
                area,
            });
        }
    }
    patches
}

/// Union of CCW convex polygons that tile a region with disjoint
/// interiors: returns each connected region's outer boundary loop and its
/// area (holes subtracted).
fn region_boundaries(polys: &[Vec<Point2<f64>>]) -> Vec<(Vec<Point2<f64>>, f64)> {
    // Snap vertices onto a shared registry.
    let mut verts: Vec<Point2<f64>> = Vec::new();
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut vertex_id = |p: Point2<f64>, verts: &mut Vec<Point2<f64>>| -> usize {
        let cx = (p.x / SNAP).round() as i64;
        let cy = (p.y / SNAP).round() as i64;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = grid.get(&(cx + dx, cy + dy)) {
                    for &id in ids {
                        if (verts[id] - p).norm() <= SNAP {
                            return id;
                        }
                    }
                }
            }
        }
        verts.push(p);
        grid.entry((cx, cy)).or_default().push(verts.len() - 1);
        verts.len() - 1
    };

    let mut raw_edges: Vec<(usize, usize)> = Vec::new();
    for poly in polys {
        let ids: Vec<usize> = poly.iter().map(|&p| vertex_id(p, &mut verts)).collect();
        for i in 0..ids.len() {
            let (u, v) = (ids[i], ids[(i + 1) % ids.len()]);
            if u != v {
                raw_edges.push((u, v));
            }
        }
    }

    // Split edges at registry vertices lying on them (T-junctions).
    let mut counts: HashMap<(usize, usize), i64> = HashMap::new();
    for &(u, v) in &raw_edges {
        let a = verts[u];
        let b = verts[v];
        let ab = b - a;
        let len2 = ab.norm_squared();
        let mut cuts: Vec<(f64, usize)> = Vec::new();
        for (w, &p) in verts.iter().enumerate() {
            if w == u || w == v {
                continue;
            }
            let t = (p - a).dot(&ab) / len2;
            if t <= 0.0 || t >= 1.0 {
                continue;
            }
            if (p - (a + ab * t)).norm() <= SNAP {
                cuts.push((t, w));
            }
        }
        cuts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let mut prev = u;
        for (_, w) in cuts {
            if w != prev {
                *counts.entry((prev, w)).or_insert(0) += 1;
                prev = w;
            }
        }
        if prev != v {
            *counts.entry((prev, v)).or_insert(0) += 1;
        }
    }

    // Interior edges appear once in each direction and cancel.
    let mut boundary: Vec<(usize, usize)> = Vec::new();
    for (&(u, v), &c) in &counts {
        if u < v {
            let back = counts.get(&(v, u)).copied().unwrap_or(0);
            let net = c - back;
            for _ in 0..net.abs() {
                boundary.push(if net > 0 { (u, v) } else { (v, u) });
            }
        } else if !counts.contains_key(&(v, u)) {
            for _ in 0..c {
                boundary.push((u, v));
            }
        }
    }
    boundary.sort_unstable();

    // Stitch directed boundary edges into loops. At a pinch vertex take the
    // outgoing edge with the largest CCW angle from the reversed incoming
    // direction, which keeps the enclosed region on the left.
    let mut used = vec![false; boundary.len()];
    let mut out_edges: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &(u, _)) in boundary.iter().enumerate() {
        out_edges.entry(u).or_default().push(i);
    }
    let mut loops: Vec<Vec<Point2<f64>>> = Vec::new();
    for start in 0..boundary.len() {
        if used[start] {
            continue;
        }
        let mut loop_ids: Vec<usize> = Vec::new();
        let mut edge = start;
        let mut closed = false;
        for _ in 0..=boundary.len() {
            used[edge] = true;
            let (u, v) = boundary[edge];
            loop_ids.push(u);
            if v == boundary[start].0 {
                closed = true;
                break;
            }
            let d_in = verts[v] - verts[u];
            let back = Vector2::new(-d_in.x, -d_in.y);
            let candidates = out_edges.get(&v).cloned().unwrap_or_default();
            let mut next = None;
            let mut best_angle = -1.0;
            for c in candidates {
                if used[c] {
                    continue;
                }
                let d_out = verts[boundary[c].1] - verts[v];
                let ang = ccw_angle(&back, &d_out);
                if ang > best_angle {
                    best_angle = ang;
                    next = Some(c);
                }
            }
            match next {
                Some(c) => edge = c,
                None => break, // malformed chain; drop partial loop
            }
        }
        if closed && loop_ids.len() >= 3 {
            let pts: Vec<Point2<f64>> = loop_ids.iter().map(|&i| verts[i]).collect();
            loops.push(simplify_loop(pts));
        }
    }

    // CCW loops bound regions, CW loops are holes inside some region.
    let mut outers: Vec<(Vec<Point2<f64>>, f64)> = Vec::new();
    let mut holes: Vec<(Vec<Point2<f64>>, f64)> = Vec::new();
    for l in loops {
        if l.len() < 3 {
            continue;
        }
        let a = shoelace(&l);
        if a > 0.0 {
            outers.push((l, a));
        } else {
            holes.push((l, a));
        }
    }
    for (hole, ha) in holes {
        let probe = hole[0];
        let mut owner: Option<usize> = None;
        for (i, (outer, oa)) in outers.iter().enumerate() {
            if point_in_poly(&probe, outer)
                && owner.is_none_or(|prev| *oa < outers[prev].1)
            {
                owner = Some(i);
            }
        }
        if let Some(i) = owner {
            outers[i].1 += ha;
        }
    }
    outers
}

fn ccw_angle(from: &Vector2<f64>, to: &Vector2<f64>) -> f64 {
    let ang = to.y.atan2(to.x) - from.y.atan2(from.x);
    let mut a = ang % (2.0 * std::f64::consts::PI);
    if a <= 1e-12 {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

fn point_in_poly(p: &Point2<f64>, poly: &[Point2<f64>]) -> bool {
    let mut inside = false;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if x > p.x {
                inside = !inside;
            }
        }
    }
    inside
}

fn simplify_loop(pts: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    let n = pts.len();
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        let prev = pts[(i + n - 1) % n];
        let cur = pts[i];
        let next = pts[(i + 1) % n];
        let u = cur - prev;
        let v = next - cur;
        let cross = u.x * v.y - u.y * v.x;
        if cross.abs() > SNAP * (u.norm() + v.norm()) {
            keep.push(cur);
        }
    }
    keep
}
