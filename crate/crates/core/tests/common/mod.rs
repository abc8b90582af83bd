//! Shared oracles and scene builders for the integration and acceptance
//! suites. Everything here deliberately avoids the library's convex-hull
//! machinery so it can serve as an independent check of it.

#![allow(dead_code)]

use asmplan_core::geometry::{build_shape, Pose};
use asmplan_core::grasping::GripperSpec;
use asmplan_core::scene::{Scene, Workpiece};
use asmplan_core::stability::{FrictionModel, StabilityParams, WrenchSet};
use nalgebra::{DVector, Point3, Vector3, Vector6};

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn schema(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(name)
}

/// Builds a scene of polycube pieces at translated goal poses.
pub fn scene_from(
    pieces: &[(&str, &[[i32; 3]], [f64; 3])],
    voxel_size: f64,
    mu: f64,
) -> Scene {
    let workpieces = pieces
        .iter()
        .map(|(id, cells, t)| {
            let shape = build_shape(cells, voxel_size).unwrap();
            let com = shape.volume_centroid();
            let mass = 1000.0 * shape.signed_volume();
            Workpiece {
                id: id.to_string(),
                name: id.to_string(),
                shape,
                goal_pose: Pose::translation(t[0], t[1], t[2]),
                mass,
                com,
                color: None,
            }
        })
        .collect();
    Scene::new(
        workpieces,
        0.0,
        Vector3::new(0.0, 0.0, -9.81),
        FrictionModel { mu, cone_sides: 6 },
        GripperSpec::default(),
    )
}

pub fn default_params(scene: &Scene) -> StabilityParams {
    StabilityParams::with_budget(10.0 * scene.heaviest_weight())
}

// ---------------------------------------------------------------------------
// LP feasibility oracle.
// ---------------------------------------------------------------------------

/// Checks `exists mu >= 0 with sum mu_e G_e = q and sum mu_e <= 1` with a
/// simplex solver, i.e. membership of `q` in `conv({0} U {G_e})`.
pub fn lp_membership(generators: &[Vector6<f64>], q: &Vector6<f64>) -> bool {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = generators
        .iter()
        .map(|_| problem.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    for row in 0..6 {
        let terms: Vec<_> = vars
            .iter()
            .zip(generators)
            .map(|(&v, g)| (v, g[row]))
            .collect();
        problem.add_constraint(&terms, ComparisonOp::Eq, q[row]);
    }
    let budget: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    problem.add_constraint(&budget, ComparisonOp::Le, 1.0);
    problem.solve().is_ok()
}

/// Strict-membership LP in any dimension: `exists lambda >= 0 with
/// sum lambda_i p_i = q and sum lambda_i = 1`.
pub fn lp_conv_membership(points: &[DVector<f64>], q: &DVector<f64>) -> bool {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let dim = q.len();
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = points
        .iter()
        .map(|_| problem.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    for row in 0..dim {
        let terms: Vec<_> = vars.iter().zip(points).map(|(&v, p)| (v, p[row])).collect();
        problem.add_constraint(&terms, ComparisonOp::Eq, q[row]);
    }
    let sum: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    problem.add_constraint(&sum, ComparisonOp::Eq, 1.0);
    problem.solve().is_ok()
}

/// LP route of the stability sign test: can the contacts of `wrench_set`
/// balance gravity within the force budget?
pub fn lp_equilibrium_feasible(ws: &WrenchSet) -> bool {
    lp_membership(&ws.generators, &(-ws.gravity_wrench))
}

// ---------------------------------------------------------------------------
// Interior-margin oracle: projected subgradient descent over support
// directions, polished by an exact active-facet solve.
// ---------------------------------------------------------------------------

/// Distance from `q` to the boundary of `conv(points)` for interior `q`,
/// computed as `min over unit u of (max_i u.p_i - u.q)` by multi-start
/// subgradient descent with an active-set polish. Upper-bounds the true
/// margin by construction; the polish makes it exact whenever the final
/// active set spans the minimal facet.
pub fn margin_oracle(points: &[DVector<f64>], q: &DVector<f64>) -> f64 {
    let dim = q.len();
    let support = |u: &DVector<f64>| -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, p) in points.iter().enumerate() {
            let d = u.dot(p);
            if d > best {
                best = d;
                arg = i;
            }
        }
        (best, arg)
    };

    let mut starts: Vec<DVector<f64>> = Vec::new();
    for k in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = DVector::zeros(dim);
            v[k] = s;
            starts.push(v);
        }
    }
    // Deterministic pseudo-random extra starts.
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut rnd = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for _ in 0..48 {
        let v = DVector::from_fn(dim, |_, _| rnd());
        if v.norm() > 1e-6 {
            starts.push(v.normalize());
        }
    }

    let mut best_margin = f64::INFINITY;
    for start in starts {
        let mut u = start.normalize();
        let mut local_best = f64::INFINITY;
        let mut local_u = u.clone();
        for k in 1..=400 {
            let (h, arg) = support(&u);
            let f = h - u.dot(q);
            if f < local_best {
                local_best = f;
                local_u = u.clone();
            }
            let grad = &points[arg] - q;
            let step = 0.5 / (k as f64).sqrt() / grad.norm().max(1e-12);
            u -= grad * step;
            let n = u.norm();
            if n < 1e-12 {
                break;
            }
            u /= n;
        }
        // Polish: the support plane through the active vertices at the
        // final direction. Active set = points within tolerance of the
        // support value.
        let (h, _) = support(&local_u);
        let scale = points.iter().map(|p| p.amax()).fold(1.0, f64::max);
        let active: Vec<usize> = (0..points.len())
            .filter(|&i| h - local_u.dot(&points[i]) <= 1e-6 * scale)
            .collect();
        if active.len() >= dim {
            if let Some(n) = plane_through(points, &active[..dim]) {
                let n = if n.dot(&local_u) >= 0.0 { n } else { -n };
                let offset = n.dot(&points[active[0]]);
                // Only accept supporting planes.
                let (hs, _) = support(&n);
                if hs - offset <= 1e-7 * scale {
                    local_best = local_best.min(offset - n.dot(q));
                }
            }
        }
        best_margin = best_margin.min(local_best);
    }
    best_margin
}

/// Unit normal of the hyperplane through `dim` affinely independent
/// points.
fn plane_through(points: &[DVector<f64>], verts: &[usize]) -> Option<DVector<f64>> {
    let dim = points[0].len();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for &v in &verts[1..] {
        let mut e = &points[v] - &points[verts[0]];
        for b in &basis {
            let d = e.dot(b);
            e -= b * d;
        }
        let n = e.norm();
        if n > 1e-12 {
            basis.push(e / n);
        }
    }
    let mut best: Option<DVector<f64>> = None;
    let mut best_norm = 1e-9;
    for k in 0..dim {
        let mut e = DVector::zeros(dim);
        e[k] = 1.0;
        for b in &basis {
            let d = e.dot(b);
            e -= b * d;
        }
        let n = e.norm();
        if n > best_norm {
            best_norm = n;
            best = Some(e / n);
        }
    }
    best
}

pub fn to_dvec(v: &Vector6<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

// ---------------------------------------------------------------------------
// Icosphere direction sampling.
// ---------------------------------------------------------------------------

/// Unit vertices of an icosahedron subdivided `level` times (level 5 has
/// 10242 vertices).
pub fn icosphere(level: usize) -> Vec<Vector3<f64>> {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = Vec::new();
    for &(a, b) in &[(1.0, phi), (1.0, -phi), (-1.0, phi), (-1.0, -phi)] {
        verts.push(Vector3::new(0.0, a, b).normalize());
        verts.push(Vector3::new(a, b, 0.0).normalize());
        verts.push(Vector3::new(b, 0.0, a).normalize());
    }
    // Initial faces: vertex triples at the icosahedron edge length.
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for i in 0..verts.len() {
        for j in (i + 1)..verts.len() {
            for k in (j + 1)..verts.len() {
                let d1 = (verts[i] - verts[j]).norm();
                let d2 = (verts[j] - verts[k]).norm();
                let d3 = (verts[i] - verts[k]).norm();
                let e = 2.0 / (1.0 + phi * phi).sqrt();
                if (d1 - e).abs() < 1e-9 && (d2 - e).abs() < 1e-9 && (d3 - e).abs() < 1e-9 {
                    faces.push([i, j, k]);
                }
            }
        }
    }
    assert_eq!(faces.len(), 20, "icosahedron faces");
    for _ in 0..level {
        let mut midpoint: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoint.entry(key).or_insert_with(|| {
                    verts.push((verts[a] + verts[b]).normalize());
                    verts.len() - 1
                });
            }
            next_faces.push([f[0], mids[0], mids[2]]);
            next_faces.push([f[1], mids[1], mids[0]]);
            next_faces.push([f[2], mids[2], mids[1]]);
            next_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = next_faces;
    }
    verts
}

// ---------------------------------------------------------------------------
// Support polygon oracle (axis-aligned single-patch scenes).
// ---------------------------------------------------------------------------

/// Strict 2-D point-in-convex-rectangle test with a margin band: returns
/// `None` when the point is within `band` of the boundary (undecided).
pub fn com_strictly_inside_rect(
    com: (f64, f64),
    rect: ((f64, f64), (f64, f64)),
    band: f64,
) -> Option<bool> {
    let ((x0, y0), (x1, y1)) = rect;
    let inside_by = (com.0 - x0)
        .min(x1 - com.0)
        .min(com.1 - y0)
        .min(y1 - com.1);
    if inside_by.abs() <= band {
        None
    } else {
        Some(inside_by > 0.0)
    }
}

/// Axis-aligned rectangle intersection.
pub fn rect_intersection(
    a: ((f64, f64), (f64, f64)),
    b: ((f64, f64), (f64, f64)),
) -> Option<((f64, f64), (f64, f64))> {
    let x0 = a.0 .0.max(b.0 .0);
    let y0 = a.0 .1.max(b.0 .1);
    let x1 = a.1 .0.min(b.1 .0);
    let y1 = a.1 .1.min(b.1 .1);
    (x1 > x0 && y1 > y0).then_some(((x0, y0), (x1, y1)))
}

/// Exposed-face overlap area between two axis-aligned polycubes stacked in
/// z, computed cell-face by cell-face.
pub fn brute_force_contact_area(
    lower: &[[i32; 3]],
    lower_origin: [f64; 3],
    upper: &[[i32; 3]],
    upper_origin: [f64; 3],
    s: f64,
) -> f64 {
    let mut area = 0.0;
    for lc in lower {
        let l_top = lower_origin[2] + (lc[2] + 1) as f64 * s;
        let lx = (lower_origin[0] + lc[0] as f64 * s, lower_origin[0] + (lc[0] + 1) as f64 * s);
        let ly = (lower_origin[1] + lc[1] as f64 * s, lower_origin[1] + (lc[1] + 1) as f64 * s);
        for uc in upper {
            let u_bottom = upper_origin[2] + uc[2] as f64 * s;
            if (l_top - u_bottom).abs() > 1e-9 {
                continue;
            }
            let ux = (upper_origin[0] + uc[0] as f64 * s, upper_origin[0] + (uc[0] + 1) as f64 * s);
            let uy = (upper_origin[1] + uc[1] as f64 * s, upper_origin[1] + (uc[1] + 1) as f64 * s);
            let dx = (lx.1.min(ux.1) - lx.0.max(ux.0)).max(0.0);
            let dy = (ly.1.min(uy.1) - ly.0.max(uy.0)).max(0.0);
            area += dx * dy;
        }
    }
    area
}

/// Deterministic xorshift generator for seeded test scenes.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9e3779b97f4a7c15).max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let x = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + x * (hi - lo)
    }

    pub fn range(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

pub fn unit_dir(rng: &mut TestRng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Arbitrary rigid transform with a rotation drawn from random axis-angle.
pub fn random_pose(rng: &mut TestRng, max_translation: f64) -> Pose {
    let axis = unit_dir(rng);
    let angle = rng.uniform(0.0, std::f64::consts::TAU);
    let t = Vector3::new(
        rng.uniform(-max_translation, max_translation),
        rng.uniform(-max_translation, max_translation),
        rng.uniform(-max_translation, max_translation),
    );
    Pose::from_parts(
        t.into(),
        nalgebra::UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle),
    )
}

pub fn point3(x: f64, y: f64, z: f64) -> Point3<f64> {
    Point3::new(x, y, z)
}
