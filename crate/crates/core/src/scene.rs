//! Scene model: workpieces at goal poses over a worktable, plus JSON
//! ingestion with exhaustive validation.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    build_shape, detect_contacts, penetration_exceeding, Collider, ContactPatch, Pose, Shape,
    Tolerances,
};
use crate::grasping::GripperSpec;
use crate::stability::FrictionModel;

/// Reserved body id for the worktable half-space.
pub const TABLE_ID: &str = "table";

#[derive(Debug, Clone)]
pub struct Workpiece {
    pub id: String,
    pub name: String,
    pub shape: Shape,
    pub goal_pose: Pose,
    pub mass: f64,
    /// Center of mass in body frame (uniform density).
    pub com: Point3<f64>,
    pub color: Option<[f64; 3]>,
}

impl Workpiece {
    pub fn com_world(&self) -> Point3<f64> {
        self.goal_pose * self.com
    }

    pub fn collider(&self) -> Collider<'_> {
        Collider::Mesh {
            shape: &self.shape,
            pose: self.goal_pose,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub table_height: f64,
    pub gravity: Vector3<f64>,
    pub friction: FrictionModel,
    /// Per-pair friction overrides; keys are sorted id pairs, `table`
    /// allowed.
    pub pair_mu: BTreeMap<(String, String), f64>,
    pub gripper: GripperSpec,
    workpieces: Vec<Workpiece>,
}

impl Scene {
    pub fn new(
        workpieces: Vec<Workpiece>,
        table_height: f64,
        gravity: Vector3<f64>,
        friction: FrictionModel,
        gripper: GripperSpec,
    ) -> Self {
        Self {
            table_height,
            gravity,
            friction,
            pair_mu: BTreeMap::new(),
            gripper,
            workpieces,
        }
    }

    pub fn workpieces(&self) -> &[Workpiece] {
        &self.workpieces
    }

    pub fn len(&self) -> usize {
        self.workpieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workpieces.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.workpieces.iter().position(|w| w.id == id)
    }

    pub fn table_collider(&self) -> Collider<'_> {
        Collider::HalfSpace {
            z: self.table_height,
        }
    }

    /// Downward unit gravity direction.
    pub fn gravity_dir(&self) -> nalgebra::Unit<Vector3<f64>> {
        nalgebra::Unit::new_normalize(self.gravity)
    }

    /// Friction coefficient between two bodies; `None` stands for the
    /// table.
    pub fn mu_between(&self, a: Option<usize>, b: Option<usize>) -> f64 {
        let name = |i: Option<usize>| -> &str {
            i.map_or(TABLE_ID, |k| self.workpieces[k].id.as_str())
        };
        let (mut x, mut y) = (name(a).to_string(), name(b).to_string());
        if x > y {
            std::mem::swap(&mut x, &mut y);
        }
        self.pair_mu
            .get(&(x, y))
            .copied()
            .unwrap_or(self.friction.mu)
    }

    /// Largest workpiece weight (N); the default contact force budget is
    /// ten times this.
    pub fn heaviest_weight(&self) -> f64 {
        let g = self.gravity.norm();
        self.workpieces
            .iter()
            .map(|w| w.mass * g)
            .fold(0.0, f64::max)
    }

    /// Contact patches of `piece` against the table and each body in
    /// `placed`, with normals oriented into `piece`. Returns the source
    /// body per patch (`None` = table).
    pub fn contacts_onto(
        &self,
        piece: usize,
        placed: &[usize],
        tol: &Tolerances,
    ) -> Result<Vec<(Option<usize>, ContactPatch)>, crate::geometry::GeometryError> {
        let target = self.workpieces[piece].collider();
        let mut out = Vec::new();
        for patch in detect_contacts(&self.table_collider(), &target, tol)? {
            out.push((None, patch));
        }
        for &other in placed {
            if other == piece {
                continue;
            }
            let source = self.workpieces[other].collider();
            for patch in detect_contacts(&source, &target, tol)? {
                out.push((Some(other), patch));
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Scene file format.
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("scene validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub workpieces: Vec<WorkpieceFile>,
    #[serde(default)]
    pub table_height: f64,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub friction: FrictionFile,
    #[serde(default)]
    pub gripper: GripperSpec,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkpieceFile {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxels: Option<Vec<[i32; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<String>,
    pub goal_pose: PoseFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[f64; 3]>,
}

/// Pose on disk: unit quaternion (w, x, y, z) plus translation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseFile {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl PoseFile {
    pub fn identity() -> Self {
        Self {
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0, 0.0, 0.0],
        }
    }

    pub fn to_pose(&self) -> Option<Pose> {
        let [w, x, y, z] = self.rotation;
        let q = Quaternion::new(w, x, y, z);
        if q.norm() < 1e-9 {
            return None;
        }
        let t = self.translation;
        Some(Pose::from_parts(
            Translation3::new(t[0], t[1], t[2]),
            UnitQuaternion::from_quaternion(q),
        ))
    }

    pub fn from_pose(pose: &Pose) -> Self {
        let q = pose.rotation.quaternion();
        Self {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [
                pose.translation.x,
                pose.translation.y,
                pose.translation.z,
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionFile {
    pub default_mu: f64,
    #[serde(default = "default_cone_sides")]
    pub cone_sides: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairMu>,
}

fn default_cone_sides() -> usize {
    6
}

impl Default for FrictionFile {
    fn default() -> Self {
        Self {
            default_mu: 0.3,
            cone_sides: 6,
            pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairMu {
    pub a: String,
    pub b: String,
    pub mu: f64,
}

/// Loads, validates and builds a scene. Parse errors carry line/column;
/// validation reports every violated invariant at once.
pub fn load_scene(path: impl AsRef<Path>) -> Result<(SceneFile, Scene), SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: SceneFile = serde_json::from_str(&text).map_err(|e| SceneError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let scene = build_scene(&file, path.parent().unwrap_or(Path::new(".")))?;
    Ok((file, scene))
}

/// Validates a parsed scene file and constructs the scene. `base_dir`
/// anchors relative mesh paths.
pub fn build_scene(file: &SceneFile, base_dir: &Path) -> Result<Scene, SceneError> {
    let mut errors: Vec<String> = Vec::new();
    let mut ids: Vec<&str> = Vec::new();
    for w in &file.workpieces {
        if w.id.is_empty() {
            errors.push("workpiece with empty id".into());
        }
        if w.id == TABLE_ID {
            errors.push(format!("workpiece id {TABLE_ID:?} is reserved"));
        }
        if ids.contains(&w.id.as_str()) {
            errors.push(format!("duplicate workpiece id {:?}", w.id));
        }
        ids.push(&w.id);
    }
    if file.workpieces.is_empty() {
        errors.push("scene has no workpieces".into());
    }
    let g = Vector3::from(file.gravity);
    if g.norm() < 1e-9 {
        errors.push("gravity vector is zero".into());
    }
    if file.friction.default_mu < 0.0 {
        errors.push("default_mu must be non-negative".into());
    }
    if file.friction.cone_sides < 3 {
        errors.push("cone_sides must be at least 3".into());
    }
    for p in &file.friction.pairs {
        for id in [&p.a, &p.b] {
            if id != TABLE_ID && !ids.contains(&id.as_str()) {
                errors.push(format!("friction pair references unknown id {id:?}"));
            }
        }
        if p.mu < 0.0 {
            errors.push(format!("friction pair ({}, {}) has negative mu", p.a, p.b));
        }
    }
    for (label, v) in [
        ("max_opening", file.gripper.max_opening),
        ("finger_width", file.gripper.finger_width),
        ("finger_length", file.gripper.finger_length),
        ("finger_thickness", file.gripper.finger_thickness),
        ("palm_depth", file.gripper.palm_depth),
    ] {
        if v <= 0.0 {
            errors.push(format!("gripper.{label} must be positive"));
        }
    }

    let mut workpieces = Vec::new();
    for w in &file.workpieces {
        let shape = match (&w.voxels, &w.mesh_path) {
            (Some(cells), None) => {
                let size = w.voxel_size.unwrap_or(0.0);
                if size <= 0.0 {
                    errors.push(format!("{}: voxel_size must be positive", w.id));
                    None
                } else {
                    match build_shape(cells, size) {
                        Ok(s) => Some(s),
                        Err(e) => {
                            errors.push(format!("{}: {e}", w.id));
                            None
                        }
                    }
                }
            }
            (None, Some(rel)) => match load_obj(&base_dir.join(rel)) {
                Ok(s) => Some(s),
                Err(e) => {
                    errors.push(format!("{}: {e}", w.id));
                    None
                }
            },
            (Some(_), Some(_)) => {
                errors.push(format!("{}: give voxels or mesh_path, not both", w.id));
                None
            }
            (None, None) => {
                errors.push(format!("{}: needs voxels or mesh_path", w.id));
                None
            }
        };
        let pose = match w.goal_pose.to_pose() {
            Some(p) => p,
            None => {
                errors.push(format!("{}: rotation quaternion is degenerate", w.id));
                Pose::identity()
            }
        };
        let Some(shape) = shape else { continue };
        let volume = shape.signed_volume();
        let mass = match (w.mass, w.density) {
            (Some(m), None) => m,
            (None, Some(d)) => d * volume,
            (Some(_), Some(_)) => {
                errors.push(format!("{}: give mass or density, not both", w.id));
                1.0
            }
            (None, None) => {
                errors.push(format!("{}: needs mass or density", w.id));
                1.0
            }
        };
        if mass <= 0.0 {
            errors.push(format!("{}: mass must be positive", w.id));
        }
        let com = shape.volume_centroid();
        workpieces.push(Workpiece {
            id: w.id.clone(),
            name: w.name.clone().unwrap_or_else(|| w.id.clone()),
            shape,
            goal_pose: pose,
            mass,
            com,
            color: w.color,
        });
    }

    // Goal poses must not interpenetrate each other or the table.
    if errors.is_empty() {
        let tol = Tolerances::default();
        let table = Collider::HalfSpace {
            z: file.table_height,
        };
        for (i, a) in workpieces.iter().enumerate() {
            if let Some(d) = penetration_exceeding(&a.collider(), &table, tol.contact_gap) {
                errors.push(format!(
                    "{}: goal pose sinks into the table by {d:.3e} m",
                    a.id
                ));
            }
            for b in workpieces.iter().skip(i + 1) {
                if let Some(d) =
                    penetration_exceeding(&a.collider(), &b.collider(), tol.contact_gap)
                {
                    errors.push(format!(
                        "{} and {}: goal poses overlap by {d:.3e} m",
                        a.id, b.id
                    ));
                }
            }
        }
    }

    if !errors.is_empty() {
        return Err(SceneError::Validation(errors));
    }

    let mut scene = Scene::new(
        workpieces,
        file.table_height,
        g,
        FrictionModel {
            mu: file.friction.default_mu,
            cone_sides: file.friction.cone_sides,
        },
        file.gripper.clone(),
    );
    for p in &file.friction.pairs {
        let (mut a, mut b) = (p.a.clone(), p.b.clone());
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        scene.pair_mu.insert((a, b), p.mu);
    }
    Ok(scene)
}

/// Minimal OBJ reader: `v` and `f` records, fan triangulation, 1-based
/// indices with optional `/..` suffixes.
fn load_obj(path: &Path) -> Result<Shape, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read mesh {}: {e}", path.display()))?;
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coord = [0.0; 3];
                for c in &mut coord {
                    *c = it
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| format!("bad vertex at line {}", lineno + 1))?;
                }
                vertices.push(Point3::from(coord));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|t| {
                        t.split('/')
                            .next()
                            .and_then(|s| s.parse::<i64>().ok())
                            .filter(|&i| i >= 1 && (i as usize) <= vertices.len())
                            .map(|i| (i - 1) as u32)
                            .ok_or_else(|| format!("bad face at line {}", lineno + 1))
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(format!("face with fewer than 3 vertices at line {}", lineno + 1));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Shape::from_mesh(vertices, triangles).map_err(|e| format!("invalid mesh: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "workpieces": [
                {"id": "cube", "voxels": [[0,0,0]], "voxel_size": 0.02,
                 "goal_pose": {"rotation": [1,0,0,0], "translation": [0,0,0]},
                 "density": 1000.0}
            ],
            "friction": {"default_mu": 0.3}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_scene_loads() {
        let file: SceneFile = serde_json::from_str(&minimal_json()).unwrap();
        let scene = build_scene(&file, Path::new(".")).unwrap();
        assert_eq!(scene.len(), 1);
        let w = &scene.workpieces()[0];
        // density 1000 * (0.02 m)^3
        assert!((w.mass - 8e-3).abs() < 1e-12);
        assert!((w.com - Point3::new(0.01, 0.01, 0.01)).norm() < 1e-12);
    }

    #[test]
    fn duplicate_id_is_reported_by_name() {
        let json = minimal_json().replace(
            r#""friction""#,
            r#""unused": null, "friction""#,
        );
        // Unknown fields are rejected.
        assert!(serde_json::from_str::<SceneFile>(&json).is_err());

        let mut file: SceneFile = serde_json::from_str(&minimal_json()).unwrap();
        file.workpieces.push(file.workpieces[0].clone());
        match build_scene(&file, Path::new(".")) {
            Err(SceneError::Validation(errors)) => {
                assert!(
                    errors.iter().any(|e| e.contains("duplicate") && e.contains("cube")),
                    "{errors:?}"
                );
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_goals_fail_validation() {
        let mut file: SceneFile = serde_json::from_str(&minimal_json()).unwrap();
        let mut second = file.workpieces[0].clone();
        second.id = "cube2".into();
        second.goal_pose.translation = [0.01, 0.0, 0.0];
        file.workpieces.push(second);
        assert!(matches!(
            build_scene(&file, Path::new(".")),
            Err(SceneError::Validation(_))
        ));
    }

    #[test]
    fn pair_friction_lookup() {
        let mut file: SceneFile = serde_json::from_str(&minimal_json()).unwrap();
        let mut second = file.workpieces[0].clone();
        second.id = "other".into();
        second.goal_pose.translation = [0.05, 0.0, 0.0];
        file.workpieces.push(second);
        file.friction.pairs.push(PairMu {
            a: "other".into(),
            b: TABLE_ID.into(),
            mu: 0.9,
        });
        let scene = build_scene(&file, Path::new(".")).unwrap();
        let other = scene.index_of("other").unwrap();
        assert_eq!(scene.mu_between(Some(other), None), 0.9);
        assert_eq!(scene.mu_between(None, Some(other)), 0.9);
        let cube = scene.index_of("cube").unwrap();
        assert_eq!(scene.mu_between(Some(cube), None), 0.3);
    }

    #[test]
    fn contacts_onto_table_and_neighbor() {
        let mut file: SceneFile = serde_json::from_str(&minimal_json()).unwrap();
        let mut second = file.workpieces[0].clone();
        second.id = "top".into();
        second.goal_pose.translation = [0.0, 0.0, 0.02];
        file.workpieces.push(second);
        let scene = build_scene(&file, Path::new(".")).unwrap();
        let top = scene.index_of("top").unwrap();
        let cube = scene.index_of("cube").unwrap();
        let contacts = scene
            .contacts_onto(top, &[cube], &Tolerances::default())
            .unwrap();
        assert_eq!(contacts.len(), 1);
        assert_eq!(contacts[0].0, Some(cube));
        assert!(contacts[0].1.normal.z > 0.99);
        let base = scene
            .contacts_onto(cube, &[], &Tolerances::default())
            .unwrap();
        assert_eq!(base.len(), 1);
        assert_eq!(base[0].0, None);
    }
}
