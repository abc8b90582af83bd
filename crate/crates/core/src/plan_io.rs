//! Plan file serialization and per-step geometry export.
//!
//! Plans are written as canonical JSON: object keys sorted, floats printed
//! with nine significant digits (shortest form), and infinite stability
//! qualities encoded as the string `"inf"`. Two identical results always
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::planner::{OrderEvaluation, PlanConfig, PlanResult};
use crate::scene::{PoseFile, Scene};

#[derive(Debug, Error)]
pub enum PlanIoError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed plan file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspFile {
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub opening: f64,
}

impl GraspFile {
    fn from_grasp(g: &crate::grasping::Grasp) -> Self {
        let p = PoseFile::from_pose(&g.pose);
        Self {
            rotation: p.rotation,
            translation: p.translation,
            opening: g.opening,
        }
    }

    pub fn to_pose(&self) -> Option<crate::geometry::Pose> {
        PoseFile {
            rotation: self.rotation,
            translation: self.translation,
        }
        .to_pose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub workpiece: String,
    /// Stability used for scoring; +inf when the piece group was fully
    /// held.
    pub stability: f64,
    pub graspability: u64,
    pub assemblability: f64,
    pub direction: [f64; 3],
    pub grasps: Vec<GraspFile>,
    pub assisting_grasp: Option<GraspFile>,
    pub held: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatricesFile {
    pub orders: Vec<Vec<String>>,
    pub stability: Vec<Vec<f64>>,
    pub graspability: Vec<Vec<u64>>,
    pub assemblability: Vec<Vec<f64>>,
    pub directions: Vec<Vec<[f64; 3]>>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    /// The assemblability quality is a clearance surrogate, not the
    /// 9-type classification table.
    pub surrogate_quality: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanFile {
    pub order: Vec<String>,
    pub score: f64,
    pub used_assist: bool,
    pub steps: Vec<PlanStep>,
    pub matrices: Option<MatricesFile>,
    pub metadata: Metadata,
}

/// Builds the on-disk plan representation for a full plan result.
pub fn plan_file(result: &PlanResult, scene: &Scene, config: &PlanConfig) -> PlanFile {
    let mut steps = build_steps(&result.winner, &result.winner_grasps, scene);
    let matrices = result.matrices.as_ref().map(|m| MatricesFile {
        orders: m
            .orders
            .iter()
            .map(|o| o.iter().map(|&i| scene.workpieces()[i].id.clone()).collect())
            .collect(),
        stability: m.stability.clone(),
        graspability: m
            .graspability
            .iter()
            .map(|row| row.iter().map(|&g| g as u64).collect())
            .collect(),
        assemblability: m.assemblability.clone(),
        directions: m.directions.clone(),
        scores: m.scores.clone(),
    });
    steps.shrink_to_fit();
    PlanFile {
        order: result
            .winner
            .order
            .iter()
            .map(|&i| scene.workpieces()[i].id.clone())
            .collect(),
        score: result.winner.score,
        used_assist: result.used_assist,
        steps,
        matrices,
        metadata: Metadata {
            seed: result.seed,
            config_hash: config_hash(config),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            surrogate_quality: true,
        },
    }
}

/// Plan file for a single evaluated order (the `eval-order` command).
pub fn eval_file(
    eval: &OrderEvaluation,
    grasps: &[Vec<crate::grasping::Grasp>],
    scene: &Scene,
    config: &PlanConfig,
) -> PlanFile {
    PlanFile {
        order: eval
            .order
            .iter()
            .map(|&i| scene.workpieces()[i].id.clone())
            .collect(),
        score: eval.score,
        used_assist: eval.uses_assist(),
        steps: build_steps(eval, grasps, scene),
        matrices: None,
        metadata: Metadata {
            seed: config.seed,
            config_hash: config_hash(config),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            surrogate_quality: true,
        },
    }
}

fn build_steps(
    eval: &OrderEvaluation,
    grasps: &[Vec<crate::grasping::Grasp>],
    scene: &Scene,
) -> Vec<PlanStep> {
    eval.order
        .iter()
        .enumerate()
        .map(|(j, &piece)| {
            let (held, assisting_grasp) = match &eval.assist {
                Some(a) => (
                    a.held[j]
                        .first()
                        .map(|&h| scene.workpieces()[h].id.clone()),
                    a.assist_grasps[j].first().map(GraspFile::from_grasp),
                ),
                None => (None, None),
            };
            let d = eval.directions[j].direction;
            PlanStep {
                workpiece: scene.workpieces()[piece].id.clone(),
                stability: eval.s_row[j],
                graspability: eval.g_row[j] as u64,
                assemblability: eval.a_row[j],
                direction: [d.x, d.y, d.z],
                grasps: grasps[j].iter().map(GraspFile::from_grasp).collect(),
                assisting_grasp,
                held,
            }
        })
        .collect()
}

/// FNV-1a hash of the canonical config encoding; stable across runs and
/// platforms. The thread count is execution-only and excluded, so the
/// same plan from different pool sizes hashes identically.
pub fn config_hash(config: &PlanConfig) -> String {
    let mut semantic = config.clone();
    semantic.threads = None;
    let value = serde_json::to_value(&semantic).expect("config serializes");
    let text = to_canonical_json(&value);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn save_plan(plan: &PlanFile, path: impl AsRef<Path>) -> Result<(), PlanIoError> {
    let path = path.as_ref();
    let text = plan_to_string(plan);
    std::fs::write(path, text).map_err(|source| PlanIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Canonical textual form of a plan.
pub fn plan_to_string(plan: &PlanFile) -> String {
    let mut s = to_canonical_json(&plan_to_value(plan));
    s.push('\n');
    s
}

fn ext(x: f64) -> Value {
    if x.is_infinite() {
        Value::String("inf".into())
    } else {
        json!(x)
    }
}

fn grasp_value(g: &GraspFile) -> Value {
    json!({
        "rotation": g.rotation,
        "translation": g.translation,
        "opening": g.opening,
    })
}

fn plan_to_value(plan: &PlanFile) -> Value {
    let steps: Vec<Value> = plan
        .steps
        .iter()
        .map(|s| {
            json!({
                "workpiece": s.workpiece,
                "stability": ext(s.stability),
                "graspability": s.graspability,
                "assemblability": s.assemblability,
                "direction": s.direction,
                "grasps": s.grasps.iter().map(grasp_value).collect::<Vec<_>>(),
                "assisting_grasp": s.assisting_grasp.as_ref().map(grasp_value).unwrap_or(Value::Null),
                "held": s.held.as_ref().map(|h| json!(h)).unwrap_or(Value::Null),
            })
        })
        .collect();
    let mut root = Map::new();
    root.insert("order".into(), json!(plan.order));
    root.insert("score".into(), json!(plan.score));
    root.insert("used_assist".into(), json!(plan.used_assist));
    root.insert("steps".into(), Value::Array(steps));
    if let Some(m) = &plan.matrices {
        root.insert(
            "matrices".into(),
            json!({
                "orders": m.orders,
                "stability": m.stability.iter().map(|row| row.iter().map(|&x| ext(x)).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "graspability": m.graspability,
                "assemblability": m.assemblability,
                "directions": m.directions,
                "scores": m.scores,
            }),
        );
    }
    root.insert(
        "metadata".into(),
        json!({
            "seed": plan.metadata.seed,
            "config_hash": plan.metadata.config_hash,
            "tool_version": plan.metadata.tool_version,
            "surrogate_quality": plan.metadata.surrogate_quality,
        }),
    );
    Value::Object(root)
}

/// Reads a plan file back into memory.
pub fn load_plan(path: impl AsRef<Path>) -> Result<PlanFile, PlanIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PlanIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| PlanIoError::Malformed(e.to_string()))?;
    plan_from_value(&value)
}

fn as_ext(v: &Value, field: &str) -> Result<f64, PlanIoError> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| PlanIoError::Malformed(format!("{field} is not a float"))),
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        _ => Err(PlanIoError::Malformed(format!(
            "{field} must be a number or \"inf\""
        ))),
    }
}

fn arr<const N: usize>(v: &Value, field: &str) -> Result<[f64; N], PlanIoError> {
    let items = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| PlanIoError::Malformed(format!("{field} must have {N} entries")))?;
    let mut out = [0.0; N];
    for (o, item) in out.iter_mut().zip(items) {
        *o = item
            .as_f64()
            .ok_or_else(|| PlanIoError::Malformed(format!("{field} entries must be numbers")))?;
    }
    Ok(out)
}

fn grasp_from_value(v: &Value, field: &str) -> Result<GraspFile, PlanIoError> {
    Ok(GraspFile {
        rotation: arr(&v["rotation"], field)?,
        translation: arr(&v["translation"], field)?,
        opening: v["opening"]
            .as_f64()
            .ok_or_else(|| PlanIoError::Malformed(format!("{field}.opening")))?,
    })
}

fn plan_from_value(value: &Value) -> Result<PlanFile, PlanIoError> {
    let order: Vec<String> = value["order"]
        .as_array()
        .ok_or_else(|| PlanIoError::Malformed("order missing".into()))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| PlanIoError::Malformed("order entries must be ids".into()))
        })
        .collect::<Result<_, _>>()?;
    let steps_value = value["steps"]
        .as_array()
        .ok_or_else(|| PlanIoError::Malformed("steps missing".into()))?;
    let mut steps = Vec::with_capacity(steps_value.len());
    for (i, s) in steps_value.iter().enumerate() {
        let field = format!("steps[{i}]");
        let grasps = s["grasps"]
            .as_array()
            .ok_or_else(|| PlanIoError::Malformed(format!("{field}.grasps missing")))?
            .iter()
            .map(|g| grasp_from_value(g, &field))
            .collect::<Result<_, _>>()?;
        steps.push(PlanStep {
            workpiece: s["workpiece"]
                .as_str()
                .ok_or_else(|| PlanIoError::Malformed(format!("{field}.workpiece")))?
                .to_string(),
            stability: as_ext(&s["stability"], &field)?,
            graspability: s["graspability"]
                .as_u64()
                .ok_or_else(|| PlanIoError::Malformed(format!("{field}.graspability")))?,
            assemblability: s["assemblability"]
                .as_f64()
                .ok_or_else(|| PlanIoError::Malformed(format!("{field}.assemblability")))?,
            direction: arr(&s["direction"], &field)?,
            grasps,
            assisting_grasp: match &s["assisting_grasp"] {
                Value::Null => None,
                v => Some(grasp_from_value(v, &field)?),
            },
            held: match &s["held"] {
                Value::Null => None,
                v => Some(
                    v.as_str()
                        .ok_or_else(|| PlanIoError::Malformed(format!("{field}.held")))?
                        .to_string(),
                ),
            },
        });
    }
    let matrices = match value.get("matrices") {
        None | Some(Value::Null) => None,
        Some(m) => Some(MatricesFile {
            orders: serde_json::from_value(m["orders"].clone())
                .map_err(|e| PlanIoError::Malformed(format!("matrices.orders: {e}")))?,
            stability: m["stability"]
                .as_array()
                .ok_or_else(|| PlanIoError::Malformed("matrices.stability".into()))?
                .iter()
                .map(|row| {
                    row.as_array()
                        .ok_or_else(|| PlanIoError::Malformed("matrices.stability row".into()))?
                        .iter()
                        .map(|v| as_ext(v, "matrices.stability"))
                        .collect()
                })
                .collect::<Result<_, _>>()?,
            graspability: serde_json::from_value(m["graspability"].clone())
                .map_err(|e| PlanIoError::Malformed(format!("matrices.graspability: {e}")))?,
            assemblability: serde_json::from_value(m["assemblability"].clone())
                .map_err(|e| PlanIoError::Malformed(format!("matrices.assemblability: {e}")))?,
            directions: serde_json::from_value(m["directions"].clone())
                .map_err(|e| PlanIoError::Malformed(format!("matrices.directions: {e}")))?,
            scores: serde_json::from_value(m["scores"].clone())
                .map_err(|e| PlanIoError::Malformed(format!("matrices.scores: {e}")))?,
        }),
    };
    let md = &value["metadata"];
    Ok(PlanFile {
        order,
        score: value["score"]
            .as_f64()
            .ok_or_else(|| PlanIoError::Malformed("score missing".into()))?,
        used_assist: value["used_assist"]
            .as_bool()
            .ok_or_else(|| PlanIoError::Malformed("used_assist missing".into()))?,
        steps,
        matrices,
        metadata: Metadata {
            seed: md["seed"]
                .as_u64()
                .ok_or_else(|| PlanIoError::Malformed("metadata.seed".into()))?,
            config_hash: md["config_hash"]
                .as_str()
                .ok_or_else(|| PlanIoError::Malformed("metadata.config_hash".into()))?
                .to_string(),
            tool_version: md["tool_version"]
                .as_str()
                .ok_or_else(|| PlanIoError::Malformed("metadata.tool_version".into()))?
                .to_string(),
            surrogate_quality: md["surrogate_quality"]
                .as_bool()
                .ok_or_else(|| PlanIoError::Malformed("metadata.surrogate_quality".into()))?,
        },
    })
}

// ---------------------------------------------------------------------------
// Canonical JSON.
// ---------------------------------------------------------------------------

/// Serializes a JSON value with sorted object keys and floats in shortest
/// 9-significant-digit form.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt_g(n.as_f64().expect("finite float"), 9));
            }
        }
        Value::String(s) => write_json_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map is a BTreeMap, already key-sorted.
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (k, v)) in sorted.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json_string(k, out);
                out.push(':');
                write_value(v, out);
            }
            out.push('}');
        }
    }
}

fn write_json_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Shortest decimal form with at most `sig` significant digits (the `%g`
/// family): positional for exponents in `[-4, sig)`, scientific
/// otherwise, trailing zeros stripped.
pub fn fmt_g(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return "0".into();
    }
    assert!(x.is_finite(), "non-finite floats are encoded upstream");
    let sci = format!("{:.*e}", sig - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= sig as i32 {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{exp}")
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    }
}

// ---------------------------------------------------------------------------
// OBJ step export.
// ---------------------------------------------------------------------------

/// Distance by which the incoming piece is drawn back along its insertion
/// direction in step snapshots.
pub const EXPORT_RETRACT: f64 = 0.15;

/// Writes one OBJ snapshot per assembly step into `out_dir`: the already
/// assembled prefix at goal poses, the incoming piece retracted along its
/// insertion direction, and gripper boxes for the chosen and assisting
/// grasps as named groups.
pub fn export_steps(
    plan: &PlanFile,
    scene: &Scene,
    out_dir: impl AsRef<Path>,
) -> Result<(), PlanIoError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|source| PlanIoError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    for (k, step) in plan.steps.iter().enumerate() {
        let path = out_dir.join(format!("step_{}.obj", k + 1));
        let mut text = String::new();
        let mut base = 1u32;
        for placed in &plan.steps[..k] {
            let idx = scene.index_of(&placed.workpiece).ok_or_else(|| {
                PlanIoError::Malformed(format!("unknown workpiece {:?}", placed.workpiece))
            })?;
            let body = &scene.workpieces()[idx];
            write_mesh_group(
                &mut text,
                &placed.workpiece,
                &body.shape,
                &body.goal_pose,
                &mut base,
            );
        }
        let idx = scene.index_of(&step.workpiece).ok_or_else(|| {
            PlanIoError::Malformed(format!("unknown workpiece {:?}", step.workpiece))
        })?;
        let body = &scene.workpieces()[idx];
        let mut pose = body.goal_pose;
        let d = nalgebra::Vector3::new(step.direction[0], step.direction[1], step.direction[2]);
        pose.translation.vector -= d * EXPORT_RETRACT;
        write_mesh_group(
            &mut text,
            &format!("incoming_{}", step.workpiece),
            &body.shape,
            &pose,
            &mut base,
        );
        if let Some(g) = step.grasps.first() {
            write_gripper_group(&mut text, "gripper", g, scene, &mut base)?;
        }
        if let Some(g) = &step.assisting_grasp {
            write_gripper_group(&mut text, "assist_gripper", g, scene, &mut base)?;
        }
        let mut file = std::fs::File::create(&path).map_err(|source| PlanIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(text.as_bytes())
            .map_err(|source| PlanIoError::Io {
                path: path.display().to_string(),
                source,
            })?;
    }
    Ok(())
}

fn write_mesh_group(
    out: &mut String,
    name: &str,
    shape: &crate::geometry::Shape,
    pose: &crate::geometry::Pose,
    base: &mut u32,
) {
    out.push_str(&format!("g {name}\n"));
    for v in shape.vertices() {
        let w = pose * v;
        out.push_str(&format!(
            "v {} {} {}\n",
            fmt_g(w.x, 12),
            fmt_g(w.y, 12),
            fmt_g(w.z, 12)
        ));
    }
    for t in shape.triangles() {
        out.push_str(&format!(
            "f {} {} {}\n",
            *base + t[0],
            *base + t[1],
            *base + t[2]
        ));
    }
    *base += shape.vertices().len() as u32;
}

fn write_gripper_group(
    out: &mut String,
    name: &str,
    grasp: &GraspFile,
    scene: &Scene,
    base: &mut u32,
) -> Result<(), PlanIoError> {
    let pose = grasp
        .to_pose()
        .ok_or_else(|| PlanIoError::Malformed("degenerate grasp rotation".into()))?;
    out.push_str(&format!("g {name}\n"));
    for (center, half) in scene.gripper.collision_boxes(grasp.opening) {
        let mut corners = Vec::with_capacity(8);
        for i in 0..8u32 {
            let s = |bit: u32| if (i >> bit) & 1 == 0 { -1.0 } else { 1.0 };
            let local = nalgebra::Point3::new(
                center.x + s(0) * half.x,
                center.y + s(1) * half.y,
                center.z + s(2) * half.z,
            );
            corners.push(pose * local);
        }
        for c in &corners {
            out.push_str(&format!(
                "v {} {} {}\n",
                fmt_g(c.x, 12),
                fmt_g(c.y, 12),
                fmt_g(c.z, 12)
            ));
        }
        // Quad faces of the box, as triangles (outward orientation).
        const QUADS: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        for q in QUADS {
            out.push_str(&format!(
                "f {} {} {}\nf {} {} {}\n",
                *base + q[0],
                *base + q[1],
                *base + q[2],
                *base + q[0],
                *base + q[2],
                *base + q[3]
            ));
        }
        *base += 8;
    }
    Ok(())
}
