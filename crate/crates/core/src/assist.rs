//! Second-arm assisting support analysis.
//!
//! Triggered for orders whose raw stability row contains a zero. At every
//! prefix the analyzer recomputes the stability of each placed workpiece
//! in the context of all the others; pieces whose quality is zero are
//! treated as held by an assisting hand and their quality becomes +inf.
//! The per-step group quality is the minimum over the non-held pieces
//! (+inf when only held pieces remain), and the order is feasible as long
//! as the number of simultaneously held pieces never exceeds the available
//! extra hands. A piece stays held exactly while its recomputed quality is
//! zero, so it is released at the first prefix that restabilizes it.

use nalgebra::Unit;
use thiserror::Error;

use crate::geometry::{obb_hits_collider, Collider, Pose, Shape, Tolerances};
use crate::grasping::{Grasp, GripperSpec};
use crate::planner::{placed_mask, EvalContext};

#[derive(Debug, Error)]
#[error("no collision-free assisting grasp for the held workpiece")]
pub struct NoAssistGrasp;

/// Outcome of the assisting support analysis for one order.
#[derive(Debug, Clone)]
pub struct AssistResult {
    /// Per-step group stability: min over non-held placed pieces, +inf
    /// when every placed piece is held.
    pub updated_s: Vec<f64>,
    /// Pieces held by an assisting hand at each step, in hold order.
    pub held: Vec<Vec<usize>>,
    /// Assisting grasps for the primary held piece at each step, already
    /// filtered against the next preparing workpiece's goal pose and
    /// approach sweep.
    pub assist_grasps: Vec<Vec<Grasp>>,
    /// False when some step needs more held pieces than hands available.
    pub feasible: bool,
}

/// Runs the assisting support analysis over every prefix of `order`.
pub fn assist_analyze(ctx: &EvalContext, order: &[usize], extra_hands: usize) -> AssistResult {
    let n = order.len();
    let mut updated_s = Vec::with_capacity(n);
    let mut held_steps: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut assist_grasps: Vec<Vec<Grasp>> = Vec::with_capacity(n);
    let mut feasible = true;

    for j in 0..n {
        let group = &order[..=j];
        let group_mask = placed_mask(group);
        let mut held_now: Vec<usize> = Vec::new();
        let mut min_free = f64::INFINITY;
        for &q in group {
            let raw = ctx.step(q, group_mask & !(1 << q)).stability;
            if raw > 0.0 {
                min_free = min_free.min(raw);
            } else {
                held_now.push(q);
            }
        }
        if held_now.len() > extra_hands {
            feasible = false;
        }
        updated_s.push(min_free);

        let grasps = match held_now.first() {
            None => Vec::new(),
            Some(&held_piece) => {
                let candidates = &ctx.step(held_piece, group_mask & !(1 << held_piece)).grasps;
                match order.get(j + 1) {
                    None => candidates.clone(),
                    Some(&next) => {
                        let scene = ctx.scene;
                        let next_body = &scene.workpieces()[next];
                        let next_dir = ctx.step(next, group_mask).direction.direction;
                        assist_grasps_filtered(
                            candidates,
                            &scene.gripper,
                            &next_body.shape,
                            &next_body.goal_pose,
                            &next_dir,
                            ctx.config.retract_distance,
                            &ctx.config.tolerances,
                        )
                    }
                }
            }
        };
        assist_grasps.push(grasps);
        held_steps.push(held_now);
    }

    AssistResult {
        updated_s,
        held: held_steps,
        assist_grasps,
        feasible,
    }
}

/// Keeps the candidate grasps whose gripper clears the next preparing
/// workpiece both at its goal pose and swept backwards along its assembly
/// direction. Without a next workpiece the candidates pass unchanged.
/// Errors when nothing survives, which flags the order as impractical.
pub fn assist_grasps(
    candidates: &[Grasp],
    gripper: &GripperSpec,
    next_preparing: Option<(&Shape, &Pose, &Unit<nalgebra::Vector3<f64>>)>,
    retract_distance: f64,
    tol: &Tolerances,
) -> Result<Vec<Grasp>, NoAssistGrasp> {
    let Some((shape, goal, direction)) = next_preparing else {
        return Ok(candidates.to_vec());
    };
    let kept = assist_grasps_filtered(
        candidates,
        gripper,
        shape,
        goal,
        direction,
        retract_distance,
        tol,
    );
    if kept.is_empty() {
        Err(NoAssistGrasp)
    } else {
        Ok(kept)
    }
}

fn assist_grasps_filtered(
    candidates: &[Grasp],
    gripper: &GripperSpec,
    next_shape: &Shape,
    next_goal: &Pose,
    next_dir: &Unit<nalgebra::Vector3<f64>>,
    retract_distance: f64,
    tol: &Tolerances,
) -> Vec<Grasp> {
    let stations = tol.sweep_steps.max(2);
    let poses: Vec<Pose> = (0..stations)
        .map(|k| {
            let t = retract_distance * k as f64 / (stations - 1) as f64;
            let mut pose = *next_goal;
            pose.translation.vector -= next_dir.into_inner() * t;
            pose
        })
        .collect();
    candidates
        .iter()
        .filter(|g| {
            let boxes = g.boxes(gripper);
            poses.iter().all(|pose| {
                let swept = Collider::Mesh {
                    shape: next_shape,
                    pose: *pose,
                };
                boxes
                    .iter()
                    .all(|b| !obb_hits_collider(b, &swept, tol.contact_gap))
            })
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_shape;
    use crate::grasping::{grasp_to_world, sample_grasps, SamplingParams};
    use nalgebra::Vector3;

    #[test]
    fn no_next_piece_passes_candidates_through() {
        let shape = build_shape(&[[0, 0, 0]], 0.02).unwrap();
        let spec = GripperSpec::default();
        let candidates: Vec<Grasp> =
            sample_grasps(&shape, &spec, &SamplingParams::default())
                .iter()
                .map(|g| grasp_to_world(g, &Pose::identity()))
                .collect();
        let kept = assist_grasps(&candidates, &spec, None, 0.15, &Tolerances::default()).unwrap();
        assert_eq!(kept.len(), candidates.len());
    }

    #[test]
    fn grasp_astride_the_next_goal_is_removed() {
        let s = 0.02;
        let held = build_shape(&[[0, 0, 0]], s).unwrap();
        let spec = GripperSpec::default();
        let candidates: Vec<Grasp> = sample_grasps(&held, &spec, &SamplingParams::default())
            .iter()
            .map(|g| grasp_to_world(g, &Pose::identity()))
            .collect();
        assert!(!candidates.is_empty());
        // Next piece drops straight down right next to the held piece; its
        // sweep column passes through every side grasp on that side.
        let next = build_shape(&[[0, 0, 0]], s).unwrap();
        let next_goal = Pose::translation(s, 0.0, 0.0);
        let down = Unit::new_normalize(Vector3::new(0.0, 0.0, -1.0));
        let tol = Tolerances::default();
        let kept = assist_grasps_filtered(&candidates, &spec, &next, &next_goal, &down, 0.15, &tol);
        assert!(kept.len() < candidates.len());
        // A far-away next piece removes nothing.
        let far_goal = Pose::translation(1.0, 1.0, 0.0);
        let kept_far =
            assist_grasps_filtered(&candidates, &spec, &next, &far_goal, &down, 0.15, &tol);
        assert_eq!(kept_far.len(), candidates.len());
        // Pure filter: every survivor is an input.
        for g in &kept {
            assert!(candidates
                .iter()
                .any(|c| c.pose == g.pose && c.opening == g.opening));
        }
    }
}
