//! Exhaustive assembly-order search.
//!
//! Every quantity the per-order rows need is a pure function of
//! `(workpiece, set of already-placed workpieces)`, so the planner first
//! tabulates all `n * 2^(n-1)` such step analyses (in parallel), then
//! scores all `n!` orders as table lookups, and finally picks the winner
//! with deterministic seeded tie-breaking.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemblability::{
    assemblability_quality, constraint_normals, optimal_direction, AssemblyDirection,
};
use crate::assist::{self, AssistResult};
use crate::geometry::Tolerances;
use crate::grasping::{filter_accessible, grasp_to_world, sample_grasps, Grasp, SamplingParams};
use crate::par;
use crate::scene::Scene;
use crate::stability::{stability_from_contacts, StabilityError, StabilityParams};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("{count} workpieces exceed the {cap}-piece permutation cap ({count}! orders)")]
    TooManyPieces { count: usize, cap: usize },
    #[error("no feasible assembly order")]
    NoFeasibleOrder,
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    /// Tie-breaking seed.
    pub seed: u64,
    /// Hands available for assisting grasps (1 for a dual-arm robot).
    pub extra_hands: usize,
    /// Stability factor used when every entry of an assisted row is held
    /// (+inf).
    pub s_cap: f64,
    /// Break exact score ties in favour of orders that need no assistance.
    pub prefer_no_assist: bool,
    /// Retain the full n! x n quality matrices in the result.
    pub full_matrices: bool,
    /// Worker threads (None = library default).
    pub threads: Option<usize>,
    /// Upper bound on piece count (n! orders are enumerated).
    pub permutation_cap: usize,
    /// Retraction distance for insertion sweeps (m).
    pub retract_distance: f64,
    pub sampling: SamplingParams,
    /// Total contact normal-force budget (N); None = ten times the
    /// heaviest workpiece's weight.
    pub force_cap: Option<f64>,
    /// Stability margins below this count as zero.
    pub min_margin: f64,
    pub tolerances: Tolerances,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            extra_hands: 1,
            s_cap: 10.0,
            prefer_no_assist: true,
            full_matrices: false,
            threads: None,
            permutation_cap: 8,
            retract_distance: 0.15,
            sampling: SamplingParams::default(),
            force_cap: None,
            min_margin: 1e-6,
            tolerances: Tolerances::default(),
        }
    }
}

impl PlanConfig {
    pub fn stability_params(&self, scene: &Scene) -> StabilityParams {
        let mut p = StabilityParams::with_budget(
            self.force_cap
                .unwrap_or_else(|| 10.0 * scene.heaviest_weight()),
        );
        p.min_margin = self.min_margin;
        p
    }
}

/// Lexicographic stream of all permutations of `0..n`.
pub struct Permutations {
    next: Option<Vec<usize>>,
}

impl Iterator for Permutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // Standard next-permutation step.
        let n = succ.len();
        let mut i = n.wrapping_sub(1);
        while i > 0 && succ[i - 1] >= succ[i] {
            i -= 1;
        }
        if i > 0 {
            let mut j = n - 1;
            while succ[j] <= succ[i - 1] {
                j -= 1;
            }
            succ.swap(i - 1, j);
            succ[i..].reverse();
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// All `n!` assembly orders in lexicographic sequence, streamed.
pub fn permutations(n: usize, cap: usize) -> Result<Permutations, PlanError> {
    if n == 0 || n > cap {
        return Err(PlanError::TooManyPieces { count: n, cap });
    }
    Ok(Permutations {
        next: Some((0..n).collect()),
    })
}

/// Analysis of one workpiece against one set of already-placed bodies.
#[derive(Debug, Clone)]
pub struct StepData {
    /// Raw stability margin (0 = unstable).
    pub stability: f64,
    /// Accessible force-closed grasps, world frame.
    pub grasps: Vec<Grasp>,
    pub direction: AssemblyDirection,
    /// Assemblability quality in {0} U [0.5, 1].
    pub assemblability: f64,
}

/// Precomputed step analyses for every `(piece, placed-set)` pair, shared
/// by all order evaluations.
pub struct EvalContext<'a> {
    pub scene: &'a Scene,
    pub config: &'a PlanConfig,
    pub params: StabilityParams,
    n: usize,
    table: Vec<Option<StepData>>,
}

impl<'a> EvalContext<'a> {
    /// Tabulates all step analyses, in parallel under the `parallel`
    /// feature. Results are identical regardless of schedule.
    pub fn build(scene: &'a Scene, config: &'a PlanConfig) -> Result<Self, PlanError> {
        let n = scene.len();
        if n == 0 || n > config.permutation_cap {
            return Err(PlanError::TooManyPieces {
                count: n,
                cap: config.permutation_cap,
            });
        }
        let params = config.stability_params(scene);

        // Body-frame grasp samples, once per piece.
        let pieces: Vec<usize> = (0..n).collect();
        let samples: Vec<Vec<Grasp>> = par::map_slice(&pieces, |&p| {
            sample_grasps(&scene.workpieces()[p].shape, &scene.gripper, &config.sampling)
        });

        let mut items: Vec<(usize, u32)> = Vec::new();
        for piece in 0..n {
            for mask in 0u32..(1 << n) {
                if mask & (1 << piece) == 0 {
                    items.push((piece, mask));
                }
            }
        }
        let results: Vec<Result<StepData, PlanError>> = par::map_slice(&items, |&(piece, mask)| {
            step_data(scene, config, &params, &samples[piece], piece, mask)
        });

        let mut table: Vec<Option<StepData>> = vec![None; n << n];
        for ((piece, mask), result) in items.into_iter().zip(results) {
            table[(piece << n) | mask as usize] = Some(result?);
        }
        Ok(Self {
            scene,
            config,
            params,
            n,
            table,
        })
    }

    pub fn piece_count(&self) -> usize {
        self.n
    }

    /// Step analysis of `piece` against the placed set `mask` (bit i =
    /// workpiece i placed; the table is always present).
    pub fn step(&self, piece: usize, mask: u32) -> &StepData {
        debug_assert_eq!(mask & (1 << piece), 0, "piece cannot precede itself");
        self.table[(piece << self.n) | mask as usize]
            .as_ref()
            .expect("step table is total")
    }
}

/// Bitmask of a placed set.
pub(crate) fn placed_mask(placed: &[usize]) -> u32 {
    placed.iter().fold(0u32, |m, &p| m | (1 << p))
}

fn step_data(
    scene: &Scene,
    config: &PlanConfig,
    params: &StabilityParams,
    body_grasps: &[Grasp],
    piece: usize,
    mask: u32,
) -> Result<StepData, PlanError> {
    let placed: Vec<usize> = (0..scene.len())
        .filter(|&i| mask & (1 << i) != 0)
        .collect();
    let tol = &config.tolerances;

    let contacts = scene.contacts_onto(piece, &placed, tol)?;
    let stability = stability_from_contacts(scene, piece, &contacts, params).0;

    let gravity = scene.gravity_dir();
    let constraints = constraint_normals(scene, piece, &placed, tol)?;
    let direction = optimal_direction(&constraints, &gravity);
    let assemblability = assemblability_quality(&direction).0;

    let body = &scene.workpieces()[piece];
    let world: Vec<Grasp> = body_grasps
        .iter()
        .map(|g| grasp_to_world(g, &body.goal_pose))
        .collect();
    let mut obstacles = vec![scene.table_collider()];
    for &other in &placed {
        obstacles.push(scene.workpieces()[other].collider());
    }
    let grasps = filter_accessible(&world, &body.collider(), &scene.gripper, &obstacles, tol);

    Ok(StepData {
        stability,
        grasps,
        direction,
        assemblability,
    })
}

/// Everything the planner records about one assembly order.
#[derive(Debug, Clone)]
pub struct OrderEvaluation {
    pub order: Vec<usize>,
    /// Raw per-step stability margins.
    pub raw_s: Vec<f64>,
    /// Stability row used for scoring: raw, or the assist analyzer's
    /// updated row (entries may be +inf) when the raw row contains a zero.
    pub s_row: Vec<f64>,
    pub g_row: Vec<usize>,
    pub a_row: Vec<f64>,
    pub directions: Vec<AssemblyDirection>,
    pub assist: Option<AssistResult>,
    pub score: f64,
}

impl OrderEvaluation {
    pub fn uses_assist(&self) -> bool {
        self.assist
            .as_ref()
            .is_some_and(|a| a.held.iter().any(|h| !h.is_empty()))
    }
}

/// Row score: the product of the row minima. Held entries (+inf) are
/// ignored by the stability minimum; an all-held row contributes `s_cap`.
pub fn score_rows(s_row: &[f64], g_row: &[usize], a_row: &[f64], s_cap: f64) -> f64 {
    let s_factor = s_row
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::INFINITY, f64::min);
    let s_factor = if s_factor.is_finite() { s_factor } else { s_cap };
    let g_min = g_row.iter().copied().min().unwrap_or(0) as f64;
    let a_min = a_row.iter().copied().fold(f64::INFINITY, f64::min);
    let a_min = if a_min.is_finite() { a_min } else { 0.0 };
    s_factor * g_min * a_min
}

/// Evaluates one order against the precomputed context: stability row,
/// assist substitution when the raw row contains a zero, grasp counts,
/// insertion directions, and the overall score.
pub fn evaluate_order(ctx: &EvalContext, order: &[usize]) -> OrderEvaluation {
    let n = order.len();
    let mut raw_s = Vec::with_capacity(n);
    let mut g_row = Vec::with_capacity(n);
    let mut a_row = Vec::with_capacity(n);
    let mut directions = Vec::with_capacity(n);
    let mut mask = 0u32;
    for &piece in order {
        let step = ctx.step(piece, mask);
        raw_s.push(step.stability);
        g_row.push(step.grasps.len());
        a_row.push(step.assemblability);
        directions.push(step.direction);
        mask |= 1 << piece;
    }

    let (s_row, assist) = if raw_s.iter().all(|&s| s > 0.0) {
        (raw_s.clone(), None)
    } else {
        let assist = assist::assist_analyze(ctx, order, ctx.config.extra_hands);
        (assist.updated_s.clone(), Some(assist))
    };

    let workable = assist.as_ref().is_none_or(|a| {
        a.feasible
            && a.held
                .iter()
                .zip(&a.assist_grasps)
                .all(|(held, grasps)| held.is_empty() || !grasps.is_empty())
    });
    let score = if workable {
        score_rows(&s_row, &g_row, &a_row, ctx.config.s_cap)
    } else {
        0.0
    };

    OrderEvaluation {
        order: order.to_vec(),
        raw_s,
        s_row,
        g_row,
        a_row,
        directions,
        assist,
        score,
    }
}

/// Index of the winning evaluation: the score argmax, with ties within
/// 1e-12 broken uniformly at random from `seed` (after optionally
/// preferring assist-free orders). Errors when every score is zero and no
/// order has a feasible assist.
pub fn select(
    evaluations: &[OrderEvaluation],
    seed: u64,
    prefer_no_assist: bool,
) -> Result<usize, PlanError> {
    assert!(!evaluations.is_empty(), "select needs evaluations");
    let best = evaluations
        .iter()
        .map(|e| e.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0
        && evaluations
            .iter()
            .all(|e| e.assist.as_ref().is_none_or(|a| !a.feasible))
    {
        return Err(PlanError::NoFeasibleOrder);
    }
    let mut ties: Vec<usize> = (0..evaluations.len())
        .filter(|&i| (evaluations[i].score - best).abs() <= 1e-12)
        .collect();
    if prefer_no_assist && ties.iter().any(|&i| evaluations[i].assist.is_none()) {
        ties.retain(|&i| evaluations[i].assist.is_none());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok(ties[rng.gen_range(0..ties.len())])
}

/// Full n! x n quality matrices (retained only on request).
#[derive(Debug, Clone)]
pub struct Matrices {
    pub orders: Vec<Vec<usize>>,
    pub stability: Vec<Vec<f64>>,
    pub graspability: Vec<Vec<usize>>,
    pub assemblability: Vec<Vec<f64>>,
    pub directions: Vec<Vec<[f64; 3]>>,
    pub scores: Vec<f64>,
}

pub struct PlanResult {
    pub winner: OrderEvaluation,
    /// Accessible grasps per step of the winning order.
    pub winner_grasps: Vec<Vec<Grasp>>,
    pub used_assist: bool,
    pub seed: u64,
    pub evaluation_count: usize,
    pub matrices: Option<Matrices>,
}

/// Runs the whole pipeline: tabulate step analyses, evaluate every
/// permutation, select the winner.
pub fn plan(scene: &Scene, config: &PlanConfig) -> Result<PlanResult, PlanError> {
    par::run_with_threads(config.threads, || plan_inner(scene, config))
}

fn plan_inner(scene: &Scene, config: &PlanConfig) -> Result<PlanResult, PlanError> {
    let ctx = EvalContext::build(scene, config)?;
    let orders: Vec<Vec<usize>> =
        permutations(scene.len(), config.permutation_cap)?.collect();
    let evaluations: Vec<OrderEvaluation> =
        par::map_slice(&orders, |order| evaluate_order(&ctx, order));
    let winner_idx = select(&evaluations, config.seed, config.prefer_no_assist)?;
    let winner = evaluations[winner_idx].clone();

    let mut winner_grasps = Vec::with_capacity(winner.order.len());
    let mut mask = 0u32;
    for &piece in &winner.order {
        winner_grasps.push(ctx.step(piece, mask).grasps.clone());
        mask |= 1 << piece;
    }

    let matrices = config.full_matrices.then(|| Matrices {
        orders: orders.clone(),
        stability: evaluations.iter().map(|e| e.s_row.clone()).collect(),
        graspability: evaluations.iter().map(|e| e.g_row.clone()).collect(),
        assemblability: evaluations.iter().map(|e| e.a_row.clone()).collect(),
        directions: evaluations
            .iter()
            .map(|e| {
                e.directions
                    .iter()
                    .map(|d| [d.direction.x, d.direction.y, d.direction.z])
                    .collect()
            })
            .collect(),
        scores: evaluations.iter().map(|e| e.score).collect(),
    });

    let used_assist = winner.uses_assist();
    Ok(PlanResult {
        winner,
        winner_grasps,
        used_assist,
        seed: config.seed,
        evaluation_count: evaluations.len(),
        matrices,
    })
}
