//! `asmplan`: plan dual-arm assembly sequences from a scene description.
//!
//! Exit codes: 0 success, 2 scene validation or usage error, 3 no feasible
//! assembly order, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use asmplan_core::plan_io::{self, PlanIoError};
use asmplan_core::planner::{self, PlanConfig, PlanError};
use asmplan_core::scene::{load_scene, SceneError};

#[derive(Parser)]
#[command(
    name = "asmplan",
    version,
    about = "Assembly sequence planning for dual-arm robots",
    after_help = "The ASMPLAN_THREADS environment variable overrides --threads."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search all assembly orders of a scene and write the optimal plan.
    Plan {
        /// Scene description (JSON).
        scene: PathBuf,
        /// Output plan path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        options: PlanOptions,
        /// Retain the full n! quality matrices in the plan file.
        #[arg(long)]
        full: bool,
    },
    /// Evaluate one explicit assembly order.
    EvalOrder {
        /// Scene description (JSON).
        scene: PathBuf,
        /// Comma-separated workpiece ids, e.g. `base,left,top`.
        #[arg(long)]
        order: String,
        /// Output evaluation path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        options: PlanOptions,
    },
    /// Write per-step OBJ snapshots of a previously computed plan.
    Export {
        /// Plan file produced by `plan` or `eval-order`.
        plan: PathBuf,
        /// Scene the plan was computed from.
        scene: PathBuf,
        /// Output directory for `step_<k>.obj` files.
        #[arg(long)]
        dir: PathBuf,
    },
    /// Parse and validate a scene file.
    Validate {
        /// Scene description (JSON).
        scene: PathBuf,
    },
}

#[derive(Args)]
struct PlanOptions {
    /// Tie-breaking seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scene's default friction coefficient.
    #[arg(long)]
    mu: Option<f64>,
    /// Hands available for assisting grasps.
    #[arg(long, default_value_t = 1)]
    extra_hands: usize,
    /// Prefer assist-free orders among exact score ties.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    prefer_no_assist: bool,
    /// Worker threads (0 = library default).
    #[arg(long)]
    threads: Option<usize>,
}

impl PlanOptions {
    fn config(&self) -> PlanConfig {
        let threads = std::env::var("ASMPLAN_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .or(self.threads);
        PlanConfig {
            seed: self.seed,
            extra_hands: self.extra_hands,
            prefer_no_assist: self.prefer_no_assist,
            threads,
            ..PlanConfig::default()
        }
    }
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NO_ORDER: u8 = 3;
const EXIT_IO: u8 = 4;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn scene_fail(e: SceneError) -> u8 {
    eprintln!("error: {e}");
    match e {
        SceneError::Io { .. } => EXIT_IO,
        SceneError::Parse { .. } | SceneError::Validation(_) => EXIT_VALIDATION,
    }
}

fn plan_fail(e: PlanError) -> u8 {
    eprintln!("error: {e}");
    match e {
        PlanError::NoFeasibleOrder => EXIT_NO_ORDER,
        _ => EXIT_VALIDATION,
    }
}

fn io_fail(e: PlanIoError) -> u8 {
    eprintln!("error: {e}");
    match e {
        PlanIoError::Io { .. } => EXIT_IO,
        PlanIoError::Malformed(_) => EXIT_VALIDATION,
    }
}

fn run(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Plan {
            scene,
            out,
            options,
            full,
        } => {
            let (_, scene) = load_scene(&scene).map_err(scene_fail)?;
            let mut config = options.config();
            config.full_matrices = full;
            if let Some(mu) = options.mu {
                return plan_with_mu(scene, config, mu, &out);
            }
            let result = planner::plan(&scene, &config).map_err(plan_fail)?;
            let file = plan_io::plan_file(&result, &scene, &config);
            plan_io::save_plan(&file, &out).map_err(io_fail)?;
            report(&file);
            Ok(())
        }
        Command::EvalOrder {
            scene,
            order,
            out,
            options,
        } => {
            let (_, scene) = load_scene(&scene).map_err(scene_fail)?;
            let config = options.config();
            let scene = match options.mu {
                Some(mu) => override_mu(scene, mu),
                None => scene,
            };
            let ids: Vec<&str> = order.split(',').map(str::trim).collect();
            let mut indices = Vec::with_capacity(ids.len());
            for id in &ids {
                match scene.index_of(id) {
                    Some(i) if !indices.contains(&i) => indices.push(i),
                    Some(_) => {
                        eprintln!("error: workpiece {id:?} listed twice");
                        return Err(EXIT_VALIDATION);
                    }
                    None => {
                        eprintln!("error: unknown workpiece {id:?}");
                        return Err(EXIT_VALIDATION);
                    }
                }
            }
            if indices.len() != scene.len() {
                eprintln!(
                    "error: order lists {} of {} workpieces",
                    indices.len(),
                    scene.len()
                );
                return Err(EXIT_VALIDATION);
            }
            let ctx = planner::EvalContext::build(&scene, &config).map_err(plan_fail)?;
            let eval = planner::evaluate_order(&ctx, &indices);
            let mut grasps = Vec::with_capacity(indices.len());
            let mut mask = 0u32;
            for &piece in &indices {
                grasps.push(ctx.step(piece, mask).grasps.clone());
                mask |= 1 << piece;
            }
            let file = plan_io::eval_file(&eval, &grasps, &scene, &config);
            plan_io::save_plan(&file, &out).map_err(io_fail)?;
            report(&file);
            Ok(())
        }
        Command::Export { plan, scene, dir } => {
            let (_, scene) = load_scene(&scene).map_err(scene_fail)?;
            let plan = plan_io::load_plan(&plan).map_err(io_fail)?;
            plan_io::export_steps(&plan, &scene, &dir).map_err(io_fail)?;
            println!("wrote {} step files to {}", plan.steps.len(), dir.display());
            Ok(())
        }
        Command::Validate { scene } => {
            let (file, _) = load_scene(&scene).map_err(scene_fail)?;
            println!("scene ok: {} workpieces", file.workpieces.len());
            Ok(())
        }
    }
}

fn plan_with_mu(
    scene: asmplan_core::Scene,
    config: PlanConfig,
    mu: f64,
    out: &PathBuf,
) -> Result<(), u8> {
    if mu < 0.0 {
        eprintln!("error: --mu must be non-negative");
        return Err(EXIT_VALIDATION);
    }
    let scene = override_mu(scene, mu);
    let result = planner::plan(&scene, &config).map_err(plan_fail)?;
    let file = plan_io::plan_file(&result, &scene, &config);
    plan_io::save_plan(&file, out).map_err(io_fail)?;
    report(&file);
    Ok(())
}

fn override_mu(mut scene: asmplan_core::Scene, mu: f64) -> asmplan_core::Scene {
    scene.friction.mu = mu;
    scene.pair_mu.clear();
    scene
}

fn report(file: &asmplan_core::plan_io::PlanFile) {
    println!(
        "order: {} (score {}, assist {})",
        file.order.join(" -> "),
        file.score,
        if file.used_assist { "yes" } else { "no" }
    );
    for s in &file.steps {
        let held = s
            .held
            .as_deref()
            .map(|h| format!(", holding {h}"))
            .unwrap_or_default();
        let stab = if s.stability.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.4}", s.stability)
        };
        println!(
            "  {}: s={stab} g={} a={:.3} dir=({:.2}, {:.2}, {:.2}){held}",
            s.workpiece, s.graspability, s.assemblability, s.direction[0], s.direction[1],
            s.direction[2]
        );
    }
}
