//! Assembly sequence planning for dual-arm robots.
//!
//! Given a set of rigid workpieces and their final assembled poses, the
//! planner enumerates every assembly order, scores each one on the
//! stability of its intermediate states, the number of accessible
//! parallel-jaw grasps, and the clearance of the straight-line insertion
//! motion, and picks the best order. When an intermediate state is
//! statically unstable the planner recruits the robot's second arm: the
//! unstable workpiece is treated as held (its stability becomes infinite)
//! and collision-free assisting grasps are proposed for it.
//!
//! The crate follows the planning pipeline:
//!
//! - [`geometry`]: shapes (polycube voxels / triangle meshes), poses,
//!   contact-patch detection, swept collision checks and convex-hull
//!   margin queries.
//! - [`stability`]: linearized friction cones, contact wrench sets and the
//!   grasp-wrench-space stability margin.
//! - [`grasping`]: antipodal parallel-jaw grasp sampling and accessibility
//!   filtering.
//! - [`assemblability`]: insertion-direction optimization from contact
//!   normals.
//! - [`assist`]: second-arm support analysis for unstable intermediate
//!   states.
//! - [`planner`]: exhaustive permutation search, per-order evaluation and
//!   seeded winner selection.
//! - [`scene`] / [`plan_io`]: JSON scene ingestion, canonical plan
//!   serialization and OBJ step export.
//!
//! All analysis functions are pure; with the default `parallel` feature
//! the planner runs independent work items on a rayon pool, and results
//! are byte-identical to the sequential fallback
//! (`--no-default-features`).

pub mod assemblability;
pub mod assist;
pub mod geometry;
pub mod grasping;
pub mod par;
pub mod plan_io;
pub mod planner;
pub mod scene;
pub mod stability;

pub use geometry::{GeometryError, Pose, Shape, Tolerances};
pub use planner::{PlanConfig, PlanError, PlanResult};
pub use scene::{Scene, SceneError};
