//! Event-driven simulation of n equal hard spheres colliding elastically in
//! R^d, together with the analysis machinery used to study how many
//! collisions a trajectory can contain: frame normalization, split-time
//! detection, a branching decomposition of the trajectory into ball
//! subfamilies, and log-space evaluation of the closed-form collision-count
//! bounds.
//!
//! The simulator is exact between events (piecewise-linear motion, quadratic
//! root solving for contact times) and deterministic: identical inputs
//! produce bit-identical event logs on one platform.

pub mod bounds;
pub mod checks;
pub mod coverage;
pub mod dynamics;
pub mod error;
pub mod ghost;
pub mod log;
pub mod normalize;
pub mod report;
pub mod scenario;
pub mod state;
pub mod tol;
pub mod tree;
pub mod vecd;

pub use dynamics::{apply_collision, next_event, pair_collision_time, simulate};
pub use error::{Error, Result};
pub use ghost::{ghost_extend, GhostLog};
pub use log::{CollisionEvent, EventLog, LogHeader, Termination};
pub use normalize::{find_t0, normalize, subfamily_frame, FrameReport};
pub use scenario::{generate, ScenarioKind, ScenarioSpec};
pub use state::SystemState;
pub use tree::{
    beta_partition, build_tree, chain_schedule, r_profile, split_times, u_interval, FamilyNode,
    TimeBound,
};
