//! Decoupled multi-agent motion planning over sphere-chain trajectories in a
//! shared space-time grid.
//!
//! Each trajectory is a chain of overlapping spheres in `(x, y, t)`.
//! Conflicts between chains are resolved by a depth-first search over
//! minimum-translation displacement vectors, each propagated along its path
//! by a rigidity-weighted shift and followed by kinematic smoothing. With the
//! sphere radius inflated by `1/(√3 − 1)`, a grid free of sphere
//! intersections is also free of collisions in continuous time.

pub mod geometry;
mod kdtree;
pub mod path;
pub mod planner;
pub mod plot;
pub mod scenario;
pub mod search;
pub mod stg_index;
pub mod trajectory;

pub use geometry::{
    compute_dv, inflation_factor, spheres_intersect, stg_norm, DisplacementVector, Mutability,
    PathId, Sphere, SphereRef, StgVector, Vec2,
};
pub use path::{min_timestep, Agent, Path, PathKind, StgParams, Violation};
pub use planner::{
    capsule_oracle, next_waypoint, plan, Field, Obstacle, PlanRequest, PlanResult, PlanStatus,
    PlannerConfig,
};
pub use search::{resolve, resolve_all, score, SearchBudget, SearchConfig, Solution};
pub use stg_index::{SpaceTimeGrid, SpherePair};
pub use scenario::{MetricsReport, ScenarioSpec};
pub use trajectory::TrajectorySet;
