//! Incremental multi-agent planning.
//!
//! Obstacles go into the grid first as frozen sphere chains. Agents then take
//! turns, in id order, appending one straight-line waypoint toward their goal;
//! after every append the conflict search clears all intersections before
//! the next agent moves.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{inflation_factor, Mutability, PathId, StgVector, Vec2};
use crate::path::{min_timestep, Agent, Path, PathKind, StgParams};
use crate::search::{resolve_all, SearchBudget, SearchConfig, SearchError};
use crate::stg_index::{GridError, SpaceTimeGrid, SpherePair};

/// Default sampling interval of the continuous-time oracle, seconds.
pub const ORACLE_DT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan request has no agents")]
    NoAgents,
    #[error("duplicate agent id {0}")]
    DuplicateAgent(PathId),
    #[error("agent {id}: {reason}")]
    InvalidAgent { id: PathId, reason: String },
    #[error("invalid obstacle {index}: {reason}")]
    InvalidObstacle { index: usize, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub tau: f64,
    /// Radius inflation λ; the working radius is `λ·r`.
    pub inflation: f64,
    pub bias_angle: f64,
    pub step_margin: f64,
    pub budget: Option<SearchBudget>,
    /// Static obstacle columns span this multiple of the largest makespan
    /// lower bound, and are extended whenever an agent plans past them.
    pub horizon_factor: f64,
    /// Round cap as a multiple of the longest route measured in links.
    pub iteration_factor: f64,
    /// Validate every agent path after each conflict resolution.
    pub audit: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            inflation: inflation_factor(),
            bias_angle: 0.1,
            step_margin: 0.05,
            budget: None,
            horizon_factor: 1.5,
            iteration_factor: 10.0,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Obstacle {
    Static {
        position: Vec2,
    },
    /// Known timed trajectory, linear between waypoints.
    Moving {
        kind: PathKind,
        trajectory: Vec<StgVector>,
    },
}

/// Axis-aligned field `[0, width] × [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Field {
    pub width: f64,
    pub height: f64,
}

impl Field {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub agents: Vec<Agent>,
    pub obstacles: Vec<Obstacle>,
    pub field: Field,
    pub config: PlannerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Converged,
    Infeasible,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolveStat {
    pub round: usize,
    pub agent: PathId,
    pub nodes: usize,
    pub candidates: usize,
    pub steps: usize,
    pub cost: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanStats {
    pub rounds: usize,
    pub uploads: usize,
    pub resolves: Vec<ResolveStat>,
    pub total_nodes: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub status: PlanStatus,
    /// Every path in the final grid, agents and obstacles, by id.
    pub paths: Vec<Path>,
    pub params: StgParams,
    /// Unscaled body radius shared by all entities.
    pub agent_radius: f64,
    pub stats: PlanStats,
    pub diagnostics: Option<String>,
    /// Agent-path validation failures seen with `audit` on.
    pub audit_failures: Vec<String>,
}

impl PlanResult {
    pub fn agent_paths(&self) -> impl Iterator<Item = &Path> {
        self.paths.iter().filter(|p| p.kind() == PathKind::Agent)
    }
}

/// Where an agent's next waypoint goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextWaypoint {
    Step { center: StgVector, reaches_goal: bool },
    AtGoal,
}

/// Straight-line step toward the goal from the end of `path`.
///
/// The step is the longest one whose space-time length, including the
/// kinematic minimum time, stays within the link length `2R(1 - margin)`.
/// If the goal itself is within that reach the step lands on it.
pub fn next_waypoint(agent: &Agent, path: &Path, params: &StgParams) -> NextWaypoint {
    let Some(last) = path.last() else {
        return NextWaypoint::Step {
            center: StgVector::from_spatial(agent.start, 0.0),
            reaches_goal: agent.route_length() == 0.0,
        };
    };
    let omega = path.velocities().last().copied().unwrap_or_default();
    let here = last.center.spatial();
    let remaining = (agent.goal - here).norm();
    if remaining <= 1e-9 {
        return NextWaypoint::AtGoal;
    }
    let dir = (agent.goal - here) * (1.0 / remaining);
    let a = agent.accel_bound;
    let dt = |s: f64| min_timestep(dir * s, omega, a).unwrap_or(f64::INFINITY);
    let length = |s: f64| (s * s + (params.tau * dt(s)).powi(2)).sqrt();
    let link = params.link_length();
    if length(remaining) <= link {
        return NextWaypoint::Step {
            center: StgVector::from_spatial(agent.goal, last.center.t + dt(remaining)),
            reaches_goal: true,
        };
    }
    let (mut lo, mut hi) = (0.0, remaining);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if length(mid) <= link {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    NextWaypoint::Step {
        center: StgVector::from_spatial(here + dir * lo, last.center.t + dt(lo)),
        reaches_goal: false,
    }
}

/// Lower bound on makespan for one agent: constant maximum acceleration
/// from rest over the straight route.
fn agent_makespan_bound(agent: &Agent) -> f64 {
    (2.0 * agent.route_length() / agent.accel_bound).sqrt()
}

impl PlanRequest {
    pub fn validate(&self) -> Result<(), PlanError> {
        let c = &self.config;
        if !(c.tau > 0.0 && c.tau.is_finite()) {
            return Err(PlanError::InvalidConfig(format!("tau must be positive, got {}", c.tau)));
        }
        if !(c.inflation >= 1.0 && c.inflation.is_finite()) {
            return Err(PlanError::InvalidConfig(format!(
                "inflation must be at least 1, got {}",
                c.inflation
            )));
        }
        if !(c.step_margin > 0.0 && c.step_margin < 1.0) {
            return Err(PlanError::InvalidConfig(format!(
                "step margin must lie in (0, 1), got {}",
                c.step_margin
            )));
        }
        if !c.bias_angle.is_finite() || !(c.horizon_factor > 0.0) || !(c.iteration_factor > 0.0) {
            return Err(PlanError::InvalidConfig("non-positive planner factor".into()));
        }
        if let Some(b) = c.budget {
            if b.max_depth == 0 || b.max_solutions == 0 || b.max_nodes == 0 {
                return Err(PlanError::InvalidConfig("search budget entries must be positive".into()));
            }
        }
        if !(self.field.width > 0.0 && self.field.height > 0.0) {
            return Err(PlanError::InvalidConfig("field size must be positive".into()));
        }
        let first = self.agents.first().ok_or(PlanError::NoAgents)?;
        let mut ids = std::collections::BTreeSet::new();
        for a in &self.agents {
            let bad = |reason: &str| PlanError::InvalidAgent {
                id: a.id,
                reason: reason.to_string(),
            };
            if !ids.insert(a.id) {
                return Err(PlanError::DuplicateAgent(a.id));
            }
            if !(a.radius > 0.0) {
                return Err(bad("radius must be positive"));
            }
            if a.radius != first.radius {
                return Err(bad("all agents must share one radius"));
            }
            if !(a.accel_bound > 0.0 && a.accel_bound.is_finite()) {
                return Err(bad("acceleration bound must be positive"));
            }
            if !(a.priority > 0.0) || !(a.rigidity > 0.0) {
                return Err(bad("priority and rigidity must be positive"));
            }
            if !self.field.contains(a.start) || !self.field.contains(a.goal) {
                return Err(bad("start and goal must lie within the field"));
            }
        }
        for (index, o) in self.obstacles.iter().enumerate() {
            let bad = |reason: &str| PlanError::InvalidObstacle {
                index,
                reason: reason.to_string(),
            };
            match o {
                Obstacle::Static { position } if !position.is_finite() => {
                    return Err(bad("non-finite position"))
                }
                Obstacle::Static { .. } => {}
                Obstacle::Moving { kind, trajectory } => {
                    if !matches!(kind, PathKind::DynamicObstacle | PathKind::NonConnectedVehicle) {
                        return Err(bad("moving obstacles must be dynamic or non-connected"));
                    }
                    if trajectory.is_empty() {
                        return Err(bad("empty trajectory"));
                    }
                    if trajectory.windows(2).any(|w| !(w[1].t > w[0].t)) {
                        return Err(bad("trajectory times must strictly increase"));
                    }
                    if trajectory.iter().any(|p| !p.is_finite()) {
                        return Err(bad("non-finite trajectory point"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn params(&self) -> StgParams {
        let r = self.agents.first().map_or(0.0, |a| a.radius);
        StgParams {
            tau: self.config.tau,
            radius: self.config.inflation * r,
            step_margin: self.config.step_margin,
        }
    }
}

/// Frozen sphere chain through a timed trajectory with links no longer than
/// the link length.
fn discretize(id: PathId, kind: PathKind, trajectory: &[StgVector], params: &StgParams) -> Path {
    let mut path = Path::new(id, kind, params.radius);
    let link = params.link_length();
    path.append(trajectory[0], Mutability::Frozen);
    for w in trajectory.windows(2) {
        let len = (w[1] - w[0]).norm(params.tau);
        let pieces = (len / link).ceil().max(1.0) as usize;
        for j in 1..=pieces {
            let frac = j as f64 / pieces as f64;
            path.append(w[0] + (w[1] - w[0]) * frac, Mutability::Frozen);
        }
    }
    path
}

struct Planner<'a> {
    request: &'a PlanRequest,
    params: StgParams,
    search: SearchConfig,
    grid: SpaceTimeGrid,
    statics: Vec<PathId>,
    stats: PlanStats,
    audit_failures: Vec<String>,
}

enum Halt {
    Infeasible(String),
    Budget(String),
}

impl From<SearchError> for Halt {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::BudgetExhausted(_) => Halt::Budget(e.to_string()),
            SearchError::Infeasible(ref d) => {
                Halt::Infeasible(format!("{e}; pairs: {}", describe_pairs(&d.pairs)))
            }
            other => Halt::Infeasible(other.to_string()),
        }
    }
}

impl From<GridError> for Halt {
    fn from(e: GridError) -> Self {
        Halt::Infeasible(e.to_string())
    }
}

pub fn describe_pairs(pairs: &[SpherePair]) -> String {
    pairs
        .iter()
        .map(|p| {
            format!(
                "({}[{}], {}[{}])",
                p.first.path, p.first.index, p.second.path, p.second.index
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

impl Planner<'_> {
    fn resolve(&mut self, round: usize, agent: PathId) -> Result<(), Halt> {
        let started = Instant::now();
        let r = resolve_all(&mut self.grid, &self.search)?;
        self.stats.total_nodes += r.nodes;
        if let Some(sol) = &r.solution {
            self.stats.resolves.push(ResolveStat {
                round,
                agent,
                nodes: r.nodes,
                candidates: r.candidates,
                steps: sol.steps.len(),
                cost: sol.cost,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
        if self.request.config.audit {
            for p in self.grid.paths().filter(|p| p.kind() == PathKind::Agent) {
                for v in p.validate(&self.params) {
                    self.audit_failures
                        .push(format!("round {round}, path {}: {v}", p.id()));
                }
            }
            if let Err(e) = self.grid.audit() {
                self.audit_failures.push(format!("round {round}, index: {e}"));
            }
        }
        Ok(())
    }

    /// Extends static columns so they outlast every agent by one link.
    /// Returns whether anything was appended.
    fn extend_columns(&mut self) -> Result<bool, Halt> {
        let latest = self
            .grid
            .paths()
            .filter(|p| p.kind() == PathKind::Agent)
            .filter_map(|p| p.last().map(|s| s.center.t))
            .fold(0.0, f64::max);
        let step = self.params.link_length() / self.params.tau;
        let needed = latest + step;
        let mut extended = false;
        for &id in &self.statics {
            loop {
                let last = self.grid.path(id).and_then(|p| p.last()).map(|s| s.center);
                let Some(last) = last else { break };
                if last.t >= needed {
                    break;
                }
                self.grid
                    .upload(id, last + StgVector::new(0.0, 0.0, step), Mutability::Frozen)?;
                extended = true;
            }
        }
        Ok(extended)
    }

    fn run(&mut self) -> Result<(), Halt> {
        let agents = {
            let mut a: Vec<&Agent> = self.request.agents.iter().collect();
            a.sort_by_key(|a| a.id);
            a
        };
        let link = self.params.link_length();
        let longest = agents.iter().map(|a| a.route_length() / link).fold(1.0, f64::max);
        let max_rounds = (self.request.config.iteration_factor * longest).ceil() as usize;

        self.resolve(0, agents[0].id)?;
        let mut round = 0;
        loop {
            // A resolve can delay an agent past the end of a column, so keep
            // extending until the columns outlast every agent.
            for _ in 0..max_rounds.max(1) {
                if !self.extend_columns()? {
                    break;
                }
                self.resolve(round, agents[0].id)?;
            }
            let pending: Vec<&Agent> = agents
                .iter()
                .copied()
                .filter(|a| !self.grid.path(a.id).is_some_and(|p| p.converged()))
                .collect();
            if pending.is_empty() {
                break;
            }
            round += 1;
            self.stats.rounds = round;
            if round > max_rounds {
                return Err(Halt::Budget(format!(
                    "round cap {max_rounds} reached with {} agents short of their goal",
                    pending.len()
                )));
            }
            for agent in pending {
                let path = self.grid.path(agent.id).expect("agent path inserted");
                match next_waypoint(agent, path, &self.params) {
                    NextWaypoint::AtGoal => {
                        self.grid.update_path(agent.id, |p| p.mark_converged())?;
                    }
                    NextWaypoint::Step {
                        center,
                        reaches_goal,
                    } => {
                        let index = path.len();
                        let mutability = if agent.is_lane_locked(index) {
                            Mutability::TimeOnly
                        } else {
                            Mutability::Free
                        };
                        self.grid.upload(agent.id, center, mutability)?;
                        self.stats.uploads += 1;
                        let params = self.params;
                        let mut repaired = Ok(());
                        self.grid.update_path(agent.id, |p| {
                            if reaches_goal {
                                p.mark_converged();
                            }
                            repaired = p.normalize(&params);
                        })?;
                        repaired.map_err(GridError::from)?;
                    }
                }
                self.resolve(round, agent.id)?;
            }
        }
        if self.extend_columns()? {
            return Err(Halt::Budget(format!(
                "static obstacle columns still trail the agents after {max_rounds} extensions"
            )));
        }
        let left = self.grid.query_pairs();
        if !left.is_empty() {
            return Err(Halt::Infeasible(format!(
                "unresolved pairs after convergence: {}",
                describe_pairs(&left)
            )));
        }
        Ok(())
    }
}

/// Plans every agent to its goal.
pub fn plan(request: &PlanRequest) -> Result<PlanResult, PlanError> {
    request.validate()?;
    let started = Instant::now();
    let params = request.params();
    let config = &request.config;
    let mut grid = SpaceTimeGrid::new(params);

    let agent_radius = request.agents[0].radius;
    let horizon = config.horizon_factor
        * request
            .agents
            .iter()
            .map(agent_makespan_bound)
            .fold(0.0, f64::max);
    let next_id = request.agents.iter().map(|a| a.id.0).max().unwrap_or(0);
    let first_obstacle = next_id.max(999) + 1;
    let mut statics = Vec::new();
    for (obstacle_id, o) in (first_obstacle..).zip(&request.obstacles) {
        let id = PathId(obstacle_id);
        let path = match o {
            Obstacle::Static { position } => {
                let step = params.link_length() / params.tau;
                let n = (horizon / step).ceil().max(1.0) as usize;
                let column: Vec<StgVector> = (0..=n)
                    .map(|k| StgVector::from_spatial(*position, k as f64 * step))
                    .collect();
                statics.push(id);
                discretize(id, PathKind::StaticObstacle, &column, &params)
            }
            Obstacle::Moving { kind, trajectory } => discretize(id, *kind, trajectory, &params),
        };
        grid.insert_path(path)?;
    }
    for a in &request.agents {
        let mut path = Path::for_agent(a, &params).map_err(GridError::from)?;
        if path.converged() {
            path.mark_converged();
        }
        grid.insert_path(path)?;
    }

    let mut planner = Planner {
        request,
        params,
        search: SearchConfig {
            budget: config.budget,
            bias_angle: config.bias_angle,
            ..SearchConfig::default()
        },
        grid,
        statics,
        stats: PlanStats::default(),
        audit_failures: Vec::new(),
    };

    let frozen = planner.grid.frozen_conflicts();
    let outcome = if frozen.is_empty() {
        planner.run()
    } else {
        Err(Halt::Infeasible(format!(
            "immutable spheres overlap: {}",
            describe_pairs(&frozen)
        )))
    };
    let (status, diagnostics) = match outcome {
        Ok(()) => (PlanStatus::Converged, None),
        Err(Halt::Infeasible(d)) => (PlanStatus::Infeasible, Some(d)),
        Err(Halt::Budget(d)) => (PlanStatus::BudgetExhausted, Some(d)),
    };
    planner.stats.runtime_s = started.elapsed().as_secs_f64();
    Ok(PlanResult {
        status,
        paths: planner.grid.paths().cloned().collect(),
        params,
        agent_radius,
        stats: planner.stats,
        diagnostics,
        audit_failures: planner.audit_failures,
    })
}

/// A sampled instant at which two entities are closer than `2r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleViolation {
    pub first: PathId,
    pub second: PathId,
    pub t: f64,
    pub distance: f64,
}

fn position_at(path: &Path, t: f64) -> Option<Vec2> {
    if path.kind() == PathKind::StaticObstacle {
        return path.spheres().first().map(|s| s.center.spatial());
    }
    let (lo, hi) = path.time_window()?;
    path.interpolate(t.clamp(lo, hi)).ok()
}

/// Continuous-time collision check: samples every pair of entities every
/// `dt` seconds over their common time window and reports every instant at
/// which their spatial distance is below `2r`. Static obstacles are present
/// at all times; every other entity only within its own time window.
pub fn capsule_oracle(paths: &[Path], r: f64, dt: f64) -> Vec<OracleViolation> {
    assert!(dt > 0.0, "sampling interval must be positive");
    let mut pairs = Vec::new();
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            pairs.push((i, j));
        }
    }
    pairs
        .par_iter()
        .flat_map_iter(|&(i, j)| {
            let (a, b) = (&paths[i], &paths[j]);
            let window = |p: &Path| match p.kind() {
                PathKind::StaticObstacle => Some((f64::NEG_INFINITY, f64::INFINITY)),
                _ => p.time_window(),
            };
            let mut out = Vec::new();
            let (Some((a0, a1)), Some((b0, b1))) = (window(a), window(b)) else {
                return out.into_iter();
            };
            let (lo, hi) = (a0.max(b0), a1.min(b1));
            if lo > hi {
                return out.into_iter();
            }
            let mut check = |t: f64| {
                if let (Some(p), Some(q)) = (position_at(a, t), position_at(b, t)) {
                    let distance = (p - q).norm();
                    if distance < 2.0 * r {
                        out.push(OracleViolation {
                            first: a.id(),
                            second: b.id(),
                            t,
                            distance,
                        });
                    }
                }
            };
            if !lo.is_finite() {
                check(0.0);
            } else {
                let n = ((hi - lo) / dt).floor() as usize;
                for k in 0..=n {
                    check(lo + k as f64 * dt);
                }
                if lo + n as f64 * dt < hi {
                    check(hi);
                }
            }
            out.into_iter()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: u32, start: (f64, f64), goal: (f64, f64), priority: f64) -> Agent {
        Agent {
            id: PathId(id),
            start: Vec2::new(start.0, start.1),
            goal: Vec2::new(goal.0, goal.1),
            radius: 3.5,
            accel_bound: 3.0,
            priority,
            rigidity: 10.0,
            initial_velocity: Vec2::ZERO,
            lane_locked: Vec::new(),
        }
    }

    fn params() -> StgParams {
        StgParams {
            tau: 1.0,
            radius: inflation_factor() * 3.5,
            step_margin: 0.05,
        }
    }

    fn request(agents: Vec<Agent>, obstacles: Vec<Obstacle>) -> PlanRequest {
        PlanRequest {
            agents,
            obstacles,
            field: Field {
                width: 20.0,
                height: 20.0,
            },
            config: PlannerConfig {
                audit: true,
                ..PlannerConfig::default()
            },
        }
    }

    #[test]
    fn first_waypoint_respects_link_length() {
        let a = agent(1, (0.0, 10.0), (20.0, 10.0), 1.0);
        let p = params();
        let path = Path::for_agent(&a, &p).unwrap();
        let NextWaypoint::Step { center, reaches_goal } = next_waypoint(&a, &path, &p) else {
            panic!("expected a step");
        };
        assert!(!reaches_goal);
        let s = center.x;
        let dt = (2.0 * s / 3.0).sqrt();
        assert!((center.t - dt).abs() < 1e-9);
        assert!(((s * s + dt * dt).sqrt() - p.link_length()).abs() < 1e-9);
        assert!(s < 2.0 * p.radius);

        // With a negligible time scale the spatial step is the full link.
        let flat = StgParams { tau: 1e-9, ..p };
        let NextWaypoint::Step { center, .. } = next_waypoint(&a, &path, &flat) else {
            panic!("expected a step");
        };
        assert!((center.x - 2.0 * p.radius * 0.95).abs() < 1e-6);
        assert!((center.x - 9.0839).abs() < 1e-3);
    }

    #[test]
    fn near_goal_lands_exactly() {
        let a = agent(1, (0.0, 0.0), (3.0, 4.0), 1.0);
        let p = params();
        let path = Path::for_agent(&a, &p).unwrap();
        match next_waypoint(&a, &path, &p) {
            NextWaypoint::Step { center, reaches_goal } => {
                assert!(reaches_goal);
                assert_eq!(center.spatial(), a.goal);
            }
            other => panic!("unexpected {other:?}"),
        }
        let still = agent(2, (5.0, 5.0), (5.0, 5.0), 1.0);
        let path = Path::for_agent(&still, &p).unwrap();
        assert!(path.converged());
        assert_eq!(next_waypoint(&still, &path, &p), NextWaypoint::AtGoal);
    }

    #[test]
    fn single_agent_goes_straight() {
        let r = plan(&request(vec![agent(1, (0.0, 10.0), (20.0, 10.0), 1.0)], vec![])).unwrap();
        assert_eq!(r.status, PlanStatus::Converged);
        assert!(r.stats.resolves.is_empty());
        let p = &r.paths[0];
        assert!(p.spheres().iter().all(|s| s.center.y == 10.0));
        assert_eq!(p.last().unwrap().center.spatial(), Vec2::new(20.0, 10.0));
        // Constant maximum acceleration from rest.
        assert!((p.last().unwrap().center.t - (40.0f64 / 3.0).sqrt()).abs() < 1e-9);
        assert!(r.audit_failures.is_empty());
    }

    #[test]
    fn degenerate_agent_converges_immediately() {
        let r = plan(&request(vec![agent(1, (5.0, 5.0), (5.0, 5.0), 1.0)], vec![])).unwrap();
        assert_eq!(r.status, PlanStatus::Converged);
        assert_eq!(r.paths[0].len(), 1);
    }

    #[test]
    fn overlapping_obstacles_are_infeasible() {
        let obstacles = vec![
            Obstacle::Static { position: Vec2::new(10.0, 10.0) },
            Obstacle::Static { position: Vec2::new(11.0, 10.0) },
        ];
        let r = plan(&request(vec![agent(1, (0.0, 0.0), (0.0, 20.0), 1.0)], obstacles)).unwrap();
        assert_eq!(r.status, PlanStatus::Infeasible);
        assert!(r.diagnostics.unwrap().contains("1001"));
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(matches!(plan(&request(vec![], vec![])), Err(PlanError::NoAgents)));
        let mut a = agent(1, (0.0, 0.0), (30.0, 0.0), 1.0);
        assert!(matches!(
            plan(&request(vec![a.clone()], vec![])),
            Err(PlanError::InvalidAgent { .. })
        ));
        a.goal = Vec2::new(10.0, 0.0);
        a.accel_bound = 0.0;
        assert!(plan(&request(vec![a], vec![])).is_err());
        let mut req = request(vec![agent(1, (0.0, 0.0), (1.0, 0.0), 1.0)], vec![]);
        req.config.inflation = 0.5;
        assert!(matches!(plan(&req), Err(PlanError::InvalidConfig(_))));
    }

    #[test]
    fn oracle_examples() {
        let p = params();
        let line = |id: u32, y: f64| {
            Path::from_waypoints(
                PathId(id),
                PathKind::Agent,
                p.radius,
                [(0.0, 0.0), (10.0, 2.0), (20.0, 4.0)]
                    .map(|(x, t)| (StgVector::new(x, y, t), Vec2::ZERO)),
            )
        };
        assert!(capsule_oracle(&[line(1, 0.0), line(2, 35.0)], 3.5, 0.01).is_empty());
        let v = capsule_oracle(&[line(1, 0.0), line(2, 0.0)], 3.5, 0.01);
        assert_eq!(v.len(), 401);
        assert!(v.iter().all(|x| x.distance == 0.0));
    }
}
