//! Scenario files, suboptimality metrics and suite reports.
//!
//! A scenario is one TOML document:
//!
//! ```toml
//! format = 1
//! name = "F1"
//! class = "F"
//!
//! [field]
//! width = 20.0
//! height = 20.0
//!
//! [[agents]]
//! id = 1
//! start = [0.0, 10.0]
//! goal = [20.0, 10.0]
//! ```
//!
//! See `scenarios/README.md` for every key.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PathId, StgVector, Vec2};
use crate::path::{Agent, PathKind};
use crate::planner::{
    capsule_oracle, plan, Field, Obstacle, PlanRequest, PlanResult, PlanStatus, PlannerConfig,
    ORACLE_DT,
};

pub const FORMAT_VERSION: u32 = 1;

/// Priority given to agent 1 when its entry leaves `priority` unset.
pub const LEAD_PRIORITY: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: unsupported format {found}, expected {FORMAT_VERSION}")]
    Format { origin: String, found: u32 },
    #[error("scenario {name}: {reason}")]
    Invalid { name: String, reason: String },
    #[error("plan did not converge ({0:?})")]
    NotConverged(PlanStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioClass {
    /// Obstacle-free.
    F,
    /// Static obstacles.
    S,
    /// Dynamic obstacles.
    D,
    /// Non-connected vehicles.
    N,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentDefaults {
    pub radius: f64,
    pub accel_bound: f64,
    pub rigidity: f64,
    pub priority: f64,
}

impl Default for AgentDefaults {
    fn default() -> Self {
        Self {
            radius: 3.5,
            accel_bound: 3.0,
            rigidity: 10.0,
            priority: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub priority: Option<f64>,
    pub accel_bound: Option<f64>,
    pub rigidity: Option<f64>,
    #[serde(default)]
    pub initial_velocity: Option<[f64; 2]>,
    /// Waypoint index ranges `[from, to)` that may only move in time.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lane_locked: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSpec {
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovingKind {
    DynamicObstacle,
    NonConnectedVehicle,
}

impl From<MovingKind> for PathKind {
    fn from(k: MovingKind) -> Self {
        match k {
            MovingKind::DynamicObstacle => PathKind::DynamicObstacle,
            MovingKind::NonConnectedVehicle => PathKind::NonConnectedVehicle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingSpec {
    pub kind: MovingKind,
    /// `[x, y, t]` points, linear in between.
    pub waypoints: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub format: u32,
    pub name: String,
    pub class: ScenarioClass,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub field: Field,
    #[serde(default)]
    pub defaults: AgentDefaults,
    #[serde(default)]
    pub config: PlannerConfig,
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub static_obstacles: Vec<StaticSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dynamic_obstacles: Vec<MovingSpec>,
}

impl ScenarioSpec {
    /// Parses and checks one scenario document; `origin` names it in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        if spec.format != FORMAT_VERSION {
            return Err(ScenarioError::Format {
                origin: origin.to_string(),
                found: spec.format,
            });
        }
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &FsPath) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn invalid(&self, reason: impl Into<String>) -> ScenarioError {
        ScenarioError::Invalid {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Class and field invariants.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let f = self.field;
        if !(f.width > 0.0 && f.height > 0.0 && f.width.is_finite() && f.height.is_finite()) {
            return Err(self.invalid("field size must be positive"));
        }
        let statics = self.static_obstacles.len();
        let moving = self.dynamic_obstacles.len();
        match self.class {
            ScenarioClass::F if statics + moving > 0 => {
                return Err(self.invalid("class F allows no obstacles"))
            }
            ScenarioClass::S if statics == 0 => {
                return Err(self.invalid("class S needs at least one static obstacle"))
            }
            ScenarioClass::D | ScenarioClass::N if moving == 0 => {
                return Err(self.invalid(format!(
                    "class {:?} needs at least one dynamic entity",
                    self.class
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn agents(&self) -> Vec<Agent> {
        let d = &self.defaults;
        self.agents
            .iter()
            .map(|a| Agent {
                id: PathId(a.id),
                start: Vec2::new(a.start[0], a.start[1]),
                goal: Vec2::new(a.goal[0], a.goal[1]),
                radius: d.radius,
                accel_bound: a.accel_bound.unwrap_or(d.accel_bound),
                priority: a
                    .priority
                    .unwrap_or(if a.id == 1 { LEAD_PRIORITY } else { d.priority }),
                rigidity: a.rigidity.unwrap_or(d.rigidity),
                initial_velocity: a
                    .initial_velocity
                    .map_or(Vec2::ZERO, |v| Vec2::new(v[0], v[1])),
                lane_locked: a.lane_locked.iter().map(|r| (r[0], r[1])).collect(),
            })
            .collect()
    }

    pub fn request(&self) -> PlanRequest {
        let statics = self.static_obstacles.iter().map(|s| Obstacle::Static {
            position: Vec2::new(s.position[0], s.position[1]),
        });
        let moving = self.dynamic_obstacles.iter().map(|m| Obstacle::Moving {
            kind: m.kind.into(),
            trajectory: m
                .waypoints
                .iter()
                .map(|w| StgVector::new(w[0], w[1], w[2]))
                .collect(),
        });
        PlanRequest {
            agents: self.agents(),
            obstacles: statics.chain(moving).collect(),
            field: self.field,
            config: self.config,
        }
    }
}

/// Loads every `*.toml` file of a directory, sorted by file name.
pub fn load_dir(dir: &FsPath) -> Result<Vec<ScenarioSpec>, ScenarioError> {
    let io = |source| ScenarioError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    files.iter().map(|p| ScenarioSpec::load(p)).collect()
}

/// Sum of straight-line start-to-goal distances.
pub fn distance_lower_bound(agents: &[Agent]) -> f64 {
    agents.iter().map(Agent::route_length).sum()
}

/// Longest time any agent needs to cover its straight-line distance from
/// rest at full acceleration.
pub fn makespan_lower_bound(agents: &[Agent]) -> f64 {
    agents
        .iter()
        .map(|a| (2.0 * a.route_length() / a.accel_bound).sqrt())
        .fold(0.0, f64::max)
}

/// Total travelled distance and makespan of the agents in a converged plan.
pub fn measured_metrics(result: &PlanResult) -> Result<(f64, f64), ScenarioError> {
    if result.status != PlanStatus::Converged {
        return Err(ScenarioError::NotConverged(result.status));
    }
    let distance = result.agent_paths().map(|p| p.spatial_length()).sum();
    let makespan = result
        .agent_paths()
        .filter_map(|p| p.last().map(|s| s.center.t))
        .fold(0.0, f64::max);
    Ok((distance, makespan))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Ratios {
    pub distance: Option<f64>,
    pub makespan: Option<f64>,
    /// Mean of the two; absent unless both are.
    pub overall: Option<f64>,
}

/// Measured-over-bound ratios; a zero bound makes its ratio not applicable.
pub fn suboptimality(measured: (f64, f64), bounds: (f64, f64)) -> Ratios {
    let ratio = |m: f64, b: f64| (b > 0.0).then(|| m / b);
    let distance = ratio(measured.0, bounds.0);
    let makespan = ratio(measured.1, bounds.1);
    let overall = match (distance, makespan) {
        (Some(d), Some(m)) => Some((d + m) / 2.0),
        _ => None,
    };
    Ratios {
        distance,
        makespan,
        overall,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Converged,
    Infeasible,
    BudgetExhausted,
    Invalid,
}

impl From<PlanStatus> for RowStatus {
    fn from(s: PlanStatus) -> Self {
        match s {
            PlanStatus::Converged => RowStatus::Converged,
            PlanStatus::Infeasible => RowStatus::Infeasible,
            PlanStatus::BudgetExhausted => RowStatus::BudgetExhausted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub name: String,
    pub class: ScenarioClass,
    pub status: RowStatus,
    pub trials: usize,
    /// Mean planning wall-clock time over all trials.
    pub runtime_s: f64,
    pub distance: Option<f64>,
    pub makespan: Option<f64>,
    pub ratios: Ratios,
    pub oracle_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ScenarioRow>,
}

impl MetricsReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.status == RowStatus::Converged)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>, digits: usize| {
            v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.digits$}"))
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<5} {:<16} {:>6} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>6}",
            "scenario",
            "class",
            "status",
            "trials",
            "runtime_s",
            "distance",
            "makespan",
            "r_dist",
            "r_time",
            "overall",
            "oracle"
        );
        for r in &self.rows {
            let status = serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{:<10} {:<5} {:<16} {:>6} {:>10.4} {:>10} {:>10} {:>8} {:>8} {:>8} {:>6}",
                r.name,
                format!("{:?}", r.class),
                status,
                r.trials,
                r.runtime_s,
                opt(r.distance, 2),
                opt(r.makespan, 2),
                opt(r.ratios.distance, 3),
                opt(r.ratios.makespan, 3),
                opt(r.ratios.overall, 3),
                r.oracle_violations
            );
        }
        out
    }
}

/// One scenario's report row and the plan it came from.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub row: ScenarioRow,
    pub result: Option<PlanResult>,
}

/// Plans `spec` `trials` times. The planner is deterministic, so paths and
/// metrics come from the first trial and only the runtime is averaged.
pub fn run_scenario(spec: &ScenarioSpec, trials: usize) -> ScenarioRun {
    let trials = trials.max(1);
    let request = spec.request();
    let agents = &request.agents;
    let mut row = ScenarioRow {
        name: spec.name.clone(),
        class: spec.class,
        status: RowStatus::Invalid,
        trials,
        runtime_s: 0.0,
        distance: None,
        makespan: None,
        ratios: Ratios::default(),
        oracle_violations: 0,
        diagnostics: None,
    };
    let mut first = None;
    let mut total = 0.0;
    for _ in 0..trials {
        match plan(&request) {
            Ok(result) => {
                total += result.stats.runtime_s;
                first.get_or_insert(result);
            }
            Err(e) => {
                row.diagnostics = Some(e.to_string());
                return ScenarioRun { row, result: None };
            }
        }
    }
    let result = first.expect("at least one trial");
    row.runtime_s = total / trials as f64;
    row.status = result.status.into();
    row.diagnostics = result.diagnostics.clone();
    if let Ok(measured) = measured_metrics(&result) {
        row.distance = Some(measured.0);
        row.makespan = Some(measured.1);
        let bounds = (distance_lower_bound(agents), makespan_lower_bound(agents));
        row.ratios = suboptimality(measured, bounds);
        row.oracle_violations =
            capsule_oracle(&result.paths, result.agent_radius, ORACLE_DT).len();
    }
    ScenarioRun {
        row,
        result: Some(result),
    }
}

/// Runs every scenario, in parallel unless `parallel` is false. Runs come
/// back in input order either way.
pub fn run_suite_detailed(specs: &[ScenarioSpec], trials: usize, parallel: bool) -> Vec<ScenarioRun> {
    if parallel {
        specs.par_iter().map(|s| run_scenario(s, trials)).collect()
    } else {
        specs.iter().map(|s| run_scenario(s, trials)).collect()
    }
}

pub fn run_suite(specs: &[ScenarioSpec], trials: usize, parallel: bool) -> MetricsReport {
    MetricsReport {
        rows: run_suite_detailed(specs, trials, parallel)
            .into_iter()
            .map(|r| r.row)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format = 1
name = "one"
class = "F"

[field]
width = 20.0
height = 20.0

[[agents]]
id = 1
start = [0.0, 0.0]
goal = [20.0, 0.0]

[[agents]]
id = 2
start = [0.0, 20.0]
goal = [20.0, 20.0]
"#;

    fn agent(start: (f64, f64), goal: (f64, f64), accel: f64) -> Agent {
        Agent {
            id: PathId(1),
            start: Vec2::new(start.0, start.1),
            goal: Vec2::new(goal.0, goal.1),
            radius: 3.5,
            accel_bound: accel,
            priority: 1.0,
            rigidity: 10.0,
            initial_velocity: Vec2::ZERO,
            lane_locked: Vec::new(),
        }
    }

    #[test]
    fn lower_bound_examples() {
        let one = [agent((0.0, 0.0), (20.0, 0.0), 3.0)];
        assert_eq!(distance_lower_bound(&one), 20.0);
        assert!((makespan_lower_bound(&one) - (40.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let crossing = [
            agent((0.0, 10.0), (20.0, 10.0), 3.0),
            agent((10.0, 0.0), (10.0, 20.0), 3.0),
        ];
        assert_eq!(distance_lower_bound(&crossing), 40.0);
        let still = [agent((3.0, 3.0), (3.0, 3.0), 3.0)];
        assert_eq!(distance_lower_bound(&still), 0.0);
        assert_eq!(makespan_lower_bound(&still), 0.0);
        let mixed = [
            agent((0.0, 0.0), (20.0, 0.0), 3.0),
            agent((0.0, 0.0), (20.0, 20.0), 3.0),
        ];
        let want = (2.0 * 800f64.sqrt() / 3.0).sqrt();
        assert!((makespan_lower_bound(&mixed) - want).abs() < 1e-12);
    }

    #[test]
    fn suboptimality_examples() {
        let r = suboptimality((20.0, 3.0), (20.0, 3.0));
        assert_eq!(r.overall, Some(1.0));
        let r = suboptimality((1.059, 1.825), (1.0, 1.0));
        assert!((r.overall.unwrap() - 1.442).abs() < 1e-3);
        let r = suboptimality((1.561, 1.657), (1.0, 1.0));
        assert!((r.overall.unwrap() - 1.609).abs() < 1e-3);
        let r = suboptimality((0.0, 0.0), (0.0, 0.0));
        assert_eq!(r, Ratios::default());
    }

    #[test]
    fn parses_minimal_document_with_defaults() {
        let spec = ScenarioSpec::parse(MINIMAL, "inline").unwrap();
        let agents = spec.agents();
        assert_eq!(agents[0].priority, LEAD_PRIORITY);
        assert_eq!(agents[1].priority, 1.0);
        assert_eq!(agents[1].radius, 3.5);
        assert_eq!(agents[1].accel_bound, 3.0);
        assert_eq!(agents[1].rigidity, 10.0);
        assert_eq!(spec.config, PlannerConfig::default());
        let back = ScenarioSpec::parse(&spec.to_toml(), "round trip").unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("goal = [20.0, 0.0]", "goal = [20.0, 0.0]\nspeed = 3.0");
        let err = ScenarioSpec::parse(&text, "inline").unwrap_err().to_string();
        assert!(err.contains("speed"), "{err}");
    }

    #[test]
    fn class_invariants() {
        let s = MINIMAL.replace("class = \"F\"", "class = \"S\"");
        assert!(matches!(
            ScenarioSpec::parse(&s, "x"),
            Err(ScenarioError::Invalid { .. })
        ));
        let s = format!("{MINIMAL}\n[[static_obstacles]]\nposition = [10.0, 10.0]\n");
        assert!(ScenarioSpec::parse(&s, "x").is_err());
        let s = s.replace("class = \"F\"", "class = \"S\"");
        assert!(ScenarioSpec::parse(&s, "x").is_ok());
        let s = MINIMAL.replace("format = 1", "format = 2");
        assert!(matches!(
            ScenarioSpec::parse(&s, "x"),
            Err(ScenarioError::Format { found: 2, .. })
        ));
        let s = MINIMAL.replace("width = 20.0", "width = 0.0");
        assert!(ScenarioSpec::parse(&s, "x").is_err());
    }

    #[test]
    fn empty_suite_is_empty() {
        assert!(run_suite(&[], 3, true).rows.is_empty());
    }

    #[test]
    fn straight_run_is_optimal() {
        let spec = ScenarioSpec::parse(MINIMAL, "inline").unwrap();
        let run = run_scenario(&spec, 2);
        assert_eq!(run.row.status, RowStatus::Converged);
        assert_eq!(run.row.trials, 2);
        let r = run.row.ratios;
        assert!((r.distance.unwrap() - 1.0).abs() < 1e-9);
        assert!((r.makespan.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(run.row.oracle_violations, 0);
        assert!(run.row.runtime_s >= 0.0);
    }

    #[test]
    fn unconverged_metrics_are_refused() {
        let spec = ScenarioSpec::parse(MINIMAL, "inline").unwrap();
        let mut result = run_scenario(&spec, 1).result.unwrap();
        result.status = PlanStatus::Infeasible;
        assert!(matches!(
            measured_metrics(&result),
            Err(ScenarioError::NotConverged(PlanStatus::Infeasible))
        ));
    }
}
