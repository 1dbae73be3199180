//! Trajectory files and sampled tracks.
//!
//! A trajectory file is CSV with `#` metadata lines ahead of the header:
//!
//! ```text
//! # format 1
//! # agent_radius 3.5
//! # inflation 1.3660254037844386
//! # tau 1
//! # step_margin 0.05
//! # path 1 kind agent accel 3 priority 100 rigidity 10
//! # path 1000 kind static_obstacle
//! path_id,index,x,y,t,wx,wy
//! 1,0,0,10,0,0,0
//! ```
//!
//! Floats are written in shortest round-trip form, so equal plans give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{PathId, StgVector, Vec2};
use crate::path::{Path, PathKind, StgParams};
use crate::planner::PlanResult;

pub const TRAJECTORY_FORMAT: u32 = 1;
pub const HEADER: &str = "path_id,index,x,y,t,wx,wy";

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing metadata `{0}`")]
    Missing(&'static str),
    #[error("unsupported trajectory format {0}")]
    Format(u32),
}

/// Paths plus the parameters needed to check them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    /// Unscaled body radius `r`.
    pub agent_radius: f64,
    pub inflation: f64,
    pub params: StgParams,
    pub paths: Vec<Path>,
}

impl TrajectorySet {
    pub fn from_result(result: &PlanResult) -> Self {
        Self {
            agent_radius: result.agent_radius,
            inflation: result.params.radius / result.agent_radius,
            params: result.params,
            paths: result.paths.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# format {TRAJECTORY_FORMAT}");
        let _ = writeln!(out, "# agent_radius {}", self.agent_radius);
        let _ = writeln!(out, "# inflation {}", self.inflation);
        let _ = writeln!(out, "# tau {}", self.params.tau);
        let _ = writeln!(out, "# step_margin {}", self.params.step_margin);
        for p in &self.paths {
            let _ = write!(out, "# path {} kind {}", p.id(), p.kind());
            if p.kind() == PathKind::Agent {
                let _ = write!(
                    out,
                    " accel {} priority {} rigidity {}",
                    p.accel_bound, p.priority, p.rigidity
                );
            }
            out.push('\n');
        }
        out.push_str(HEADER);
        out.push('\n');
        for p in &self.paths {
            for (k, (s, w)) in p.spheres().iter().zip(p.velocities()).enumerate() {
                let c = s.center;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    p.id(),
                    k,
                    c.x,
                    c.y,
                    c.t,
                    w.x,
                    w.y
                );
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TrajectoryError> {
        let mut format = None;
        let mut agent_radius = None;
        let mut inflation = None;
        let mut tau = None;
        let mut step_margin = None;
        let mut headers: BTreeMap<u32, PathHeader> = BTreeMap::new();
        let mut rows: BTreeMap<u32, Vec<(StgVector, Vec2)>> = BTreeMap::new();
        let mut seen_header = false;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |message: String| TrajectoryError::Line { line, message };
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(meta) = trimmed.strip_prefix('#') {
                let words: Vec<&str> = meta.split_whitespace().collect();
                let num = |k: usize| -> Result<f64, TrajectoryError> {
                    let w = words
                        .get(k)
                        .ok_or_else(|| bad(format!("`{}` needs a value", words[0])))?;
                    w.parse::<f64>()
                        .map_err(|_| bad(format!("bad number `{w}`")))
                };
                match words.first().copied() {
                    Some("format") => format = Some(num(1)? as u32),
                    Some("agent_radius") => agent_radius = Some(num(1)?),
                    Some("inflation") => inflation = Some(num(1)?),
                    Some("tau") => tau = Some(num(1)?),
                    Some("step_margin") => step_margin = Some(num(1)?),
                    Some("path") => {
                        let (id, header) = PathHeader::parse(&words).map_err(bad)?;
                        headers.insert(id, header);
                    }
                    _ => {}
                }
                continue;
            }
            if !seen_header {
                if trimmed != HEADER {
                    return Err(bad(format!("expected header `{HEADER}`")));
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", fields.len())));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad path id `{}`", fields[0])))?;
            let index: usize = fields[1]
                .parse()
                .map_err(|_| bad(format!("bad index `{}`", fields[1])))?;
            let mut v = [0.0; 5];
            for (slot, f) in v.iter_mut().zip(&fields[2..]) {
                *slot = f
                    .parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| bad(format!("bad number `{f}`")))?;
            }
            let chain = rows.entry(id).or_default();
            if index != chain.len() {
                return Err(bad(format!(
                    "path {id}: index {index} out of sequence, expected {}",
                    chain.len()
                )));
            }
            chain.push((StgVector::new(v[0], v[1], v[2]), Vec2::new(v[3], v[4])));
        }

        let format = format.ok_or(TrajectoryError::Missing("format"))?;
        if format != TRAJECTORY_FORMAT {
            return Err(TrajectoryError::Format(format));
        }
        let agent_radius = agent_radius.ok_or(TrajectoryError::Missing("agent_radius"))?;
        let inflation = inflation.ok_or(TrajectoryError::Missing("inflation"))?;
        let params = StgParams {
            tau: tau.ok_or(TrajectoryError::Missing("tau"))?,
            radius: inflation * agent_radius,
            step_margin: step_margin.ok_or(TrajectoryError::Missing("step_margin"))?,
        };
        let mut paths = Vec::new();
        for (id, waypoints) in rows {
            let h = headers.get(&id).cloned().unwrap_or_default();
            let mut path = Path::from_waypoints(PathId(id), h.kind, params.radius, waypoints);
            path.accel_bound = h.accel;
            path.priority = h.priority;
            path.rigidity = h.rigidity;
            paths.push(path);
        }
        Ok(Self {
            agent_radius,
            inflation,
            params,
            paths,
        })
    }
}

#[derive(Debug, Clone)]
struct PathHeader {
    kind: PathKind,
    accel: f64,
    priority: f64,
    rigidity: f64,
}

impl Default for PathHeader {
    fn default() -> Self {
        Self {
            kind: PathKind::Agent,
            accel: f64::INFINITY,
            priority: 1.0,
            rigidity: 1.0,
        }
    }
}

impl PathHeader {
    /// `path <id> kind <kind> [accel <a> priority <p> rigidity <g>]`
    fn parse(words: &[&str]) -> Result<(u32, Self), String> {
        let id = words
            .get(1)
            .and_then(|w| w.parse().ok())
            .ok_or("path metadata needs an id")?;
        let mut h = PathHeader::default();
        for pair in words[2..].chunks(2) {
            let [key, value] = pair else {
                return Err(format!("`{}` needs a value", pair[0]));
            };
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| format!("bad number `{value}`"))
            };
            match *key {
                "kind" => {
                    h.kind = match *value {
                        "agent" => PathKind::Agent,
                        "static_obstacle" => PathKind::StaticObstacle,
                        "dynamic_obstacle" => PathKind::DynamicObstacle,
                        "non_connected_vehicle" => PathKind::NonConnectedVehicle,
                        other => return Err(format!("unknown path kind `{other}`")),
                    }
                }
                "accel" => h.accel = num()?,
                "priority" => h.priority = num()?,
                "rigidity" => h.rigidity = num()?,
                other => return Err(format!("unknown path key `{other}`")),
            }
        }
        Ok((id, h))
    }
}

/// Positions sampled at `hz` as `path_id,t,x,y` rows. Moving paths are
/// sampled over their own time window, static obstacles over the window of
/// everything else.
pub fn track_csv(paths: &[Path], hz: f64) -> String {
    assert!(hz > 0.0, "sampling rate must be positive");
    let end = paths
        .iter()
        .filter(|p| p.kind() != PathKind::StaticObstacle)
        .filter_map(|p| p.time_window().map(|w| w.1))
        .fold(0.0, f64::max);
    let mut out = String::from("path_id,t,x,y\n");
    for p in paths {
        let Some((lo, hi)) = p.time_window() else {
            continue;
        };
        let (lo, hi) = if p.kind() == PathKind::StaticObstacle {
            (0.0, end)
        } else {
            (lo, hi)
        };
        let first = (lo * hz).ceil() as i64;
        let last = (hi * hz).floor() as i64;
        for k in first..=last {
            let t = k as f64 / hz;
            let pos = if p.kind() == PathKind::StaticObstacle {
                p.spheres()[0].center.spatial()
            } else {
                match p.interpolate(t) {
                    Ok(v) => v,
                    Err(_) => continue,
                }
            };
            let _ = writeln!(out, "{},{},{},{}", p.id(), t, pos.x, pos.y);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::inflation_factor;
    use crate::path::Agent;
    use crate::planner::{plan, Field, Obstacle, PlanRequest, PlannerConfig};

    fn result() -> PlanResult {
        let agent = |id: u32, s: (f64, f64), g: (f64, f64)| Agent {
            id: PathId(id),
            start: Vec2::new(s.0, s.1),
            goal: Vec2::new(g.0, g.1),
            radius: 3.5,
            accel_bound: 3.0,
            priority: if id == 1 { 100.0 } else { 1.0 },
            rigidity: 10.0,
            initial_velocity: Vec2::ZERO,
            lane_locked: Vec::new(),
        };
        plan(&PlanRequest {
            agents: vec![agent(1, (0.0, 0.0), (20.0, 0.0)), agent(2, (0.0, 20.0), (20.0, 20.0))],
            obstacles: vec![Obstacle::Static {
                position: Vec2::new(10.0, 10.0),
            }],
            field: Field {
                width: 20.0,
                height: 20.0,
            },
            config: PlannerConfig::default(),
        })
        .unwrap()
    }

    #[test]
    fn round_trips_exactly() {
        let set = TrajectorySet::from_result(&result());
        assert!((set.inflation - inflation_factor()).abs() < 1e-12);
        let text = set.to_text();
        let back = TrajectorySet::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.paths.len(), 3);
        for (a, b) in set.paths.iter().zip(&back.paths) {
            assert_eq!(a.id(), b.id());
            assert_eq!(a.kind(), b.kind());
            let ca: Vec<_> = a.spheres().iter().map(|s| s.center).collect();
            let cb: Vec<_> = b.spheres().iter().map(|s| s.center).collect();
            assert_eq!(ca, cb);
            assert_eq!(a.velocities(), b.velocities());
        }
    }

    #[test]
    fn rejects_broken_files() {
        let text = TrajectorySet::from_result(&result()).to_text();
        let no_format = text.replace("# format 1\n", "");
        assert_eq!(
            TrajectorySet::parse(&no_format),
            Err(TrajectoryError::Missing("format"))
        );
        let bad_row = text.replacen("1,1,", "1,7,", 1);
        assert!(matches!(
            TrajectorySet::parse(&bad_row),
            Err(TrajectoryError::Line { .. })
        ));
        let bad_header = text.replace(HEADER, "id,x,y");
        assert!(TrajectorySet::parse(&bad_header).is_err());
        let bad_number = text.replacen("1,0,0,", "1,0,zero,", 1);
        let err = TrajectorySet::parse(&bad_number).unwrap_err().to_string();
        assert!(err.contains("zero"), "{err}");
    }

    #[test]
    fn track_has_one_row_per_tick() {
        let r = result();
        let csv = track_csv(&r.paths, 100.0);
        let agent_rows = csv.lines().filter(|l| l.starts_with("1,")).count();
        let end = r.paths.iter().find(|p| p.id() == PathId(1)).unwrap().last().unwrap().center.t;
        assert_eq!(agent_rows, (end * 100.0).floor() as usize + 1);
        assert!(csv.lines().any(|l| l.starts_with("1000,0,10,10")));
    }
}
