//! Sphere-chain trajectories.
//!
//! A [`Path`] is an ordered chain of spheres with one velocity per waypoint.
//! Consecutive spheres must overlap (connectivity), spheres two apart must
//! not (succinctness), and each time gap must be at least the minimum
//! traversal time allowed by the acceleration bound.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    DisplacementVector, Mutability, PathId, Sphere, SphereRef, StgVector, Vec2, TANGENCY_EPS,
};

/// Smallest time gap smoothing leaves between two waypoints that share a
/// spatial location.
pub const MIN_TIME_GAP: f64 = 1e-6;

/// Slack when comparing a time gap against the kinematic minimum.
pub const KINEMATIC_EPS: f64 = 1e-9;

const MAX_REPAIR_PASSES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("acceleration bound must be positive, got {0}")]
    NonPositiveAccel(f64),
    #[error("waypoint index {index} out of range for path {path} of length {len}")]
    IndexOutOfRange { path: PathId, index: usize, len: usize },
    #[error("sphere {0} is not part of its path")]
    UnknownSphere(SphereRef),
    #[error("sphere {0} is fully immutable")]
    ImmutableTarget(SphereRef),
    #[error("time {t} outside path window [{start}, {end}]")]
    OutOfTimeRange { t: f64, start: f64, end: f64 },
    #[error("path {0} has no waypoints")]
    Empty(PathId),
    #[error("chain repair on path {0} did not settle")]
    RepairDiverged(PathId),
}

/// Parameters shared by every chain in one space-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StgParams {
    /// Meters per second of time-axis equivalence.
    pub tau: f64,
    /// Working sphere radius `R = λ·r`.
    pub radius: f64,
    /// Fractional margin below `2R` used when laying out new links.
    pub step_margin: f64,
}

impl StgParams {
    /// Center distance at which two spheres are tangent.
    pub fn reach(&self) -> f64 {
        2.0 * self.radius
    }

    /// Target length of a freshly laid link between consecutive spheres.
    pub fn link_length(&self) -> f64 {
        2.0 * self.radius * (1.0 - self.step_margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Agent,
    StaticObstacle,
    DynamicObstacle,
    NonConnectedVehicle,
}

impl PathKind {
    pub fn is_obstacle(self) -> bool {
        self != PathKind::Agent
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Agent => "agent",
            PathKind::StaticObstacle => "static_obstacle",
            PathKind::DynamicObstacle => "dynamic_obstacle",
            PathKind::NonConnectedVehicle => "non_connected_vehicle",
        }
    }
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: PathId,
    pub start: Vec2,
    pub goal: Vec2,
    /// Unscaled body radius `r`.
    pub radius: f64,
    pub accel_bound: f64,
    pub priority: f64,
    pub rigidity: f64,
    #[serde(default)]
    pub initial_velocity: Vec2,
    /// Waypoint index ranges `[from, to)` that may only move in time.
    #[serde(default)]
    pub lane_locked: Vec<(usize, usize)>,
}

impl Agent {
    pub fn route_length(&self) -> f64 {
        (self.goal - self.start).norm()
    }

    pub fn is_lane_locked(&self, index: usize) -> bool {
        self.lane_locked
            .iter()
            .any(|&(from, to)| index >= from && index < to)
    }
}

/// Minimum time to cover `sigma` from velocity `omega` under `accel`.
///
/// Only the component of `omega` along `sigma` counts, clamped at zero when
/// it points backwards.
pub fn min_timestep(sigma: Vec2, omega: Vec2, accel: f64) -> Result<f64, PathError> {
    if !(accel > 0.0 && accel.is_finite()) {
        return Err(PathError::NonPositiveAccel(accel));
    }
    let s = sigma.norm();
    if s == 0.0 {
        return Ok(0.0);
    }
    let w = (omega.dot(sigma) / s).max(0.0);
    // (-w + sqrt(w² + 2as)) / a, rationalised to avoid cancellation at high w.
    Ok(2.0 * s / (w + (w * w + 2.0 * accel * s).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    /// Spheres `index` and `index + 1` do not overlap.
    Connectivity { index: usize, distance: f64 },
    /// Spheres `index` and `index + 2` are within one link of each other.
    Succinctness { index: usize, distance: f64 },
    /// Time does not strictly increase from `index` to `index + 1`.
    TimeOrder { index: usize },
    /// The gap from `index` to `index + 1` is shorter than the acceleration
    /// bound allows.
    Kinematics { index: usize, gap: f64, required: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Connectivity { index, distance } => write!(
                f,
                "connectivity ({}, {}): center distance {distance:.6}",
                index,
                index + 1
            ),
            Violation::Succinctness { index, distance } => write!(
                f,
                "succinctness ({}, {}): center distance {distance:.6}",
                index,
                index + 2
            ),
            Violation::TimeOrder { index } => {
                write!(f, "time order ({}, {})", index, index + 1)
            }
            Violation::Kinematics {
                index,
                gap,
                required,
            } => write!(
                f,
                "kinematics ({}, {}): gap {gap:.6} s < required {required:.6} s",
                index,
                index + 1
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    id: PathId,
    kind: PathKind,
    radius: f64,
    spheres: Vec<Sphere>,
    velocities: Vec<Vec2>,
    pub priority: f64,
    pub rigidity: f64,
    pub accel_bound: f64,
    converged: bool,
    next_serial: u32,
}

impl Path {
    /// Empty chain. `radius` is the working radius of its spheres.
    pub fn new(id: PathId, kind: PathKind, radius: f64) -> Self {
        Self {
            id,
            kind,
            radius,
            spheres: Vec::new(),
            velocities: Vec::new(),
            priority: 1.0,
            rigidity: 1.0,
            accel_bound: f64::INFINITY,
            converged: false,
            next_serial: 0,
        }
    }

    /// Chain holding only the agent's start sphere at `t = 0`.
    pub fn for_agent(agent: &Agent, params: &StgParams) -> Result<Self, PathError> {
        if !(agent.accel_bound > 0.0 && agent.accel_bound.is_finite()) {
            return Err(PathError::NonPositiveAccel(agent.accel_bound));
        }
        let mut path = Path::new(agent.id, PathKind::Agent, params.radius);
        path.priority = agent.priority;
        path.rigidity = agent.rigidity;
        path.accel_bound = agent.accel_bound;
        path.push_raw(
            StgVector::from_spatial(agent.start, 0.0),
            agent.initial_velocity,
            Mutability::Frozen,
        );
        if agent.route_length() == 0.0 {
            path.converged = true;
        }
        Ok(path)
    }

    /// Chain from explicit waypoints and velocities, as read back from a
    /// trajectory file. Obstacle chains are frozen throughout; agent chains
    /// freeze their first sphere.
    pub fn from_waypoints(
        id: PathId,
        kind: PathKind,
        radius: f64,
        waypoints: impl IntoIterator<Item = (StgVector, Vec2)>,
    ) -> Self {
        let mut path = Path::new(id, kind, radius);
        for (center, velocity) in waypoints {
            path.push_raw(center, velocity, Mutability::Free);
        }
        path
    }

    pub fn id(&self) -> PathId {
        self.id
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    pub fn velocities(&self) -> &[Vec2] {
        &self.velocities
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    pub fn last(&self) -> Option<&Sphere> {
        self.spheres.last()
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn sphere(&self, index: usize) -> Result<&Sphere, PathError> {
        self.spheres.get(index).ok_or(PathError::IndexOutOfRange {
            path: self.id,
            index,
            len: self.spheres.len(),
        })
    }

    pub fn position_of(&self, serial: u32) -> Option<usize> {
        self.spheres.iter().position(|s| s.serial == serial)
    }

    /// Time window `[first, last]` covered by the chain.
    pub fn time_window(&self) -> Option<(f64, f64)> {
        Some((self.spheres.first()?.center.t, self.spheres.last()?.center.t))
    }

    /// Spatial length of the polyline through the sphere centers.
    pub fn spatial_length(&self) -> f64 {
        self.spheres
            .windows(2)
            .map(|w| (w[1].center.spatial() - w[0].center.spatial()).norm())
            .sum()
    }

    /// Appends a waypoint. The first sphere of any chain and every sphere of
    /// an obstacle chain are frozen regardless of `mutability`. The velocity
    /// follows the maximum-acceleration update from the previous waypoint.
    pub fn append(&mut self, center: StgVector, mutability: Mutability) -> &Sphere {
        let velocity = match (self.spheres.last(), self.velocities.last()) {
            (Some(prev), Some(&w)) if self.accel_bound.is_finite() => {
                let sigma = center.spatial() - prev.center.spatial();
                let dt = min_timestep(sigma, w, self.accel_bound).unwrap_or(0.0);
                w + sigma.normalized() * (self.accel_bound * dt)
            }
            _ => Vec2::ZERO,
        };
        self.push_raw(center, velocity, mutability);
        self.spheres.last().expect("just pushed")
    }

    fn push_raw(&mut self, center: StgVector, velocity: Vec2, mutability: Mutability) {
        let index = self.spheres.len();
        let mutability = if index == 0 || self.kind.is_obstacle() {
            Mutability::Frozen
        } else {
            mutability
        };
        self.spheres.push(Sphere {
            center,
            radius: self.radius,
            mutability,
            owner: self.id,
            index,
            serial: self.next_serial,
        });
        self.velocities.push(velocity);
        self.next_serial += 1;
    }

    /// Marks the chain as having reached its goal; the final sphere becomes
    /// spatially immutable.
    pub fn mark_converged(&mut self) {
        self.converged = true;
        if let Some(last) = self.spheres.last_mut() {
            if last.mutability == Mutability::Free {
                last.mutability = Mutability::TimeOnly;
            }
        }
    }

    pub fn set_mutability(&mut self, index: usize, mutability: Mutability) {
        if index == 0 || self.kind.is_obstacle() {
            return;
        }
        if let Some(s) = self.spheres.get_mut(index) {
            s.mutability = mutability;
        }
    }

    /// Piecewise-linear spatial position at time `t`.
    pub fn interpolate(&self, t: f64) -> Result<Vec2, PathError> {
        let (start, end) = self.time_window().ok_or(PathError::Empty(self.id))?;
        if !(t >= start && t <= end) {
            return Err(PathError::OutOfTimeRange { t, start, end });
        }
        // First waypoint strictly later than t.
        let hi = self.spheres.partition_point(|s| s.center.t <= t);
        if hi == 0 {
            return Ok(self.spheres[0].center.spatial());
        }
        if hi == self.spheres.len() {
            return Ok(self.spheres[hi - 1].center.spatial());
        }
        let a = self.spheres[hi - 1].center;
        let b = self.spheres[hi].center;
        let frac = (t - a.t) / (b.t - a.t);
        Ok(a.spatial() + (b.spatial() - a.spatial()) * frac)
    }

    /// Forward pass that recomputes velocities at maximum acceleration and
    /// pushes any waypoint that arrives too early to its earliest feasible
    /// time. Obstacle chains are returned unchanged; a chain without an
    /// acceleration bound only has its time order enforced.
    pub fn smooth(&self) -> Path {
        let mut p = self.clone();
        p.smooth_in_place();
        p
    }

    fn smooth_in_place(&mut self) {
        if self.kind.is_obstacle() || self.spheres.len() < 2 {
            return;
        }
        let a = self.accel_bound;
        for k in 1..self.spheres.len() {
            let prev = self.spheres[k - 1].center;
            let sigma = self.spheres[k].center.spatial() - prev.spatial();
            let w = self.velocities[k - 1];
            let dt = if a.is_finite() {
                let dt = min_timestep(sigma, w, a).expect("accel bound checked at construction");
                self.velocities[k] = w + sigma.normalized() * (a * dt);
                dt
            } else {
                0.0
            };
            if self.spheres[k].mutability != Mutability::Frozen {
                let earliest = prev.t + dt.max(MIN_TIME_GAP);
                let t = &mut self.spheres[k].center.t;
                *t = t.max(earliest);
            }
        }
    }

    /// All connectivity, succinctness, time-order and kinematics violations.
    /// Obstacle chains are checked for connectivity and time order only.
    pub fn validate(&self, params: &StgParams) -> Vec<Violation> {
        let mut out = Vec::new();
        let reach = 2.0 * self.radius;
        let s = &self.spheres;
        for k in 0..s.len().saturating_sub(1) {
            let distance = (s[k + 1].center - s[k].center).norm(params.tau);
            if distance > reach + TANGENCY_EPS {
                out.push(Violation::Connectivity { index: k, distance });
            }
            let gap = s[k + 1].center.t - s[k].center.t;
            if gap <= 0.0 {
                out.push(Violation::TimeOrder { index: k });
            } else if !self.kind.is_obstacle() {
                let sigma = s[k + 1].center.spatial() - s[k].center.spatial();
                if let Ok(required) = min_timestep(sigma, self.velocities[k], self.accel_bound) {
                    if gap < required - KINEMATIC_EPS {
                        out.push(Violation::Kinematics {
                            index: k,
                            gap,
                            required,
                        });
                    }
                }
            }
        }
        if !self.kind.is_obstacle() {
            // A waypoint is redundant once its neighbours are a single link
            // apart; repair keeps every link at most that long.
            let link = params.link_length().min(reach);
            for k in 0..s.len().saturating_sub(2) {
                let distance = (s[k + 2].center - s[k].center).norm(params.tau);
                if distance <= link {
                    out.push(Violation::Succinctness { index: k, distance });
                }
            }
        }
        out
    }

    /// Rigidity coefficient of every waypoint for a shift centered on
    /// waypoint `pivot`: `exp(-γ (d/d_max)²)`.
    pub fn shift_weights(&self, pivot: usize, tau: f64) -> Vec<f64> {
        let center = self.spheres[pivot].center;
        let dists: Vec<f64> = self
            .spheres
            .iter()
            .map(|s| (s.center - center).norm(tau))
            .collect();
        let d_max = dists.iter().cloned().fold(0.0, f64::max);
        dists
            .iter()
            .map(|&d| {
                if d_max > 0.0 {
                    (-self.rigidity * (d / d_max).powi(2)).exp()
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// Path shift for a displacement vector targeting one of this path's
    /// spheres.
    pub fn path_shift(
        &self,
        dv: &DisplacementVector,
        params: &StgParams,
    ) -> Result<Path, PathError> {
        let k = self
            .position_of(dv.target.serial)
            .filter(|_| dv.target.path == self.id)
            .ok_or(PathError::UnknownSphere(dv.target))?;
        self.shift_at(k, dv.delta, params)
    }

    /// Translates every mutable waypoint by its weighted share of `delta`,
    /// then smooths and repairs the chain.
    pub fn shift_at(
        &self,
        index: usize,
        delta: StgVector,
        params: &StgParams,
    ) -> Result<Path, PathError> {
        let target = *self.sphere(index)?;
        if target.fully_immutable() {
            return Err(PathError::ImmutableTarget(target.reference()));
        }
        let weights = self.shift_weights(index, params.tau);
        let mut out = self.clone();
        for (sphere, mu) in out.spheres.iter_mut().zip(weights) {
            let mut psi = delta * mu;
            match sphere.mutability {
                Mutability::Frozen => continue,
                Mutability::TimeOnly => {
                    psi.x = 0.0;
                    psi.y = 0.0;
                }
                Mutability::Free => {}
            }
            sphere.center += psi;
        }
        out.normalize(params)?;
        Ok(out)
    }

    /// Smooths, then alternates link splitting and redundant-sphere pruning
    /// with smoothing until the chain is connected, succinct and kinematically
    /// feasible.
    pub fn normalize(&mut self, params: &StgParams) -> Result<(), PathError> {
        if self.kind.is_obstacle() {
            return Ok(());
        }
        for _ in 0..MAX_REPAIR_PASSES {
            self.smooth_in_place();
            let split = self.split_long_links(params);
            let pruned = self.prune_redundant(params);
            if !split && !pruned {
                self.reindex();
                return Ok(());
            }
        }
        self.reindex();
        Err(PathError::RepairDiverged(self.id))
    }

    /// Subdivides links longer than the link length into evenly spaced
    /// pieces. Links up to the full `2R` keep the chain connected, but only
    /// the shorter link keeps two chains' segments apart between waypoints.
    fn split_long_links(&mut self, params: &StgParams) -> bool {
        let link = params.link_length().min(2.0 * self.radius);
        let mut changed = false;
        let mut k = 0;
        while k + 1 < self.spheres.len() {
            let a = self.spheres[k];
            let b = self.spheres[k + 1];
            let len = (b.center - a.center).norm(params.tau);
            if len > link {
                let pieces = (len / link).ceil().max(2.0) as usize;
                let mutability = if a.spatially_immutable() && b.spatially_immutable() {
                    Mutability::TimeOnly
                } else {
                    Mutability::Free
                };
                let w = self.velocities[k];
                for j in 1..pieces {
                    let frac = j as f64 / pieces as f64;
                    let center = a.center + (b.center - a.center) * frac;
                    let sphere = Sphere {
                        center,
                        radius: self.radius,
                        mutability,
                        owner: self.id,
                        index: 0,
                        serial: self.next_serial,
                    };
                    self.next_serial += 1;
                    self.spheres.insert(k + j, sphere);
                    self.velocities.insert(k + j, w);
                }
                changed = true;
                k += pieces;
            } else {
                k += 1;
            }
        }
        changed
    }

    /// Removes free interior spheres whose neighbours already overlap.
    fn prune_redundant(&mut self, params: &StgParams) -> bool {
        let link = params.link_length().min(2.0 * self.radius);
        let mut changed = false;
        let mut k = 0;
        while k + 2 < self.spheres.len() {
            let d = (self.spheres[k + 2].center - self.spheres[k].center).norm(params.tau);
            if d <= link && self.spheres[k + 1].mutability == Mutability::Free {
                self.spheres.remove(k + 1);
                self.velocities.remove(k + 1);
                changed = true;
            } else {
                k += 1;
            }
        }
        changed
    }

    fn reindex(&mut self) {
        for (i, s) in self.spheres.iter_mut().enumerate() {
            s.index = i;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const R: f64 = 3.5;

    fn params() -> StgParams {
        StgParams {
            tau: 1.0,
            radius: R,
            step_margin: 0.05,
        }
    }

    fn agent_path(points: &[(f64, f64, f64)], accel: f64) -> Path {
        let mut p = Path::new(PathId(1), PathKind::Agent, R);
        p.accel_bound = accel;
        p.rigidity = 10.0;
        for &(x, y, t) in points {
            p.push_raw(StgVector::new(x, y, t), Vec2::ZERO, Mutability::Free);
        }
        p
    }

    #[test]
    fn min_timestep_examples() {
        let dt = min_timestep(Vec2::new(6.0, 0.0), Vec2::ZERO, 3.0).unwrap();
        assert!((dt - 2.0).abs() < 1e-12);
        assert_eq!(min_timestep(Vec2::ZERO, Vec2::new(1.0, 0.0), 3.0).unwrap(), 0.0);
        let dt = min_timestep(Vec2::new(6.0, 0.0), Vec2::new(6.0, 0.0), 3.0).unwrap();
        assert!((dt - (-6.0 + 72f64.sqrt()) / 3.0).abs() < 1e-12);
        assert!((dt - 0.8284).abs() < 1e-4);
    }

    #[test]
    fn min_timestep_rejects_bad_accel() {
        assert!(matches!(
            min_timestep(Vec2::new(1.0, 0.0), Vec2::ZERO, 0.0),
            Err(PathError::NonPositiveAccel(_))
        ));
        assert!(min_timestep(Vec2::new(1.0, 0.0), Vec2::ZERO, -1.0).is_err());
    }

    #[test]
    fn opposing_velocity_is_clamped() {
        let back = min_timestep(Vec2::new(6.0, 0.0), Vec2::new(-5.0, 0.0), 3.0).unwrap();
        let rest = min_timestep(Vec2::new(6.0, 0.0), Vec2::ZERO, 3.0).unwrap();
        assert_eq!(back, rest);
    }

    #[test]
    fn smooth_examples() {
        let p = agent_path(&[(0.0, 0.0, 0.0), (6.0, 0.0, 1.0)], 3.0).smooth();
        assert!((p.spheres()[1].center.t - 2.0).abs() < 1e-12);

        let p = agent_path(
            &[(0.0, 0.0, 0.0), (6.0, 0.0, 0.0), (12.0, 0.0, 0.0), (18.0, 0.0, 0.0)],
            3.0,
        )
        .smooth();
        let t: Vec<f64> = p.spheres().iter().map(|s| s.center.t).collect();
        let gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        assert!((gaps[0] - 2.0).abs() < 1e-12);
        assert!((gaps[1] - 0.828_427_124_746_190_1).abs() < 1e-9);
        assert!(gaps[2] < gaps[1]);
        // Constant acceleration from rest: 18 m takes sqrt(12) s.
        assert!((t[3] - 12f64.sqrt()).abs() < 1e-9);

        let feasible = agent_path(&[(0.0, 0.0, 0.0), (6.0, 0.0, 5.0)], 3.0);
        assert_eq!(feasible.smooth().spheres()[1].center.t, 5.0);
    }

    #[test]
    fn validate_examples() {
        let p = agent_path(&[(0.0, 0.0, 0.0), (6.0, 0.0, 0.0), (12.0, 0.0, 0.0)], 3.0).smooth();
        assert!(p.validate(&params()).is_empty());

        let p = agent_path(&[(0.0, 0.0, 0.0), (3.0 * R, 0.0, 10.0)], 100.0);
        assert_eq!(
            p.validate(&params()),
            vec![Violation::Connectivity {
                index: 0,
                distance: (9.0 * R * R + 100.0f64).sqrt()
            }]
        );

        let p = agent_path(&[(0.0, 0.0, 0.0), (6.0, 0.0, 1.0)], 3.0);
        let v = p.validate(&params());
        assert_eq!(v.len(), 1);
        match v[0] {
            Violation::Kinematics { index, gap, required } => {
                assert_eq!(index, 0);
                assert_eq!(gap, 1.0);
                assert!((required - 2.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_flags_succinctness_and_time_order() {
        let p = agent_path(&[(0.0, 0.0, 0.0), (1.0, 0.0, 1.0), (2.0, 0.0, 2.0)], 3.0).smooth();
        assert!(p
            .validate(&params())
            .iter()
            .any(|v| matches!(v, Violation::Succinctness { index: 0, .. })));
        let p = agent_path(&[(0.0, 0.0, 1.0), (5.0, 0.0, 0.5)], 3.0);
        assert!(p
            .validate(&params())
            .contains(&Violation::TimeOrder { index: 0 }));
    }

    #[test]
    fn interpolate_examples() {
        let p = agent_path(&[(0.0, 0.0, 0.0), (4.0, 0.0, 2.0), (4.0, 4.0, 3.0)], 3.0);
        assert_eq!(p.interpolate(2.0).unwrap(), Vec2::new(4.0, 0.0));
        assert_eq!(p.interpolate(1.0).unwrap(), Vec2::new(2.0, 0.0));
        assert_eq!(p.interpolate(0.5).unwrap(), Vec2::new(1.0, 0.0));
        assert_eq!(p.interpolate(3.0).unwrap(), Vec2::new(4.0, 4.0));
        assert!(matches!(
            p.interpolate(3.5),
            Err(PathError::OutOfTimeRange { .. })
        ));
        assert!(p.interpolate(-0.1).is_err());
    }

    #[test]
    fn shift_examples() {
        let p = agent_path(
            &[(0.0, 0.0, 0.0), (6.0, 0.0, 0.0), (12.0, 0.0, 0.0), (18.0, 0.0, 0.0)],
            3.0,
        )
        .smooth();
        let w = p.shift_weights(1, 1.0);
        assert_eq!(w[1], 1.0);
        // Farthest waypoint sits at d_max.
        let far = w
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!((far - (-10f64).exp()).abs() < 1e-15);
        assert!((far - 4.54e-5).abs() < 1e-7);
        assert!(w.iter().all(|&m| m > 0.0 && m <= 1.0));

        let delta = StgVector::new(0.0, 2.0, 0.0);
        let shifted = p.shift_at(1, delta, &params()).unwrap();
        assert_eq!(shifted.spheres()[0].center, p.spheres()[0].center);
        assert!((shifted.spheres()[1].center.y - 2.0).abs() < 1e-12);

        let same = p.shift_at(2, StgVector::ZERO, &params()).unwrap();
        assert_eq!(same, p);

        assert!(matches!(
            p.shift_at(0, delta, &params()),
            Err(PathError::ImmutableTarget(_))
        ));
    }

    #[test]
    fn time_only_spheres_keep_their_position() {
        let mut p = agent_path(&[(0.0, 0.0, 0.0), (6.0, 0.0, 0.0), (12.0, 0.0, 0.0)], 3.0).smooth();
        p.mark_converged();
        let before = p.spheres()[2].center;
        let shifted = p.shift_at(1, StgVector::new(0.0, 1.0, 0.5), &params()).unwrap();
        let after = shifted.last().unwrap().center;
        assert_eq!((after.x, after.y), (before.x, before.y));
        assert!(after.t > before.t);
    }

    #[test]
    fn shift_repairs_stretched_chain() {
        let p = agent_path(
            &[(0.0, 0.0, 0.0), (6.0, 0.0, 0.0), (12.0, 0.0, 0.0), (18.0, 0.0, 0.0)],
            3.0,
        )
        .smooth();
        let shifted = p.shift_at(2, StgVector::new(0.0, 12.0, 0.0), &params()).unwrap();
        assert!(shifted.len() > p.len());
        assert!(shifted.validate(&params()).is_empty());
    }

    fn straight(len: usize, step: f64) -> Path {
        let pts: Vec<_> = (0..len).map(|i| (i as f64 * step, 0.0, 0.0)).collect();
        agent_path(&pts, 3.0).smooth()
    }

    proptest! {
        #[test]
        fn smooth_is_idempotent_and_monotone(
            pts in proptest::collection::vec((-20.0..20.0f64, -20.0..20.0f64, 0.0..10.0f64), 1..12),
            accel in 0.5..5.0f64,
        ) {
            let p = agent_path(&pts, accel);
            let once = p.smooth();
            prop_assert_eq!(once.smooth(), once.clone());
            for (a, b) in p.spheres().iter().zip(once.spheres()) {
                prop_assert!(b.center.t >= a.center.t);
            }
            for w in once.spheres().windows(2) {
                prop_assert!(w[1].center.t > w[0].center.t);
            }
            let clean = once
                .validate(&params())
                .iter()
                .all(|v| !matches!(v, Violation::Kinematics { .. } | Violation::TimeOrder { .. }));
            prop_assert!(clean);
        }

        #[test]
        fn shift_then_repair_validates(
            len in 2usize..7,
            k in 1usize..7,
            dx in -8.0..8.0f64, dy in -8.0..8.0f64, dt in -3.0..3.0f64,
            rigidity in 0.5..20.0f64,
        ) {
            let mut p = straight(len, 5.5);
            p.rigidity = rigidity;
            let k = k.min(len - 1);
            let shifted = p.shift_at(k, StgVector::new(dx, dy, dt), &params()).unwrap();
            prop_assert!(shifted.validate(&params()).is_empty(), "{:?}", shifted.validate(&params()));
            prop_assert_eq!(shifted.spheres()[0].center, p.spheres()[0].center);
        }

        #[test]
        fn straight_path_interpolates_on_segment(t in 0.0..1.0f64, gx in 1.0..30.0f64, gy in -30.0..30.0f64) {
            let goal = Vec2::new(gx, gy);
            let n = 5;
            let pts: Vec<_> = (0..n)
                .map(|i| {
                    let p = goal * (i as f64 / (n - 1) as f64);
                    (p.x, p.y, 0.0)
                })
                .collect();
            let p = agent_path(&pts, 3.0).smooth();
            let (t0, t1) = p.time_window().unwrap();
            let q = p.interpolate(t0 + t * (t1 - t0)).unwrap();
            let cross = q.x * goal.y - q.y * goal.x;
            prop_assert!(cross.abs() < 1e-9 * (1.0 + goal.norm() * goal.norm()));
            let along = q.dot(goal) / goal.norm();
            prop_assert!(along >= -1e-9 && along <= goal.norm() + 1e-9);
        }
    }
}
