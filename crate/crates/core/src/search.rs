//! Depth-first conflict search.
//!
//! Calling a sphere shifts its path by a displacement vector on a snapshot
//! of the grid, queries the pairs that remain, and recursively calls either
//! member of every pair. A branch that empties the grid of pairs is a
//! solution; a sphere already called higher up the same branch is never
//! called again. Every solution found is scored by priority-weighted
//! displacement and the cheapest is replayed onto the grid.
//!
//! [`resolve_all`] explores by iterative deepening and skips branches
//! already costlier than the best solution in hand; [`resolve`] runs the
//! plain exhaustive recursion.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use thiserror::Error;

use crate::geometry::{
    compute_dv_nudged, spheres_intersect, GeometryError, PathId, Sphere, SphereRef, StgVector,
    Vec2,
};
use crate::stg_index::{GridError, PairMember, SpaceTimeGrid, SpherePair};

/// Cap on successive pushes that clear a mover of frozen spheres.
const CLEARING_PASSES: usize = 32;

/// Deepening rounds run past the first depth that yields a solution.
const DEPTH_SLACK: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SearchBudget {
    pub max_depth: usize,
    pub max_solutions: usize,
    pub max_nodes: usize,
}

impl SearchBudget {
    pub const DEFAULT_MAX_SOLUTIONS: usize = 64;
    pub const DEFAULT_MAX_NODES: usize = 100_000;

    /// Default budget for a grid holding `spheres` spheres.
    pub fn for_sphere_count(spheres: usize) -> Self {
        Self {
            max_depth: spheres.max(1),
            max_solutions: Self::DEFAULT_MAX_SOLUTIONS,
            max_nodes: Self::DEFAULT_MAX_NODES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Overrides the sphere-count-derived default budget.
    pub budget: Option<SearchBudget>,
    /// Rotation applied to displacement vectors of head-on pairs.
    pub bias_angle: f64,
    /// Two headings within this angle of exactly opposite count as head-on.
    pub head_on_tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: None,
            bias_angle: 0.1,
            head_on_tolerance: 5f64.to_radians(),
        }
    }
}

/// One translation in a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub sphere: SphereRef,
    /// Waypoint index of the sphere when it was called.
    pub index: usize,
    pub delta: StgVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub steps: Vec<Step>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchDiagnostics {
    pub pairs: Vec<SpherePair>,
    pub nodes: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("no displacement sequence resolves the conflict ({} pairs, {} nodes)", .0.pairs.len(), .0.nodes)]
    Infeasible(SearchDiagnostics),
    #[error("search budget exhausted before any solution ({} pairs, {} nodes)", .0.pairs.len(), .0.nodes)]
    BudgetExhausted(SearchDiagnostics),
    #[error("replayed solution left {0} pairs")]
    ReplayMismatch(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Result of one [`resolve_all`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub solution: Option<Solution>,
    pub nodes: usize,
    pub candidates: usize,
}

/// Priority-weighted displacement `Σ φ·‖v‖` of a step sequence.
pub fn score(steps: &[Step], priority: impl Fn(PathId) -> f64, tau: f64) -> f64 {
    steps
        .iter()
        .map(|s| priority(s.sphere.path) * s.delta.norm(tau))
        .sum()
}

/// Output of one call; `solutions` hold steps deepest-first.
pub struct Collected {
    pub solutions: Vec<Vec<Step>>,
    pub incomplete: bool,
    pub nodes: usize,
}

struct Search<'a> {
    config: &'a SearchConfig,
    budget: SearchBudget,
    nodes: usize,
    found: usize,
    exhausted: bool,
    /// Cost of the cheapest complete solution seen so far.
    best: f64,
    /// Skip branches already costlier than `best`.
    prune: bool,
    /// Depth cap of the current deepening round.
    limit: usize,
    /// Some branch stopped at `limit` rather than at a result.
    cut: bool,
}

impl Search<'_> {
    fn new(config: &SearchConfig, budget: SearchBudget) -> Search<'_> {
        Search {
            config,
            budget,
            nodes: 0,
            found: 0,
            exhausted: false,
            best: f64::INFINITY,
            prune: true,
            limit: budget.max_depth,
            cut: false,
        }
    }

    fn full(&self) -> bool {
        self.found >= self.budget.max_solutions
    }

    /// Candidate calls for every pair in `query`, cheapest first by their
    /// tangent displacement. Costs only grow along a branch, so trying cheap
    /// moves first tightens the bound that prunes the rest. The returned
    /// deltas still need [`clear_frozen`].
    fn moves(
        &self,
        grid: &SpaceTimeGrid,
        query: &[SpherePair],
    ) -> Vec<(f64, PairMember, StgVector)> {
        let tau = grid.params().tau;
        let mut out = Vec::new();
        for pair in query {
            for (mover, anchor) in callable(grid, pair) {
                let Ok(delta) = tangent_delta(grid, mover, anchor, self.config) else {
                    continue;
                };
                out.push((step_cost(grid, mover, delta, tau), mover, delta));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    fn call(
        &mut self,
        grid: &SpaceTimeGrid,
        member: PairMember,
        delta: StgVector,
        visited: &BTreeSet<SphereRef>,
        depth: usize,
        prefix: f64,
    ) -> Vec<Vec<Step>> {
        let target = member.sphere_ref();
        if visited.contains(&target) {
            return Vec::new();
        }
        let cost = prefix + step_cost(grid, member, delta, grid.params().tau);
        if self.prune && cost > self.best {
            return Vec::new();
        }
        if self.nodes >= self.budget.max_nodes || depth > self.budget.max_depth {
            self.exhausted = true;
            return Vec::new();
        }
        if depth > self.limit {
            self.cut = true;
            return Vec::new();
        }
        self.nodes += 1;
        let mut visited = visited.clone();
        visited.insert(target);

        let mut next = grid.snapshot();
        let dv = crate::geometry::DisplacementVector { target, delta };
        if next.shift(&dv).is_err() {
            return Vec::new();
        }
        let query = next.query_pairs();
        if !query.is_empty() && depth >= self.limit {
            self.cut = true;
            return Vec::new();
        }
        log::trace!(
            "{:indent$}call {}[{}] by ({:.2}, {:.2}, {:.2}): {}",
            "",
            target.path,
            member.index,
            delta.x,
            delta.y,
            delta.t,
            crate::planner::describe_pairs(&query),
            indent = depth * 2
        );
        let mut collected = Vec::new();
        let mut feasible = false;
        for (_, mover, delta) in self.moves(&next, &query) {
            if self.full() {
                break;
            }
            let delta = clear_frozen(&next, mover, delta);
            let sub = self.call(&next, mover, delta, &visited, depth + 1, cost);
            feasible |= !sub.is_empty();
            collected.extend(sub);
        }
        if !feasible && !query.is_empty() {
            return Vec::new();
        }
        if collected.is_empty() {
            collected.push(Vec::new());
            self.found += 1;
            self.best = self.best.min(cost);
        }
        let step = Step {
            sphere: target,
            index: member.index,
            delta,
        };
        for sol in &mut collected {
            sol.push(step);
        }
        collected
    }
}

fn step_cost(grid: &SpaceTimeGrid, member: PairMember, delta: StgVector, tau: f64) -> f64 {
    let priority = grid.path(member.sphere_ref().path).map_or(1.0, |p| p.priority);
    priority * delta.norm(tau)
}

/// Members of `pair` that may be called, each with the partner it is pushed
/// away from. Frozen spheres are never called.
fn callable(grid: &SpaceTimeGrid, pair: &SpherePair) -> Vec<(PairMember, PairMember)> {
    let frozen = |m: &PairMember| {
        grid.sphere(m.sphere_ref())
            .is_none_or(|s| s.fully_immutable())
    };
    let mut out = Vec::with_capacity(2);
    if !frozen(&pair.first) {
        out.push((pair.first, pair.second));
    }
    if !frozen(&pair.second) {
        out.push((pair.second, pair.first));
    }
    out
}

/// Spatial heading of a path at one of its waypoints.
fn heading(grid: &SpaceTimeGrid, m: PairMember) -> Option<Vec2> {
    let path = grid.path(m.path)?;
    let s = path.spheres();
    let k = m.index;
    let seg = if k + 1 < s.len() {
        s[k + 1].center.spatial() - s[k].center.spatial()
    } else if k > 0 {
        s[k].center.spatial() - s[k - 1].center.spatial()
    } else {
        return None;
    };
    (seg.norm() > 0.0).then(|| seg.normalized())
}

/// Displacement of `mover` away from `anchor`, with the head-on bias applied
/// when the two paths run at each other.
pub fn pair_delta(
    grid: &SpaceTimeGrid,
    mover: PairMember,
    anchor: PairMember,
    config: &SearchConfig,
) -> Result<StgVector, GeometryError> {
    let delta = tangent_delta(grid, mover, anchor, config)?;
    Ok(clear_frozen(grid, mover, delta))
}

/// The biased tangent displacement of `mover` off `anchor`, before frozen
/// spheres are cleared.
fn tangent_delta(
    grid: &SpaceTimeGrid,
    mover: PairMember,
    anchor: PairMember,
    config: &SearchConfig,
) -> Result<StgVector, GeometryError> {
    let (Some(m), Some(a)) = (grid.sphere(mover.sphere_ref()), grid.sphere(anchor.sphere_ref()))
    else {
        return Err(GeometryError::ImmutableMover(mover.sphere_ref()));
    };
    let bias = match (heading(grid, mover), heading(grid, anchor)) {
        (Some(h1), Some(h2)) if config.bias_angle != 0.0 => {
            let cos = h1.dot(h2).clamp(-1.0, 1.0);
            if cos.acos() >= std::f64::consts::PI - config.head_on_tolerance {
                config.bias_angle
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    Ok(compute_dv_nudged(m, a, bias, grid.params().tau)?.delta)
}

/// Extends `delta` until the shifted mover is clear of every frozen sphere.
///
/// Clearing one frozen sphere often lands the mover inside another (the next
/// sphere along an obstacle, or an agent's start), or smoothing pulls it back
/// in time. Frozen spheres are never called and a moved sphere cannot be
/// called again on the same branch, so without this the branch dies. The
/// shifted sphere is pushed off its deepest frozen overlap until clear.
fn clear_frozen(grid: &SpaceTimeGrid, mover: PairMember, mut delta: StgVector) -> StgVector {
    let params = *grid.params();
    let Some(path) = grid.path(mover.path) else {
        return delta;
    };
    let frozen: Vec<&Sphere> = grid
        .paths()
        .filter(|p| p.id() != mover.path)
        .flat_map(|p| p.spheres())
        .filter(|s| s.fully_immutable())
        .collect();
    for _ in 0..CLEARING_PASSES {
        let Ok(shifted) = path.shift_at(mover.index, delta, &params) else {
            break;
        };
        let Some(k) = shifted.position_of(mover.serial) else {
            break;
        };
        let moved = shifted.spheres()[k];
        let deepest = frozen
            .iter()
            .filter(|o| spheres_intersect(&moved, o, params.tau))
            .min_by(|a, b| {
                (moved.center - a.center)
                    .norm(params.tau)
                    .total_cmp(&(moved.center - b.center).norm(params.tau))
            });
        let Some(o) = deepest else { break };
        match compute_dv_nudged(&moved, o, 0.0, params.tau) {
            Ok(dv) => delta += dv.delta,
            Err(_) => break,
        }
    }
    delta
}

/// Runs the recursive search from calling `member` with `delta`, collecting
/// every solution reachable within the budget. Returned solutions list their
/// steps in application order, starting with the seed.
pub fn resolve(
    grid: &SpaceTimeGrid,
    member: PairMember,
    delta: StgVector,
    visited: &BTreeSet<SphereRef>,
    config: &SearchConfig,
) -> Collected {
    let budget = config
        .budget
        .unwrap_or_else(|| SearchBudget::for_sphere_count(grid.sphere_count()));
    let mut search = Search::new(config, budget);
    search.prune = false;
    let mut solutions = search.call(grid, member, delta, visited, 1, 0.0);
    for s in &mut solutions {
        s.reverse();
    }
    Collected {
        solutions,
        incomplete: search.exhausted,
        nodes: search.nodes,
    }
}

/// Resolves every conflict in the grid, applying the cheapest solution.
///
/// Each member of each pair present on entry seeds a search with a fresh
/// visited set; all solutions are pooled and ranked by cost, then by step
/// count, then by the `(path, index)` of their first step. The depth cap
/// grows one call at a time and stops `DEPTH_SLACK` levels past the first
/// depth that yields a solution, so the result is the cheapest solution
/// among the shortest ones rather than over every depth.
pub fn resolve_all(
    grid: &mut SpaceTimeGrid,
    config: &SearchConfig,
) -> Result<Resolution, SearchError> {
    let query = grid.query_pairs();
    if query.is_empty() {
        return Ok(Resolution {
            solution: None,
            nodes: 0,
            candidates: 0,
        });
    }
    let diagnostics = |nodes| SearchDiagnostics {
        pairs: query.clone(),
        nodes,
    };
    if query.iter().any(|p| callable(grid, p).is_empty()) {
        return Err(SearchError::Infeasible(diagnostics(0)));
    }

    let budget = config
        .budget
        .unwrap_or_else(|| SearchBudget::for_sphere_count(grid.sphere_count()));
    let mut search = Search::new(config, budget);
    let empty = BTreeSet::new();
    let seeds = search.moves(grid, &query);
    let mut pool: Vec<Vec<Step>> = Vec::new();
    // Iterative deepening: shallow solutions come first and bound the cost
    // of every deeper branch. Deepening stops `DEPTH_SLACK` rounds after the
    // first solution, since a longer sequence rarely displaces less.
    let mut first_hit = None;
    for limit in 1..=budget.max_depth {
        search.limit = limit;
        search.cut = false;
        search.found = 0;
        for &(_, mover, delta) in &seeds {
            if search.full() {
                break;
            }
            let delta = clear_frozen(grid, mover, delta);
            for mut found in search.call(grid, mover, delta, &empty, 1, 0.0) {
                found.reverse();
                if !pool.contains(&found) {
                    pool.push(found);
                }
            }
        }
        if !pool.is_empty() && first_hit.is_none() {
            first_hit = Some(limit);
        }
        let settled = first_hit.is_some_and(|d| limit >= d + DEPTH_SLACK);
        if settled || !search.cut || search.exhausted || search.full() {
            break;
        }
    }
    if pool.is_empty() {
        return Err(if search.exhausted {
            SearchError::BudgetExhausted(diagnostics(search.nodes))
        } else {
            SearchError::Infeasible(diagnostics(search.nodes))
        });
    }

    let tau = grid.params().tau;
    let priority = |id: PathId| grid.path(id).map_or(1.0, |p| p.priority);
    let candidates = pool.len();
    let best = pool
        .into_iter()
        .map(|steps| {
            let cost = score(&steps, priority, tau);
            Solution { steps, cost }
        })
        .min_by(compare_solutions)
        .expect("pool is non-empty");

    replay(grid, &best.steps)?;
    let left = grid.query_pairs().len();
    if left != 0 {
        return Err(SearchError::ReplayMismatch(left));
    }
    Ok(Resolution {
        solution: Some(best),
        nodes: search.nodes,
        candidates,
    })
}

fn compare_solutions(a: &Solution, b: &Solution) -> Ordering {
    let first = |s: &Solution| s.steps.first().map(|st| (st.sphere.path, st.index));
    a.cost
        .total_cmp(&b.cost)
        .then(a.steps.len().cmp(&b.steps.len()))
        .then(first(a).cmp(&first(b)))
}

/// Applies the steps of a solution, in order, as path shifts.
pub fn replay(grid: &mut SpaceTimeGrid, steps: &[Step]) -> Result<(), GridError> {
    for step in steps {
        grid.shift(&crate::geometry::DisplacementVector {
            target: step.sphere,
            delta: step.delta,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mutability;
    use crate::path::{Path, PathKind, StgParams};

    fn params() -> StgParams {
        StgParams {
            tau: 1.0,
            radius: 2.0,
            step_margin: 0.05,
        }
    }

    fn chain(id: u32, kind: PathKind, pts: &[(f64, f64, f64)], priority: f64) -> Path {
        let mut p = Path::new(PathId(id), kind, 2.0);
        p.accel_bound = 50.0;
        p.rigidity = 10.0;
        p.priority = priority;
        for &(x, y, t) in pts {
            p.append(StgVector::new(x, y, t), Mutability::Free);
        }
        p
    }

    #[test]
    fn score_examples() {
        let step = |path, delta| Step {
            sphere: SphereRef { path: PathId(path), serial: 0 },
            index: 0,
            delta,
        };
        let prio = |id: PathId| if id.0 == 1 { 100.0 } else { 1.0 };
        assert_eq!(score(&[], prio, 1.0), 0.0);
        assert_eq!(score(&[step(1, StgVector::new(2.0, 0.0, 0.0))], prio, 1.0), 200.0);
        let s = [
            step(1, StgVector::new(1.0, 0.0, 0.0)),
            step(2, StgVector::new(3.0, 4.0, 0.0)),
        ];
        assert_eq!(score(&s, prio, 1.0), 105.0);
    }

    #[test]
    fn conflict_free_grid_is_untouched() {
        let mut g = SpaceTimeGrid::new(params());
        g.insert_path(chain(1, PathKind::Agent, &[(0.0, 0.0, 0.0)], 1.0)).unwrap();
        g.insert_path(chain(2, PathKind::Agent, &[(10.0, 0.0, 0.0)], 1.0)).unwrap();
        let rev = g.revision();
        let r = resolve_all(&mut g, &SearchConfig::default()).unwrap();
        assert!(r.solution.is_none());
        assert_eq!(g.revision(), rev);
    }

    #[test]
    fn only_the_mutable_sphere_moves() {
        let mut g = SpaceTimeGrid::new(params());
        g.insert_path(chain(1, PathKind::StaticObstacle, &[(0.0, 0.0, 0.0)], 1.0))
            .unwrap();
        g.insert_path(chain(2, PathKind::Agent, &[(-7.5, 0.0, 0.0), (-4.0, 0.0, 1.0), (-1.0, 1.0, 2.0)], 1.0))
            .unwrap();
        let r = resolve_all(&mut g, &SearchConfig::default()).unwrap();
        let sol = r.solution.unwrap();
        assert!(sol.steps.iter().all(|s| s.sphere.path == PathId(2)));
        assert!(g.query_pairs().is_empty());
    }

    #[test]
    fn visited_sphere_yields_nothing() {
        let mut g = SpaceTimeGrid::new(params());
        g.insert_path(chain(1, PathKind::Agent, &[(0.0, 0.0, 0.0), (3.0, 0.0, 1.0)], 1.0)).unwrap();
        let member = PairMember { path: PathId(1), index: 1, serial: 1 };
        let visited: BTreeSet<_> = [member.sphere_ref()].into_iter().collect();
        let out = resolve(&g, member, StgVector::ZERO, &visited, &SearchConfig::default());
        assert!(out.solutions.is_empty());
        let out = resolve(&g, member, StgVector::ZERO, &BTreeSet::new(), &SearchConfig::default());
        assert_eq!(out.solutions.len(), 1);
        assert_eq!(out.solutions[0].len(), 1);
        assert_eq!(out.solutions[0][0].sphere, member.sphere_ref());
    }

    #[test]
    fn frozen_obstacle_pairs_are_infeasible() {
        let mut g = SpaceTimeGrid::new(params());
        g.insert_path(chain(1, PathKind::StaticObstacle, &[(0.0, 0.0, 0.0)], 1.0)).unwrap();
        g.insert_path(chain(2, PathKind::StaticObstacle, &[(1.0, 0.0, 0.0)], 1.0)).unwrap();
        match resolve_all(&mut g, &SearchConfig::default()) {
            Err(SearchError::Infeasible(d)) => assert_eq!(d.pairs.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tiny_budget_is_reported() {
        let mut g = SpaceTimeGrid::new(params());
        g.insert_path(chain(1, PathKind::Agent, &[(0.0, 0.0, 0.0), (0.0, 3.0, 1.0), (0.0, 6.0, 2.0)], 1.0))
            .unwrap();
        g.insert_path(chain(2, PathKind::Agent, &[(-6.0, 3.0, 0.0), (-3.0, 3.0, 1.0), (0.0, 3.5, 1.5)], 1.0))
            .unwrap();
        assert!(!g.query_pairs().is_empty());
        let cfg = SearchConfig {
            budget: Some(SearchBudget { max_depth: 1, max_solutions: 1, max_nodes: 0 }),
            ..SearchConfig::default()
        };
        assert!(matches!(
            resolve_all(&mut g.clone(), &cfg),
            Err(SearchError::BudgetExhausted(_))
        ));
        let r = resolve_all(&mut g, &SearchConfig::default()).unwrap();
        assert!(r.solution.is_some());
        assert!(g.query_pairs().is_empty());
    }
}
