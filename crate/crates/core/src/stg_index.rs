//! The space-time grid: every path in one container, plus a range-query
//! index over all sphere centers in `(x, y, τ·t)`.
//!
//! Paths are held behind `Arc`, so a snapshot copies only the path map and
//! shares path data until one side replaces a path. The index is a k-d tree
//! built over a past state of the grid. Paths changed since that build are
//! "dirty" and are matched by direct scan until enough of the grid has moved
//! to justify a rebuild.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{
    spheres_intersect, DisplacementVector, Mutability, PathId, Sphere, SphereRef, StgVector,
    TANGENCY_EPS,
};
use crate::kdtree::KdTree;
use crate::path::{Path, PathError, StgParams};

/// Fraction of spheres that must have moved since the last build before the
/// index is rebuilt.
pub const REBUILD_FRACTION: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("no path with id {0}")]
    UnknownPath(PathId),
    #[error("path {0} already exists")]
    DuplicatePath(PathId),
    #[error("upload to path {path} is disconnected: distance {distance} exceeds {reach}")]
    Disconnected { path: PathId, distance: f64, reach: f64 },
    #[error("upload to path {path} at t = {t} does not follow t = {last}")]
    TimeOrder { path: PathId, t: f64, last: f64 },
    #[error("sphere radius {found} differs from the grid radius {expected}")]
    RadiusMismatch { expected: f64, found: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
}

/// One side of an intersecting pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairMember {
    pub path: PathId,
    pub index: usize,
    pub serial: u32,
}

impl PairMember {
    fn of(s: &Sphere) -> Self {
        Self {
            path: s.owner,
            index: s.index,
            serial: s.serial,
        }
    }

    pub fn sphere_ref(&self) -> SphereRef {
        SphereRef {
            path: self.path,
            serial: self.serial,
        }
    }
}

/// Two intersecting spheres on distinct paths, `first.path < second.path`.
///
/// The derived ordering is lexicographic on
/// `(first.path, first.index, second.path, second.index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpherePair {
    pub first: PairMember,
    pub second: PairMember,
}

impl SpherePair {
    fn new(a: &Sphere, b: &Sphere) -> Self {
        let (a, b) = if a.owner < b.owner { (a, b) } else { (b, a) };
        Self {
            first: PairMember::of(a),
            second: PairMember::of(b),
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    path: Arc<Path>,
    version: u64,
}

#[derive(Debug, Default)]
struct IndexState {
    tree: KdTree,
    /// Tree point id to `(path, waypoint index)` at build time.
    entries: Vec<(PathId, usize)>,
    versions: BTreeMap<PathId, u64>,
    clean_pairs: Vec<SpherePair>,
}

#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    params: StgParams,
    paths: BTreeMap<PathId, Slot>,
    index: Arc<IndexState>,
    next_version: u64,
    revision: u64,
}

impl SpaceTimeGrid {
    pub fn new(params: StgParams) -> Self {
        Self {
            params,
            paths: BTreeMap::new(),
            index: Arc::new(IndexState::default()),
            next_version: 0,
            revision: 0,
        }
    }

    pub fn params(&self) -> &StgParams {
        &self.params
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn path(&self, id: PathId) -> Option<&Path> {
        self.paths.get(&id).map(|s| s.path.as_ref())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.paths.values().map(|s| s.path.as_ref())
    }

    pub fn path_ids(&self) -> impl Iterator<Item = PathId> + '_ {
        self.paths.keys().copied()
    }

    pub fn sphere_count(&self) -> usize {
        self.paths.values().map(|s| s.path.len()).sum()
    }

    /// Current state of a sphere, located by its stable reference.
    pub fn sphere(&self, r: SphereRef) -> Option<&Sphere> {
        let path = self.path(r.path)?;
        path.position_of(r.serial).map(|k| &path.spheres()[k])
    }

    /// Independent copy. Path data is shared until either side writes.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }

    pub fn insert_path(&mut self, path: Path) -> Result<(), GridError> {
        if self.paths.contains_key(&path.id()) {
            return Err(GridError::DuplicatePath(path.id()));
        }
        self.check_radius(&path)?;
        self.put(path);
        Ok(())
    }

    pub fn replace_path(&mut self, path: Path) -> Result<(), GridError> {
        if !self.paths.contains_key(&path.id()) {
            return Err(GridError::UnknownPath(path.id()));
        }
        self.check_radius(&path)?;
        self.put(path);
        Ok(())
    }

    fn check_radius(&self, path: &Path) -> Result<(), GridError> {
        if path.radius() != self.params.radius {
            return Err(GridError::RadiusMismatch {
                expected: self.params.radius,
                found: path.radius(),
            });
        }
        Ok(())
    }

    /// Appends a waypoint to an existing path. The new sphere must overlap or
    /// touch the current last sphere and come strictly later in time.
    pub fn upload(
        &mut self,
        id: PathId,
        center: StgVector,
        mutability: Mutability,
    ) -> Result<SphereRef, GridError> {
        let slot = self.paths.get(&id).ok_or(GridError::UnknownPath(id))?;
        if let Some(last) = slot.path.last() {
            let reach = self.params.reach();
            let distance = (center - last.center).norm(self.params.tau);
            if distance > reach + TANGENCY_EPS {
                return Err(GridError::Disconnected {
                    path: id,
                    distance,
                    reach,
                });
            }
            if center.t <= last.center.t {
                return Err(GridError::TimeOrder {
                    path: id,
                    t: center.t,
                    last: last.center.t,
                });
            }
        }
        let mut path = slot.path.as_ref().clone();
        let r = path.append(center, mutability).reference();
        self.put(path);
        Ok(r)
    }

    /// Applies a displacement vector to its target sphere as a path shift.
    pub fn shift(&mut self, dv: &DisplacementVector) -> Result<(), GridError> {
        let path = self
            .path(dv.target.path)
            .ok_or(GridError::UnknownPath(dv.target.path))?;
        let shifted = path.path_shift(dv, &self.params)?;
        self.put(shifted);
        Ok(())
    }

    /// Applies `edit` to a copy of the path and stores the result.
    pub fn update_path(
        &mut self,
        id: PathId,
        edit: impl FnOnce(&mut Path),
    ) -> Result<(), GridError> {
        let slot = self.paths.get(&id).ok_or(GridError::UnknownPath(id))?;
        let mut path = slot.path.as_ref().clone();
        edit(&mut path);
        self.put(path);
        Ok(())
    }

    fn put(&mut self, path: Path) {
        self.next_version += 1;
        self.revision += 1;
        let id = path.id();
        self.paths.insert(
            id,
            Slot {
                path: Arc::new(path),
                version: self.next_version,
            },
        );
        let total = self.sphere_count();
        let dirty: usize = self
            .dirty_paths()
            .iter()
            .map(|id| self.paths[id].path.len())
            .sum();
        if total > 0 && dirty as f64 >= REBUILD_FRACTION * total as f64 {
            self.rebuild();
        }
    }

    fn dirty_paths(&self) -> BTreeSet<PathId> {
        self.paths
            .iter()
            .filter(|(id, slot)| self.index.versions.get(id) != Some(&slot.version))
            .map(|(id, _)| *id)
            .collect()
    }

    fn rebuild(&mut self) {
        let tau = self.params.tau;
        let mut entries = Vec::new();
        let mut points = Vec::new();
        for (id, slot) in &self.paths {
            for (k, s) in slot.path.spheres().iter().enumerate() {
                entries.push((*id, k));
                points.push(s.center.scaled(tau));
            }
        }
        let tree = KdTree::build(points);
        let reach = self.params.reach();
        let mut clean_pairs = Vec::new();
        for (i, &(pid, k)) in entries.iter().enumerate() {
            let a = &self.paths[&pid].path.spheres()[k];
            tree.for_each_candidate(tree.point(i), reach, 1e-6, |j| {
                if j <= i {
                    return;
                }
                let (qid, l) = entries[j];
                let b = &self.paths[&qid].path.spheres()[l];
                if self.conflicting(a, b) {
                    clean_pairs.push(SpherePair::new(a, b));
                }
            });
        }
        clean_pairs.sort_unstable();
        let versions = self.paths.iter().map(|(id, s)| (*id, s.version)).collect();
        self.index = Arc::new(IndexState {
            tree,
            entries,
            versions,
            clean_pairs,
        });
    }

    /// Whether `a` and `b` form a pair the grid reports.
    ///
    /// Spheres on the same path never conflict. Two frozen spheres conflict
    /// only when both belong to obstacle paths; such a pair is a scenario
    /// infeasibility rather than something the search can move.
    fn conflicting(&self, a: &Sphere, b: &Sphere) -> bool {
        if a.owner == b.owner || !spheres_intersect(a, b, self.params.tau) {
            return false;
        }
        if a.fully_immutable() && b.fully_immutable() {
            let kind = |s: &Sphere| self.paths[&s.owner].path.kind();
            return kind(a).is_obstacle() && kind(b).is_obstacle();
        }
        true
    }

    /// All intersecting sphere pairs across distinct paths, in ascending
    /// `(first path, first index, second path, second index)` order.
    pub fn query_pairs(&self) -> Vec<SpherePair> {
        let dirty = self.dirty_paths();
        let mut pairs: Vec<SpherePair> = self
            .index
            .clean_pairs
            .iter()
            .filter(|p| !dirty.contains(&p.first.path) && !dirty.contains(&p.second.path))
            .copied()
            .collect();

        let tau = self.params.tau;
        let reach = self.params.reach();
        for id in &dirty {
            let path = &self.paths[id].path;
            for a in path.spheres() {
                self.index
                    .tree
                    .for_each_candidate(a.center.scaled(tau), reach, 1e-6, |j| {
                        let (qid, l) = self.index.entries[j];
                        if dirty.contains(&qid) {
                            return;
                        }
                        let b = &self.paths[&qid].path.spheres()[l];
                        if self.conflicting(a, b) {
                            pairs.push(SpherePair::new(a, b));
                        }
                    });
                for other in dirty.range((std::ops::Bound::Excluded(*id), std::ops::Bound::Unbounded)) {
                    for b in self.paths[other].path.spheres() {
                        if self.conflicting(a, b) {
                            pairs.push(SpherePair::new(a, b));
                        }
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Reference all-pairs scan with the same reporting rules as
    /// [`query_pairs`](Self::query_pairs).
    pub fn brute_force_pairs(&self) -> Vec<SpherePair> {
        let all: Vec<&Sphere> = self.paths().flat_map(|p| p.spheres()).collect();
        let mut pairs = Vec::new();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if self.conflicting(all[i], all[j]) {
                    pairs.push(SpherePair::new(all[i], all[j]));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// Pairs of frozen spheres, from any path kinds, that intersect. These
    /// can never be separated by the search.
    pub fn frozen_conflicts(&self) -> Vec<SpherePair> {
        let frozen: Vec<&Sphere> = self
            .paths()
            .flat_map(|p| p.spheres())
            .filter(|s| s.fully_immutable())
            .collect();
        let mut pairs = Vec::new();
        for i in 0..frozen.len() {
            for j in i + 1..frozen.len() {
                let (a, b) = (frozen[i], frozen[j]);
                if a.owner != b.owner && spheres_intersect(a, b, self.params.tau) {
                    pairs.push(SpherePair::new(a, b));
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// Checks that the index mirrors the sphere set and that pair queries
    /// agree with a full scan.
    pub fn audit(&self) -> Result<(), String> {
        let tau = self.params.tau;
        let dirty = self.dirty_paths();
        let mut seen: BTreeMap<PathId, usize> = BTreeMap::new();
        for (j, &(pid, k)) in self.index.entries.iter().enumerate() {
            if dirty.contains(&pid) {
                continue;
            }
            let path = &self.paths.get(&pid).ok_or("index entry for missing path")?.path;
            let s = path
                .spheres()
                .get(k)
                .ok_or_else(|| format!("index entry {pid}[{k}] beyond path end"))?;
            if self.index.tree.point(j) != s.center.scaled(tau) {
                return Err(format!("index entry {pid}[{k}] is stale"));
            }
            *seen.entry(pid).or_default() += 1;
        }
        for (id, slot) in &self.paths {
            if !dirty.contains(id) && seen.get(id).copied().unwrap_or(0) != slot.path.len() {
                return Err(format!("path {id} is not fully indexed"));
            }
            for s in slot.path.spheres() {
                if s.radius != self.params.radius {
                    return Err(format!("sphere {} has radius {}", s.reference(), s.radius));
                }
            }
        }
        if self.query_pairs() != self.brute_force_pairs() {
            return Err("indexed pair query disagrees with full scan".into());
        }
        Ok(())
    }
}
