//! Space-time vector math, sphere intersection and displacement vectors.
//!
//! Every point in the space-time grid is `(x, y, t)`. Distances mix meters and
//! seconds, so each norm takes a time-scale `tau` (meters per second) that
//! converts the time axis before the Euclidean norm is taken.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack on intersection tests so that exact tangency is not a conflict.
pub const TANGENCY_EPS: f64 = 1e-9;

/// Size of the deterministic nudge applied to coincident sphere centers.
pub const COINCIDENT_NUDGE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite vector component in {0:?}")]
    NonFinite(StgVector),
    #[error("time scale must be positive and finite, got {0}")]
    BadTimeScale(f64),
    #[error("sphere {0} is fully immutable and cannot be displaced")]
    ImmutableMover(SphereRef),
    #[error("spheres {0} and {1} have coincident centers")]
    CoincidentCenters(SphereRef, SphereRef),
}

/// Planar vector, used for positions in the field and for velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Unit vector in the same direction, or zero for the zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::ZERO
        }
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A point or displacement in the space-time grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StgVector {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl StgVector {
    pub const ZERO: StgVector = StgVector { x: 0.0, y: 0.0, t: 0.0 };

    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Self { x, y, t }
    }

    pub fn from_spatial(p: Vec2, t: f64) -> Self {
        Self::new(p.x, p.y, t)
    }

    pub fn spatial(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.t.is_finite()
    }

    /// Euclidean norm with the time axis scaled by `tau`.
    ///
    /// Callers that have already validated their inputs use this directly;
    /// [`stg_norm`] is the checked variant.
    pub fn norm(self, tau: f64) -> f64 {
        let tt = tau * self.t;
        (self.x * self.x + self.y * self.y + tt * tt).sqrt()
    }

    /// Coordinates in the isotropic space where the time axis is scaled by `tau`.
    pub fn scaled(self, tau: f64) -> [f64; 3] {
        [self.x, self.y, tau * self.t]
    }
}

impl Add for StgVector {
    type Output = StgVector;
    fn add(self, o: StgVector) -> StgVector {
        StgVector::new(self.x + o.x, self.y + o.y, self.t + o.t)
    }
}

impl AddAssign for StgVector {
    fn add_assign(&mut self, o: StgVector) {
        *self = *self + o;
    }
}

impl Sub for StgVector {
    type Output = StgVector;
    fn sub(self, o: StgVector) -> StgVector {
        StgVector::new(self.x - o.x, self.y - o.y, self.t - o.t)
    }
}

impl Mul<f64> for StgVector {
    type Output = StgVector;
    fn mul(self, k: f64) -> StgVector {
        StgVector::new(self.x * k, self.y * k, self.t * k)
    }
}

impl Neg for StgVector {
    type Output = StgVector;
    fn neg(self) -> StgVector {
        StgVector::new(-self.x, -self.y, -self.t)
    }
}

/// Checked space-time norm: `sqrt(x² + y² + (tau·t)²)`.
pub fn stg_norm(v: StgVector, tau: f64) -> Result<f64, GeometryError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(GeometryError::BadTimeScale(tau));
    }
    if !v.is_finite() {
        return Err(GeometryError::NonFinite(v));
    }
    Ok(v.norm(tau))
}

/// Identifier of a path (agent or obstacle) in the grid.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PathId(pub u32);

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Stable identity of a sphere: its owner and a per-path serial that survives
/// insertions and deletions elsewhere in the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SphereRef {
    pub path: PathId,
    pub serial: u32,
}

impl fmt::Display for SphereRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.path, self.serial)
    }
}

/// Which parts of a sphere's center may be moved by conflict resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutability {
    #[default]
    Free,
    /// Spatially immutable: only the time coordinate may change.
    TimeOnly,
    /// Fully immutable.
    Frozen,
}

/// One spatiotemporal waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: StgVector,
    pub radius: f64,
    pub mutability: Mutability,
    pub owner: PathId,
    /// Position within the owner path at the time this value was read.
    pub index: usize,
    pub serial: u32,
}

impl Sphere {
    pub fn reference(&self) -> SphereRef {
        SphereRef {
            path: self.owner,
            serial: self.serial,
        }
    }

    pub fn spatially_immutable(&self) -> bool {
        self.mutability != Mutability::Free
    }

    pub fn fully_immutable(&self) -> bool {
        self.mutability == Mutability::Frozen
    }
}

/// True iff the two spheres overlap by more than the tangency slack.
pub fn spheres_intersect(a: &Sphere, b: &Sphere, tau: f64) -> bool {
    (a.center - b.center).norm(tau) < a.radius + b.radius - TANGENCY_EPS
}

/// Minimum translation of `target` that resolves one intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementVector {
    pub target: SphereRef,
    pub delta: StgVector,
}

impl DisplacementVector {
    pub fn magnitude(&self, tau: f64) -> f64 {
        self.delta.norm(tau)
    }
}

/// Displacement of `mover` that leaves it exactly tangent to `anchor`.
///
/// The unbiased vector is `(2R/d - 1)(mover - anchor)`. A non-zero
/// `bias_angle` rotates the spatial part of the push direction and rescales
/// the length so the result is still tangent. A spatially immutable mover is
/// pushed along the time axis only, away from the anchor in time.
pub fn compute_dv(
    mover: &Sphere,
    anchor: &Sphere,
    bias_angle: f64,
    tau: f64,
) -> Result<DisplacementVector, GeometryError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(GeometryError::BadTimeScale(tau));
    }
    if mover.fully_immutable() {
        return Err(GeometryError::ImmutableMover(mover.reference()));
    }
    let diff = mover.center - anchor.center;
    if !diff.is_finite() {
        return Err(GeometryError::NonFinite(diff));
    }
    let reach = mover.radius + anchor.radius;
    let d = diff.norm(tau);
    let target = mover.reference();
    if d >= reach {
        return Ok(DisplacementVector {
            target,
            delta: StgVector::ZERO,
        });
    }

    if mover.spatially_immutable() {
        let rho2 = diff.x * diff.x + diff.y * diff.y;
        let h = (reach * reach - rho2).max(0.0).sqrt();
        let sign = if diff.t >= 0.0 { 1.0 } else { -1.0 };
        let dt = sign * h / tau - diff.t;
        return Ok(DisplacementVector {
            target,
            delta: StgVector::new(0.0, 0.0, dt),
        });
    }

    if d == 0.0 {
        return Err(GeometryError::CoincidentCenters(
            mover.reference(),
            anchor.reference(),
        ));
    }

    if bias_angle == 0.0 {
        return Ok(DisplacementVector {
            target,
            delta: diff * (reach / d - 1.0),
        });
    }

    // Unit push direction in the tau-scaled space, spatial part rotated.
    let [ux, uy, ut] = diff.scaled(tau);
    let w_xy = Vec2::new(ux, uy).rotated(bias_angle) * (1.0 / d);
    let w_t = ut / d;
    let u_dot_w = ux * w_xy.x + uy * w_xy.y + ut * w_t;
    let alpha = -u_dot_w + (u_dot_w * u_dot_w + reach * reach - d * d).sqrt();
    Ok(DisplacementVector {
        target,
        delta: StgVector::new(alpha * w_xy.x, alpha * w_xy.y, alpha * w_t / tau),
    })
}

/// [`compute_dv`] that handles coincident centers by first nudging the mover
/// by [`COINCIDENT_NUDGE`] in a direction derived from its owner and index.
/// The returned delta includes the nudge.
pub fn compute_dv_nudged(
    mover: &Sphere,
    anchor: &Sphere,
    bias_angle: f64,
    tau: f64,
) -> Result<DisplacementVector, GeometryError> {
    match compute_dv(mover, anchor, bias_angle, tau) {
        Err(GeometryError::CoincidentCenters(..)) => {
            let nudge = nudge_direction(mover.owner, mover.index) * COINCIDENT_NUDGE;
            let nudge = StgVector::from_spatial(nudge, 0.0);
            let mut moved = *mover;
            moved.center += nudge;
            let dv = compute_dv(&moved, anchor, bias_angle, tau)?;
            Ok(DisplacementVector {
                target: dv.target,
                delta: dv.delta + nudge,
            })
        }
        other => other,
    }
}

/// Deterministic unit direction from a content hash of `(owner, index)`.
pub fn nudge_direction(owner: PathId, index: usize) -> Vec2 {
    let h = splitmix64(((owner.0 as u64) << 32) ^ index as u64);
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    Vec2::new(angle.cos(), angle.sin())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Smallest radius inflation for which sphere-level separation implies
/// separation of the continuous trajectories: `1 / (sqrt(3) - 1)`.
pub fn inflation_factor() -> f64 {
    1.0 / (3f64.sqrt() - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sphere(x: f64, y: f64, t: f64, r: f64) -> Sphere {
        Sphere {
            center: StgVector::new(x, y, t),
            radius: r,
            mutability: Mutability::Free,
            owner: PathId(1),
            index: 1,
            serial: 1,
        }
    }

    fn other(mut s: Sphere) -> Sphere {
        s.owner = PathId(2);
        s
    }

    #[test]
    fn norm_examples() {
        assert_eq!(stg_norm(StgVector::new(3.0, 4.0, 0.0), 1.0).unwrap(), 5.0);
        assert_eq!(stg_norm(StgVector::ZERO, 1.0).unwrap(), 0.0);
        assert!((stg_norm(StgVector::new(0.0, 0.0, 2.0), 1.5).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn norm_rejects_bad_input() {
        assert!(matches!(
            stg_norm(StgVector::new(f64::NAN, 0.0, 0.0), 1.0),
            Err(GeometryError::NonFinite(_))
        ));
        assert!(matches!(
            stg_norm(StgVector::new(0.0, f64::INFINITY, 0.0), 1.0),
            Err(GeometryError::NonFinite(_))
        ));
        assert!(matches!(
            stg_norm(StgVector::ZERO, 0.0),
            Err(GeometryError::BadTimeScale(_))
        ));
    }

    #[test]
    fn intersection_examples() {
        let r = 4.78;
        let a = sphere(0.0, 0.0, 0.0, r);
        assert!(!spheres_intersect(&a, &other(sphere(2.0 * r, 0.0, 0.0, r)), 1.0));
        assert!(spheres_intersect(&a, &other(sphere(r, 0.0, 0.0, r)), 1.0));
        assert!(!spheres_intersect(
            &a,
            &other(sphere(2.0 * r + 1e-9, 0.0, 0.0, r)),
            1.0
        ));
    }

    #[test]
    fn dv_examples() {
        let r = 4.78;
        let anchor = other(sphere(0.0, 0.0, 0.0, r));
        let dv = compute_dv(&sphere(r, 0.0, 0.0, r), &anchor, 0.0, 1.0).unwrap();
        assert!((dv.magnitude(1.0) - r).abs() < 1e-12);

        let dv = compute_dv(&sphere(2.0 * r, 0.0, 0.0, r), &anchor, 0.0, 1.0).unwrap();
        assert_eq!(dv.delta, StgVector::ZERO);

        let unit = other(sphere(0.0, 0.0, 0.0, 1.0));
        let dv = compute_dv(&sphere(1.0, 0.0, 0.0, 1.0), &unit, 0.0, 1.0).unwrap();
        assert_eq!(dv.delta, StgVector::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn dv_errors() {
        let a = sphere(0.0, 0.0, 0.0, 1.0);
        let b = other(sphere(0.0, 0.0, 0.0, 1.0));
        assert!(matches!(
            compute_dv(&a, &b, 0.0, 1.0),
            Err(GeometryError::CoincidentCenters(..))
        ));
        let mut frozen = sphere(0.5, 0.0, 0.0, 1.0);
        frozen.mutability = Mutability::Frozen;
        assert!(matches!(
            compute_dv(&frozen, &b, 0.0, 1.0),
            Err(GeometryError::ImmutableMover(_))
        ));
    }

    #[test]
    fn coincident_nudge_is_deterministic_and_resolves() {
        let a = sphere(1.0, 1.0, 1.0, 2.0);
        let b = other(sphere(1.0, 1.0, 1.0, 2.0));
        let dv1 = compute_dv_nudged(&a, &b, 0.0, 1.0).unwrap();
        let dv2 = compute_dv_nudged(&a, &b, 0.0, 1.0).unwrap();
        assert_eq!(dv1, dv2);
        let mut moved = a;
        moved.center += dv1.delta;
        assert!(!spheres_intersect(&moved, &b, 1.0));
        assert!(((moved.center - b.center).norm(1.0) - 4.0).abs() < 1e-6);
    }

    #[test]
    fn time_only_mover_is_pushed_along_time() {
        let mut a = sphere(1.0, 0.0, 0.5, 2.0);
        a.mutability = Mutability::TimeOnly;
        let b = other(sphere(0.0, 0.0, 0.0, 2.0));
        let dv = compute_dv(&a, &b, 0.0, 2.0).unwrap();
        assert_eq!(dv.delta.x, 0.0);
        assert_eq!(dv.delta.y, 0.0);
        assert!(dv.delta.t > 0.0);
        let mut moved = a;
        moved.center += dv.delta;
        assert!(((moved.center - b.center).norm(2.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn inflation_examples() {
        let l = inflation_factor();
        assert!((l - 1.366_025_403_784_438_6).abs() < 1e-15);
        assert!((l * (3f64.sqrt() - 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inflated_sphere_is_tangent_to_capsule() {
        // Two tangent chain spheres and a third sphere tangent to both: its
        // center sits sqrt(3)·R from the capsule axis. With R = λ*·r the gap
        // between it and the r-capsule around the axis closes exactly.
        let r = 3.5;
        let big = inflation_factor() * r;
        let axis_gap = 3f64.sqrt() * big;
        assert!((axis_gap - (big + r)).abs() < 1e-12);
    }

    #[test]
    fn biased_dv_is_still_tangent() {
        let a = sphere(1.0, 0.2, 0.1, 3.0);
        let b = other(sphere(0.0, 0.0, 0.0, 3.0));
        let dv = compute_dv(&a, &b, 0.1, 1.0).unwrap();
        let mut moved = a;
        moved.center += dv.delta;
        assert!(((moved.center - b.center).norm(1.0) - 6.0).abs() < 1e-9);
        let plain = compute_dv(&a, &b, 0.0, 1.0).unwrap();
        assert!(dv.delta.spatial().norm() > 0.0);
        assert!(dv.delta != plain.delta);
    }

    fn coord() -> impl Strategy<Value = f64> {
        -20.0..20.0f64
    }

    proptest! {
        #[test]
        fn dv_lands_tangent(
            ox in -1.0..1.0f64, oy in -1.0..1.0f64, ot in -1.0..1.0f64,
            ax in coord(), ay in coord(), at in coord(),
            r in 0.5..10.0f64, tau in 0.2..3.0f64,
        ) {
            let a = sphere(ax + ox * r, ay + oy * r, at + ot * r / tau, r);
            let b = other(sphere(ax, ay, at, r));
            let d = (a.center - b.center).norm(tau);
            prop_assume!(d > 1e-6 && spheres_intersect(&a, &b, tau));
            let dv = compute_dv(&a, &b, 0.0, tau).unwrap();
            let mut moved = a;
            moved.center += dv.delta;
            prop_assert!(!spheres_intersect(&moved, &b, tau));
            prop_assert!(((moved.center - b.center).norm(tau) - 2.0 * r).abs() < 1e-6);
            prop_assert!((dv.magnitude(tau) - (2.0 * r - d)).abs() < 1e-6);
        }

        #[test]
        fn dv_pair_is_antiparallel(
            ox in -1.0..1.0f64, oy in -1.0..1.0f64, ot in -1.0..1.0f64,
            ax in coord(), ay in coord(), at in coord(),
            r in 0.5..10.0f64,
        ) {
            let a = sphere(ax + ox * r, ay + oy * r, at + ot * r, r);
            let b = other(sphere(ax, ay, at, r));
            let d = (a.center - b.center).norm(1.0);
            prop_assume!(d > 1e-6 && spheres_intersect(&a, &b, 1.0));
            let va = compute_dv(&a, &b, 0.0, 1.0).unwrap().delta;
            let vb = compute_dv(&b, &a, 0.0, 1.0).unwrap().delta;
            let dot = va.x * vb.x + va.y * vb.y + va.t * vb.t;
            let cos = dot / (va.norm(1.0) * vb.norm(1.0));
            prop_assert!((cos + 1.0).abs() < 1e-9);
        }

        #[test]
        fn norm_triangle_inequality(
            a in (coord(), coord(), coord()),
            b in (coord(), coord(), coord()),
            c in (coord(), coord(), coord()),
            tau in 0.1..5.0f64,
        ) {
            let a = StgVector::new(a.0, a.1, a.2);
            let b = StgVector::new(b.0, b.1, b.2);
            let c = StgVector::new(c.0, c.1, c.2);
            let ac = stg_norm(a - c, tau).unwrap();
            let ab = stg_norm(a - b, tau).unwrap();
            let bc = stg_norm(b - c, tau).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
        }

        #[test]
        fn dv_is_homogeneous(
            ox in -1.0..1.0f64, oy in -1.0..1.0f64, ot in -1.0..1.0f64,
            r in 1.0..10.0f64, scale in 0.1..10.0f64,
        ) {
            let (mx, my, mt) = (ox * r, oy * r, ot * r);
            let a = sphere(mx, my, mt, r);
            let b = other(sphere(0.0, 0.0, 0.0, r));
            let d = a.center.norm(1.0);
            prop_assume!(d > 1e-6 && d < 2.0 * r - 1e-6);
            let scaled_a = sphere(mx * scale, my * scale, mt * scale, r * scale);
            let scaled_b = other(sphere(0.0, 0.0, 0.0, r * scale));
            let m1 = compute_dv(&a, &b, 0.0, 1.0).unwrap().magnitude(1.0);
            let m2 = compute_dv(&scaled_a, &scaled_b, 0.0, 1.0).unwrap().magnitude(1.0);
            prop_assert!((m2 - scale * m1).abs() < 1e-9 * (1.0 + m2));
        }
    }
}
