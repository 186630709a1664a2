//! Quasi-static grasp evaluation for a two-finger gripper on a voxel target.

pub mod closure;
pub mod contacts;

use nalgebra::Vector3;

pub use closure::{best_antipodal_pair, force_closure, AntipodalPair};
pub use contacts::{close_fingers, extract_contacts, ClosedGrasp, Contact, ContactSet, PreparedGripper, PreparedTarget};

use crate::error::Result;
use crate::voxel::pose::Pose;
use crate::voxel::{GripperSample, TargetSample};

pub const GRAVITY: f64 = 9.81;
pub const LIFT_SAFETY_FACTOR: f64 = 1.2;
/// Squeeze force at which force economy reaches zero, in newtons.
pub const DEFAULT_FORCE_CAP: f64 = 20.0;
/// Length scale (voxels) of the centring factor.
pub const COM_FALLOFF_VOXELS: f64 = 4.0;

pub const WEIGHT_LIFTED: f64 = 0.6;
pub const WEIGHT_STABILITY: f64 = 0.3;
pub const WEIGHT_FORCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspOutcome {
    pub lifted: bool,
    pub stability: f64,
    /// Newtons.
    pub applied_force: f64,
    pub contact_count: usize,
}

impl GraspOutcome {
    pub fn failed(applied_force: f64, contact_count: usize) -> Self {
        Self {
            lifted: false,
            stability: 0.0,
            applied_force,
            contact_count,
        }
    }
}

/// Friction can carry the weight: `2·mu·F >= safety·m·g`.
pub fn lift_holds(mu: f64, squeeze_force: f64, mass: f64) -> bool {
    2.0 * mu * squeeze_force >= LIFT_SAFETY_FACTOR * mass * GRAVITY
}

/// Stability of a closed grasp: the best, over antipodal contact pairs, of
/// the product of three factors in `[0, 1]`:
///
/// - friction margin: `1 - worst_cone_angle / atan(mu)` of the pair,
/// - axis alignment: `(a - 1/√3) / (1 - 1/√3)` with `a` the largest
///   `|cos|` between the grasp line and a principal axis,
/// - centring: `exp(-(d / 4)²)` with `d` the distance in voxels from the
///   centre of mass to the grasp line.
pub fn stability(target: &PreparedTarget, contacts: &[Contact]) -> f64 {
    let h = target.grid.voxel_edge();
    let floor = 1.0 / 3f64.sqrt();
    let mut best = 0.0f64;
    closure::for_each_antipodal_pair(contacts, |pair| {
        let a = Vector3::from(contacts[pair.i].position) / h;
        let b = Vector3::from(contacts[pair.j].position) / h;
        let u = (b - a).normalize();
        let best_cos = target
            .principal_axes
            .iter()
            .map(|e| u.dot(e).abs())
            .fold(0.0, f64::max);
        let alignment = ((best_cos - floor) / (1.0 - floor)).clamp(0.0, 1.0);
        let w = target.com - a;
        let dist = (w - u * w.dot(&u)).norm();
        let centring = (-(dist / COM_FALLOFF_VOXELS).powi(2)).exp();
        best = best.max(pair.margin * alignment * centring);
    });
    best
}

/// Evaluates a grasp on prepared geometry. Penetrating poses are errors.
pub fn simulate_prepared(
    target: &PreparedTarget,
    gripper: &PreparedGripper,
    pose: &Pose,
    squeeze_force: f64,
) -> Result<GraspOutcome> {
    let closed = close_fingers(target, gripper, pose)?;
    Ok(evaluate_contacts(target, &closed.contacts, squeeze_force))
}

pub fn evaluate_contacts(target: &PreparedTarget, contacts: &[Contact], squeeze_force: f64) -> GraspOutcome {
    let count = contacts.len();
    if count < 2 {
        return GraspOutcome::failed(squeeze_force, count);
    }
    if !force_closure(contacts) {
        return GraspOutcome::failed(squeeze_force, count);
    }
    if !lift_holds(target.mu, squeeze_force, target.mass) {
        return GraspOutcome::failed(squeeze_force, count);
    }
    GraspOutcome {
        lifted: true,
        stability: stability(target, contacts),
        applied_force: squeeze_force,
        contact_count: count,
    }
}

pub fn simulate_grasp(
    target: &TargetSample,
    gripper: &GripperSample,
    pose: &Pose,
    squeeze_force: f64,
) -> Result<GraspOutcome> {
    simulate_prepared(&PreparedTarget::new(target)?, &PreparedGripper::new(gripper), pose, squeeze_force)
}

/// `0.6·lifted + 0.3·stability + 0.1·(1 - min(1, F / cap))`.
pub fn grasp_quality(outcome: &GraspOutcome, force_cap: f64) -> f64 {
    let economy = 1.0 - (outcome.applied_force / force_cap).min(1.0);
    let lifted = if outcome.lifted { 1.0 } else { 0.0 };
    WEIGHT_LIFTED * lifted + WEIGHT_STABILITY * outcome.stability + WEIGHT_FORCE * economy
}
