//! Reward landscapes the learner explores: a toy quadratic, the latent
//! space of the frozen autoencoders, and raw pose offsets.

use serde::Serialize;

use crate::ae::{concat_latents, split_latents, Ae1, Ae2, Ae3, M_G, M_T};
use crate::error::{invalid, Error, Result};
use crate::grasp::{grasp_quality, simulate_prepared, GraspOutcome, PreparedGripper, PreparedTarget};
use crate::voxel::{GripperSample, Pose, TargetSample, POSE_DIM};

/// Result of evaluating one perturbation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepOutcome {
    pub reward: f64,
    /// The object was lifted (or the toy reward cleared its bar).
    pub success: bool,
    /// False when the decoded pose was rejected, e.g. by penetration.
    pub valid: bool,
    pub stability: f64,
    pub penalty_t: f64,
    pub penalty_g: f64,
}

pub trait Environment {
    fn dim(&self) -> usize;
    fn step(&self, theta: &[f64]) -> Result<StepOutcome>;
}

/// Concave toy reward `1 - mean_i (θ_i - θ*_i)²`, with optimum 1 at `θ*`.
#[derive(Clone, Debug)]
pub struct ToyEnv {
    pub optimum: Vec<f64>,
    /// Reward at or above which a step counts as a success.
    pub success_bar: f64,
}

impl ToyEnv {
    pub const OPTIMAL_REWARD: f64 = 1.0;

    pub fn reward(&self, theta: &[f64]) -> f64 {
        let d: f64 = theta.iter().zip(&self.optimum).map(|(a, b)| (a - b).powi(2)).sum();
        Self::OPTIMAL_REWARD - d / self.optimum.len() as f64
    }
}

impl Environment for ToyEnv {
    fn dim(&self) -> usize {
        self.optimum.len()
    }

    fn step(&self, theta: &[f64]) -> Result<StepOutcome> {
        if theta.len() != self.optimum.len() {
            return Err(invalid("toy parameters have the wrong length"));
        }
        let reward = self.reward(theta);
        Ok(StepOutcome {
            reward,
            success: reward >= self.success_bar,
            valid: true,
            stability: 0.0,
            penalty_t: 0.0,
            penalty_g: 0.0,
        })
    }
}

/// Grasp parameters shared by the grasping environments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GraspSettings {
    /// Newtons.
    pub squeeze_force: f64,
    pub force_cap: f64,
    /// Weight of the target latent penalty.
    pub alpha: f64,
    /// Weight of the gripper latent penalty.
    pub beta: f64,
}

impl Default for GraspSettings {
    fn default() -> Self {
        Self {
            squeeze_force: 10.0,
            force_cap: crate::grasp::DEFAULT_FORCE_CAP,
            alpha: 0.01,
            beta: 0.01,
        }
    }
}

/// A target with a gripper; the gripper's pose is its reference pose.
#[derive(Clone, Debug)]
pub struct GraspPair {
    pub target: TargetSample,
    pub gripper: GripperSample,
}

/// The frozen autoencoder stack.
#[derive(Clone, Debug)]
pub struct LatentModels {
    pub ae1: Ae1,
    pub ae2: Ae2,
    pub ae3: Ae3,
}

/// Latents of one encoded pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairCode {
    pub z_t: Vec<f64>,
    pub z_g: Vec<f64>,
    pub z_c: Vec<f64>,
}

impl LatentModels {
    pub fn encode_pair(&self, pair: &GraspPair) -> Result<PairCode> {
        let z_t = self.ae1.encode(&pair.target.grid, &pair.target.props)?;
        let z_g = self.ae2.encode(&pair.gripper.grid, &pair.gripper.pose)?;
        let z_c = self.ae3.encode(&concat_latents(&z_t, &z_g)?)?;
        Ok(PairCode { z_t, z_g, z_c })
    }
}

fn evaluate_grasp(
    target: &PreparedTarget,
    gripper: &PreparedGripper,
    pose: Result<Pose>,
    settings: &GraspSettings,
) -> Result<Option<GraspOutcome>> {
    let Ok(pose) = pose else {
        return Ok(None);
    };
    match simulate_prepared(target, gripper, &pose, settings.squeeze_force) {
        Ok(outcome) => Ok(Some(outcome)),
        Err(Error::Penetration | Error::Invalid(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn invalid_step(penalty_t: f64, penalty_g: f64) -> StepOutcome {
    StepOutcome {
        reward: 0.0,
        success: false,
        valid: false,
        stability: 0.0,
        penalty_t,
        penalty_g,
    }
}

/// Perturbs `z_C` of an encoded pair, decodes the pose through AE3 and
/// AE2's pose head, and grasps the true target with the true gripper.
pub struct LatentEnv<'a> {
    models: &'a LatentModels,
    target: PreparedTarget,
    gripper: PreparedGripper,
    code: PairCode,
    settings: GraspSettings,
}

impl<'a> LatentEnv<'a> {
    pub fn new(models: &'a LatentModels, pair: &GraspPair, settings: GraspSettings) -> Result<Self> {
        Ok(Self {
            target: PreparedTarget::new(&pair.target)?,
            gripper: PreparedGripper::new(&pair.gripper),
            code: models.encode_pair(pair)?,
            models,
            settings,
        })
    }

    pub fn code(&self) -> &PairCode {
        &self.code
    }

    /// Weighted squared distances between the decoded and encoded target
    /// and gripper latents, in per-element standardized units.
    pub fn penalties(&self, z_hat: &[f64]) -> Result<(f64, f64)> {
        let (t_hat, g_hat) = split_latents(z_hat)?;
        let std = &self.models.ae3.latent_norm.std;
        let dist = |a: &[f64], b: &[f64], s: &[f64]| -> f64 {
            a.iter().zip(b).zip(s).map(|((x, y), s)| ((x - y) / s).powi(2)).sum()
        };
        Ok((
            self.settings.alpha * dist(t_hat, &self.code.z_t, &std[..M_T]),
            self.settings.beta * dist(g_hat, &self.code.z_g, &std[M_T..M_T + M_G]),
        ))
    }

    pub fn decoded_pose(&self, delta: &[f64]) -> Result<(Vec<f64>, Result<Pose>)> {
        if delta.len() != self.code.z_c.len() {
            return Err(invalid("perturbation length differs from z_C"));
        }
        let z: Vec<f64> = self.code.z_c.iter().zip(delta).map(|(a, b)| a + b).collect();
        let z_hat = self.models.ae3.decode(&z)?;
        let pose = self.models.ae2.decode_pose(&z_hat[M_T..]);
        Ok((z_hat, pose))
    }
}

impl Environment for LatentEnv<'_> {
    fn dim(&self) -> usize {
        self.code.z_c.len()
    }

    fn step(&self, delta: &[f64]) -> Result<StepOutcome> {
        let (z_hat, pose) = self.decoded_pose(delta)?;
        let (penalty_t, penalty_g) = self.penalties(&z_hat)?;
        let Some(outcome) = evaluate_grasp(&self.target, &self.gripper, pose, &self.settings)? else {
            return Ok(invalid_step(penalty_t, penalty_g));
        };
        Ok(StepOutcome {
            reward: grasp_quality(&outcome, self.settings.force_cap) - penalty_t - penalty_g,
            success: outcome.lifted,
            valid: true,
            stability: outcome.stability,
            penalty_t,
            penalty_g,
        })
    }
}

/// Offsets added to a fixed reference pose in normalized pose space; the
/// quaternion is renormalized after the offset.
pub struct PoseEnv {
    target: PreparedTarget,
    gripper: PreparedGripper,
    reference: [f64; POSE_DIM],
    settings: GraspSettings,
}

impl PoseEnv {
    pub fn new(pair: &GraspPair, reference: &Pose, settings: GraspSettings) -> Result<Self> {
        Ok(Self {
            target: PreparedTarget::new(&pair.target)?,
            gripper: PreparedGripper::new(&pair.gripper),
            reference: reference.to_normalized(),
            settings,
        })
    }

    pub fn pose(&self, offset: &[f64]) -> Result<Pose> {
        if offset.len() != POSE_DIM {
            return Err(invalid("pose offset must have 7 components"));
        }
        let v: Vec<f64> = self.reference.iter().zip(offset).map(|(a, b)| a + b).collect();
        Pose::from_normalized(&v)
    }
}

impl Environment for PoseEnv {
    fn dim(&self) -> usize {
        POSE_DIM
    }

    fn step(&self, offset: &[f64]) -> Result<StepOutcome> {
        let pose = self.pose(offset);
        let Some(outcome) = evaluate_grasp(&self.target, &self.gripper, pose, &self.settings)? else {
            return Ok(invalid_step(0.0, 0.0));
        };
        Ok(StepOutcome {
            reward: grasp_quality(&outcome, self.settings.force_cap),
            success: outcome.lifted,
            valid: true,
            stability: outcome.stability,
            penalty_t: 0.0,
            penalty_g: 0.0,
        })
    }
}
