//! Grammarized grasping: voxel autoencoders that compress a target object and
//! a gripper into a shared latent space, an analytic grasp oracle, and a
//! PoWER agent that searches that latent space for good grasps.

pub mod ae;
pub mod checks;
pub mod datagen;
pub mod error;
pub mod grasp;
pub mod nn;
pub mod rl;
pub mod rng;
pub mod voxel;

pub use error::{Error, Result};
pub use nn::Tensor;

pub use voxel::{GripperSample, PhysicalProperties, Pose, TargetSample, VoxelGrid};
