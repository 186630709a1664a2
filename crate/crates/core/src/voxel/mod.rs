//! Voxel geometry: targets, grippers, poses and dataset files.

pub mod dataset;
pub mod grid;
pub mod gripper;
pub mod pose;
pub mod pregrasp;
pub mod props;
pub mod target;

pub use dataset::{dataset_read, dataset_write, Dataset, LatentRecord};
pub use grid::{VoxelGrid, GRID_EXTENT_M, RESOLUTION};
pub use gripper::{generate_gripper, generate_gripper_at, FingertipKind, GripperSample};
pub use pose::{Pose, POSE_DIM};
pub use pregrasp::canonical_pregrasp;
pub use props::{compute_physical_properties, PhysicalProperties, PLA_DENSITY, PROPERTY_DIM};
pub use target::{generate_target, perturb_sample, ShapeFamily, TargetSample};
