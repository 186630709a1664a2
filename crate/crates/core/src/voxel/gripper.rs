//! Two-finger parallel gripper fingertips.
//!
//! In the gripper frame the fingers close along x. The left pad occupies
//! `x < PAD_THICKNESS` and the right pad `x >= n - PAD_THICKNESS`, both over
//! the central `PAD_SPAN` columns in y and z. A column's offset moves its
//! contact surface toward (positive) or away from (negative) the other finger.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::grid::{VoxelGrid, GRID_EXTENT_M, RESOLUTION};
use super::pose::{quat_mul, random_small_rotation, Pose};
use crate::error::{invalid, Result};
use crate::rng::{rng_from_seed, Rng};

pub const PAD_THICKNESS: usize = 3;
pub const PAD_SPAN: usize = 10;
pub const MAX_AMPLITUDE: f64 = 2.0;
/// Friction coefficient of the elastomer fingertips.
pub const GRIPPER_MU: f64 = 0.8;
/// Position jitter (voxels) and rotation jitter bound (degrees) applied
/// around the pre-grasp.
pub const POSE_JITTER_VOXELS: f64 = 1.0;
pub const POSE_JITTER_DEG: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FingertipKind {
    Flat = 0,
    Curved = 1,
    VGroove = 2,
}

impl FingertipKind {
    pub const ALL: [FingertipKind; 3] = [FingertipKind::Flat, FingertipKind::Curved, FingertipKind::VGroove];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| invalid(format!("unknown fingertip kind {v}")))
    }

    /// Base offset of pad column `(j, k)`, both in `0..PAD_SPAN`.
    fn base_offset(self, j: usize, _k: usize) -> i32 {
        let c = (PAD_SPAN as f64 - 1.0) / 2.0;
        let u = (j as f64 - c) / c;
        match self {
            FingertipKind::Flat => 0,
            // Convex ridge running along z.
            FingertipKind::Curved => (2.0 * (1.0 - u * u)).round() as i32,
            // Groove running along z, deepest in the middle.
            FingertipKind::VGroove => (2.0 * u.abs()).round() as i32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GripperProvenance {
    pub kind: FingertipKind,
    pub amplitude: f64,
    /// Pose the seeded jitter is applied around.
    pub base_pose: Pose,
    pub seed: u64,
}

impl GripperProvenance {
    /// `[amplitude, base pose (7)]`
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = vec![self.amplitude];
        v.extend(self.base_pose.to_array());
        v
    }

    pub fn from_flat(kind: FingertipKind, flat: &[f64], seed: u64) -> Result<Self> {
        if flat.len() != 8 {
            return Err(invalid(format!("gripper provenance needs 8 params, got {}", flat.len())));
        }
        Ok(Self {
            kind,
            amplitude: flat[0],
            base_pose: Pose {
                r: [flat[1], flat[2], flat[3]],
                q: [flat[4], flat[5], flat[6], flat[7]],
            },
            seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GripperSample {
    pub grid: VoxelGrid,
    pub pose: Pose,
    /// Final column offsets, `[finger][j * PAD_SPAN + k]`, left finger first.
    pub contact_profile: [Vec<i32>; 2],
    pub provenance: GripperProvenance,
}

impl GripperSample {
    pub fn regenerate(p: &GripperProvenance) -> Result<Self> {
        generate_gripper_at(p.kind, p.amplitude, p.base_pose, p.seed)
    }

    /// Smallest free distance between opposing contact surfaces, in voxels.
    pub fn aperture(&self) -> i32 {
        aperture_of(&self.contact_profile)
    }

    /// Same fingertips, different pose.
    pub fn with_pose(&self, pose: Pose) -> Self {
        Self {
            pose,
            ..self.clone()
        }
    }
}

fn aperture_of(profile: &[Vec<i32>; 2]) -> i32 {
    let open = (RESOLUTION - 2 * PAD_THICKNESS) as i32;
    profile[0]
        .iter()
        .zip(&profile[1])
        .map(|(a, b)| open - a - b)
        .min()
        .unwrap_or(open)
}

/// Fingertip pair around the neutral pose (origin, identity rotation).
pub fn generate_gripper(kind: FingertipKind, amplitude: f64, seed: u64) -> Result<GripperSample> {
    generate_gripper_at(kind, amplitude, Pose::identity(), seed)
}

/// Fingertip pair whose pose is `base_pose` with seeded position and
/// rotation jitter.
pub fn generate_gripper_at(kind: FingertipKind, amplitude: f64, base_pose: Pose, seed: u64) -> Result<GripperSample> {
    if !(0.0..=MAX_AMPLITUDE).contains(&amplitude) {
        return Err(invalid(format!("amplitude {amplitude} outside [0, {MAX_AMPLITUDE}]")));
    }
    let mut rng = rng_from_seed(seed);
    let mut profile: [Vec<i32>; 2] = [Vec::with_capacity(PAD_SPAN * PAD_SPAN), Vec::with_capacity(PAD_SPAN * PAD_SPAN)];
    for finger in profile.iter_mut() {
        for j in 0..PAD_SPAN {
            for k in 0..PAD_SPAN {
                let jitter = if amplitude > 0.0 {
                    rng.random_range(-amplitude..=amplitude).trunc() as i32
                } else {
                    0
                };
                finger.push(kind.base_offset(j, k) + jitter);
            }
        }
    }
    if aperture_of(&profile) <= 0 {
        return Err(invalid("fingertip perturbation closes the aperture"));
    }
    let pose = jitter_pose(&mut rng, base_pose)?;
    Ok(GripperSample {
        grid: rasterize(&profile),
        pose,
        contact_profile: profile,
        provenance: GripperProvenance {
            kind,
            amplitude,
            base_pose,
            seed,
        },
    })
}

/// Seeded position and rotation jitter around `base`.
pub fn jitter_pose(rng: &mut Rng, base: Pose) -> Result<Pose> {
    let normal = Normal::new(0.0, POSE_JITTER_VOXELS).expect("positive std");
    let h = GRID_EXTENT_M / RESOLUTION as f64;
    let mut r = base.r;
    for v in r.iter_mut() {
        *v += normal.sample(rng) * h;
    }
    let q = quat_mul(random_small_rotation(rng, POSE_JITTER_DEG), base.q);
    Pose::new(r, q)
}

fn rasterize(profile: &[Vec<i32>; 2]) -> VoxelGrid {
    let n = RESOLUTION;
    let lo = (n - PAD_SPAN) / 2;
    let t = PAD_THICKNESS as i32;
    let mut g = VoxelGrid::empty(n);
    for j in 0..PAD_SPAN {
        for k in 0..PAD_SPAN {
            let (y, z) = (lo + j, lo + k);
            let left = t + profile[0][j * PAD_SPAN + k];
            for x in 0..left.max(0) {
                g.set(x as usize, y, z, true);
            }
            let right = n as i32 - t - profile[1][j * PAD_SPAN + k];
            for x in right.max(0)..n as i32 {
                g.set(x as usize, y, z, true);
            }
        }
    }
    g
}

/// Occupied gripper voxels split by finger, with the subset facing the
/// other finger.
pub struct FingerVoxels {
    /// Voxel-unit centres relative to the grid centre, all pad voxels.
    pub solid: [Vec<[f64; 3]>; 2],
    /// Pad voxels whose neighbour toward the other finger is free.
    pub surface: [Vec<[f64; 3]>; 2],
}

pub fn finger_voxels(grid: &VoxelGrid) -> FingerVoxels {
    let n = grid.resolution();
    let mut solid: [Vec<[f64; 3]>; 2] = [Vec::new(), Vec::new()];
    let mut surface: [Vec<[f64; 3]>; 2] = [Vec::new(), Vec::new()];
    for [x, y, z] in grid.occupied() {
        let finger = if x < n / 2 { 0 } else { 1 };
        let c = grid.centered(x, y, z);
        solid[finger].push(c);
        let toward = if finger == 0 { x as i64 + 1 } else { x as i64 - 1 };
        if !grid.get_signed(toward, y as i64, z as i64) {
            surface[finger].push(c);
        }
    }
    FingerVoxels { solid, surface }
}
