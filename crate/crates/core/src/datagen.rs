//! Procedural datasets: perturbed targets, posed grippers and the encoded
//! latent pairs the joint autoencoder trains on.

use rand::Rng as _;

use crate::ae::{concat_latents, Ae1, Ae2};
use crate::error::{invalid, Result};
use crate::rng::{derive_indexed, rng_from_seed};
use crate::voxel::gripper::{jitter_pose, MAX_AMPLITUDE};
use crate::voxel::target::{perturb_randomly, sample_shape, PerturbationRange};
use crate::voxel::{
    canonical_pregrasp, generate_gripper_at, generate_target, FingertipKind, GripperSample, LatentRecord, TargetSample,
    POSE_DIM,
};

pub const PERTURBATIONS_PER_BASE: usize = 5;
const ATTEMPTS: u64 = 16;

/// `n` targets, `PERTURBATIONS_PER_BASE` perturbed copies per base shape.
/// Sample `i` depends only on `(seed, i)`.
pub fn generate_targets(n: usize, seed: u64) -> Result<Vec<TargetSample>> {
    (0..n).map(|i| target_at(i, seed)).collect()
}

fn target_at(i: usize, seed: u64) -> Result<TargetSample> {
    let b = (i / PERTURBATIONS_PER_BASE) as u64;
    let mut base_rng = rng_from_seed(derive_indexed(seed, "target.base", b));
    let (family, params) = sample_shape(&mut base_rng);
    let base = generate_target(family, &params, derive_indexed(seed, "target.friction", b))?;
    let mut rng = rng_from_seed(derive_indexed(seed, "target.perturb", i as u64));
    let range = PerturbationRange::default();
    let mut last = None;
    for _ in 0..ATTEMPTS {
        match perturb_randomly(&base, &mut rng, &range) {
            Ok(t) => return Ok(t),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| invalid("no perturbation attempted")))
}

/// `n` grippers of random kind and amplitude, each posed near the
/// pre-grasp of a randomly chosen target.
pub fn generate_grippers(n: usize, targets: &[TargetSample], seed: u64) -> Result<Vec<GripperSample>> {
    if targets.is_empty() {
        return Err(invalid("grippers need at least one target to be posed against"));
    }
    (0..n).map(|j| gripper_at(j, targets, seed)).collect()
}

fn gripper_at(j: usize, targets: &[TargetSample], seed: u64) -> Result<GripperSample> {
    let mut rng = rng_from_seed(derive_indexed(seed, "gripper", j as u64));
    let mut last = None;
    for attempt in 0..ATTEMPTS {
        let kind = FingertipKind::ALL[rng.random_range(0..FingertipKind::ALL.len())];
        let amplitude = rng.random_range(0.0..=MAX_AMPLITUDE);
        let target = &targets[rng.random_range(0..targets.len())];
        let base = canonical_pregrasp(&target.grid)?;
        let shape_seed = derive_indexed(seed, "gripper.shape", (j as u64) * ATTEMPTS + attempt);
        match generate_gripper_at(kind, amplitude, base, shape_seed) {
            Ok(g) => return Ok(g),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| invalid("no gripper attempted")))
}

/// Encodes `pairs_per_target` pairs per target with the frozen AE₁/AE₂.
/// Each pair takes a random gripper posed at a jittered pre-grasp of the
/// target.
pub fn build_latents(
    ae1: &Ae1,
    ae2: &Ae2,
    targets: &[TargetSample],
    grippers: &[GripperSample],
    pairs_per_target: usize,
    seed: u64,
) -> Result<Vec<LatentRecord>> {
    if grippers.is_empty() || pairs_per_target == 0 {
        return Err(invalid("latent pairs need grippers and pairs_per_target > 0"));
    }
    let mut out = Vec::with_capacity(targets.len() * pairs_per_target);
    for (i, t) in targets.iter().enumerate() {
        let z_t = ae1.encode(&t.grid, &t.props)?;
        let base = canonical_pregrasp(&t.grid)?;
        for k in 0..pairs_per_target {
            let mut rng = rng_from_seed(derive_indexed(seed, "latent", (i * pairs_per_target + k) as u64));
            let j = rng.random_range(0..grippers.len());
            let pose = jitter_pose(&mut rng, base)?;
            let z_g = ae2.encode(&grippers[j].grid, &pose)?;
            out.push(LatentRecord {
                z: concat_latents(&z_t, &z_g)?,
                pose: pose.to_normalized(),
                target_index: i as u32,
                gripper_index: j as u32,
            });
        }
    }
    Ok(out)
}

/// Per-component population standard deviation of normalized poses.
pub fn pose_std(poses: impl IntoIterator<Item = [f64; POSE_DIM]>) -> Vec<f64> {
    let poses: Vec<_> = poses.into_iter().collect();
    let n = poses.len().max(1) as f64;
    (0..POSE_DIM)
        .map(|c| {
            let mean = poses.iter().map(|p| p[c]).sum::<f64>() / n;
            (poses.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}
