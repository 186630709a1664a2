//! AE2: gripper voxels and pose to `z_G = [F_G | F_p]` and back.
//!
//! The conv path only sees the grid and the dense path only sees the pose,
//! and each decoder head reads only its own latent block.

use std::path::Path;

use super::layers::{ConvDecoder, ConvEncoder, Dense, Mlp};
use super::train::{Evaluation, Trainable};
use super::{load_with_meta, save_with_meta, voxel_accuracy, F_G_DIM, F_P_DIM, M_G};
use crate::error::{invalid, shape_err, Result};
use crate::nn::{ops, Graph, NodeId, ParamStore, Tensor};
use crate::rng::{derive_seed, rng_from_seed};
use crate::voxel::{GripperSample, Pose, VoxelGrid, GRID_EXTENT_M, POSE_DIM};

pub type GripperLatent = Vec<f64>;

const POSE_HIDDEN: usize = 16;
/// Pose tolerance of the combined accuracy: position error in voxels.
pub const POSE_TOL_VOXELS: f64 = 1.0;
/// Pose tolerance of the combined accuracy: rotation error in degrees.
pub const POSE_TOL_DEG: f64 = 10.0;
const QUAT_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Ae2 {
    params: ParamStore,
    geo_encoder: ConvEncoder,
    geo_latent: Dense,
    pose_encoder: Mlp,
    geo_decoder: ConvDecoder,
    pose_head: Mlp,
    resolution: usize,
}

pub(crate) struct Ae2Nodes {
    pub voxels: NodeId,
    pub pose: NodeId,
}

impl Ae2 {
    pub fn new(resolution: usize, seed: u64) -> Result<Self> {
        if resolution == 0 || resolution % 8 != 0 {
            return Err(shape_err(format!("resolution {resolution} is not a positive multiple of 8")));
        }
        let mut rng = rng_from_seed(derive_seed(seed, "ae2.init"));
        let mut params = ParamStore::new();
        let geo_encoder = ConvEncoder::new(&mut params, "enc.geo", resolution, &mut rng);
        let geo_latent = Dense::new(&mut params, "enc.geo.fc", geo_encoder.feature_len(), F_G_DIM, &mut rng);
        let pose_encoder = Mlp::new(&mut params, "enc.pose", POSE_DIM, POSE_HIDDEN, F_P_DIM, &mut rng);
        let geo_decoder = ConvDecoder::new(&mut params, "dec.geo", F_G_DIM, resolution, &mut rng);
        let pose_head = Mlp::new(&mut params, "dec.pose", F_P_DIM, POSE_HIDDEN, POSE_DIM, &mut rng);
        Ok(Self {
            params,
            geo_encoder,
            geo_latent,
            pose_encoder,
            geo_decoder,
            pose_head,
            resolution,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    fn check_inputs(&self, grid: &VoxelGrid, pose: &Pose) -> Result<()> {
        if grid.resolution() != self.resolution {
            return Err(shape_err(format!(
                "grid resolution {} does not match model resolution {}",
                grid.resolution(),
                self.resolution
            )));
        }
        if (pose.quat_norm() - 1.0).abs() > QUAT_NORM_TOL {
            return Err(invalid(format!("pose quaternion norm {} is not 1", pose.quat_norm())));
        }
        Ok(())
    }

    pub(crate) fn encode_nodes(&self, g: &mut Graph, grid: &VoxelGrid, pose: &Pose) -> Result<NodeId> {
        self.check_inputs(grid, pose)?;
        let x = g.input(grid.to_tensor());
        let p = g.input(Tensor::vector(pose.to_normalized().to_vec()));
        let features = self.geo_encoder.forward(g, &self.params, x)?;
        let f_g = self.geo_latent.forward(g, &self.params, features)?;
        let f_p = self.pose_encoder.forward(g, &self.params, p)?;
        Ok(g.concat(&[f_g, f_p]))
    }

    /// Normalized pose estimate read from the pose block of `z_g`. With
    /// `frozen` the head's weights enter as constants.
    pub(crate) fn pose_head_nodes(&self, g: &mut Graph, z_g: NodeId, frozen: bool) -> Result<NodeId> {
        let f_p = g.slice(z_g, F_G_DIM, F_P_DIM)?;
        if frozen {
            self.pose_head.forward_frozen(g, &self.params, f_p)
        } else {
            self.pose_head.forward(g, &self.params, f_p)
        }
    }

    pub(crate) fn forward(&self, g: &mut Graph, sample: &GripperSample) -> Result<Ae2Nodes> {
        let z = self.encode_nodes(g, &sample.grid, &sample.pose)?;
        let f_g = g.slice(z, 0, F_G_DIM)?;
        let logits = self.geo_decoder.forward(g, &self.params, f_g)?;
        let voxels = g.sigmoid(logits);
        let pose = self.pose_head_nodes(g, z, false)?;
        Ok(Ae2Nodes { voxels, pose })
    }

    pub(crate) fn loss_node(&self, g: &mut Graph, sample: &GripperSample, nodes: &Ae2Nodes) -> Result<NodeId> {
        let n = g.value(nodes.voxels).len();
        let x = g.input(sample.grid.to_tensor().reshape(&[n])?);
        let p = g.input(Tensor::vector(sample.pose.to_normalized().to_vec()));
        let geo = g.mse(nodes.voxels, x)?;
        let pose = g.mse(nodes.pose, p)?;
        g.add(geo, pose)
    }

    pub fn encode(&self, grid: &VoxelGrid, pose: &Pose) -> Result<GripperLatent> {
        let mut g = Graph::new();
        let z = self.encode_nodes(&mut g, grid, pose)?;
        Ok(g.value(z).data().to_vec())
    }

    fn check_latent(z: &[f64]) -> Result<()> {
        if z.len() != M_G {
            return Err(shape_err(format!("gripper latent must have length {M_G}, got {}", z.len())));
        }
        Ok(())
    }

    /// Raw normalized 7-vector from the pose head.
    pub fn decode_pose_vector(&self, z: &[f64]) -> Result<Vec<f64>> {
        Self::check_latent(z)?;
        let mut g = Graph::new();
        let zn = g.input(Tensor::vector(z.to_vec()));
        let p = self.pose_head_nodes(&mut g, zn, false)?;
        Ok(g.value(p).data().to_vec())
    }

    /// Pose estimate with a unit, sign-canonical quaternion.
    pub fn decode_pose(&self, z: &[f64]) -> Result<Pose> {
        Pose::from_normalized(&self.decode_pose_vector(z)?)
    }

    /// Voxel logits and the pose estimate.
    pub fn decode(&self, z: &[f64]) -> Result<(Vec<f64>, Pose)> {
        Self::check_latent(z)?;
        let mut g = Graph::new();
        let zn = g.input(Tensor::vector(z[..F_G_DIM].to_vec()));
        let logits = self.geo_decoder.forward(&mut g, &self.params, zn)?;
        Ok((g.value(logits).data().to_vec(), self.decode_pose(z)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_with_meta(&self.params, &ParamStore::new(), path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>, resolution: usize) -> Result<Self> {
        let mut model = Self::new(resolution, 0)?;
        load_with_meta(&mut model.params, path.as_ref())?;
        Ok(model)
    }
}

/// `mse(g, ĝ) + mse(p, p̂)` with poses in normalized form.
pub fn ae2_loss(g: &[f64], p: &[f64], g_hat: &[f64], p_hat: &[f64]) -> Result<f64> {
    let t = |v: &[f64]| Tensor::vector(v.to_vec());
    Ok(ops::mse(&t(g_hat), &t(g))? + ops::mse(&t(p_hat), &t(p))?)
}

/// Position error in voxels and rotation error in degrees.
pub fn pose_errors(truth: &Pose, estimate: &Pose, resolution: usize) -> (f64, f64) {
    let voxel = GRID_EXTENT_M / resolution as f64;
    let d: f64 = truth.r.iter().zip(&estimate.r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    (d / voxel, truth.angle_to_deg(estimate))
}

impl Trainable for Ae2 {
    type Sample = GripperSample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn loss(&self, sample: &GripperSample) -> Result<f64> {
        let mut g = Graph::new();
        let nodes = self.forward(&mut g, sample)?;
        let loss = self.loss_node(&mut g, sample, &nodes)?;
        Ok(g.value(loss).item())
    }

    fn loss_and_grads(&self, sample: &GripperSample) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let nodes = self.forward(&mut g, sample)?;
        let loss = self.loss_node(&mut g, sample, &nodes)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).item(), grads.for_params(&g, &self.params)))
    }

    fn evaluate(&self, samples: &[&GripperSample]) -> Result<Evaluation> {
        let n = samples.len().max(1) as f64;
        let (mut loss, mut acc, mut pos, mut ang, mut within, mut pose_mse) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for s in samples {
            let mut g = Graph::new();
            let nodes = self.forward(&mut g, s)?;
            let l = self.loss_node(&mut g, s, &nodes)?;
            loss += g.value(l).item();
            acc += voxel_accuracy(s.grid.values(), g.value(nodes.voxels).data())?;
            let p_hat = g.value(nodes.pose).data();
            pose_mse += ops::mse(&Tensor::vector(p_hat.to_vec()), &Tensor::vector(s.pose.to_normalized().to_vec()))?;
            let estimate = Pose::from_normalized(p_hat)?;
            let (dp, da) = pose_errors(&s.pose, &estimate, self.resolution);
            pos += dp;
            ang += da;
            if dp <= POSE_TOL_VOXELS && da <= POSE_TOL_DEG {
                within += 100.0;
            }
        }
        let (acc, within) = (acc / n, within / n);
        let combined = 0.5 * acc + 0.5 * within;
        Ok(Evaluation {
            loss: loss / n,
            accuracy: combined,
            values: vec![acc, combined, within, pos / n, ang / n, pose_mse / n],
        })
    }

    fn metric_names(&self) -> &'static [&'static str] {
        &[
            "val_voxel_acc",
            "val_combined_acc",
            "val_pose_within_tol",
            "val_pose_pos_err_voxels",
            "val_pose_quat_angle_deg",
            "val_pose_mse",
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{generate_gripper, FingertipKind};

    fn sample() -> GripperSample {
        generate_gripper(FingertipKind::Curved, 1.5, 2).unwrap()
    }

    #[test]
    fn path_separation_is_exact() {
        let m = Ae2::new(16, 3).unwrap();
        let s = sample();
        let a = m.encode(&s.grid, &s.pose).unwrap();
        let moved = Pose::new([0.01, -0.02, 0.0], [0.9, 0.1, 0.2, 0.1]).unwrap();
        let b = m.encode(&s.grid, &moved).unwrap();
        assert_eq!(a[..F_G_DIM], b[..F_G_DIM]);
        assert_ne!(a[F_G_DIM..], b[F_G_DIM..]);
        let other = generate_gripper(FingertipKind::VGroove, 2.0, 5).unwrap();
        let c = m.encode(&other.grid, &s.pose).unwrap();
        assert_eq!(a[F_G_DIM..], c[F_G_DIM..]);
        assert_ne!(a[..F_G_DIM], c[..F_G_DIM]);
    }

    #[test]
    fn unnormalized_quaternion_rejected() {
        let m = Ae2::new(16, 3).unwrap();
        let s = sample();
        let bad = Pose {
            r: [0.0; 3],
            q: [1.0, 0.1, 0.0, 0.0],
        };
        assert!(m.encode(&s.grid, &bad).is_err());
        assert!(m.encode(&s.grid, &Pose::identity()).is_ok());
    }

    #[test]
    fn decoded_quaternion_is_unit() {
        let m = Ae2::new(16, 3).unwrap();
        for k in 0..5 {
            let z: Vec<f64> = (0..M_G).map(|i| ((i * 7 + k * 13) % 11) as f64 - 5.0).collect();
            let (_, pose) = m.decode(&z).unwrap();
            assert!((pose.quat_norm() - 1.0).abs() < 1e-9);
            assert!(pose.q[0] >= 0.0);
        }
        assert!(m.decode(&[0.0; 40]).is_err());
    }

    #[test]
    fn pose_only_error_equals_pose_term() {
        let geo: Vec<f64> = (0..64).map(|i| (i % 5 == 0) as u8 as f64).collect();
        let p = Pose::identity().to_normalized();
        let mut off = p;
        off[0] += 1.0;
        let loss = ae2_loss(&geo, &p, &geo, &off).unwrap();
        assert!((loss - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(ae2_loss(&geo, &p, &geo, &p).unwrap(), 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Ae2::new(16, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae2.ggnn");
        m.save(&path).unwrap();
        let back = Ae2::load(&path, 16).unwrap();
        let s = sample();
        assert_eq!(m.encode(&s.grid, &s.pose).unwrap(), back.encode(&s.grid, &s.pose).unwrap());
    }
}
