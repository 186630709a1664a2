//! AE3: compresses `z_GT = [z_T | z_G]` to `z_C` and back.
//!
//! The network works on per-element standardized latents; the statistics
//! are part of the checkpoint. The pose term runs AE2's pose head, held
//! frozen, on the reconstructed gripper block.

use std::path::Path;

use super::gripper::Ae2;
use super::layers::Dense;
use super::train::{Evaluation, Trainable};
use super::{
    latent_accuracy, load_with_meta, meta_scalar, push_meta_scalar, save_with_meta, Normalizer, LATENT_TOLERANCE,
    M_C, M_G, M_GT, M_T,
};
use crate::error::{invalid, shape_err, Result};
use crate::nn::{ops, Graph, NodeId, ParamStore, Tensor};
use crate::rng::{derive_seed, rng_from_seed};
use crate::voxel::LatentRecord;

const HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for JointLossWeights {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 1.0 }
    }
}

impl JointLossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(invalid(format!(
                "loss weights must be positive, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Ae3 {
    params: ParamStore,
    enc: [Dense; 2],
    dec: [Dense; 2],
    pub weights: JointLossWeights,
    /// Standardization of `z_GT`; its std is the per-element scale of
    /// [`latent_accuracy`].
    pub latent_norm: Normalizer,
    /// Per-element std of `z_C` over the latent dataset.
    pub zc_std: Vec<f64>,
}

pub(crate) struct Ae3Nodes {
    /// Standardized input.
    pub u: NodeId,
    /// Standardized reconstruction.
    pub u_hat: NodeId,
}

impl Ae3 {
    pub fn new(weights: JointLossWeights, seed: u64) -> Result<Self> {
        weights.validate()?;
        let mut rng = rng_from_seed(derive_seed(seed, "ae3.init"));
        let mut params = ParamStore::new();
        let enc = [
            Dense::new(&mut params, "enc.0", M_GT, HIDDEN, &mut rng),
            Dense::new(&mut params, "enc.1", HIDDEN, M_C, &mut rng),
        ];
        let dec = [
            Dense::new(&mut params, "dec.0", M_C, HIDDEN, &mut rng),
            Dense::new(&mut params, "dec.1", HIDDEN, M_GT, &mut rng),
        ];
        Ok(Self {
            params,
            enc,
            dec,
            weights,
            latent_norm: Normalizer::identity(M_GT),
            zc_std: vec![1.0; M_C],
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn fit_normalizer(&mut self, records: &[LatentRecord]) -> Result<()> {
        self.latent_norm = Normalizer::fit(records.iter().map(|r| r.z.as_slice()))?;
        Ok(())
    }

    /// Records the per-element std of `z_C` over `records`.
    pub fn fit_zc_std(&mut self, records: &[LatentRecord]) -> Result<()> {
        let codes = records.iter().map(|r| self.encode(&r.z)).collect::<Result<Vec<_>>>()?;
        self.zc_std = Normalizer::fit(codes.iter().map(|c| c.as_slice()))?.std;
        Ok(())
    }

    fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
        if v.len() != n {
            return Err(shape_err(format!("{what} must have length {n}, got {}", v.len())));
        }
        Ok(())
    }

    fn encode_nodes(&self, g: &mut Graph, u: NodeId) -> Result<NodeId> {
        let h = self.enc[0].forward(g, &self.params, u)?;
        let h = g.relu(h);
        self.enc[1].forward(g, &self.params, h)
    }

    fn decode_nodes(&self, g: &mut Graph, z_c: NodeId) -> Result<NodeId> {
        let h = self.dec[0].forward(g, &self.params, z_c)?;
        let h = g.relu(h);
        self.dec[1].forward(g, &self.params, h)
    }

    pub(crate) fn forward(&self, g: &mut Graph, z_gt: &[f64]) -> Result<Ae3Nodes> {
        Self::check_len(z_gt, M_GT, "joint latent")?;
        let u = g.input(Tensor::vector(self.latent_norm.apply(z_gt)));
        let z_c = self.encode_nodes(g, u)?;
        let u_hat = self.decode_nodes(g, z_c)?;
        Ok(Ae3Nodes { u, u_hat })
    }

    /// De-standardizes the gripper block of `u_hat` as a graph node.
    fn gripper_block_raw(&self, g: &mut Graph, u_hat: NodeId) -> Result<NodeId> {
        let block = g.slice(u_hat, M_T, M_G)?;
        let mut diag = Tensor::zeros(&[M_G, M_G]);
        for i in 0..M_G {
            diag.data_mut()[i * M_G + i] = self.latent_norm.std[M_T + i];
        }
        let w = g.input(diag);
        let b = g.input(Tensor::vector(self.latent_norm.mean[M_T..].to_vec()));
        g.linear(block, w, b)
    }

    /// Full loss graph; returns `(total, recon, pose)` nodes.
    pub(crate) fn loss_nodes(
        &self,
        g: &mut Graph,
        nodes: &Ae3Nodes,
        pose: &[f64],
        ae2: &Ae2,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let recon = g.mse(nodes.u_hat, nodes.u)?;
        let mut parts = Vec::with_capacity(2);
        for (start, len) in [(0, M_T), (M_T, M_G)] {
            let a = g.slice(nodes.u_hat, start, len)?;
            let b = g.slice(nodes.u, start, len)?;
            let d = g.squared_distance(a, b)?;
            parts.push(g.scale(d, 1.0 / M_GT as f64));
        }
        let partition = g.add(parts[0], parts[1])?;
        let z_g = self.gripper_block_raw(g, nodes.u_hat)?;
        let p_hat = ae2.pose_head_nodes(g, z_g, true)?;
        let p = g.input(Tensor::vector(pose.to_vec()));
        let pose_term = g.mse(p_hat, p)?;
        let weighted_partition = g.scale(partition, self.weights.alpha);
        let weighted_pose = g.scale(pose_term, self.weights.beta);
        let total = g.add(recon, weighted_partition)?;
        let total = g.add(total, weighted_pose)?;
        Ok((total, recon, pose_term))
    }

    pub fn encode(&self, z_gt: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(z_gt, M_GT, "joint latent")?;
        let mut g = Graph::new();
        let u = g.input(Tensor::vector(self.latent_norm.apply(z_gt)));
        let z_c = self.encode_nodes(&mut g, u)?;
        Ok(g.value(z_c).data().to_vec())
    }

    pub fn decode(&self, z_c: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(z_c, M_C, "compressed latent")?;
        let mut g = Graph::new();
        let z = g.input(Tensor::vector(z_c.to_vec()));
        let u_hat = self.decode_nodes(&mut g, z)?;
        Ok(self.latent_norm.invert(g.value(u_hat).data()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut meta = ParamStore::new();
        self.latent_norm.push_into(&mut meta, "latent");
        meta.push("meta.zc.std", Tensor::vector(self.zc_std.clone()));
        push_meta_scalar(&mut meta, "alpha", self.weights.alpha);
        push_meta_scalar(&mut meta, "beta", self.weights.beta);
        save_with_meta(&self.params, &meta, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut model = Self::new(JointLossWeights::default(), 0)?;
        let meta = load_with_meta(&mut model.params, path.as_ref())?;
        model.latent_norm = Normalizer::read_from(&meta, "latent", M_GT)?;
        model.zc_std = meta.by_name("meta.zc.std")?.data().to_vec();
        Self::check_len(&model.zc_std, M_C, "z_C std")?;
        model.weights = JointLossWeights {
            alpha: meta_scalar(&meta, "alpha")?,
            beta: meta_scalar(&meta, "beta")?,
        };
        model.weights.validate()?;
        Ok(model)
    }
}

/// `L_recon + α(L_G + L_T) + β·L_pose` on plain vectors. `L_T` and `L_G`
/// are each block's share of the full-vector mean, so `L_recon = L_G + L_T`.
/// Zero weights are allowed here; models require positive ones.
pub fn ae3_loss(z: &[f64], z_hat: &[f64], p: &[f64], p_hat: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    if alpha < 0.0 || beta < 0.0 || !alpha.is_finite() || !beta.is_finite() {
        return Err(invalid(format!("loss weights must be non-negative, got alpha={alpha} beta={beta}")));
    }
    let t = |v: &[f64]| Tensor::vector(v.to_vec());
    let recon = ops::mse(&t(z_hat), &t(z))?;
    let (l_t, l_g) = partition_losses(z, z_hat)?;
    let pose = ops::mse(&t(p_hat), &t(p))?;
    Ok(recon + alpha * (l_g + l_t) + beta * pose)
}

/// `(L_T, L_G)` of a joint latent reconstruction.
pub fn partition_losses(z: &[f64], z_hat: &[f64]) -> Result<(f64, f64)> {
    if z.len() != M_GT || z_hat.len() != M_GT {
        return Err(shape_err(format!("joint latents must have length {M_GT}")));
    }
    let sq = |r: std::ops::Range<usize>| r.map(|i| (z[i] - z_hat[i]).powi(2)).sum::<f64>() / M_GT as f64;
    Ok((sq(0..M_T), sq(M_T..M_GT)))
}

/// AE3 under training, paired with the frozen AE2 used by the pose term.
pub struct Ae3Trainer<'a> {
    pub model: &'a mut Ae3,
    pub ae2: &'a Ae2,
}

impl Trainable for Ae3Trainer<'_> {
    type Sample = LatentRecord;

    fn params(&self) -> &ParamStore {
        &self.model.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.model.params
    }

    fn loss(&self, r: &LatentRecord) -> Result<f64> {
        let mut g = Graph::new();
        let nodes = self.model.forward(&mut g, &r.z)?;
        let (loss, _, _) = self.model.loss_nodes(&mut g, &nodes, &r.pose, self.ae2)?;
        Ok(g.value(loss).item())
    }

    fn loss_and_grads(&self, r: &LatentRecord) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let nodes = self.model.forward(&mut g, &r.z)?;
        let (loss, _, _) = self.model.loss_nodes(&mut g, &nodes, &r.pose, self.ae2)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).item(), grads.for_params(&g, &self.model.params)))
    }

    fn evaluate(&self, samples: &[&LatentRecord]) -> Result<Evaluation> {
        let n = samples.len().max(1) as f64;
        let (mut loss, mut acc, mut recon, mut pose) = (0.0, 0.0, 0.0, 0.0);
        for r in samples {
            let mut g = Graph::new();
            let nodes = self.model.forward(&mut g, &r.z)?;
            let (l, rc, p) = self.model.loss_nodes(&mut g, &nodes, &r.pose, self.ae2)?;
            loss += g.value(l).item();
            recon += g.value(rc).item();
            pose += g.value(p).item();
            let z_hat = self.model.latent_norm.invert(g.value(nodes.u_hat).data());
            acc += latent_accuracy(&r.z, &z_hat, &self.model.latent_norm.std, LATENT_TOLERANCE)?;
        }
        Ok(Evaluation {
            loss: loss / n,
            accuracy: acc / n,
            values: vec![acc / n, recon / n, pose / n],
        })
    }

    fn metric_names(&self) -> &'static [&'static str] {
        &["val_latent_acc", "val_recon_loss", "val_pose_loss"]
    }
}
