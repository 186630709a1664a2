//! AE1: target voxels plus physical properties to `z_T` and back.

use std::path::Path;

use super::layers::{ConvDecoder, ConvEncoder, Dense, Mlp};
use super::train::{Evaluation, Trainable};
use super::{load_with_meta, save_with_meta, voxel_accuracy, Normalizer, M_T};
use crate::error::{shape_err, Result};
use crate::nn::{ops, Graph, NodeId, ParamStore, Tensor};
use crate::rng::{derive_seed, rng_from_seed};
use crate::voxel::{PhysicalProperties, TargetSample, VoxelGrid, PROPERTY_DIM};

pub type TargetLatent = Vec<f64>;

const PROP_HIDDEN: usize = 16;

#[derive(Clone, Debug)]
pub struct Ae1 {
    params: ParamStore,
    encoder: ConvEncoder,
    to_latent: Dense,
    decoder: ConvDecoder,
    prop_head: Mlp,
    pub props_norm: Normalizer,
    resolution: usize,
}

/// Graph nodes of one forward pass.
pub(crate) struct Ae1Nodes {
    pub voxels: NodeId,
    pub props: NodeId,
}

impl Ae1 {
    /// Randomly initialized model for `resolution³` grids (a multiple of 8).
    pub fn new(resolution: usize, seed: u64) -> Result<Self> {
        if resolution == 0 || resolution % 8 != 0 {
            return Err(shape_err(format!("resolution {resolution} is not a positive multiple of 8")));
        }
        let mut rng = rng_from_seed(derive_seed(seed, "ae1.init"));
        let mut params = ParamStore::new();
        let encoder = ConvEncoder::new(&mut params, "enc", resolution, &mut rng);
        let to_latent = Dense::new(&mut params, "enc.fc", encoder.feature_len() + PROPERTY_DIM, M_T, &mut rng);
        let decoder = ConvDecoder::new(&mut params, "dec", M_T, resolution, &mut rng);
        let prop_head = Mlp::new(&mut params, "dec.props", M_T, PROP_HIDDEN, PROPERTY_DIM, &mut rng);
        Ok(Self {
            params,
            encoder,
            to_latent,
            decoder,
            prop_head,
            props_norm: Normalizer::identity(PROPERTY_DIM),
            resolution,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Fits the property z-score statistics to `samples`.
    pub fn fit_normalizer(&mut self, samples: &[TargetSample]) -> Result<()> {
        let rows: Vec<[f64; PROPERTY_DIM]> = samples.iter().map(|s| s.props.to_array()).collect();
        self.props_norm = Normalizer::fit(rows.iter().map(|r| r.as_slice()))?;
        Ok(())
    }

    fn check_grid(&self, grid: &VoxelGrid) -> Result<()> {
        if grid.resolution() != self.resolution {
            return Err(shape_err(format!(
                "grid resolution {} does not match model resolution {}",
                grid.resolution(),
                self.resolution
            )));
        }
        Ok(())
    }

    pub(crate) fn encode_nodes(&self, g: &mut Graph, grid: &VoxelGrid, props: &PhysicalProperties) -> Result<NodeId> {
        self.check_grid(grid)?;
        let x = g.input(grid.to_tensor());
        let p = g.input(Tensor::vector(self.props_norm.apply(&props.to_array())));
        let features = self.encoder.forward(g, &self.params, x)?;
        let joined = g.concat(&[features, p]);
        self.to_latent.forward(g, &self.params, joined)
    }

    /// Returns sigmoid voxel probabilities and normalized property estimates.
    pub(crate) fn decode_nodes(&self, g: &mut Graph, z: NodeId) -> Result<(NodeId, NodeId)> {
        let logits = self.decoder.forward(g, &self.params, z)?;
        let voxels = g.sigmoid(logits);
        let props = self.prop_head.forward(g, &self.params, z)?;
        Ok((voxels, props))
    }

    pub(crate) fn forward(&self, g: &mut Graph, sample: &TargetSample) -> Result<Ae1Nodes> {
        let z = self.encode_nodes(g, &sample.grid, &sample.props)?;
        let (voxels, props) = self.decode_nodes(g, z)?;
        Ok(Ae1Nodes { voxels, props })
    }

    /// Builds the training loss of one sample.
    pub(crate) fn loss_node(&self, g: &mut Graph, sample: &TargetSample, nodes: &Ae1Nodes) -> Result<NodeId> {
        let n = g.value(nodes.voxels).len();
        let x = g.input(sample.grid.to_tensor().reshape(&[n])?);
        let p = g.input(Tensor::vector(self.props_norm.apply(&sample.props.to_array())));
        let voxel_term = g.mse(nodes.voxels, x)?;
        let prop_term = g.mse(nodes.props, p)?;
        g.add(voxel_term, prop_term)
    }

    pub fn encode(&self, grid: &VoxelGrid, props: &PhysicalProperties) -> Result<TargetLatent> {
        let mut g = Graph::new();
        let z = self.encode_nodes(&mut g, grid, props)?;
        Ok(g.value(z).data().to_vec())
    }

    /// Voxel logits and de-normalized property estimates.
    pub fn decode(&self, z: &[f64]) -> Result<(Vec<f64>, PhysicalProperties)> {
        if z.len() != M_T {
            return Err(shape_err(format!("target latent must have length {M_T}, got {}", z.len())));
        }
        let mut g = Graph::new();
        let zn = g.input(Tensor::vector(z.to_vec()));
        let logits = self.decoder.forward(&mut g, &self.params, zn)?;
        let props = self.prop_head.forward(&mut g, &self.params, zn)?;
        let props = PhysicalProperties::from_array(&self.props_norm.invert(g.value(props).data()))?;
        Ok((g.value(logits).data().to_vec(), props))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut meta = ParamStore::new();
        self.props_norm.push_into(&mut meta, "props");
        save_with_meta(&self.params, &meta, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>, resolution: usize) -> Result<Self> {
        let mut model = Self::new(resolution, 0)?;
        let meta = load_with_meta(&mut model.params, path.as_ref())?;
        model.props_norm = Normalizer::read_from(&meta, "props", PROPERTY_DIM)?;
        Ok(model)
    }
}

/// `mse(x, x̂) + mse(props, propŝ)` on normalized properties.
pub fn ae1_loss(x: &[f64], props: &[f64], x_hat: &[f64], props_hat: &[f64]) -> Result<f64> {
    let t = |v: &[f64]| Tensor::vector(v.to_vec());
    Ok(ops::mse(&t(x_hat), &t(x))? + ops::mse(&t(props_hat), &t(props))?)
}

/// Relative errors `|p̂ - p| / |p|` per property.
fn relative_errors(truth: &[f64], estimate: &[f64]) -> Vec<f64> {
    truth.iter().zip(estimate).map(|(t, e)| (e - t).abs() / t.abs().max(1e-12)).collect()
}

impl Trainable for Ae1 {
    type Sample = TargetSample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn loss(&self, sample: &TargetSample) -> Result<f64> {
        let mut g = Graph::new();
        let nodes = self.forward(&mut g, sample)?;
        let loss = self.loss_node(&mut g, sample, &nodes)?;
        Ok(g.value(loss).item())
    }

    fn loss_and_grads(&self, sample: &TargetSample) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let nodes = self.forward(&mut g, sample)?;
        let loss = self.loss_node(&mut g, sample, &nodes)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).item(), grads.for_params(&g, &self.params)))
    }

    fn evaluate(&self, samples: &[&TargetSample]) -> Result<Evaluation> {
        let n = samples.len().max(1) as f64;
        let (mut loss, mut acc, mut rel, mut mass_rel) = (0.0, 0.0, 0.0, 0.0);
        for s in samples {
            let mut g = Graph::new();
            let nodes = self.forward(&mut g, s)?;
            let l = self.loss_node(&mut g, s, &nodes)?;
            loss += g.value(l).item();
            acc += voxel_accuracy(s.grid.values(), g.value(nodes.voxels).data())?;
            let truth = s.props.to_array();
            let estimate = self.props_norm.invert(g.value(nodes.props).data());
            let errs = relative_errors(&truth, &estimate);
            rel += errs.iter().sum::<f64>() / errs.len() as f64;
            mass_rel += errs[0];
        }
        Ok(Evaluation {
            loss: loss / n,
            accuracy: acc / n,
            values: vec![acc / n, rel / n, mass_rel / n],
        })
    }

    fn metric_names(&self) -> &'static [&'static str] {
        &["val_voxel_acc", "val_prop_relerr", "val_mass_relerr"]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{generate_target, ShapeFamily};

    fn sample() -> TargetSample {
        generate_target(ShapeFamily::Box, &[4.0, 8.0, 8.0], 3).unwrap()
    }

    #[test]
    fn encode_is_deterministic_and_finite() {
        let m = Ae1::new(16, 1).unwrap();
        let s = sample();
        let a = m.encode(&s.grid, &s.props).unwrap();
        assert_eq!(a.len(), M_T);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a, m.encode(&s.grid, &s.props).unwrap());
    }

    #[test]
    fn decode_zero_latent_is_finite() {
        let m = Ae1::new(16, 1).unwrap();
        let (logits, props) = m.decode(&[0.0; M_T]).unwrap();
        assert_eq!(logits.len(), 4096);
        assert!(logits.iter().all(|v| v.is_finite()));
        assert!(props.to_array().iter().all(|v| v.is_finite()));
        assert!(m.decode(&[0.0; 31]).is_err());
    }

    #[test]
    fn wrong_resolution_rejected() {
        let m = Ae1::new(16, 1).unwrap();
        let s = sample();
        let small = VoxelGrid::empty(8);
        assert!(m.encode(&small, &s.props).is_err());
    }

    #[test]
    fn loss_fixtures() {
        let x: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        let p = [0.1, -0.3, 0.0, 2.0, 1.0];
        assert_eq!(ae1_loss(&x, &p, &x, &p).unwrap(), 0.0);
        let comp: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        assert_eq!(ae1_loss(&x, &p, &comp, &p).unwrap(), 1.0);
    }

    #[test]
    fn checkpoint_round_trip_keeps_outputs() {
        let mut m = Ae1::new(16, 4).unwrap();
        m.fit_normalizer(&[sample(), generate_target(ShapeFamily::Sphere, &[3.0], 1).unwrap()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae1.ggnn");
        m.save(&path).unwrap();
        let back = Ae1::load(&path, 16).unwrap();
        let s = sample();
        assert_eq!(m.encode(&s.grid, &s.props).unwrap(), back.encode(&s.grid, &s.props).unwrap());
        assert_eq!(back.props_norm, m.props_norm);
    }
}
