//! The three autoencoders: target (AE1), gripper (AE2) and the joint
//! compressor (AE3), plus their shared training loop and metrics.

pub mod gripper;
pub mod joint;
pub mod layers;
pub mod target;
pub mod train;

use std::path::Path;

pub use gripper::{ae2_loss, Ae2, GripperLatent};
pub use joint::{ae3_loss, partition_losses, Ae3, Ae3Trainer, JointLossWeights};
pub use target::{ae1_loss, Ae1, TargetLatent};
pub use train::{split_indices, train, EpochMetrics, Evaluation, TrainConfig, TrainReport, Trainable};

use crate::error::{invalid, shape_err, Error, Result};
use crate::nn::{checkpoint, ParamStore, Tensor};

/// Target latent length.
pub const M_T: usize = 32;
/// Gripper latent length.
pub const M_G: usize = 48;
/// Geometry part of the gripper latent, indices `[0, 40)`.
pub const F_G_DIM: usize = 40;
/// Pose part of the gripper latent, indices `[40, 48)`.
pub const F_P_DIM: usize = 8;
/// Concatenated `[z_T | z_G]` length.
pub const M_GT: usize = M_T + M_G;
/// Compressed joint latent length.
pub const M_C: usize = 48;

/// `[z_T | z_G]`.
pub fn concat_latents(z_t: &[f64], z_g: &[f64]) -> Result<Vec<f64>> {
    if z_t.len() != M_T || z_g.len() != M_G {
        return Err(shape_err(format!(
            "latents must have lengths {M_T} and {M_G}, got {} and {}",
            z_t.len(),
            z_g.len()
        )));
    }
    let mut out = Vec::with_capacity(M_GT);
    out.extend_from_slice(z_t);
    out.extend_from_slice(z_g);
    Ok(out)
}

/// Inverse of [`concat_latents`]: slices at index 32.
pub fn split_latents(z_gt: &[f64]) -> Result<(&[f64], &[f64])> {
    if z_gt.len() != M_GT {
        return Err(shape_err(format!("joint latent must have length {M_GT}, got {}", z_gt.len())));
    }
    Ok(z_gt.split_at(M_T))
}

/// Percentage of voxels that agree after thresholding both sides at 0.5.
pub fn voxel_accuracy(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(shape_err(format!("voxel accuracy over {} vs {} values", x.len(), x_hat.len())));
    }
    let hits = x.iter().zip(x_hat).filter(|(a, b)| (**a >= 0.5) == (**b >= 0.5)).count();
    Ok(100.0 * hits as f64 / x.len() as f64)
}

/// Percentage of elements with `|z_i - ẑ_i| <= tol · std_i`.
pub fn latent_accuracy(z: &[f64], z_hat: &[f64], std: &[f64], tol: f64) -> Result<f64> {
    if z.len() != z_hat.len() || z.len() != std.len() || z.is_empty() {
        return Err(shape_err(format!(
            "latent accuracy over {}, {} and {} values",
            z.len(),
            z_hat.len(),
            std.len()
        )));
    }
    let hits = (0..z.len()).filter(|&i| (z[i] - z_hat[i]).abs() <= tol * std[i]).count();
    Ok(100.0 * hits as f64 / z.len() as f64)
}

/// Default tolerance of [`latent_accuracy`] in units of per-element std.
pub const LATENT_TOLERANCE: f64 = 0.1;

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Std floor so constant features do not divide by zero.
const MIN_STD: f64 = 1e-12;

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population statistics of `rows`.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(invalid("cannot fit normalization statistics on no rows"));
        };
        let dim = first.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(shape_err("rows of unequal length"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for i in 0..dim {
                var[i] += (r[i] - mean[i]).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| v.sqrt().max(MIN_STD)).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| x * s + m).collect()
    }

    fn push_into(&self, store: &mut ParamStore, name: &str) {
        store.push(format!("{META}{name}.mean"), Tensor::vector(self.mean.clone()));
        store.push(format!("{META}{name}.std"), Tensor::vector(self.std.clone()));
    }

    fn read_from(store: &ParamStore, name: &str, dim: usize) -> Result<Self> {
        let mean = store.by_name(&format!("{META}{name}.mean"))?.data().to_vec();
        let std = store.by_name(&format!("{META}{name}.std"))?.data().to_vec();
        if mean.len() != dim || std.len() != dim {
            return Err(shape_err(format!("normalizer `{name}` has wrong dimension")));
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid(format!("normalizer `{name}` has non-positive std")));
        }
        Ok(Self { mean, std })
    }
}

/// Prefix of checkpoint entries that are not trainable parameters.
const META: &str = "meta.";

/// Trainable parameters plus metadata entries, written as one `GGNN` file.
fn save_with_meta(params: &ParamStore, meta: &ParamStore, path: &Path) -> Result<()> {
    let mut all = ParamStore::new();
    for (name, t) in params.iter().chain(meta.iter()) {
        all.push(name, t.clone());
    }
    checkpoint::save(&all, path)
}

/// Splits a checkpoint into trainable parameters (loaded into `params`,
/// which fixes the expected architecture) and the metadata entries.
fn load_with_meta(params: &mut ParamStore, path: &Path) -> Result<ParamStore> {
    let all = checkpoint::load(path)?;
    let mut weights = ParamStore::new();
    let mut meta = ParamStore::new();
    for (name, t) in all.iter() {
        if name.starts_with(META) {
            meta.push(name, t.clone());
        } else {
            weights.push(name, t.clone());
        }
    }
    params.load_from(&weights)?;
    Ok(meta)
}

fn meta_scalar(meta: &ParamStore, name: &str) -> Result<f64> {
    let t = meta.by_name(&format!("{META}{name}"))?;
    if t.len() != 1 {
        return Err(Error::Shape(format!("metadata `{name}` is not a scalar")));
    }
    Ok(t.data()[0])
}

fn push_meta_scalar(meta: &mut ParamStore, name: &str, v: f64) {
    meta.push(format!("{META}{name}"), Tensor::scalar(v));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_layout_and_split_inverse() {
        let z = concat_latents(&[1.0; M_T], &[2.0; M_G]).unwrap();
        assert!(z[..32].iter().all(|v| *v == 1.0));
        assert!(z[32..].iter().all(|v| *v == 2.0));
        let (a, b) = split_latents(&z).unwrap();
        assert_eq!((a, b), (&[1.0; M_T][..], &[2.0; M_G][..]));
        assert!(split_latents(&z[..79]).is_err());
        assert!(concat_latents(&[0.0; 31], &[0.0; M_G]).is_err());
    }

    #[test]
    fn voxel_accuracy_fixtures() {
        let x: Vec<f64> = (0..4096).map(|i| (i % 3 == 0) as u8 as f64).collect();
        assert_eq!(voxel_accuracy(&x, &x).unwrap(), 100.0);
        let comp: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
        assert_eq!(voxel_accuracy(&x, &comp).unwrap(), 0.0);
        let half: Vec<f64> = x.iter().enumerate().map(|(i, v)| if i < 2048 { *v } else { 1.0 - v }).collect();
        assert_eq!(voxel_accuracy(&x, &half).unwrap(), 50.0);
    }

    #[test]
    fn latent_accuracy_fixtures() {
        let z = vec![1.0, -2.0, 0.5, 3.0];
        let std = vec![1.0, 2.0, 0.5, 1.0];
        assert_eq!(latent_accuracy(&z, &z, &std, LATENT_TOLERANCE).unwrap(), 100.0);
        let far: Vec<f64> = z.iter().zip(&std).map(|(v, s)| v + 10.0 * s).collect();
        assert_eq!(latent_accuracy(&z, &far, &std, LATENT_TOLERANCE).unwrap(), 0.0);
        let half = vec![1.05, -2.1, 0.5 + 0.5, 3.0 - 0.2];
        assert_eq!(latent_accuracy(&z, &half, &std, LATENT_TOLERANCE).unwrap(), 50.0);
    }

    #[test]
    fn normalizer_round_trip() {
        let rows = [vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let n = Normalizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        assert!((n.mean[0] - 3.0).abs() < 1e-12);
        let z = n.apply(&rows[2]);
        assert!((z[0] - 1.224744871391589).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
        let back = n.invert(&z);
        assert!((back[0] - 5.0).abs() < 1e-12 && (back[1] - 10.0).abs() < 1e-12);
    }
}
