//! Parameterized layers shared by the autoencoders.

use crate::error::Result;
use crate::nn::params::{he_normal, ParamStore};
use crate::nn::{Graph, NodeId, Tensor};
use crate::rng::Rng;

/// Fully connected layer: weights `[n_out, n_in]` and bias `[n_out]`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let w = store.push(format!("{name}.w"), he_normal(&[n_out, n_in], n_in, rng));
        let b = store.push(format!("{name}.b"), Tensor::zeros(&[n_out]));
        Self { w, b, n_in, n_out }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.linear(x, w, b)
    }

    /// Same computation with the weights entered as constants, so the layer
    /// stays frozen while gradients still flow through it.
    pub fn forward_frozen(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.input(store.get(self.w).clone());
        let b = g.input(store.get(self.b).clone());
        g.linear(x, w, b)
    }
}

/// 3×3×3 convolution, stride 1, one voxel of zero padding.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub k: usize,
    pub b: usize,
}

impl Conv {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        let k = store.push(format!("{name}.k"), he_normal(&[c_out, c_in, 3, 3, 3], c_in * 27, rng));
        let b = store.push(format!("{name}.b"), Tensor::zeros(&[c_out]));
        Self { k, b }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let k = g.param(store, self.k);
        let b = g.param(store, self.b);
        g.conv3d(x, k, b, 1)
    }
}

/// Channel plan of the three conv stages.
pub const CHANNELS: [usize; 4] = [1, 8, 16, 32];

/// Three stages of conv + relu + 2³ max-pool, flattened.
#[derive(Clone, Debug)]
pub struct ConvEncoder {
    stages: [Conv; 3],
    pub resolution: usize,
}

impl ConvEncoder {
    pub fn new(store: &mut ParamStore, name: &str, resolution: usize, rng: &mut Rng) -> Self {
        let stages = [0, 1, 2].map(|i| Conv::new(store, &format!("{name}.conv{i}"), CHANNELS[i], CHANNELS[i + 1], rng));
        Self { stages, resolution }
    }

    /// Length of the flattened feature vector.
    pub fn feature_len(&self) -> usize {
        let s = self.resolution / 8;
        CHANNELS[3] * s * s * s
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, voxels: NodeId) -> Result<NodeId> {
        let mut h = voxels;
        for stage in &self.stages {
            h = stage.forward(g, store, h)?;
            h = g.relu(h);
            h = g.max_pool3d(h, 2, 2)?;
        }
        let n = g.value(h).len();
        g.reshape(h, &[n])
    }
}

/// Mirror of [`ConvEncoder`]: dense to the coarsest volume, then three
/// nearest-neighbour upsampling + conv stages. Returns voxel logits as a
/// flat vector.
#[derive(Clone, Debug)]
pub struct ConvDecoder {
    dense: Dense,
    stages: [Conv; 3],
    resolution: usize,
}

/// Initial output bias, the logit of a sparse occupancy prior.
const OUTPUT_BIAS: f64 = -2.0;

impl ConvDecoder {
    pub fn new(store: &mut ParamStore, name: &str, latent: usize, resolution: usize, rng: &mut Rng) -> Self {
        let s = resolution / 8;
        let dense = Dense::new(store, &format!("{name}.fc"), latent, CHANNELS[3] * s * s * s, rng);
        let stages = [0, 1, 2].map(|i| {
            Conv::new(store, &format!("{name}.conv{i}"), CHANNELS[3 - i], CHANNELS[2 - i], rng)
        });
        store.get_mut(stages[2].b).data_mut().fill(OUTPUT_BIAS);
        Self { dense, stages, resolution }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z: NodeId) -> Result<NodeId> {
        let s = self.resolution / 8;
        let h = self.dense.forward(g, store, z)?;
        let h = g.relu(h);
        let mut h = g.reshape(h, &[CHANNELS[3], s, s, s])?;
        for (i, stage) in self.stages.iter().enumerate() {
            h = g.upsample3d(h, 2)?;
            h = stage.forward(g, store, h)?;
            if i < 2 {
                h = g.relu(h);
            }
        }
        let n = g.value(h).len();
        g.reshape(h, &[n])
    }
}

/// Two dense layers with a relu between them.
#[derive(Clone, Copy, Debug)]
pub struct Mlp {
    pub first: Dense,
    pub second: Dense,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, hidden: usize, n_out: usize, rng: &mut Rng) -> Self {
        Self {
            first: Dense::new(store, &format!("{name}.0"), n_in, hidden, rng),
            second: Dense::new(store, &format!("{name}.1"), hidden, n_out, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let h = self.first.forward(g, store, x)?;
        let h = g.relu(h);
        self.second.forward(g, store, h)
    }

    pub fn forward_frozen(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let h = self.first.forward_frozen(g, store, x)?;
        let h = g.relu(h);
        self.second.forward_frozen(g, store, h)
    }
}
