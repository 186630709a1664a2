//! Finite-difference cases for every graph op, the three autoencoder
//! losses and the reward penalties.

use rand::Rng as _;

use super::fd::{check_fn, check_model, check_vector, picks, random_tensor, FdReport};
use crate::ae::{Ae1, Ae2, Ae3, Ae3Trainer, JointLossWeights, Trainable, M_GT};
use crate::nn::{Graph, NodeId, ParamStore, Tensor};
use crate::rl::{swap_scenario, GraspSettings, LatentEnv, LatentModels, SwapKind};
use crate::rng::{rng_from_seed, Rng};
use crate::voxel::gripper::GripperProvenance;
use crate::voxel::target::{ShapeFamily, TargetProvenance};
use crate::voxel::{FingertipKind, GripperSample, LatentRecord, PhysicalProperties, Pose, TargetSample, VoxelGrid};
use crate::Result;

type Body = fn(&mut Graph, &[NodeId]) -> Result<NodeId>;

/// Builds a store from `shapes` and checks `body` reduced by squared
/// distance to a seeded random target.
fn layer_case(seed: u64, shapes: &[&[usize]], body: Body) -> Result<FdReport> {
    let mut r = rng_from_seed(seed);
    let mut store = ParamStore::new();
    for (i, s) in shapes.iter().enumerate() {
        store.push(format!("p{i}"), random_tensor(s, &mut r, 1.0));
    }
    let target_seed = seed.wrapping_mul(31).wrapping_add(7);
    let f = |store: &ParamStore| -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = (0..store.len()).map(|i| g.param(store, i)).collect();
        let out = body(&mut g, &nodes)?;
        let shape = g.value(out).shape().to_vec();
        let t = g.input(random_tensor(&shape, &mut rng_from_seed(target_seed), 1.0));
        let loss = g.squared_distance(out, t)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).item(), grads.for_params(&g, store)))
    };
    let p = picks(&store, 40, &mut r);
    check_fn(&mut store, &p, f)
}

const LAYERS: &[(&str, &[&[usize]], Body)] = &[
    ("conv3d", &[&[2, 4, 4, 4], &[3, 2, 3, 3, 3], &[3]], |g, p| g.conv3d(p[0], p[1], p[2], 1)),
    ("conv3d stride 2", &[&[2, 5, 5, 5], &[2, 2, 3, 3, 3], &[2]], |g, p| g.conv3d(p[0], p[1], p[2], 2)),
    ("max_pool3d", &[&[2, 4, 4, 4]], |g, p| g.max_pool3d(p[0], 2, 2)),
    ("upsample3d", &[&[2, 2, 2, 2]], |g, p| g.upsample3d(p[0], 2)),
    ("relu", &[&[30]], |g, p| Ok(g.relu(p[0]))),
    ("sigmoid", &[&[30]], |g, p| Ok(g.sigmoid(p[0]))),
    ("linear", &[&[6], &[4, 6], &[4]], |g, p| g.linear(p[0], p[1], p[2])),
    ("reshape/concat/slice/add/scale", &[&[2, 3], &[4], &[10]], |g, p| {
        let flat = g.reshape(p[0], &[6])?;
        let joined = g.concat(&[flat, p[1]]);
        let part = g.slice(p[2], 0, 10)?;
        let sum = g.add(joined, part)?;
        Ok(g.scale(sum, -1.7))
    }),
    ("mse", &[&[9], &[9]], |g, p| {
        let m = g.mse(p[0], p[1])?;
        Ok(g.scale(m, 3.0))
    }),
];

fn random_grid(n: usize, r: &mut Rng) -> VoxelGrid {
    VoxelGrid::from_fn(n, |_, _, _| r.random_bool(0.3))
}

/// Random pose with a small offset and a unit quaternion.
pub fn random_pose(r: &mut Rng) -> Pose {
    loop {
        let q = [0; 4].map(|_| r.random_range(-1.0..=1.0));
        let r3 = [0; 3].map(|_| r.random_range(-0.01..=0.01));
        if let Ok(p) = Pose::new(r3, q) {
            return p;
        }
    }
}

fn target_sample(n: usize, r: &mut Rng) -> TargetSample {
    TargetSample {
        grid: random_grid(n, r),
        props: PhysicalProperties {
            mass: r.random_range(0.5..2.0),
            principal_moments: [0.3, 0.5, 0.7],
            friction_mu: r.random_range(0.3..0.6),
        },
        provenance: TargetProvenance {
            family: ShapeFamily::Box,
            params: vec![4.0, 4.0, 4.0],
            seed: 0,
            perturbation: None,
        },
    }
}

fn gripper_sample(n: usize, r: &mut Rng) -> GripperSample {
    GripperSample {
        grid: random_grid(n, r),
        pose: random_pose(r),
        contact_profile: [vec![], vec![]],
        provenance: GripperProvenance {
            kind: FingertipKind::Flat,
            amplitude: 0.0,
            base_pose: Pose::identity(),
            seed: 0,
        },
    }
}

/// Random joint latents whose element scales differ.
pub fn latent_records(r: &mut Rng, n: usize) -> Vec<LatentRecord> {
    (0..n)
        .map(|i| LatentRecord {
            z: (0..M_GT).map(|k| r.random_range(-1.0..=1.0) * (1.0 + k as f64 / 10.0)).collect(),
            pose: random_pose(r).to_normalized(),
            target_index: i as u32,
            gripper_index: 0,
        })
        .collect()
}

fn ae1_case(seed: u64) -> Result<FdReport> {
    let mut r = rng_from_seed(seed + 100);
    let mut model = Ae1::new(16, seed)?;
    let sample = target_sample(16, &mut r);
    let p = picks(model.params(), 3, &mut r);
    check_model(&mut model, &sample, &p)
}

fn ae2_case(seed: u64) -> Result<FdReport> {
    let mut r = rng_from_seed(seed + 200);
    let mut model = Ae2::new(16, seed)?;
    let sample = gripper_sample(16, &mut r);
    let p = picks(model.params(), 3, &mut r);
    check_model(&mut model, &sample, &p)
}

fn ae3_case(seed: u64) -> Result<FdReport> {
    let mut r = rng_from_seed(seed + 300);
    let ae2 = Ae2::new(16, seed)?;
    let mut ae3 = Ae3::new(JointLossWeights::default(), seed)?;
    let records = latent_records(&mut r, 8);
    ae3.fit_normalizer(&records)?;
    let mut trainer = Ae3Trainer { model: &mut ae3, ae2: &ae2 };
    let p = picks(trainer.params(), 6, &mut r);
    check_model(&mut trainer, &records[0], &p)
}

/// Penalties of the latent reward against their closed-form gradient
/// `2·w·(ẑ − z)/s²`.
fn penalty_case(seed: u64) -> Result<FdReport> {
    let scenario = swap_scenario(5, SwapKind::Target, &GraspSettings::default())?;
    let mut r = rng_from_seed(seed + 400);
    let mut ae3 = Ae3::new(JointLossWeights::default(), seed)?;
    ae3.fit_normalizer(&latent_records(&mut r, 8))?;
    let models = LatentModels {
        ae1: Ae1::new(16, seed)?,
        ae2: Ae2::new(16, seed)?,
        ae3,
    };
    let settings = GraspSettings {
        alpha: r.random_range(0.005..0.05),
        beta: r.random_range(0.005..0.05),
        ..GraspSettings::default()
    };
    let env = LatentEnv::new(&models, &scenario.before, settings)?;
    let z: Vec<f64> = env.code().z_t.iter().chain(&env.code().z_g).copied().collect();
    let std = &models.ae3.latent_norm.std;
    let z_hat: Vec<f64> = z.iter().zip(std).map(|(v, s)| v + r.random_range(-1.0..=1.0) * s).collect();
    let split = env.code().z_t.len();
    let grad: Vec<f64> = (0..z.len())
        .map(|k| {
            let w = if k < split { settings.alpha } else { settings.beta };
            2.0 * w * (z_hat[k] - z[k]) / (std[k] * std[k])
        })
        .collect();
    let mut report = check_vector(&z_hat, &grad, |x| {
        let (t, g) = env.penalties(x).expect("length checked");
        t + g
    });
    let (t0, g0) = env.penalties(&z)?;
    if t0 != 0.0 || g0 != 0.0 {
        report.failures.push(format!("penalty of the exact latent is ({t0}, {g0}), not zero"));
    }
    Ok(report)
}

/// Every case merged over `seeds` seeds, in a fixed order.
pub fn gradient_suite(seeds: u64) -> Result<Vec<(&'static str, FdReport)>> {
    let mut out = Vec::new();
    for &(name, shapes, body) in LAYERS {
        let mut total = FdReport::default();
        for s in 0..seeds {
            total.merge(layer_case(s, shapes, body)?);
        }
        out.push((name, total));
    }
    let models: [(&'static str, fn(u64) -> Result<FdReport>); 4] = [
        ("AE1 loss", ae1_case),
        ("AE2 loss", ae2_case),
        ("AE3 loss", ae3_case),
        ("reward penalties", penalty_case),
    ];
    for (name, case) in models {
        let mut total = FdReport::default();
        for s in 0..seeds {
            total.merge(case(s)?);
        }
        out.push((name, total));
    }
    Ok(out)
}
