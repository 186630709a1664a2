//! Ten-sample overfit runs for the three autoencoders.

use crate::ae::{train, M_T, Ae1, Ae2, Ae3, Ae3Trainer, JointLossWeights, TrainConfig};
use crate::datagen::{build_latents, generate_grippers, generate_targets};
use crate::rng::derive_seed;
use crate::voxel::RESOLUTION;
use crate::Result;

pub const SAMPLES: usize = 10;
pub const MAX_EPOCHS: usize = 500;
pub const TARGET_ACCURACY: f64 = 99.0;
/// Bound on AE₂'s pose term (MSE of the normalized pose vector).
pub const POSE_MSE_BOUND: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Memorization {
    pub epochs_run: usize,
    /// Training-set accuracy in percent: voxel accuracy for AE₁ and AE₂,
    /// latent-element accuracy for AE₃.
    pub accuracy: f64,
    /// AE₂ only: pose MSE in normalized units.
    pub pose_mse: Option<f64>,
}

impl Memorization {
    pub fn passes(&self) -> bool {
        self.accuracy >= TARGET_ACCURACY && self.pose_mse.is_none_or(|m| m < POSE_MSE_BOUND)
    }
}

fn config(seed: u64, epochs: usize, target: Option<f64>) -> TrainConfig {
    TrainConfig {
        epochs,
        batch: 2,
        lr: 3e-3,
        seed,
        val_fraction: 0.0,
        target_accuracy: target,
    }
}

pub fn memorize_ae1(seed: u64) -> Result<Memorization> {
    let targets = generate_targets(SAMPLES, derive_seed(seed, "targets"))?;
    let mut model = Ae1::new(RESOLUTION, seed)?;
    model.fit_normalizer(&targets)?;
    let report = train(&mut model, &targets, &config(seed, MAX_EPOCHS, Some(TARGET_ACCURACY)), |_| Ok(()))?;
    Ok(Memorization {
        epochs_run: report.epochs.len(),
        accuracy: report.best().eval.values[0],
        pose_mse: None,
    })
}

/// Runs until both the geometry and pose bounds hold, or the epoch cap.
pub fn memorize_ae2(seed: u64) -> Result<Memorization> {
    let targets = generate_targets(SAMPLES, derive_seed(seed, "targets"))?;
    let grippers = generate_grippers(SAMPLES, &targets, derive_seed(seed, "grippers"))?;
    let mut model = Ae2::new(RESOLUTION, seed)?;
    let mut last = None;
    let mut epochs_run = 0;
    // Chunks of epochs so the run can stop once both bounds hold.
    const CHUNK: usize = 25;
    while epochs_run < MAX_EPOCHS {
        let cfg = config(derive_seed(seed, &format!("chunk{epochs_run}")), CHUNK, None);
        let report = train(&mut model, &grippers, &cfg, |_| Ok(()))?;
        epochs_run += CHUNK;
        let v = &report.best().eval.values;
        let m = Memorization {
            epochs_run,
            accuracy: v[0],
            pose_mse: Some(v[5]),
        };
        let done = m.passes();
        last = Some(m);
        if done {
            break;
        }
    }
    Ok(last.expect("at least one chunk"))
}

pub fn memorize_ae3(seed: u64) -> Result<Memorization> {
    let targets = generate_targets(SAMPLES, derive_seed(seed, "targets"))?;
    let grippers = generate_grippers(SAMPLES, &targets, derive_seed(seed, "grippers"))?;
    let ae1 = Ae1::new(RESOLUTION, seed)?;
    let ae2 = Ae2::new(RESOLUTION, seed)?;
    let mut records = build_latents(&ae1, &ae2, &targets, &grippers, 1, derive_seed(seed, "latents"))?;
    // An untrained pose head disagrees with the recorded poses; use its own
    // reading of each gripper latent so the pose term is consistent.
    for r in &mut records {
        r.pose.copy_from_slice(&ae2.decode_pose_vector(&r.z[M_T..])?);
    }
    let mut ae3 = Ae3::new(JointLossWeights::default(), seed)?;
    ae3.fit_normalizer(&records)?;
    let mut trainer = Ae3Trainer { model: &mut ae3, ae2: &ae2 };
    let report = train(&mut trainer, &records, &config(seed, MAX_EPOCHS, Some(TARGET_ACCURACY)), |_| Ok(()))?;
    Ok(Memorization {
        epochs_run: report.epochs.len(),
        accuracy: report.best().eval.accuracy,
        pose_mse: None,
    })
}
