//! Mini-batch Adam training shared by the three autoencoders.

use rand::seq::SliceRandom;

use crate::error::{invalid, Error, Result};
use crate::nn::{OptimizerState, ParamStore, Tensor};
use crate::rng::{derive_seed, rng_from_seed};

/// Scores of one evaluation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Headline accuracy in percent, used for early stopping.
    pub accuracy: f64,
    /// Values for [`Trainable::metric_names`], in order.
    pub values: Vec<f64>,
}

pub trait Trainable {
    type Sample;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Loss of one sample and the gradient of every parameter.
    fn loss_and_grads(&self, sample: &Self::Sample) -> Result<(f64, Vec<Tensor>)>;

    /// Loss of one sample without the backward pass.
    fn loss(&self, sample: &Self::Sample) -> Result<f64> {
        Ok(self.loss_and_grads(sample)?.0)
    }

    fn evaluate(&self, samples: &[&Self::Sample]) -> Result<Evaluation>;

    /// CSV column names of [`Evaluation::values`].
    fn metric_names(&self) -> &'static [&'static str];
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Share held out for validation. Zero validates on the training set.
    pub val_fraction: f64,
    /// Stop as soon as validation accuracy reaches this percentage.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch: 16,
            lr: 1e-3,
            seed: 0,
            val_fraction: 0.1,
            target_accuracy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval: Evaluation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (lowest validation loss, or the
    /// first to reach the target accuracy).
    pub best_epoch: usize,
    pub reached_target: bool,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainReport {
    pub fn best(&self) -> &EpochMetrics {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Seeded 90/10 style split. Returns `(train, validation)` index lists.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(seed, "split")));
    if val_fraction <= 0.0 || n < 2 {
        return (idx.clone(), idx);
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    let mut train = idx;
    train.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (train, val)
}

/// Trains `model` in place and leaves it holding the kept parameters.
///
/// A non-finite loss or gradient restores the last good parameters and
/// returns [`Error::Diverged`]. `on_epoch` sees every epoch's metrics as
/// soon as they exist.
pub fn train<M: Trainable>(
    model: &mut M,
    samples: &[M::Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if config.batch == 0 || config.epochs == 0 || !(config.lr > 0.0) {
        return Err(invalid("epochs, batch and lr must be positive"));
    }
    let (train_idx, val_idx) = split_indices(samples.len(), config.val_fraction, config.seed);
    let val: Vec<&M::Sample> = val_idx.iter().map(|&i| &samples[i]).collect();
    let mut optimizer = OptimizerState::adam(config.lr, model.params());
    let mut rng = rng_from_seed(derive_seed(config.seed, "batches"));

    let mut last_good = model.params().clone();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut history = Vec::new();
    let mut reached_target = false;
    let mut order = train_idx.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch) {
            let mut acc: Option<Vec<Tensor>> = None;
            for &i in batch {
                let (loss, grads) = model.loss_and_grads(&samples[i])?;
                loss_sum += loss;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => a.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let finite = loss_sum.is_finite() && grads.iter().all(Tensor::all_finite);
            if !finite {
                model.params_mut().load_from(&last_good)?;
                return Err(Error::Diverged { epoch });
            }
            let k = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_assign(k));
            optimizer.step(model.params_mut(), &grads)?;
        }
        let eval = model.evaluate(&val)?;
        if !eval.loss.is_finite() || model.params().iter().any(|(_, t)| !t.all_finite()) {
            model.params_mut().load_from(&last_good)?;
            return Err(Error::Diverged { epoch });
        }
        last_good = model.params().clone();
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            eval,
        };
        on_epoch(&metrics)?;
        let hit = config.target_accuracy.is_some_and(|t| metrics.eval.accuracy >= t);
        if hit || best.as_ref().is_none_or(|(l, _, _)| metrics.eval.loss < *l) {
            best = Some((metrics.eval.loss, epoch, last_good.clone()));
        }
        history.push(metrics);
        if hit {
            reached_target = true;
            break;
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params_mut().load_from(&params)?;
    Ok(TrainReport {
        epochs: history,
        best_epoch,
        reached_target,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}
