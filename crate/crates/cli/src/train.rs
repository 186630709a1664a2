//! `train --stage`.

use std::io;

use anyhow::Result;
use serde_json::json;

use gg_core::ae::{split_indices, train, Ae1, Ae2, Ae3, Ae3Trainer, TrainConfig, TrainReport, Trainable};
use gg_core::datagen::build_latents;
use gg_core::rng::derive_seed;
use gg_core::voxel::{dataset_read, dataset_write, Dataset, GripperSample, LatentRecord, TargetSample, RESOLUTION};

use crate::config::Config;
use crate::data::{GRIPPERS, TARGETS};
use crate::run::{outputs, RunDir};
use crate::Stage;

pub const AE1: &str = "ae1.ggnn";
pub const AE2: &str = "ae2.ggnn";
pub const AE3: &str = "ae3.ggnn";
pub const LATENTS: &str = "latents.ggds";

pub fn load_targets(run: &RunDir) -> Result<Vec<TargetSample>> {
    Ok(dataset_read(run.require(TARGETS, "gen-data")?)?.into_targets()?)
}

pub fn load_grippers(run: &RunDir) -> Result<Vec<GripperSample>> {
    Ok(dataset_read(run.require(GRIPPERS, "gen-data")?)?.into_grippers()?)
}

pub fn load_ae1(run: &RunDir) -> Result<Ae1> {
    Ok(Ae1::load(run.require(AE1, "train --stage ae1")?, RESOLUTION)?)
}

pub fn load_ae2(run: &RunDir) -> Result<Ae2> {
    Ok(Ae2::load(run.require(AE2, "train --stage ae2")?, RESOLUTION)?)
}

pub fn load_ae3(run: &RunDir) -> Result<Ae3> {
    Ok(Ae3::load(run.require(AE3, "train --stage ae3")?)?)
}

pub fn load_latents(run: &RunDir) -> Result<Vec<LatentRecord>> {
    Ok(dataset_read(run.require(LATENTS, "train --stage ae3")?)?.into_latents()?)
}

pub fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Ae1 => "ae1",
        Stage::Ae2 => "ae2",
        Stage::Ae3 => "ae3",
    }
}

/// Training configuration of a stage; evaluation reuses it for the split.
pub fn stage_config(config: &Config, stage: Stage) -> TrainConfig {
    let seed = derive_seed(config.master_seed, &format!("{}.train", stage_name(stage)));
    match stage {
        Stage::Ae1 => config.train(config.ae1_epochs, config.ae1_batch, config.ae1_lr, seed),
        Stage::Ae2 => config.train(config.ae2_epochs, config.ae2_batch, config.ae2_lr, seed),
        Stage::Ae3 => config.train(config.ae3_epochs, config.ae3_batch, config.ae3_lr, seed),
    }
}

pub fn train_stage(run: &RunDir, config: &Config, stage: Stage) -> Result<()> {
    let name = stage_name(stage);
    let command = format!("train-{name}");
    let checkpoint = format!("{name}.ggnn");
    let metrics = format!("{name}.metrics.csv");
    let summary = format!("{name}.summary.json");
    let mut own = vec![checkpoint.as_str(), metrics.as_str(), summary.as_str()];
    if stage == Stage::Ae3 {
        own.push(LATENTS);
    }
    let files = outputs(&command, &own);
    run.claim(&files)?;
    let tc = stage_config(config, stage);
    let init_seed = derive_seed(config.master_seed, name);

    let report = match stage {
        Stage::Ae1 => {
            let targets = load_targets(run)?;
            let mut model = Ae1::new(RESOLUTION, init_seed)?;
            model.fit_normalizer(&subset(&targets, &tc))?;
            let report = fit(run, &metrics, &mut model, &targets, &tc)?;
            model.save(run.path(&checkpoint))?;
            report
        }
        Stage::Ae2 => {
            let grippers = load_grippers(run)?;
            let mut model = Ae2::new(RESOLUTION, init_seed)?;
            let report = fit(run, &metrics, &mut model, &grippers, &tc)?;
            model.save(run.path(&checkpoint))?;
            report
        }
        Stage::Ae3 => {
            let ae1 = load_ae1(run)?;
            let ae2 = load_ae2(run)?;
            let targets = load_targets(run)?;
            let grippers = load_grippers(run)?;
            eprintln!("encoding latent pairs");
            let seed = derive_seed(config.master_seed, "latents");
            let records = build_latents(&ae1, &ae2, &targets, &grippers, config.pairs_per_target, seed)?;
            dataset_write(&Dataset::Latents(records.clone()), run.path(LATENTS))?;
            let mut model = Ae3::new(config.joint_weights(), init_seed)?;
            model.fit_normalizer(&subset(&records, &tc))?;
            let report = {
                let mut trainer = Ae3Trainer { model: &mut model, ae2: &ae2 };
                fit(run, &metrics, &mut trainer, &records, &tc)?
            };
            model.fit_zc_std(&records)?;
            model.save(run.path(&checkpoint))?;
            report
        }
    };

    let best = report.best();
    let summary_value = json!({
        "stage": name,
        "epochs_run": report.epochs.len(),
        "best_epoch": report.best_epoch,
        "train_samples": report.train_indices.len(),
        "val_samples": report.val_indices.len(),
        "val_loss": best.eval.loss,
        "val_accuracy": best.eval.accuracy,
    });
    run.write_json(&summary, &summary_value)?;
    run.write_config(&command, config)?;
    run.write_manifest(&command, config, &files, summary_value)?;
    eprintln!(
        "{name}: best epoch {} of {}, validation accuracy {:.2}%",
        report.best_epoch,
        report.epochs.len(),
        best.eval.accuracy
    );
    Ok(())
}

/// Training-split members of `samples`.
fn subset<T: Clone>(samples: &[T], tc: &TrainConfig) -> Vec<T> {
    let (train_idx, _) = split_indices(samples.len(), tc.val_fraction, tc.seed);
    train_idx.iter().map(|&i| samples[i].clone()).collect()
}

fn fit<M: Trainable>(run: &RunDir, metrics: &str, model: &mut M, samples: &[M::Sample], tc: &TrainConfig) -> Result<TrainReport> {
    let names = model.metric_names();
    let mut w = run.csv_writer(metrics)?;
    let mut header = vec!["epoch", "train_loss", "val_loss", "val_accuracy"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    w.flush()?;
    let report = train(model, samples, tc, |m| {
        let mut row = vec![m.epoch.to_string(), m.train_loss.to_string(), m.eval.loss.to_string(), m.eval.accuracy.to_string()];
        row.extend(m.eval.values.iter().map(f64::to_string));
        w.write_record(&row).map_err(io::Error::other)?;
        w.flush()?;
        eprintln!(
            "epoch {:>4}  train {:.5}  val {:.5}  acc {:.2}%",
            m.epoch, m.train_loss, m.eval.loss, m.eval.accuracy
        );
        Ok(())
    })?;
    Ok(report)
}
