//! `eval`: validation accuracy of every trained stage plus the adaptation
//! result, as a table on stdout and `eval.csv`.

use anyhow::Result;

use gg_core::ae::{split_indices, Ae3Trainer, Trainable};

use crate::config::Config;
use crate::rl::ADAPT_REPORT;
use crate::run::{outputs, RunDir};
use crate::train::{
    load_ae1, load_ae2, load_ae3, load_grippers, load_latents, load_targets, stage_config, AE1, AE2, AE3, LATENTS,
};
use crate::Stage;

#[derive(Debug, PartialEq)]
pub struct Row {
    pub stage: &'static str,
    pub metric: &'static str,
    pub value: Option<f64>,
}

fn validation<'a, T>(samples: &'a [T], config: &Config, stage: Stage) -> Vec<&'a T> {
    let tc = stage_config(config, stage);
    let (_, val) = split_indices(samples.len(), tc.val_fraction, tc.seed);
    val.iter().map(|&i| &samples[i]).collect()
}

fn ae1_row(run: &RunDir, config: &Config) -> Result<Option<f64>> {
    if !(run.exists(AE1) && run.exists(crate::data::TARGETS)) {
        return Ok(None);
    }
    let model = load_ae1(run)?;
    let targets = load_targets(run)?;
    Ok(Some(model.evaluate(&validation(&targets, config, Stage::Ae1))?.accuracy))
}

fn ae2_row(run: &RunDir, config: &Config) -> Result<Option<f64>> {
    if !(run.exists(AE2) && run.exists(crate::data::GRIPPERS)) {
        return Ok(None);
    }
    let model = load_ae2(run)?;
    let grippers = load_grippers(run)?;
    Ok(Some(model.evaluate(&validation(&grippers, config, Stage::Ae2))?.accuracy))
}

fn ae3_row(run: &RunDir, config: &Config) -> Result<Option<f64>> {
    if !(run.exists(AE3) && run.exists(AE2) && run.exists(LATENTS)) {
        return Ok(None);
    }
    let mut model = load_ae3(run)?;
    let ae2 = load_ae2(run)?;
    let records = load_latents(run)?;
    let trainer = Ae3Trainer { model: &mut model, ae2: &ae2 };
    Ok(Some(trainer.evaluate(&validation(&records, config, Stage::Ae3))?.accuracy))
}

fn adapt_row(run: &RunDir) -> Result<Option<f64>> {
    if !run.exists(ADAPT_REPORT) {
        return Ok(None);
    }
    let text = std::fs::read_to_string(run.path(ADAPT_REPORT))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    Ok(v["median_improvement_percent"].as_f64())
}

pub fn collect(run: &RunDir, config: &Config) -> Result<Vec<Row>> {
    Ok(vec![
        Row {
            stage: "AE1 target",
            metric: "val_voxel_accuracy_percent",
            value: ae1_row(run, config)?,
        },
        Row {
            stage: "AE2 gripper",
            metric: "val_combined_accuracy_percent",
            value: ae2_row(run, config)?,
        },
        Row {
            stage: "AE3 joint",
            metric: "val_latent_accuracy_percent",
            value: ae3_row(run, config)?,
        },
        Row {
            stage: "RL adaptation",
            metric: "median_improvement_percent",
            value: adapt_row(run)?,
        },
    ])
}

pub fn render(rows: &[Row]) -> String {
    let mut s = format!("{:<14} {:<32} {:>8}\n", "stage", "metric", "value");
    for r in rows {
        let v = r.value.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        s.push_str(&format!("{:<14} {:<32} {:>8}\n", r.stage, r.metric, v));
    }
    s
}

pub fn eval(run: &RunDir, config: &Config) -> Result<()> {
    let files = outputs("eval", &["eval.csv"]);
    run.claim(&files)?;
    let rows = collect(run, config)?;
    print!("{}", render(&rows));
    let mut w = run.csv_writer("eval.csv")?;
    w.write_record(["stage", "metric", "value"])?;
    for r in &rows {
        w.write_record([r.stage, r.metric, &r.value.map_or("n/a".to_string(), |v| v.to_string())])?;
    }
    w.flush()?;
    run.write_config("eval", config)?;
    run.write_manifest("eval", config, &files, serde_json::Value::Null)?;
    Ok(())
}
