//! `gen-data`.

use anyhow::{ensure, Result};
use serde_json::json;

use gg_core::datagen::{generate_grippers, generate_targets};
use gg_core::rng::derive_seed;
use gg_core::voxel::{dataset_read, dataset_write, Dataset};

use crate::config::Config;
use crate::run::{outputs, RunDir};

pub const TARGETS: &str = "targets.ggds";
pub const GRIPPERS: &str = "grippers.ggds";

pub fn gen_data(run: &RunDir, config: &Config) -> Result<()> {
    let files = outputs("gen-data", &[TARGETS, GRIPPERS]);
    run.claim(&files)?;
    let seed = config.master_seed;
    eprintln!("generating {} targets", config.n_targets);
    let targets = generate_targets(config.n_targets, derive_seed(seed, "targets"))?;
    eprintln!("generating {} grippers", config.n_grippers);
    let grippers = generate_grippers(config.n_grippers, &targets, derive_seed(seed, "grippers"))?;

    for t in &targets {
        let [i1, i2, i3] = t.props.principal_moments;
        ensure!(t.props.mass > 0.0, "generated target with non-positive mass");
        ensure!(i1 + i2 >= i3 * (1.0 - 1e-12), "generated target violates the inertia triangle inequality");
    }

    let targets = Dataset::Targets(targets);
    let grippers = Dataset::Grippers(grippers);
    dataset_write(&targets, run.path(TARGETS))?;
    dataset_write(&grippers, run.path(GRIPPERS))?;
    ensure!(dataset_read(run.path(TARGETS))? == targets, "target dataset did not re-read identically");
    ensure!(dataset_read(run.path(GRIPPERS))? == grippers, "gripper dataset did not re-read identically");

    run.write_config("gen-data", config)?;
    run.write_manifest(
        "gen-data",
        config,
        &files,
        json!({ "targets": targets.len(), "grippers": grippers.len() }),
    )?;
    eprintln!("wrote {} and {}", TARGETS, GRIPPERS);
    Ok(())
}
