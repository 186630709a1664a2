//! `gg`: dataset generation, autoencoder training, latent-space RL and the
//! adaptation experiment.

mod config;
mod data;
mod eval;
mod rl;
mod run;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use config::Config;
use run::RunDir;

#[derive(Parser, Debug)]
#[command(name = "gg", version, about = "Grammarized grasping: latent autoencoders and PoWER")]
struct Cli {
    /// Flat TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for inputs and outputs.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the target and gripper datasets.
    GenData,
    /// Train one autoencoder stage.
    Train {
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Run one agent on a single grasp pair.
    Rl {
        #[arg(long, value_enum)]
        agent: Agent,
    },
    /// Swap a target or gripper after convergence and count re-adaptation episodes.
    Adapt,
    /// Print the accuracy table of whatever stages exist.
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Ae1,
    Ae2,
    Ae3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Agent {
    Latent,
    Baseline,
}

fn effective_config(cli: &Cli) -> Result<Config> {
    let mut c = match &cli.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        c.master_seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn execute(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    let run = RunDir::open(&cli.out)?;
    match &cli.command {
        Command::GenData => data::gen_data(&run, &config),
        Command::Train { stage } => train::train_stage(&run, &config, *stage),
        Command::Rl { agent } => rl::rl(&run, &config, *agent),
        Command::Adapt => rl::adapt(&run, &config),
        Command::Eval => eval::eval(&run, &config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { run::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
