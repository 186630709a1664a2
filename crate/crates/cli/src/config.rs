//! Flat experiment configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use gg_core::ae::{JointLossWeights, TrainConfig};
use gg_core::rl::{GraspSettings, PowerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Grasp,
    Toy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapPlan {
    Target,
    Gripper,
    /// Even seeds swap the target, odd seeds the gripper.
    Alternate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub master_seed: u64,

    pub n_targets: usize,
    pub n_grippers: usize,
    pub pairs_per_target: usize,

    pub val_fraction: f64,
    pub ae1_epochs: usize,
    pub ae1_batch: usize,
    pub ae1_lr: f64,
    pub ae2_epochs: usize,
    pub ae2_batch: usize,
    pub ae2_lr: f64,
    pub ae3_epochs: usize,
    pub ae3_batch: usize,
    pub ae3_lr: f64,
    pub ae3_alpha: f64,
    pub ae3_beta: f64,

    pub n_rollouts: usize,
    pub eta: f64,
    pub gamma_sigma: f64,
    pub sigma_floor: f64,
    pub pool_k: usize,
    pub window_m: usize,
    pub r_success: f64,
    pub episode_cap: usize,
    pub latent_sigma_scale: f64,
    pub baseline_sigma_scale: f64,
    pub reward_alpha: f64,
    pub reward_beta: f64,
    pub squeeze_force: f64,
    pub force_cap: f64,
    pub rl_reward: RewardKind,
    pub toy_success: f64,

    pub adapt_seeds: usize,
    pub adapt_swap: SwapPlan,
}

impl Default for Config {
    fn default() -> Self {
        let power = PowerConfig::default();
        let grasp = GraspSettings::default();
        Self {
            master_seed: 0,
            n_targets: 2000,
            n_grippers: 500,
            pairs_per_target: 2,
            val_fraction: 0.1,
            ae1_epochs: 25,
            ae1_batch: 16,
            ae1_lr: 1e-3,
            ae2_epochs: 60,
            ae2_batch: 8,
            ae2_lr: 3e-3,
            ae3_epochs: 200,
            ae3_batch: 32,
            ae3_lr: 1e-3,
            ae3_alpha: JointLossWeights::default().alpha,
            ae3_beta: JointLossWeights::default().beta,
            n_rollouts: power.n_rollouts,
            eta: power.eta,
            gamma_sigma: power.gamma_sigma,
            sigma_floor: power.sigma_floor,
            pool_k: power.pool_k,
            window_m: power.window_m,
            r_success: power.r_success,
            episode_cap: power.episode_cap,
            latent_sigma_scale: 0.5,
            baseline_sigma_scale: 0.5,
            reward_alpha: grasp.alpha,
            reward_beta: grasp.beta,
            squeeze_force: grasp.squeeze_force,
            force_cap: grasp.force_cap,
            rl_reward: RewardKind::Grasp,
            toy_success: 0.9,
            adapt_seeds: 10,
            adapt_swap: SwapPlan::Target,
        }
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_targets", self.n_targets),
            ("n_grippers", self.n_grippers),
            ("pairs_per_target", self.pairs_per_target),
            ("ae1_epochs", self.ae1_epochs),
            ("ae1_batch", self.ae1_batch),
            ("ae2_epochs", self.ae2_epochs),
            ("ae2_batch", self.ae2_batch),
            ("ae3_epochs", self.ae3_epochs),
            ("ae3_batch", self.ae3_batch),
            ("adapt_seeds", self.adapt_seeds),
        ];
        for (name, v) in counts {
            if v == 0 {
                bail!("{name} must be at least 1");
            }
        }
        let positive = [
            ("ae1_lr", self.ae1_lr),
            ("ae2_lr", self.ae2_lr),
            ("ae3_lr", self.ae3_lr),
            ("latent_sigma_scale", self.latent_sigma_scale),
            ("baseline_sigma_scale", self.baseline_sigma_scale),
            ("squeeze_force", self.squeeze_force),
            ("force_cap", self.force_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            bail!("val_fraction must lie in [0, 1), got {}", self.val_fraction);
        }
        if !(self.reward_alpha >= 0.0 && self.reward_beta >= 0.0) {
            bail!("reward_alpha and reward_beta must be non-negative");
        }
        self.joint_weights().validate()?;
        self.power().validate()?;
        Ok(())
    }

    pub fn train(&self, epochs: usize, batch: usize, lr: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch,
            lr,
            seed,
            val_fraction: self.val_fraction,
            target_accuracy: None,
        }
    }

    pub fn joint_weights(&self) -> JointLossWeights {
        JointLossWeights {
            alpha: self.ae3_alpha,
            beta: self.ae3_beta,
        }
    }

    pub fn power(&self) -> PowerConfig {
        PowerConfig {
            n_rollouts: self.n_rollouts,
            eta: self.eta,
            gamma_sigma: self.gamma_sigma,
            sigma_floor: self.sigma_floor,
            pool_k: self.pool_k,
            window_m: self.window_m,
            r_success: self.r_success,
            episode_cap: self.episode_cap,
        }
    }

    pub fn grasp(&self) -> GraspSettings {
        GraspSettings {
            squeeze_force: self.squeeze_force,
            force_cap: self.force_cap,
            alpha: self.reward_alpha,
            beta: self.reward_beta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = Config::default();
        c.validate().unwrap();
        let back: Config = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("n_targets = 12\nadapt_swap = \"gripper\"").unwrap();
        assert_eq!(c.n_targets, 12);
        assert_eq!(c.adapt_swap, SwapPlan::Gripper);
        assert_eq!(c.n_grippers, Config::default().n_grippers);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("n_target = 12").is_err());
    }

    #[test]
    fn zero_counts_are_rejected() {
        let c = Config {
            n_targets: 0,
            ..Config::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("n_targets"));
    }
}
