//! Episode loop shared by every agent: sample, evaluate, update.

use serde::Serialize;

use super::env::Environment;
use super::power::{check_termination, PowerLearner, Scored};
use crate::error::{invalid, Result};

/// One row of the episode stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    /// Global episode index across phases.
    pub episode: usize,
    pub reward: f64,
    pub lifted: bool,
    pub valid: bool,
    pub stability: f64,
    pub penalty_t: f64,
    pub penalty_g: f64,
    pub sigma_mean: f64,
    /// The perturbation evaluated, for replay.
    #[serde(skip)]
    pub theta: Vec<f64>,
}

/// Outcome of one phase of learning.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseResult {
    /// Episodes that preceded the first window of `M` episodes whose
    /// success rate met the bar; `None` if the cap was reached first.
    pub episodes_to_threshold: Option<usize>,
    pub episodes_run: usize,
}

/// Runs episodes against `env` until the success window is met or the
/// configured cap is reached, appending to `records`. Episode indices and
/// rollout RNG streams continue from `records.len()`.
pub fn run_phase(learner: &mut PowerLearner, env: &dyn Environment, records: &mut Vec<EpisodeRecord>) -> Result<PhaseResult> {
    if env.dim() != learner.policy.dim() {
        return Err(invalid(format!(
            "environment dimension {} differs from policy dimension {}",
            env.dim(),
            learner.policy.dim()
        )));
    }
    let cfg = learner.config().clone();
    let mut history = Vec::new();
    while history.len() < cfg.episode_cap {
        let mut batch = Vec::with_capacity(cfg.n_rollouts);
        for _ in 0..cfg.n_rollouts {
            let episode = records.len();
            let theta = learner.sample(episode);
            let out = env.step(&theta)?;
            history.push(out.success);
            records.push(EpisodeRecord {
                episode,
                reward: out.reward,
                lifted: out.success,
                valid: out.valid,
                stability: out.stability,
                penalty_t: out.penalty_t,
                penalty_g: out.penalty_g,
                sigma_mean: learner.policy.sigma_mean(),
                theta: theta.clone(),
            });
            batch.push(Scored { theta, reward: out.reward });
            if check_termination(&history, cfg.window_m, cfg.r_success) {
                return Ok(PhaseResult {
                    episodes_to_threshold: Some(history.len() - cfg.window_m),
                    episodes_run: history.len(),
                });
            }
            if history.len() >= cfg.episode_cap {
                break;
            }
        }
        learner.update(batch)?;
    }
    Ok(PhaseResult {
        episodes_to_threshold: None,
        episodes_run: history.len(),
    })
}

/// Trailing success rate over `m` episodes at every episode (shorter
/// prefixes use what exists).
pub fn success_curve(records: &[EpisodeRecord], m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(records.len());
    let mut hits = 0usize;
    for (i, r) in records.iter().enumerate() {
        hits += r.lifted as usize;
        if i >= m {
            hits -= records[i - m].lifted as usize;
        }
        out.push(hits as f64 / (i + 1).min(m) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::env::{StepOutcome, ToyEnv};
    use super::super::power::{PolicyParams, PowerConfig};
    use super::*;
    use std::cell::Cell;

    struct Always(bool, Cell<usize>);

    impl Environment for Always {
        fn dim(&self) -> usize {
            2
        }
        fn step(&self, _: &[f64]) -> Result<StepOutcome> {
            self.1.set(self.1.get() + 1);
            Ok(StepOutcome {
                reward: self.0 as u8 as f64,
                success: self.0,
                valid: true,
                stability: 0.0,
                penalty_t: 0.0,
                penalty_g: 0.0,
            })
        }
    }

    fn learner(cap: usize) -> PowerLearner {
        let cfg = PowerConfig {
            episode_cap: cap,
            ..PowerConfig::default()
        };
        PowerLearner::new(PolicyParams::new(vec![0.0; 2], vec![1.0; 2]).unwrap(), cfg, 1).unwrap()
    }

    #[test]
    fn immediate_success_costs_zero_episodes() {
        let mut l = learner(2000);
        let mut rec = Vec::new();
        let r = run_phase(&mut l, &Always(true, Cell::new(0)), &mut rec).unwrap();
        assert_eq!(r.episodes_to_threshold, Some(0));
        assert_eq!(r.episodes_run, 50);
    }

    #[test]
    fn cap_is_reported_not_raised() {
        let mut l = learner(130);
        let env = Always(false, Cell::new(0));
        let mut rec = Vec::new();
        let r = run_phase(&mut l, &env, &mut rec).unwrap();
        assert_eq!(r.episodes_to_threshold, None);
        assert_eq!((r.episodes_run, env.1.get(), rec.len()), (130, 130, 130));
    }

    #[test]
    fn replay_reproduces_rewards() {
        let env = ToyEnv {
            optimum: vec![0.5, -0.5],
            success_bar: 0.95,
        };
        let mut l = learner(400);
        let mut rec = Vec::new();
        run_phase(&mut l, &env, &mut rec).unwrap();
        for r in &rec {
            assert_eq!(env.step(&r.theta).unwrap().reward.to_bits(), r.reward.to_bits());
        }
    }

    #[test]
    fn curve_is_trailing_rate() {
        let rec: Vec<EpisodeRecord> = [true, false, true, true]
            .iter()
            .enumerate()
            .map(|(i, &lifted)| EpisodeRecord {
                episode: i,
                reward: 0.0,
                lifted,
                valid: true,
                stability: 0.0,
                penalty_t: 0.0,
                penalty_g: 0.0,
                sigma_mean: 1.0,
                theta: vec![],
            })
            .collect();
        assert_eq!(success_curve(&rec, 2), vec![1.0, 0.5, 0.5, 1.0]);
    }
}
