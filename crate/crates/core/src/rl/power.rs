//! Reward-weighted policy search over a Gaussian perturbation policy.

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::rng::{derive_indexed, rng_from_seed, Rng};

/// Gaussian over perturbations: per-dimension mean and std.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyParams {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl PolicyParams {
    pub fn new(mean: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mean.len() != sigma.len() || mean.is_empty() {
            return Err(invalid(format!(
                "policy mean ({}) and sigma ({}) must be non-empty and equally long",
                mean.len(),
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(invalid("policy sigma must be positive and finite"));
        }
        Ok(Self { mean, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sigma_mean(&self) -> f64 {
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }
}

/// `δ_i ~ N(mean_i, sigma_i²)`.
pub fn sample_perturbation(policy: &PolicyParams, rng: &mut Rng) -> Vec<f64> {
    policy
        .mean
        .iter()
        .zip(&policy.sigma)
        .map(|(&m, &s)| Normal::new(m, s).expect("sigma validated").sample(rng))
        .collect()
}

/// Non-negative weights from rewards: shifted by the minimum only when
/// some reward is negative.
pub fn reward_weights(rewards: &[f64]) -> Vec<f64> {
    let min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min < 0.0 { min } else { 0.0 };
    rewards.iter().map(|r| r - shift).collect()
}

/// `θ_new = θ_old + η Σ_i (R_i / Σ_j R_j)(θ_i − θ_old)` on shifted rewards.
/// A zero reward sum leaves `θ_old` unchanged.
pub fn power_update(theta_old: &[f64], rollouts: &[(&[f64], f64)], eta: f64) -> Result<Vec<f64>> {
    if rollouts.is_empty() {
        return Err(invalid("power update needs at least one rollout"));
    }
    if rollouts.iter().any(|(t, r)| t.len() != theta_old.len() || !r.is_finite()) {
        return Err(invalid("rollout parameters must match the policy and rewards be finite"));
    }
    let rewards: Vec<f64> = rollouts.iter().map(|(_, r)| *r).collect();
    let w = reward_weights(&rewards);
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Ok(theta_old.to_vec());
    }
    let mut step = vec![0.0; theta_old.len()];
    for ((theta, _), wi) in rollouts.iter().zip(&w) {
        let k = wi / total;
        for (s, (t, o)) in step.iter_mut().zip(theta.iter().zip(theta_old)) {
            *s += k * (t - o);
        }
    }
    Ok(theta_old.iter().zip(&step).map(|(o, s)| o + eta * s).collect())
}

/// Success rate over the last `m` flags reaches `r_success`. Shorter
/// histories never terminate.
pub fn check_termination(history: &[bool], m: usize, r_success: f64) -> bool {
    if m == 0 || history.len() < m {
        return false;
    }
    let hits = history[history.len() - m..].iter().filter(|s| **s).count();
    hits as f64 / m as f64 >= r_success
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerConfig {
    pub n_rollouts: usize,
    pub eta: f64,
    /// Per-update sigma decay.
    pub gamma_sigma: f64,
    /// Sigma floor as a fraction of the initial sigma.
    pub sigma_floor: f64,
    pub pool_k: usize,
    pub window_m: usize,
    pub r_success: f64,
    pub episode_cap: usize,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            n_rollouts: 20,
            eta: 0.5,
            gamma_sigma: 0.995,
            sigma_floor: 0.02,
            pool_k: 10,
            window_m: 50,
            r_success: 0.8,
            episode_cap: 2000,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_rollouts > 0
            && (0.0..=1.0).contains(&self.eta)
            && self.gamma_sigma > 0.0
            && self.gamma_sigma <= 1.0
            && (0.0..=1.0).contains(&self.sigma_floor)
            && self.pool_k > 0
            && self.window_m > 0
            && (0.0..=1.0).contains(&self.r_success)
            && self.episode_cap > 0;
        if !ok {
            return Err(invalid(format!("invalid PoWER configuration: {self:?}")));
        }
        Ok(())
    }
}

/// One evaluated perturbation kept in the importance pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub theta: Vec<f64>,
    pub reward: f64,
}

/// Policy plus the best-k pool and sigma schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLearner {
    pub policy: PolicyParams,
    pub pool: Vec<Scored>,
    sigma0: Vec<f64>,
    config: PowerConfig,
    seed: u64,
}

impl PowerLearner {
    pub fn new(policy: PolicyParams, config: PowerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            sigma0: policy.sigma.clone(),
            policy,
            pool: Vec::new(),
            config,
            seed,
        })
    }

    pub fn config(&self) -> &PowerConfig {
        &self.config
    }

    /// Perturbation for a global episode index, from its own RNG stream.
    pub fn sample(&self, episode: usize) -> Vec<f64> {
        let mut rng = rng_from_seed(derive_indexed(self.seed, "rollout", episode as u64));
        sample_perturbation(&self.policy, &mut rng)
    }

    /// Merges `batch` into the pool, moves the mean and decays sigma.
    pub fn update(&mut self, batch: Vec<Scored>) -> Result<()> {
        self.pool.extend(batch);
        // Stable sort keeps earlier rollouts first on equal rewards.
        self.pool.sort_by(|a, b| b.reward.total_cmp(&a.reward));
        self.pool.truncate(self.config.pool_k);
        let rollouts: Vec<(&[f64], f64)> = self.pool.iter().map(|s| (s.theta.as_slice(), s.reward)).collect();
        self.policy.mean = power_update(&self.policy.mean, &rollouts, self.config.eta)?;
        for (s, s0) in self.policy.sigma.iter_mut().zip(&self.sigma0) {
            *s = (*s * self.config.gamma_sigma).max(s0 * self.config.sigma_floor);
        }
        Ok(())
    }

    /// Drops pooled rollouts whose rewards no longer apply.
    pub fn clear_pool(&mut self) {
        self.pool.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_rollout_full_step_moves_to_it() {
        let t = [1.0, -2.0];
        assert_eq!(power_update(&[0.0, 0.0], &[(&t, 0.7)], 1.0).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn one_hot_reward_selects_winner() {
        let a = [3.0, 1.0];
        let b = [-1.0, 5.0];
        let out = power_update(&[0.5, 0.5], &[(&a, 1.0), (&b, 0.0)], 1.0).unwrap();
        assert_eq!(out, vec![3.0, 1.0]);
    }

    #[test]
    fn equal_rewards_give_the_mean() {
        let a = [1.0, 2.0];
        let b = [3.0, 6.0];
        let c = [2.0, 1.0];
        let d = [4.0, -1.0];
        let out = power_update(&[9.0, 9.0], &[(&a, 0.5), (&b, 0.5), (&c, 0.5), (&d, 0.5)], 1.0).unwrap();
        assert_eq!(out, vec![2.5, 2.0]);
    }

    #[test]
    fn zero_step_is_identity() {
        let a = [1.0, 2.0];
        assert_eq!(power_update(&[0.25, -1.0], &[(&a, 0.9)], 0.0).unwrap(), vec![0.25, -1.0]);
    }

    #[test]
    fn zero_reward_sum_leaves_theta() {
        let a = [1.0];
        let b = [2.0];
        assert_eq!(power_update(&[0.0], &[(&a, -0.3), (&b, -0.3)], 1.0).unwrap(), vec![0.0]);
        assert_eq!(power_update(&[0.0], &[(&a, 0.0)], 1.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn negative_rewards_are_min_shifted() {
        let a = [1.0];
        let b = [5.0];
        // Shifted weights (1, 0).
        assert_eq!(power_update(&[0.0], &[(&a, -1.0), (&b, -2.0)], 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn termination_cases() {
        let mut h = vec![false; 5];
        h.extend([true, true, true, true, false, true, true, false, true, true]);
        assert!(check_termination(&h, 10, 0.8));
        assert!(!check_termination(&[false; 20], 10, 0.8));
        let seven: Vec<bool> = (0..10).map(|i| i < 7).collect();
        assert!(!check_termination(&seven, 10, 0.8));
        assert!(!check_termination(&[true; 9], 10, 0.8));
    }

    #[test]
    fn degenerate_sigma_returns_mean() {
        let p = PolicyParams::new(vec![0.3, -0.7], vec![1e-300, 1e-300]).unwrap();
        let d = sample_perturbation(&p, &mut rng_from_seed(3));
        assert_eq!(d, vec![0.3, -0.7]);
        assert!(PolicyParams::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn sample_mean_within_three_standard_errors() {
        let p = PolicyParams::new(vec![1.0, -2.0, 0.0], vec![0.5, 2.0, 1.0]).unwrap();
        let mut rng = rng_from_seed(11);
        let n = 100_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            for (s, v) in sum.iter_mut().zip(sample_perturbation(&p, &mut rng)) {
                *s += v;
            }
        }
        for i in 0..3 {
            let bound = 3.0 * p.sigma[i] / (n as f64).sqrt();
            assert!((sum[i] / n as f64 - p.mean[i]).abs() < bound);
        }
    }

    #[test]
    fn rollout_streams_are_reproducible() {
        let p = PolicyParams::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
        let l = PowerLearner::new(p, PowerConfig::default(), 5).unwrap();
        assert_eq!(l.sample(17), l.sample(17));
        assert_ne!(l.sample(17), l.sample(18));
    }

    #[test]
    fn sigma_decays_to_floor_and_pool_keeps_best() {
        let p = PolicyParams::new(vec![0.0], vec![1.0]).unwrap();
        let cfg = PowerConfig {
            gamma_sigma: 0.5,
            sigma_floor: 0.1,
            pool_k: 2,
            ..PowerConfig::default()
        };
        let mut l = PowerLearner::new(p, cfg, 0).unwrap();
        let mut last = 1.0;
        for k in 0..8 {
            l.update(vec![Scored {
                theta: vec![k as f64],
                reward: k as f64 % 3.0,
            }])
            .unwrap();
            assert!(l.policy.sigma[0] <= last);
            last = l.policy.sigma[0];
        }
        assert_eq!(last, 0.1);
        let rewards: Vec<f64> = l.pool.iter().map(|s| s.reward).collect();
        assert_eq!(rewards, vec![2.0, 2.0]);
        assert_eq!(l.pool[0].theta, vec![2.0]);
    }

    proptest! {
        #[test]
        fn update_stays_in_convex_hull(
            old in prop::collection::vec(-5.0f64..5.0, 3),
            thetas in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..8),
            rewards in prop::collection::vec(0.0f64..2.0, 8),
            eta in 0.0f64..=1.0,
        ) {
            let rollouts: Vec<(&[f64], f64)> = thetas.iter().zip(&rewards).map(|(t, r)| (t.as_slice(), *r)).collect();
            let out = power_update(&old, &rollouts, eta).unwrap();
            for d in 0..3 {
                let lo = thetas.iter().map(|t| t[d]).fold(old[d], f64::min);
                let hi = thetas.iter().map(|t| t[d]).fold(old[d], f64::max);
                prop_assert!(out[d] >= lo - 1e-9 && out[d] <= hi + 1e-9);
            }
        }
    }
}
