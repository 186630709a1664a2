//! Adaptation after altering the target or the gripper: both agents learn
//! a pair to the success bar, the pair is swapped, and the episodes needed
//! to get back to the bar are compared.

use rand::Rng as _;
use serde::Serialize;

use super::agent::{run_phase, EpisodeRecord, PhaseResult};
use super::env::{Environment, GraspPair, GraspSettings, LatentEnv, LatentModels, PoseEnv};
use super::power::{PolicyParams, PowerConfig, PowerLearner};
use crate::error::{invalid, Result};
use crate::rng::{derive_indexed, derive_seed, rng_from_seed, Rng};
use crate::voxel::gripper::MAX_AMPLITUDE;
use crate::voxel::pose::{quat_from_axis_angle, quat_mul};
use crate::voxel::target::perturb_sample;
use crate::voxel::{
    canonical_pregrasp, generate_gripper, generate_target, FingertipKind, GripperSample, Pose, ShapeFamily, TargetSample,
    POSE_DIM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapKind {
    /// Same shape, re-oriented by a yaw change.
    Target,
    /// Same target, a different fingertip pair.
    Gripper,
}

/// Yaw of the first orientation, degrees, drawn from `[-MAX, MAX]`.
const BEFORE_YAW_MAX_DEG: f64 = 10.0;
/// Range of the yaw change of a target swap, degrees.
pub const YAW_CHANGE_DEG: (f64, f64) = (25.0, 35.0);
/// Approach error of the starting pose: yaw about the vertical, degrees.
pub const START_YAW_ERROR_DEG: (f64, f64) = (15.0, 25.0);
/// Approach error of the starting pose: horizontal shift, voxels.
pub const START_SHIFT_VOXELS: f64 = 1.5;
const SCENARIO_ATTEMPTS: usize = 256;

/// Both agents start every phase from the same observed pose: the before
/// pair's canonical pre-grasp with an approach error that fails to lift.
/// A swap changes the target or the gripper; the starting pose stays put.
/// A target swap is only accepted when the before pre-grasp no longer lifts
/// the new target. Gripper swaps carry no such check.
#[derive(Clone, Debug)]
pub struct SwapScenario {
    pub kind: SwapKind,
    pub before: GraspPair,
    pub after: GraspPair,
    /// Signed yaw change of a target swap; zero otherwise.
    pub yaw_change_deg: f64,
}

impl SwapScenario {
    /// A swap to an identical pair.
    pub fn noop(pair: GraspPair) -> Self {
        Self {
            kind: SwapKind::Target,
            after: pair.clone(),
            before: pair,
            yaw_change_deg: 0.0,
        }
    }

    pub fn start_pose(&self) -> Pose {
        self.before.gripper.pose
    }
}

fn yawed(base: &TargetSample, yaw_deg: f64) -> Result<TargetSample> {
    let q = quat_from_axis_angle([0.0, 0.0, 1.0], yaw_deg.to_radians());
    perturb_sample(base, q, 1.0, [0.0; 3])
}

fn random_gripper(rng: &mut Rng, seed: u64) -> Result<GripperSample> {
    let kind = FingertipKind::ALL[rng.random_range(0..FingertipKind::ALL.len())];
    let amplitude = rng.random_range(0.0..=MAX_AMPLITUDE);
    generate_gripper(kind, amplitude, seed)
}

fn sign(rng: &mut Rng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// `Some(lifted)` for a valid grasp at `pose`, `None` on penetration.
fn lifts(target: &TargetSample, gripper: &GripperSample, pose: Pose, settings: &GraspSettings) -> Result<Option<bool>> {
    let pair = GraspPair {
        target: target.clone(),
        gripper: gripper.with_pose(pose),
    };
    let step = PoseEnv::new(&pair, &pose, *settings)?.step(&[0.0; POSE_DIM])?;
    Ok(step.valid.then_some(step.success))
}

fn approach_error(rng: &mut Rng, pregrasp: Pose, voxel: f64) -> Result<Pose> {
    let yaw = sign(rng) * rng.random_range(START_YAW_ERROR_DEG.0..=START_YAW_ERROR_DEG.1);
    let q = quat_mul(quat_from_axis_angle([0.0, 0.0, 1.0], yaw.to_radians()), pregrasp.q);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let d = START_SHIFT_VOXELS * voxel;
    let r = [pregrasp.r[0] + d * phi.cos(), pregrasp.r[1] + d * phi.sin(), pregrasp.r[2]];
    Pose::new(r, q)
}

fn try_scenario(rng: &mut Rng, seed: u64, kind: SwapKind, settings: &GraspSettings) -> Result<Option<SwapScenario>> {
    let params = [
        rng.random_range(3.5..5.0),
        rng.random_range(6.0..9.0),
        rng.random_range(6.0..9.0),
    ];
    let base = generate_target(ShapeFamily::Box, &params, derive_seed(seed, "target"))?;
    let yaw_before = rng.random_range(-BEFORE_YAW_MAX_DEG..=BEFORE_YAW_MAX_DEG);
    let before_target = yawed(&base, yaw_before)?;
    let gripper = random_gripper(rng, derive_seed(seed, "gripper"))?;
    let pregrasp = canonical_pregrasp(&before_target.grid)?;
    let start = approach_error(rng, pregrasp, before_target.grid.voxel_edge())?;
    if lifts(&before_target, &gripper, pregrasp, settings)? != Some(true)
        || lifts(&before_target, &gripper, start, settings)? != Some(false)
    {
        return Ok(None);
    }
    let (after_target, after_gripper, yaw_change_deg) = match kind {
        SwapKind::Target => {
            let change = sign(rng) * rng.random_range(YAW_CHANGE_DEG.0..=YAW_CHANGE_DEG.1);
            let target = yawed(&base, yaw_before + change)?;
            // The swap must move the optimum: the old pre-grasp may not lift.
            if lifts(&target, &gripper, pregrasp, settings)? == Some(true) {
                return Ok(None);
            }
            (target, gripper.clone(), change)
        }
        SwapKind::Gripper => {
            let other = random_gripper(rng, derive_seed(seed, "gripper.after"))?;
            (before_target.clone(), other, 0.0)
        }
    };
    let solvable = canonical_pregrasp(&after_target.grid)?;
    if lifts(&after_target, &after_gripper, solvable, settings)? != Some(true) {
        return Ok(None);
    }
    Ok(Some(SwapScenario {
        kind,
        before: GraspPair {
            target: before_target,
            gripper: gripper.with_pose(start),
        },
        after: GraspPair {
            target: after_target,
            gripper: after_gripper.with_pose(start),
        },
        yaw_change_deg,
    }))
}

/// Seeded swap scenario on a box-shaped target. Both pairs are solvable at
/// their canonical pre-grasp; the shared starting pose fails on `before`.
pub fn swap_scenario(seed: u64, kind: SwapKind, settings: &GraspSettings) -> Result<SwapScenario> {
    let mut rng = rng_from_seed(derive_seed(seed, "scenario"));
    let mut last = None;
    for attempt in 0..SCENARIO_ATTEMPTS {
        // Fresh friction and fingertips on every attempt.
        let attempt_seed = derive_indexed(seed, "attempt", attempt as u64);
        match try_scenario(&mut rng, attempt_seed, kind, settings) {
            Ok(Some(s)) => return Ok(s),
            Ok(None) => {}
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| invalid(format!("no usable {kind:?} scenario in {SCENARIO_ATTEMPTS} attempts"))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptConfig {
    pub power: PowerConfig,
    pub grasp: GraspSettings,
    /// Initial latent sigma as a multiple of the per-element std of `z_C`.
    pub latent_sigma_scale: f64,
    /// Initial sigma of the pose-space agent, per normalized component.
    pub baseline_sigma0: Vec<f64>,
}

impl AdaptConfig {
    fn validate(&self) -> Result<()> {
        self.power.validate()?;
        if self.baseline_sigma0.len() != POSE_DIM || !(self.latent_sigma_scale > 0.0) {
            return Err(invalid("baseline sigma needs 7 entries and the latent sigma scale must be positive"));
        }
        Ok(())
    }
}

/// Initial policy of the latent agent: zero mean, `scale · std(z_C)`.
pub fn latent_policy(models: &LatentModels, scale: f64) -> Result<PolicyParams> {
    let sigma = models.ae3.zc_std.iter().map(|s| s * scale).collect();
    PolicyParams::new(vec![0.0; models.ae3.zc_std.len()], sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Latent,
    Baseline,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Latent => "latent",
            AgentKind::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentAdaptation {
    pub before: PhaseResult,
    pub after: PhaseResult,
    #[serde(skip)]
    pub records: Vec<EpisodeRecord>,
}

/// Learns `before`, swaps to `after` keeping the policy mean and sigma
/// (the importance pool is cleared), and learns again.
pub fn adapt_agent(
    learner: &mut PowerLearner,
    before: &dyn Environment,
    after: &dyn Environment,
) -> Result<AgentAdaptation> {
    let mut records = Vec::new();
    let before_result = run_phase(learner, before, &mut records)?;
    learner.clear_pool();
    let after_result = run_phase(learner, after, &mut records)?;
    Ok(AgentAdaptation {
        before: before_result,
        after: after_result,
        records,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub kind: SwapKind,
    pub yaw_change_deg: f64,
    pub latent: AgentAdaptation,
    pub baseline: AgentAdaptation,
    /// `100·(baseline − latent)/baseline` on post-swap episodes, when both
    /// converged and the baseline needed any.
    pub improvement_percent: Option<f64>,
}

/// Runs both agents on one scenario.
pub fn adapt_seed(models: &LatentModels, scenario: &SwapScenario, cfg: &AdaptConfig, seed: u64) -> Result<SeedResult> {
    cfg.validate()?;
    let latent_before = LatentEnv::new(models, &scenario.before, cfg.grasp)?;
    let latent_after = LatentEnv::new(models, &scenario.after, cfg.grasp)?;
    let mut latent = PowerLearner::new(
        latent_policy(models, cfg.latent_sigma_scale)?,
        cfg.power.clone(),
        derive_seed(seed, "latent"),
    )?;
    let latent_run = adapt_agent(&mut latent, &latent_before, &latent_after)?;

    let reference = scenario.start_pose();
    let pose_before = PoseEnv::new(&scenario.before, &reference, cfg.grasp)?;
    let pose_after = PoseEnv::new(&scenario.after, &reference, cfg.grasp)?;
    let mut baseline = PowerLearner::new(
        PolicyParams::new(vec![0.0; POSE_DIM], cfg.baseline_sigma0.clone())?,
        cfg.power.clone(),
        derive_seed(seed, "baseline"),
    )?;
    let baseline_run = adapt_agent(&mut baseline, &pose_before, &pose_after)?;

    let improvement_percent = match (
        latent_run.after.episodes_to_threshold,
        baseline_run.after.episodes_to_threshold,
    ) {
        (Some(l), Some(b)) if b > 0 => Some(100.0 * (b as f64 - l as f64) / b as f64),
        (Some(0), Some(0)) => Some(0.0),
        _ => None,
    };
    Ok(SeedResult {
        seed,
        kind: scenario.kind,
        yaw_change_deg: scenario.yaw_change_deg,
        latent: latent_run,
        baseline: baseline_run,
        improvement_percent,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptationReport {
    pub seeds: Vec<SeedResult>,
    pub episode_cap: usize,
    /// Medians of post-swap episodes-to-threshold; non-converged runs
    /// count as the episode cap.
    pub latent_median: f64,
    pub baseline_median: f64,
    /// `100·(baseline_median − latent_median)/baseline_median`.
    pub median_improvement_percent: Option<f64>,
    /// Seeds where the latent agent needed strictly fewer episodes.
    pub latent_faster_seeds: usize,
    pub latent_nonconverged: usize,
    pub baseline_nonconverged: usize,
    pub latent_nonconverged_before_swap: usize,
    pub baseline_nonconverged_before_swap: usize,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn summarize(seeds: Vec<SeedResult>, episode_cap: usize) -> AdaptationReport {
    let censored = |r: &PhaseResult| r.episodes_to_threshold.unwrap_or(episode_cap) as f64;
    let mut l: Vec<f64> = seeds.iter().map(|s| censored(&s.latent.after)).collect();
    let mut b: Vec<f64> = seeds.iter().map(|s| censored(&s.baseline.after)).collect();
    let latent_faster_seeds = seeds
        .iter()
        .filter(|s| {
            let rank = |r: &PhaseResult| r.episodes_to_threshold.map_or(usize::MAX, |e| e);
            rank(&s.latent.after) < rank(&s.baseline.after)
        })
        .count();
    let nonconv = |f: &dyn Fn(&SeedResult) -> &PhaseResult| {
        seeds.iter().filter(|s| f(s).episodes_to_threshold.is_none()).count()
    };
    let latent_nonconverged = nonconv(&|s| &s.latent.after);
    let baseline_nonconverged = nonconv(&|s| &s.baseline.after);
    let latent_nonconverged_before_swap = nonconv(&|s| &s.latent.before);
    let baseline_nonconverged_before_swap = nonconv(&|s| &s.baseline.before);
    let latent_median = median(&mut l);
    let baseline_median = median(&mut b);
    let median_improvement_percent =
        (baseline_median > 0.0).then(|| 100.0 * (baseline_median - latent_median) / baseline_median);
    AdaptationReport {
        seeds,
        episode_cap,
        latent_median,
        baseline_median,
        median_improvement_percent,
        latent_faster_seeds,
        latent_nonconverged,
        baseline_nonconverged,
        latent_nonconverged_before_swap,
        baseline_nonconverged_before_swap,
    }
}

/// Runs one scenario per entry of `plan`, seeded from `master_seed` and
/// the entry's index.
pub fn adaptation_experiment(
    models: &LatentModels,
    cfg: &AdaptConfig,
    plan: &[SwapKind],
    master_seed: u64,
    mut on_seed: impl FnMut(&SeedResult) -> Result<()>,
) -> Result<AdaptationReport> {
    let mut results = Vec::with_capacity(plan.len());
    for (i, &kind) in plan.iter().enumerate() {
        let seed = derive_indexed(master_seed, "adapt", i as u64);
        let scenario = swap_scenario(seed, kind, &cfg.grasp)?;
        let r = adapt_seed(models, &scenario, cfg, seed)?;
        on_seed(&r)?;
        results.push(r);
    }
    Ok(summarize(results, cfg.power.episode_cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::ToyEnv;

    #[test]
    fn scenarios_are_seeded_and_need_learning() {
        let settings = GraspSettings::default();
        let a = swap_scenario(3, SwapKind::Target, &settings).unwrap();
        let b = swap_scenario(3, SwapKind::Target, &settings).unwrap();
        assert_eq!(a.before.target.grid, b.before.target.grid);
        assert_eq!(a.start_pose(), b.start_pose());
        let change = a.yaw_change_deg.abs();
        assert!((YAW_CHANGE_DEG.0..=YAW_CHANGE_DEG.1).contains(&change));
        assert_ne!(a.before.target.grid, a.after.target.grid);
        assert_eq!(a.after.gripper.pose, a.start_pose());
        let start = lifts(&a.before.target, &a.before.gripper, a.start_pose(), &settings).unwrap();
        assert_eq!(start, Some(false));
        let g = swap_scenario(3, SwapKind::Gripper, &settings).unwrap();
        assert_eq!(g.before.target.grid, g.after.target.grid);
        assert_eq!(g.before.gripper.pose, g.after.gripper.pose);
        assert_ne!(g.before.gripper.grid, g.after.gripper.grid);
    }

    #[test]
    fn swap_to_same_landscape_needs_no_episodes() {
        let env = ToyEnv {
            optimum: vec![0.2, -0.1, 0.05],
            success_bar: 0.9,
        };
        let policy = PolicyParams::new(vec![0.0; 3], vec![0.1; 3]).unwrap();
        let mut l = PowerLearner::new(policy, PowerConfig::default(), 4).unwrap();
        let r = adapt_agent(&mut l, &env, &env).unwrap();
        assert!(r.before.episodes_to_threshold.is_some());
        assert_eq!(r.after.episodes_to_threshold, Some(0));
    }

    #[test]
    fn median_and_summary_censoring() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        let phase = |e: Option<usize>| PhaseResult {
            episodes_to_threshold: e,
            episodes_run: 0,
        };
        let agent = |e| AgentAdaptation {
            before: phase(Some(0)),
            after: phase(e),
            records: vec![],
        };
        let seed = |l, b| SeedResult {
            seed: 0,
            kind: SwapKind::Target,
            yaw_change_deg: 30.0,
            latent: agent(l),
            baseline: agent(b),
            improvement_percent: None,
        };
        let r = summarize(vec![seed(Some(10), Some(100)), seed(Some(20), None), seed(None, Some(40))], 2000);
        assert_eq!(r.latent_median, 20.0);
        assert_eq!(r.baseline_median, 100.0);
        assert_eq!(r.median_improvement_percent, Some(80.0));
        assert_eq!(r.latent_faster_seeds, 2);
        assert_eq!((r.latent_nonconverged, r.baseline_nonconverged), (1, 1));
    }
}
