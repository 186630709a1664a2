//! `rl` and `adapt`.

use anyhow::Result;
use rand::Rng as _;
use serde_json::json;

use gg_core::ae::M_C;
use gg_core::datagen::pose_std;
use gg_core::rl::{
    adaptation_experiment, latent_policy, run_phase, success_curve, swap_scenario, AdaptConfig, AdaptationReport,
    Environment, EpisodeRecord, LatentEnv, LatentModels, PolicyParams, PoseEnv, PowerLearner, SwapKind, ToyEnv,
};
use gg_core::rng::{derive_seed, rng_from_seed};
use gg_core::voxel::POSE_DIM;

use crate::config::{Config, RewardKind, SwapPlan};
use crate::run::{outputs, NotConverged, RunDir};
use crate::train::{load_ae1, load_ae2, load_ae3, load_grippers};
use crate::Agent;

const EPISODE_HEADER: [&str; 9] = [
    "episode",
    "reward",
    "lifted",
    "valid",
    "stability",
    "penalty_T",
    "penalty_G",
    "sigma_mean",
    "success_rate",
];

fn agent_name(agent: Agent) -> &'static str {
    match agent {
        Agent::Latent => "latent",
        Agent::Baseline => "baseline",
    }
}

fn load_models(run: &RunDir) -> Result<LatentModels> {
    Ok(LatentModels {
        ae1: load_ae1(run)?,
        ae2: load_ae2(run)?,
        ae3: load_ae3(run)?,
    })
}

/// Pose-space exploration noise: a multiple of the spread of the gripper
/// dataset's poses.
fn baseline_sigma(run: &RunDir, config: &Config) -> Result<Vec<f64>> {
    let grippers = load_grippers(run)?;
    let std = pose_std(grippers.iter().map(|g| g.pose.to_normalized()));
    Ok(std.iter().map(|s| s * config.baseline_sigma_scale).collect())
}

fn episode_row(r: &EpisodeRecord, rate: f64) -> Vec<String> {
    vec![
        r.episode.to_string(),
        r.reward.to_string(),
        u8::from(r.lifted).to_string(),
        u8::from(r.valid).to_string(),
        r.stability.to_string(),
        r.penalty_t.to_string(),
        r.penalty_g.to_string(),
        r.sigma_mean.to_string(),
        rate.to_string(),
    ]
}

pub fn rl(run: &RunDir, config: &Config, agent: Agent) -> Result<()> {
    let name = agent_name(agent);
    let command = format!("rl-{name}");
    let episodes = format!("{command}.episodes.csv");
    let summary = format!("{command}.summary.json");
    let files = outputs(&command, &[&episodes, &summary]);
    run.claim(&files)?;

    let seed = derive_seed(config.master_seed, "rl");
    let power = config.power();
    let models;
    let pair;
    let (env, policy): (Box<dyn Environment + '_>, PolicyParams) = match config.rl_reward {
        RewardKind::Toy => {
            let (dim, scale) = match agent {
                Agent::Latent => (M_C, config.latent_sigma_scale),
                Agent::Baseline => (POSE_DIM, config.baseline_sigma_scale),
            };
            let mut rng = rng_from_seed(derive_seed(seed, "toy"));
            let optimum = (0..dim).map(|_| rng.random_range(-0.5..=0.5)).collect();
            let env = ToyEnv {
                optimum,
                success_bar: config.toy_success * ToyEnv::OPTIMAL_REWARD,
            };
            (Box::new(env), PolicyParams::new(vec![0.0; dim], vec![0.5 * scale; dim])?)
        }
        RewardKind::Grasp => {
            pair = swap_scenario(seed, SwapKind::Target, &config.grasp())?.before;
            match agent {
                Agent::Latent => {
                    models = load_models(run)?;
                    let policy = latent_policy(&models, config.latent_sigma_scale)?;
                    (Box::new(LatentEnv::new(&models, &pair, config.grasp())?), policy)
                }
                Agent::Baseline => {
                    let sigma = baseline_sigma(run, config)?;
                    let env = PoseEnv::new(&pair, &pair.gripper.pose, config.grasp())?;
                    (Box::new(env), PolicyParams::new(vec![0.0; POSE_DIM], sigma)?)
                }
            }
        }
    };

    let mut learner = PowerLearner::new(policy, power.clone(), derive_seed(seed, name))?;
    let mut records = Vec::new();
    let result = run_phase(&mut learner, env.as_ref(), &mut records)?;

    let mut w = run.csv_writer(&episodes)?;
    w.write_record(EPISODE_HEADER)?;
    for (r, rate) in records.iter().zip(success_curve(&records, power.window_m)) {
        w.write_record(episode_row(r, rate))?;
    }
    w.flush()?;
    let best = records.iter().map(|r| r.reward).fold(f64::NEG_INFINITY, f64::max);
    let value = json!({
        "agent": name,
        "reward": config.rl_reward,
        "episodes_to_threshold": result.episodes_to_threshold,
        "episodes_run": result.episodes_run,
        "episode_cap": power.episode_cap,
        "best_reward": best,
        "final_sigma_mean": learner.policy.sigma_mean(),
        "final_mean": learner.policy.mean,
    });
    run.write_json(&summary, &value)?;
    run.write_config(&command, config)?;
    run.write_manifest(&command, config, &files, value)?;
    match result.episodes_to_threshold {
        Some(e) => {
            eprintln!("{name}: threshold reached after {e} episodes");
            Ok(())
        }
        None => Err(NotConverged(format!("{name} agent hit the {}-episode cap", power.episode_cap)).into()),
    }
}

pub fn swap_plan(plan: SwapPlan, n: usize) -> Vec<SwapKind> {
    (0..n)
        .map(|i| match plan {
            SwapPlan::Target => SwapKind::Target,
            SwapPlan::Gripper => SwapKind::Gripper,
            SwapPlan::Alternate if i % 2 == 0 => SwapKind::Target,
            SwapPlan::Alternate => SwapKind::Gripper,
        })
        .collect()
}

pub const ADAPT_REPORT: &str = "adapt.report.json";

pub fn adapt(run: &RunDir, config: &Config) -> Result<()> {
    let curves = "adapt.curves.csv";
    let seeds = "adapt.seeds.csv";
    let files = outputs("adapt", &[ADAPT_REPORT, curves, seeds]);
    run.claim(&files)?;
    let models = load_models(run)?;
    let cfg = AdaptConfig {
        power: config.power(),
        grasp: config.grasp(),
        latent_sigma_scale: config.latent_sigma_scale,
        baseline_sigma0: baseline_sigma(run, config)?,
    };
    let plan = swap_plan(config.adapt_swap, config.adapt_seeds);
    let mut done = 0;
    let report = adaptation_experiment(&models, &cfg, &plan, derive_seed(config.master_seed, "adapt"), |r| {
        done += 1;
        let show = |e: Option<usize>| e.map_or("cap".to_string(), |e| e.to_string());
        eprintln!(
            "seed {done}/{}: {:?} swap, latent {} / baseline {} episodes after the swap",
            plan.len(),
            r.kind,
            show(r.latent.after.episodes_to_threshold),
            show(r.baseline.after.episodes_to_threshold)
        );
        Ok(())
    })?;

    write_curves(run, curves, &report, config.window_m)?;
    write_seed_table(run, seeds, &report)?;
    run.write_json(ADAPT_REPORT, &report)?;
    run.write_config("adapt", config)?;
    let brief = json!({
        "latent_median": report.latent_median,
        "baseline_median": report.baseline_median,
        "median_improvement_percent": report.median_improvement_percent,
        "latent_faster_seeds": report.latent_faster_seeds,
    });
    run.write_manifest("adapt", config, &files, brief)?;
    match report.median_improvement_percent {
        Some(p) => eprintln!(
            "median episodes after swap: latent {} / baseline {} ({p:.1}% fewer); latent faster on {}/{} seeds",
            report.latent_median,
            report.baseline_median,
            report.latent_faster_seeds,
            report.seeds.len()
        ),
        None => eprintln!("baseline median is zero; improvement undefined"),
    }
    let missing = report.latent_nonconverged
        + report.baseline_nonconverged
        + report.latent_nonconverged_before_swap
        + report.baseline_nonconverged_before_swap;
    if missing > 0 {
        return Err(NotConverged(format!("{missing} agent phases hit the episode cap; see {ADAPT_REPORT}")).into());
    }
    Ok(())
}

fn write_curves(run: &RunDir, name: &str, report: &AdaptationReport, window: usize) -> Result<()> {
    let mut w = run.csv_writer(name)?;
    let mut header = vec!["seed_index", "agent", "phase"];
    header.extend(EPISODE_HEADER);
    w.write_record(&header)?;
    for (i, s) in report.seeds.iter().enumerate() {
        for (agent, a) in [("latent", &s.latent), ("baseline", &s.baseline)] {
            let rates = success_curve(&a.records, window);
            for (r, rate) in a.records.iter().zip(rates) {
                let phase = if r.episode < a.before.episodes_run { "before" } else { "after" };
                let mut row = vec![i.to_string(), agent.to_string(), phase.to_string()];
                row.extend(episode_row(r, rate));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_seed_table(run: &RunDir, name: &str, report: &AdaptationReport) -> Result<()> {
    let mut w = run.csv_writer(name)?;
    w.write_record([
        "seed_index",
        "seed",
        "swap",
        "yaw_change_deg",
        "latent_before",
        "latent_after",
        "baseline_before",
        "baseline_after",
        "improvement_percent",
    ])?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for (i, s) in report.seeds.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.seed.to_string(),
            format!("{:?}", s.kind).to_lowercase(),
            s.yaw_change_deg.to_string(),
            opt(s.latent.before.episodes_to_threshold),
            opt(s.latent.after.episodes_to_threshold),
            opt(s.baseline.before.episodes_to_threshold),
            opt(s.baseline.after.episodes_to_threshold),
            s.improvement_percent.map_or(String::new(), |p| p.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternate_plan_interleaves() {
        assert_eq!(
            swap_plan(SwapPlan::Alternate, 3),
            vec![SwapKind::Target, SwapKind::Gripper, SwapKind::Target]
        );
        assert!(swap_plan(SwapPlan::Gripper, 2).iter().all(|k| *k == SwapKind::Gripper));
    }
}
