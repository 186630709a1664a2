//! Exhaustive force-closure oracle, latent layout invariants and PoWER on a
//! concave toy landscape.

use nalgebra::Vector3;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::gradients::random_pose;
use crate::ae::{concat_latents, split_latents, Ae2, Ae3, JointLossWeights, F_G_DIM, M_C, M_G, M_T};
use crate::grasp::{force_closure, Contact};
use crate::rl::power::Scored;
use crate::rl::{PolicyParams, PowerConfig, PowerLearner, ToyEnv};
use crate::rng::{rng_from_seed, Rng};
use crate::voxel::{Pose, POSE_DIM};
use crate::Result;

fn unit(r: &mut Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0), r.random_range(-1.0..=1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn contact(p: Vector3<f64>, n: Vector3<f64>, mu: f64) -> Contact {
    Contact {
        position: p.into(),
        normal: n.into(),
        mu,
    }
}

/// Every unordered pair, cone angles measured with `acos`.
pub fn closure_brute_force(contacts: &[Contact]) -> bool {
    for (i, a) in contacts.iter().enumerate() {
        for b in &contacts[i + 1..] {
            let d = Vector3::from(b.position) - Vector3::from(a.position);
            if d.norm() == 0.0 {
                continue;
            }
            let half = a.mu.min(b.mu).atan();
            if d.angle(&Vector3::from(a.normal)) <= half && (-d).angle(&Vector3::from(b.normal)) <= half {
                return true;
            }
        }
    }
    false
}

/// Random contacts; every other set also gets a pair whose normals lean
/// up to 30° off their common line, so both outcomes occur often.
pub fn random_contact_set(r: &mut Rng, i: usize) -> Vec<Contact> {
    let n = if i % 5 == 0 { r.random_range(0..=200) } else { r.random_range(0..=6) };
    let mut set: Vec<Contact> = (0..n)
        .map(|_| {
            let p = Vector3::new(r.random_range(-0.05..=0.05), r.random_range(-0.05..=0.05), r.random_range(-0.05..=0.05));
            contact(p, unit(r), r.random_range(0.05..=1.0))
        })
        .collect();
    if i % 2 == 0 {
        let axis = unit(r);
        let mu = r.random_range(0.1..=0.8);
        let mut lean = |dir: Vector3<f64>| {
            let tilt = r.random_range(0.0..=30f64.to_radians());
            let side = dir.cross(&unit(r)).normalize();
            (dir * tilt.cos() + side * tilt.sin()).normalize()
        };
        let (na, nb) = (lean(axis), lean(-axis));
        set.push(contact(-axis * 0.02, na, mu));
        set.push(contact(axis * 0.02, nb, mu));
    }
    set
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureAgreement {
    pub sets: usize,
    pub agreed: usize,
    pub closed: usize,
}

pub fn closure_agreement(sets: usize, seed: u64) -> ClosureAgreement {
    let mut r = rng_from_seed(seed);
    let mut out = ClosureAgreement {
        sets,
        agreed: 0,
        closed: 0,
    };
    for i in 0..sets {
        let set = random_contact_set(&mut r, i);
        let expected = closure_brute_force(&set);
        out.agreed += usize::from(force_closure(&set) == expected);
        out.closed += usize::from(expected);
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayoutReport {
    pub cases: usize,
    /// Cases violating a positional invariant.
    pub violations: usize,
    /// Largest `| ‖q‖ − 1 |` over every decoded quaternion.
    pub max_quat_deviation: f64,
}

fn vector(r: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-scale..=scale)).collect()
}

/// Split/concat inversion, block positions after the joint round trip, pose
/// decoding reading only the pose slots, and unit decoded quaternions.
pub fn layout_invariants(cases: usize, seed: u64) -> Result<LayoutReport> {
    let ae3 = Ae3::new(JointLossWeights::default(), seed)?;
    let ae2 = Ae2::new(16, seed)?;
    let mut r = rng_from_seed(seed);
    let mut rep = LayoutReport {
        cases,
        ..LayoutReport::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let a = vector(&mut r, M_T, 10.0);
        let b = vector(&mut r, M_G, 10.0);
        let z = concat_latents(&a, &b)?;
        let (ta, tb) = split_latents(&z)?;
        let mut ok = ta == a.as_slice() && tb == b.as_slice();

        let c = ae3.encode(&z)?;
        let back = ae3.decode(&c)?;
        let (t, g) = split_latents(&back)?;
        ok &= c.len() == M_C && t.len() == M_T && g.len() == M_G && t == &back[..M_T] && g == &back[M_T..];

        let mut scrambled = g.to_vec();
        for v in &mut scrambled[..F_G_DIM] {
            *v = r.random_range(-100.0..=100.0);
        }
        let pose = ae2.decode_pose(g)?;
        ok &= pose == ae2.decode_pose(&scrambled)?;
        worst = worst.max(quat_deviation(&pose));
        if let Ok(p) = ae2.decode_pose(&vector(&mut r, M_G, 20.0)) {
            worst = worst.max(quat_deviation(&p));
        }
        if let Ok(p) = Pose::from_normalized(&vector(&mut r, POSE_DIM, 3.0)) {
            worst = worst.max(quat_deviation(&p));
        }
        worst = worst.max(quat_deviation(&random_pose(&mut r)));
        rep.violations += usize::from(!ok);
    }
    rep.max_quat_deviation = worst;
    Ok(rep)
}

fn quat_deviation(p: &Pose) -> f64 {
    (p.quat_norm() - 1.0).abs()
}

/// Share of the optimum reached by the policy mean after `updates` PoWER
/// updates on `1 − mean (θ − θ*)²` with `θ* ~ N(0, 1)^dim`, one entry per
/// seed.
pub fn toy_convergence(dim: usize, seeds: u64, updates: usize) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let cfg = PowerConfig::default();
    (0..seeds)
        .map(|seed| {
            let mut r = rng_from_seed(seed);
            let optimum: Vec<f64> = (0..dim).map(|_| normal.sample(&mut r)).collect();
            let env = ToyEnv {
                optimum,
                success_bar: 0.9,
            };
            let policy = PolicyParams::new(vec![0.0; dim], vec![0.5; dim])?;
            let mut learner = PowerLearner::new(policy, cfg.clone(), seed)?;
            for u in 0..updates {
                let batch = (0..cfg.n_rollouts)
                    .map(|i| {
                        let theta = learner.sample(u * cfg.n_rollouts + i);
                        let reward = env.reward(&theta);
                        Scored { theta, reward }
                    })
                    .collect();
                learner.update(batch)?;
            }
            Ok(env.reward(&learner.policy.mean) / ToyEnv::OPTIMAL_REWARD)
        })
        .collect()
}

/// The three exact update identities: a one-hot reward selects its rollout,
/// equal rewards with a full step give the rollout mean, a zero step keeps θ.
pub fn power_identities() -> Result<[(&'static str, bool); 3]> {
    use crate::rl::power_update;
    let a = [3.0, 1.0];
    let b = [-1.0, 5.0];
    let c = [2.0, -4.0];
    let d = [0.0, 2.0];
    let one_hot = power_update(&[0.5, 0.5], &[(&a, 1.0), (&b, 0.0), (&c, 0.0)], 1.0)? == a;
    let mean = power_update(&[9.0, 9.0], &[(&a, 0.5), (&b, 0.5), (&c, 0.5), (&d, 0.5)], 1.0)? == [1.0, 1.0];
    let identity = power_update(&[0.25, -1.0], &[(&a, 0.9), (&b, 0.1)], 0.0)? == [0.25, -1.0];
    Ok([("one-hot", one_hot), ("equal-mean", mean), ("zero-step", identity)])
}
