//! Policy search in the compressed latent space, the pose-space baseline,
//! and the adaptation experiment comparing them.

pub mod adapt;
pub mod agent;
pub mod env;
pub mod power;

pub use adapt::{adaptation_experiment, adapt_seed, latent_policy, summarize, swap_scenario, AdaptConfig, AdaptationReport, AgentKind, SeedResult, SwapKind, SwapScenario};
pub use agent::{run_phase, success_curve, EpisodeRecord, PhaseResult};
pub use env::{Environment, GraspPair, GraspSettings, LatentEnv, LatentModels, PoseEnv, StepOutcome, ToyEnv};
pub use power::{check_termination, power_update, sample_perturbation, PolicyParams, PowerConfig, PowerLearner};
