//! Baseline policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Action, DrivingEnv};
use crate::autopilot::{autopilot_control, AutopilotConfig};
use crate::observer::ObservationBundle;
use crate::world::WorldError;

pub const AGENT_NAMES: &[&str] = &["autopilot", "random", "zero"];

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no ego vehicle; reset the environment first")]
    NoEgo,
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{0}")]
    Other(String),
}

pub trait Agent {
    /// Called before each episode with that episode's seed.
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, obs: &ObservationBundle, env: &DrivingEnv) -> Result<Action, AgentError>;
}

/// Drives the ego with the rule-based controller, reading the world directly.
#[derive(Clone, Debug, Default)]
pub struct AutopilotAgent {
    /// Overrides the task's `ego_autopilot` settings when set.
    pub config: Option<AutopilotConfig>,
}

impl Agent for AutopilotAgent {
    fn act(&mut self, _obs: &ObservationBundle, env: &DrivingEnv) -> Result<Action, AgentError> {
        let ego = env.ego().ok_or(AgentError::NoEgo)?;
        let cfg = self.config.unwrap_or(env.config().ego_autopilot);
        let c = autopilot_control(env.world(), ego, &cfg)?;
        Ok(Action::continuous(c.throttle, c.steer))
    }
}

/// Uniform random continuous actions, reseeded per episode.
#[derive(Clone, Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Default for RandomAgent {
    fn default() -> Self {
        Self::new(0)
    }
}

impl Agent for RandomAgent {
    fn reset(&mut self, seed: u64) {
        // a separate stream from the world's RNG for the same seed
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(1);
    }

    fn act(&mut self, _obs: &ObservationBundle, _env: &DrivingEnv) -> Result<Action, AgentError> {
        Ok(Action::continuous(self.rng.gen_range(-1.0..=1.0), self.rng.gen_range(-1.0..=1.0)))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroAgent;

impl Agent for ZeroAgent {
    fn act(&mut self, _obs: &ObservationBundle, _env: &DrivingEnv) -> Result<Action, AgentError> {
        Ok(Action::continuous(0.0, 0.0))
    }
}

/// Builds a named baseline agent.
pub fn agent_by_name(name: &str, seed: u64) -> Option<Box<dyn Agent + Send>> {
    match name {
        "autopilot" => Some(Box::new(AutopilotAgent::default())),
        "random" => Some(Box::new(RandomAgent::new(seed))),
        "zero" => Some(Box::new(ZeroAgent)),
        _ => None,
    }
}
