//! Episode outcomes and their aggregate statistics.

use serde::{Deserialize, Serialize};

use super::{Action, Agent, DrivingEnv, EnvError, StepResult};
use crate::task::TerminationCause;
use crate::F;

/// A mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: F,
    #[serde(rename = "stderr")]
    pub se: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub cause: TerminationCause,
    pub steps: u64,
    pub total_reward: F,
    /// Sum of the ego speed over all steps.
    pub speed_sum: F,
}

impl EpisodeSummary {
    pub fn mean_speed(&self) -> F {
        if self.steps == 0 {
            0.0
        } else {
            self.speed_sum / self.steps as F
        }
    }
}

/// Outcome rates in percent and the average ego speed in m/s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episodes: usize,
    pub success_rate: MeanSe,
    pub collision_rate: MeanSe,
    pub out_of_lane_rate: MeanSe,
    pub timeout_rate: MeanSe,
    pub avg_speed: MeanSe,
}

/// Percentage of `k` out of `n` Bernoulli outcomes with its standard error.
fn rate(k: usize, n: usize) -> MeanSe {
    if n == 0 {
        return MeanSe::default();
    }
    let p = k as F / n as F;
    MeanSe { mean: 100.0 * p, se: 100.0 * (p * (1.0 - p) / n as F).sqrt() }
}

impl EpisodeMetrics {
    /// Rates only; `avg_speed` stays zero.
    pub fn from_causes(causes: &[TerminationCause]) -> Self {
        let n = causes.len();
        let count = |c: TerminationCause| causes.iter().filter(|x| **x == c).count();
        Self {
            episodes: n,
            success_rate: rate(count(TerminationCause::Destination), n),
            collision_rate: rate(count(TerminationCause::Collision), n),
            out_of_lane_rate: rate(count(TerminationCause::OutOfLane), n),
            timeout_rate: rate(count(TerminationCause::Timeout), n),
            avg_speed: MeanSe::default(),
        }
    }

    /// The speed mean is pooled over every step; its standard error is taken
    /// over per-episode mean speeds.
    pub fn from_summaries(summaries: &[EpisodeSummary]) -> Self {
        let causes: Vec<_> = summaries.iter().map(|s| s.cause).collect();
        let mut m = Self::from_causes(&causes);
        let steps: u64 = summaries.iter().map(|s| s.steps).sum();
        let speed: F = summaries.iter().map(|s| s.speed_sum).sum();
        let mean = if steps == 0 { 0.0 } else { speed / steps as F };
        let n = summaries.len();
        let se = if n < 2 {
            0.0
        } else {
            let per: Vec<F> = summaries.iter().map(EpisodeSummary::mean_speed).collect();
            let mu = per.iter().sum::<F>() / n as F;
            let var = per.iter().map(|x| (x - mu) * (x - mu)).sum::<F>() / (n - 1) as F;
            (var / n as F).sqrt()
        };
        m.avg_speed = MeanSe { mean, se };
        m
    }

    /// Sum of the four outcome rates; 100 whenever there is an episode.
    pub fn rate_sum(&self) -> F {
        self.success_rate.mean + self.collision_rate.mean + self.out_of_lane_rate.mean + self.timeout_rate.mean
    }
}

/// Passed to the per-step hook of [`run_episode`] and [`evaluate`].
pub struct StepEvent<'a> {
    pub episode: usize,
    pub seed: u64,
    pub action: Action,
    pub result: &'a StepResult,
    pub env: &'a DrivingEnv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: EpisodeMetrics,
    pub episodes: Vec<EpisodeSummary>,
}

/// Plays one episode to its end.
pub fn run_episode(
    env: &mut DrivingEnv,
    agent: &mut dyn Agent,
    episode: usize,
    seed: u64,
    hook: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<EpisodeSummary, EnvError> {
    agent.reset(seed);
    let (mut obs, _) = env.reset(seed)?;
    let mut summary = EpisodeSummary { episode, seed, cause: TerminationCause::Timeout, steps: 0, total_reward: 0.0, speed_sum: 0.0 };
    loop {
        let action = agent.act(&obs, env).map_err(|source| EnvError::Agent { episode, source })?;
        let r = env.step(action)?;
        summary.steps += 1;
        summary.total_reward += r.reward;
        summary.speed_sum += env.ego().and_then(|e| env.world().actor(e)).map_or(0.0, |a| a.speed);
        hook(&StepEvent { episode, seed, action, result: &r, env });
        if let Some(cause) = r.cause {
            summary.cause = cause;
            return Ok(summary);
        }
        obs = r.obs;
    }
}

/// Runs `episodes` episodes with seeds `seed_base..seed_base + episodes`.
pub fn evaluate(
    env: &mut DrivingEnv,
    agent: &mut dyn Agent,
    episodes: usize,
    seed_base: u64,
    hook: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<Evaluation, EnvError> {
    if episodes == 0 {
        return Err(EnvError::Protocol("evaluate needs at least one episode".into()));
    }
    let mut out = Vec::with_capacity(episodes);
    for i in 0..episodes {
        out.push(run_episode(env, agent, i, seed_base + i as u64, hook)?);
    }
    Ok(Evaluation { metrics: EpisodeMetrics::from_summaries(&out), episodes: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_arithmetic() {
        use TerminationCause::*;
        let m = EpisodeMetrics::from_causes(&[Destination, Destination, Collision]);
        assert!((m.success_rate.mean - 200.0 / 3.0).abs() < 1e-9);
        assert!((m.collision_rate.mean - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(m.out_of_lane_rate.mean, 0.0);
        assert_eq!(m.timeout_rate.mean, 0.0);
        assert!((m.rate_sum() - 100.0).abs() < 1e-9);
        // sqrt(p (1 - p) / n) with p = 2/3, n = 3
        assert!((m.success_rate.se - 100.0 * (2.0f64 / 27.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn speed_pooled_over_steps() {
        let s = |steps, speed_sum| EpisodeSummary {
            episode: 0,
            seed: 0,
            cause: TerminationCause::Timeout,
            steps,
            total_reward: 0.0,
            speed_sum,
        };
        let m = EpisodeMetrics::from_summaries(&[s(10, 10.0), s(30, 90.0)]);
        assert_eq!(m.avg_speed.mean, 2.5);
        assert!((m.avg_speed.se - 1.0).abs() < 1e-12);
    }
}
