//! JSON-lines rollout logs and bit-exact replay.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{run_episode, Action, Agent, DrivingEnv, EnvError, StepEvent};
use crate::task::{RewardTerms, TaskConfig, TerminationCause};
use crate::F;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutHeader {
    pub task: String,
    pub episode: usize,
    pub seed: u64,
    /// The full task configuration, so a log replays without the registry.
    pub config: TaskConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tick: u64,
    pub action: Action,
    pub reward: F,
    pub terms: RewardTerms,
    pub x: F,
    pub y: F,
    pub heading: F,
    pub speed: F,
    pub cause: Option<TerminationCause>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub header: RolloutHeader,
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(RolloutHeader),
    Step(StepRecord),
}

fn record_of(ev: &StepEvent<'_>) -> StepRecord {
    let ego = ev.env.ego().and_then(|e| ev.env.world().actor(e));
    StepRecord {
        tick: ev.env.world().tick_count(),
        action: ev.action,
        reward: ev.result.reward,
        terms: ev.result.terms,
        x: ego.map_or(0.0, |a| a.pose.position.x),
        y: ego.map_or(0.0, |a| a.pose.position.y),
        heading: ego.map_or(0.0, |a| a.pose.heading),
        speed: ego.map_or(0.0, |a| a.speed),
        cause: ev.result.cause,
    }
}

/// Plays and logs `episodes` episodes with seeds from `seed_base`, writing
/// each log to `sink` as it completes.
pub fn record_rollouts(
    env: &mut DrivingEnv,
    agent: &mut dyn Agent,
    episodes: usize,
    seed_base: u64,
    sink: &mut dyn Write,
) -> Result<Vec<EpisodeLog>, EnvError> {
    let mut logs = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let seed = seed_base + i as u64;
        let mut steps = Vec::new();
        run_episode(env, agent, i, seed, &mut |ev| steps.push(record_of(ev)))?;
        let header = RolloutHeader { task: env.config().name.clone(), episode: i, seed, config: env.config().clone() };
        let log = EpisodeLog { header, steps };
        write_rollouts(std::slice::from_ref(&log), sink)?;
        logs.push(log);
    }
    sink.flush()?;
    Ok(logs)
}

pub fn write_rollouts(logs: &[EpisodeLog], sink: &mut dyn Write) -> Result<(), EnvError> {
    for log in logs {
        serde_json::to_writer(&mut *sink, &Line::Header(log.header.clone()))?;
        sink.write_all(b"\n")?;
        for s in &log.steps {
            serde_json::to_writer(&mut *sink, &Line::Step(s.clone()))?;
            sink.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_rollouts(reader: impl BufRead) -> Result<Vec<EpisodeLog>, EnvError> {
    let mut logs: Vec<EpisodeLog> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line)? {
            Line::Header(header) => logs.push(EpisodeLog { header, steps: Vec::new() }),
            Line::Step(s) => logs
                .last_mut()
                .ok_or_else(|| EnvError::Protocol(format!("line {}: step before any header", n + 1)))?
                .steps
                .push(s),
        }
    }
    Ok(logs)
}

/// First disagreement between a log and its re-execution.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayMismatch {
    pub episode: usize,
    /// Zero-based step index.
    pub step: usize,
    pub field: &'static str,
    pub expected: String,
    pub actual: String,
}

impl std::fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "episode {} step {}: {} expected {} got {}",
            self.episode, self.step, self.field, self.expected, self.actual
        )
    }
}

/// Re-runs the logged actions in a fresh environment and compares every
/// reward term bit for bit.
pub fn replay(log: &EpisodeLog) -> Result<Option<ReplayMismatch>, EnvError> {
    let mut env = DrivingEnv::new(log.header.config.clone())?;
    env.reset(log.header.seed)?;
    let mismatch = |step: usize, field: &'static str, expected: String, actual: String| {
        Some(ReplayMismatch { episode: log.header.episode, step, field, expected, actual })
    };
    for (i, rec) in log.steps.iter().enumerate() {
        if !env.is_running() {
            return Ok(mismatch(i, "length", format!("{} steps", log.steps.len()), format!("{i} steps")));
        }
        let r = env.step(rec.action)?;
        let pairs: [(&'static str, F, F); 5] = [
            ("reward", rec.reward, r.reward),
            ("v_parallel", rec.terms.v_parallel, r.terms.v_parallel),
            ("v_perp", rec.terms.v_perp, r.terms.v_perp),
            ("bonus_terms", rec.terms.bonus_terms, r.terms.bonus_terms),
            ("total", rec.terms.total, r.terms.total),
        ];
        for (field, expected, actual) in pairs {
            if expected.to_bits() != actual.to_bits() {
                return Ok(mismatch(i, field, format!("{expected:?}"), format!("{actual:?}")));
            }
        }
        if rec.terms.collision != r.terms.collision || rec.terms.waypoints_reached != r.terms.waypoints_reached {
            return Ok(mismatch(i, "terms", format!("{:?}", rec.terms), format!("{:?}", r.terms)));
        }
        if rec.cause != r.cause {
            return Ok(mismatch(i, "cause", format!("{:?}", rec.cause), format!("{:?}", r.cause)));
        }
    }
    Ok(None)
}
