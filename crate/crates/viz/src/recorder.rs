use std::collections::VecDeque;
use std::sync::Arc;

use lanesim::env::{EpisodeMetrics, EpisodeSummary, StepEvent};
use lanesim::observer::{encode_png, render_bev, visible_set, Payload};
use lanesim::task::TerminationCause;

use crate::{TelemetryHub, TelemetrySnapshot};

pub const REWARD_WINDOW: usize = 100;
pub const EPISODE_WINDOW: usize = 20;

/// Turns per-step events into published snapshots, keeping the rolling
/// windows. It only reads from the environment.
#[derive(Debug)]
pub struct TelemetryRecorder {
    hub: Arc<TelemetryHub>,
    rewards: VecDeque<f64>,
    episodes: VecDeque<EpisodeSummary>,
    /// Running totals of the episode in progress.
    current: EpisodeSummary,
}

impl TelemetryRecorder {
    pub fn new(hub: Arc<TelemetryHub>) -> Self {
        Self {
            hub,
            rewards: VecDeque::with_capacity(REWARD_WINDOW),
            episodes: VecDeque::with_capacity(EPISODE_WINDOW),
            current: EpisodeSummary {
                episode: 0,
                seed: 0,
                cause: TerminationCause::Timeout,
                steps: 0,
                total_reward: 0.0,
                speed_sum: 0.0,
            },
        }
    }

    pub fn hub(&self) -> &Arc<TelemetryHub> {
        &self.hub
    }

    fn metrics(&self) -> serde_json::Value {
        let window: Vec<EpisodeSummary> = self.episodes.iter().cloned().collect();
        serde_json::to_value(EpisodeMetrics::from_summaries(&window)).unwrap_or_default()
    }

    /// Encodes the bird's-eye view for the event: the observation's `bev`
    /// entry when present, otherwise a fresh render with the task's settings.
    fn frame(ev: &StepEvent<'_>) -> Option<Vec<u8>> {
        if let Some(Payload::Image { height, width, data }) = ev.result.obs.get("bev") {
            return encode_png(*height, *width, data).ok();
        }
        let env = ev.env;
        let ego = env.ego()?;
        let visible = visible_set(env.world(), ego, &env.config().visibility).ok()?;
        let img = render_bev(env.world(), ego, &env.config().bev, &visible, &Default::default())?;
        encode_png(img.size, img.size, &img.data).ok()
    }

    pub fn on_step(&mut self, ev: &StepEvent<'_>) {
        if self.rewards.len() == REWARD_WINDOW {
            self.rewards.pop_front();
        }
        self.rewards.push_back(ev.result.reward);
        let cur = &mut self.current;
        if cur.steps == 0 {
            cur.episode = ev.episode;
            cur.seed = ev.seed;
        }
        cur.steps += 1;
        cur.total_reward += ev.result.reward;
        cur.speed_sum += ev.env.ego().and_then(|e| ev.env.world().actor(e)).map_or(0.0, |a| a.speed);
        if let Some(cause) = ev.result.cause {
            cur.cause = cause;
            if self.episodes.len() == EPISODE_WINDOW {
                self.episodes.pop_front();
            }
            self.episodes.push_back(cur.clone());
            cur.steps = 0;
            cur.total_reward = 0.0;
            cur.speed_sum = 0.0;
        }
        let mean = self.rewards.iter().sum::<f64>() / self.rewards.len() as f64;
        self.hub.publish(TelemetrySnapshot {
            episode: ev.episode as u64,
            tick: ev.env.world().tick_count(),
            reward: ev.result.reward,
            reward_mean_100: mean,
            metrics: self.metrics(),
            frame: Self::frame(ev).map(Arc::new),
            ts: chrono::Utc::now(),
        });
    }
}
