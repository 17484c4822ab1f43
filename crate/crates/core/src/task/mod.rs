//! Built-in driving tasks: registry, reward and termination rules.

mod registry;
mod reward;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::autopilot::AutopilotConfig;
use crate::map::{builtin_map_source, load_map, MapError, RoadMap};
use crate::observer::{BevSpec, IntentionConfig, LidarSpec, VisibilityConfig, BUILTIN_HANDLERS};
use crate::route::PlannerKind;
use crate::world::{DynamicsParams, SpawnSpec};
use crate::F;

pub use registry::{make_task, TASK_NAMES};
pub use reward::{
    check_termination, compute_reward, front_arc_length, red_light_crossed, RewardConfig, RewardTerms, StepEvents,
};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task \"{name}\"; valid tasks: {}", TASK_NAMES.join(", "))]
    UnknownTask { name: String },
    #[error("bad override: {0}")]
    Override(String),
    #[error("map \"{name}\": {source}")]
    Map { name: String, source: MapError },
    #[error("cannot read map file {path}: {source}")]
    MapIo { path: String, source: std::io::Error },
    #[error("invalid task config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    #[default]
    Simple,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simple" => Some(Self::Simple),
            "medium" => Some(Self::Medium),
            "hard" => Some(Self::Hard),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyCounts {
    pub simple: usize,
    pub medium: usize,
    pub hard: usize,
}

impl Default for DifficultyCounts {
    fn default() -> Self {
        Self { simple: 0, medium: 4, hard: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficFlow {
    /// Lanes random background vehicles are placed on.
    pub spawn_lanes: Vec<String>,
    #[serde(default)]
    pub counts: DifficultyCounts,
    /// Replace vehicles whose route has run out.
    #[serde(default)]
    pub respawn: bool,
    #[serde(default)]
    pub behavior: AutopilotConfig,
    /// Vehicles placed at fixed spots in addition to the random ones.
    #[serde(default)]
    pub fixed: Vec<SpawnSpec>,
}

impl TrafficFlow {
    pub fn count(&self, d: Difficulty) -> usize {
        match d {
            Difficulty::Simple => self.counts.simple,
            Difficulty::Medium => self.counts.medium,
            Difficulty::Hard => self.counts.hard,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    Destination,
    Collision,
    OutOfLane,
    Timeout,
}

impl TerminationCause {
    pub const ALL: [TerminationCause; 4] = [Self::Destination, Self::Collision, Self::OutOfLane, Self::Timeout];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Destination => "destination",
            Self::Collision => "collision",
            Self::OutOfLane => "out_of_lane",
            Self::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for TerminationCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_time_limit() -> F {
    60.0
}

fn default_out_of_lane_limit() -> F {
    1.0
}

fn default_modalities() -> Vec<String> {
    vec!["bev".into(), "lidar".into(), "state_vector".into()]
}

/// Everything needed to build an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    /// Built-in map name or a path to a map file.
    pub map: String,
    pub ego: SpawnSpec,
    pub traffic: TrafficFlow,
    pub planner: PlannerKind,
    #[serde(default)]
    pub difficulty: Difficulty,
    #[serde(default)]
    pub visibility: VisibilityConfig,
    #[serde(default)]
    pub intention: IntentionConfig,
    #[serde(default = "default_modalities")]
    pub modalities: Vec<String>,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default = "default_time_limit")]
    pub time_limit: F,
    #[serde(default = "default_out_of_lane_limit")]
    pub out_of_lane_limit: F,
    /// Odometer distance that counts as reaching the destination, for
    /// roaming tasks without a fixed goal.
    #[serde(default)]
    pub distance_budget: Option<F>,
    #[serde(default)]
    pub dynamics: DynamicsParams,
    #[serde(default)]
    pub bev: BevSpec,
    #[serde(default)]
    pub lidar: LidarSpec,
    /// Settings used when the ego itself is driven by the autopilot agent.
    #[serde(default)]
    pub ego_autopilot: AutopilotConfig,
}

impl TaskConfig {
    /// Number of ticks after which the episode is truncated.
    pub fn tick_limit(&self) -> u64 {
        (self.time_limit / self.dynamics.dt).round() as u64
    }

    pub fn load_map(&self) -> Result<RoadMap, TaskError> {
        let src = match builtin_map_source(&self.map) {
            Some(s) => s.to_string(),
            None => std::fs::read_to_string(&self.map)
                .map_err(|source| TaskError::MapIo { path: self.map.clone(), source })?,
        };
        load_map(&src).map_err(|source| TaskError::Map { name: self.map.clone(), source })
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: &str| Err(TaskError::Invalid(m.to_string()));
        if let Some(m) = self.modalities.iter().find(|m| !BUILTIN_HANDLERS.contains(&m.as_str())) {
            return Err(TaskError::Invalid(format!("unknown modality \"{m}\"")));
        }
        if !self.visibility.is_valid() {
            return bad("visibility needs 0 < cone_half_angle <= pi and range > 0");
        }
        if self.intention.shared_waypoints == 0 {
            return bad("intention.shared_waypoints must be at least 1");
        }
        if !self.bev.is_valid() || !self.lidar.is_valid() {
            return bad("bev size must be even and positive, lidar needs at least one beam");
        }
        let r = &self.reward;
        if !(r.alpha >= 0.0 && r.beta >= 0.0 && r.gamma >= 0.0) {
            return bad("reward alpha, beta and gamma must be non-negative");
        }
        if !(self.time_limit > 0.0 && self.dynamics.dt > 0.0) {
            return bad("time_limit and dt must be positive");
        }
        Ok(())
    }

    /// Applies a JSON override document. Keys may be dot-separated paths
    /// (`{"visibility.mode": "FOV"}`); object values are merged recursively.
    pub fn with_overrides(&self, overrides: &Value) -> Result<Self, TaskError> {
        let o = match overrides {
            Value::Null => return Ok(self.clone()),
            Value::Object(o) => o,
            _ => return Err(TaskError::Override("overrides must be a JSON object".into())),
        };
        let mut doc = serde_json::to_value(self).map_err(|e| TaskError::Override(e.to_string()))?;
        for (key, value) in o {
            let mut slot = &mut doc;
            for part in key.split('.') {
                let obj = slot
                    .as_object_mut()
                    .ok_or_else(|| TaskError::Override(format!("\"{key}\" descends into a non-object")))?;
                slot = obj.entry(part.to_string()).or_insert(Value::Null);
            }
            merge(slot, value.clone());
        }
        let cfg: TaskConfig = serde_json::from_value(doc).map_err(|e| TaskError::Override(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(slot: &mut Value, value: Value) {
    match (slot, value) {
        (Value::Object(dst), Value::Object(src)) => {
            for (k, v) in src {
                merge(dst.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, value) => *slot = value,
    }
}
