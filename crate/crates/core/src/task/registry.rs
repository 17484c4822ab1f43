use serde_json::Value;

use super::{Difficulty, DifficultyCounts, TaskConfig, TaskError, TrafficFlow};
use crate::autopilot::{Aggression, AutopilotConfig};
use crate::observer::{BevSpec, IntentionConfig, LidarSpec, VisibilityConfig};
use crate::route::PlannerKind;
use crate::world::{Blueprint, Controller, DynamicsParams, SpawnSpec};
use crate::F;

pub const TASK_NAMES: &[&str] = &[
    "right_turn_simple",
    "right_turn_medium",
    "right_turn_hard",
    "left_turn_simple",
    "left_turn_medium",
    "left_turn_hard",
    "lane_merge",
    "overtake",
    "four_lane",
    "roundabout",
    "navigation",
    "traffic_lights",
    "stop_sign",
];

fn spawn(lane: &str, offset: F) -> SpawnSpec {
    SpawnSpec {
        lane: lane.to_string(),
        offset,
        speed: 0.0,
        controller: Controller::External,
        blueprint: Blueprint::default(),
    }
}

fn lanes(ids: &[&str]) -> Vec<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

fn base(name: &str, map: &str, ego: SpawnSpec, planner: PlannerKind, traffic: TrafficFlow) -> TaskConfig {
    TaskConfig {
        name: name.to_string(),
        map: map.to_string(),
        ego,
        traffic,
        planner,
        difficulty: Difficulty::Simple,
        visibility: VisibilityConfig::default(),
        intention: IntentionConfig::default(),
        modalities: super::default_modalities(),
        reward: Default::default(),
        time_limit: 60.0,
        out_of_lane_limit: 1.0,
        distance_budget: None,
        dynamics: DynamicsParams::default(),
        bev: BevSpec::default(),
        lidar: LidarSpec::default(),
        ego_autopilot: AutopilotConfig { target_speed: 6.0, headway_distance: 10.0, aggression: Aggression::Lawful },
    }
}

fn traffic(spawn_lanes: &[&str], behavior: AutopilotConfig) -> TrafficFlow {
    TrafficFlow { spawn_lanes: lanes(spawn_lanes), counts: DifficultyCounts::default(), respawn: true, behavior, fixed: Vec::new() }
}

fn lawful(target_speed: F) -> AutopilotConfig {
    AutopilotConfig { target_speed, headway_distance: 8.0, aggression: Aggression::Lawful }
}

fn turn(name: &str, right: bool, difficulty: Difficulty) -> TaskConfig {
    // goals sit 30 m down the exit arm
    let (goal, spawn_lanes) = if right {
        ([37.0, -1.75], ["W_in", "N_in", "E_in"])
    } else {
        ([-37.0, 1.75], ["N_in", "E_in", "W_in"])
    };
    let behavior = match difficulty {
        Difficulty::Hard => AutopilotConfig::aggressive(7.0),
        _ => lawful(5.0),
    };
    let mut cfg = base(name, "intersection", spawn("S_in", 30.0), PlannerKind::FixedEnding { goal }, traffic(&spawn_lanes, behavior));
    cfg.difficulty = difficulty;
    cfg
}

fn registered(name: &str) -> Option<TaskConfig> {
    let cfg = match name {
        "right_turn_simple" => turn(name, true, Difficulty::Simple),
        "right_turn_medium" => turn(name, true, Difficulty::Medium),
        "right_turn_hard" => turn(name, true, Difficulty::Hard),
        "left_turn_simple" => turn(name, false, Difficulty::Simple),
        "left_turn_medium" => turn(name, false, Difficulty::Medium),
        "left_turn_hard" => turn(name, false, Difficulty::Hard),
        "lane_merge" => {
            let mut c = base(
                name,
                "lane_merge",
                spawn("R1", 10.0),
                PlannerKind::FixedEnding { goal: [100.0, 0.0] },
                traffic(&["M1"], lawful(5.0)),
            );
            c.difficulty = Difficulty::Medium;
            c
        }
        "overtake" => {
            let mut t = traffic(&["B"], lawful(5.0));
            t.counts = DifficultyCounts { simple: 0, medium: 2, hard: 4 };
            t.fixed.push(SpawnSpec {
                lane: "A".into(),
                offset: 40.0,
                speed: 2.0,
                controller: Controller::Autopilot(lawful(2.0)),
                blueprint: Blueprint::default(),
            });
            base(name, "overtake", spawn("A", 10.0), PlannerKind::FixedEnding { goal: [200.0, 0.0] }, t)
        }
        "four_lane" => {
            let mut c = base(
                name,
                "four_lane",
                spawn("L1", 10.0),
                PlannerKind::FixedEnding { goal: [250.0, 3.5] },
                traffic(&["L0", "L1", "L2", "L3"], lawful(5.0)),
            );
            c.difficulty = Difficulty::Medium;
            c
        }
        "roundabout" => {
            let mut c = base(
                name,
                "roundabout",
                spawn("S_in", 20.0),
                // 40 m out along the north exit
                PlannerKind::FixedEnding { goal: [1.75, 56.81] },
                traffic(&["E_in", "N_in", "W_in", "ring_xE", "ring_xW"], lawful(4.0)),
            );
            c.difficulty = Difficulty::Medium;
            c
        }
        "navigation" => {
            let mut c = base(
                name,
                "town",
                spawn("S_in", 20.0),
                PlannerKind::RandomRoam,
                traffic(&["loop_E_S", "loop_N_E", "loop_S_W", "loop_W_N"], lawful(5.0)),
            );
            c.distance_budget = Some(200.0);
            c
        }
        "traffic_lights" => base(
            name,
            "intersection_lights",
            spawn("S_in", 20.0),
            PlannerKind::FixedEnding { goal: [1.75, 37.0] },
            traffic(&["W_in", "E_in"], lawful(5.0)),
        ),
        "stop_sign" => base(
            name,
            "intersection_stop",
            spawn("S_in", 20.0),
            PlannerKind::FixedEnding { goal: [1.75, 37.0] },
            traffic(&["W_in", "E_in"], lawful(5.0)),
        ),
        _ => return None,
    };
    Some(cfg)
}

/// The registered configuration for `name` with `overrides` applied.
pub fn make_task(name: &str, overrides: &Value) -> Result<TaskConfig, TaskError> {
    let cfg = registered(name).ok_or_else(|| TaskError::UnknownTask { name: name.to_string() })?;
    cfg.with_overrides(overrides)
}
