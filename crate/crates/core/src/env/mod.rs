//! The reset/step episode protocol and everything built on it: metrics,
//! baseline agents, rollout logs and the wire server.

mod agents;
mod metrics;
mod rollout;
pub mod wire;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::map::{RoadMap, SignalKind};
use crate::observer::{ObservationBundle, Observer, ObserverError, PayloadError};
use crate::route::{extend_route, init_route, PlannerKind, RouteError};
use crate::task::{
    check_termination, compute_reward, red_light_crossed, RewardTerms, StepEvents, TaskConfig, TaskError, TerminationCause,
};
use crate::world::{ActorId, Control, Controller, Role, SpawnSpec, VehicleState, World, WorldError};
use crate::{Obb, Pose, F};

pub use agents::{agent_by_name, Agent, AgentError, AutopilotAgent, RandomAgent, ZeroAgent, AGENT_NAMES};
pub use metrics::{evaluate, run_episode, EpisodeMetrics, EpisodeSummary, Evaluation, MeanSe, StepEvent};
pub use rollout::{
    read_rollouts, record_rollouts, replay, write_rollouts, EpisodeLog, ReplayMismatch, RolloutHeader, StepRecord,
};

/// Placement attempts per background vehicle before reset gives up.
pub const SPAWN_ATTEMPTS: usize = 100;
/// Free space kept around randomly placed vehicles.
const SPAWN_CLEARANCE: F = 3.0;

pub const DISCRETE_THROTTLE: [F; 3] = [-1.0, 0.0, 1.0];
/// Steering levels as fractions of full lock.
pub const DISCRETE_STEER: [F; 5] = [-0.6, -0.2, 0.0, 0.2, 0.6];
pub const DISCRETE_ACTIONS: usize = DISCRETE_THROTTLE.len() * DISCRETE_STEER.len();

pub type Info = Map<String, Value>;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error("could not place background vehicle {index} after {SPAWN_ATTEMPTS} attempts")]
    Spawn { index: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("agent failed in episode {episode}: {source}")]
    Agent { episode: usize, source: AgentError },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A continuous `[throttle, steer]` command or an index into the 15-way grid
/// (`index = throttle_level * 5 + steer_level`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Action {
    Discrete(usize),
    Continuous([F; 2]),
}

impl Action {
    pub fn continuous(throttle: F, steer: F) -> Self {
        Action::Continuous([throttle, steer])
    }

    pub fn to_control(self) -> Result<Control, EnvError> {
        match self {
            Action::Continuous([t, s]) => Ok(Control::new(t, s)),
            Action::Discrete(i) if i < DISCRETE_ACTIONS => {
                Ok(Control::new(DISCRETE_THROTTLE[i / DISCRETE_STEER.len()], DISCRETE_STEER[i % DISCRETE_STEER.len()]))
            }
            Action::Discrete(i) => Err(EnvError::InvalidAction(format!("discrete index {i} out of 0..{DISCRETE_ACTIONS}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: ObservationBundle,
    pub reward: F,
    pub terminated: bool,
    pub truncated: bool,
    pub info: Info,
    pub terms: RewardTerms,
    pub cause: Option<TerminationCause>,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Unreset,
    Running,
    Finished,
}

/// One task bound to a world. Episodes are driven by `reset` and `step`.
#[derive(Debug)]
pub struct DrivingEnv {
    config: TaskConfig,
    map: Arc<RoadMap>,
    world: World,
    observer: Observer,
    ego: Option<ActorId>,
    phase: Phase,
    /// Background vehicles removed at the end of their route and not yet replaced.
    pending_respawns: usize,
}

impl DrivingEnv {
    pub fn new(config: TaskConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let map = Arc::new(config.load_map()?);
        let observer = Observer::with_modalities(
            &config.modalities,
            config.bev,
            config.lidar,
            config.intention.shared_waypoints,
        )?;
        let world = World::new(map.clone(), config.dynamics, 0);
        Ok(Self { config, map, world, observer, ego: None, phase: Phase::Unreset, pending_respawns: 0 })
    }

    pub fn from_task(name: &str, overrides: &Value) -> Result<Self, EnvError> {
        Self::new(crate::task::make_task(name, overrides)?)
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Mutable world access for constructed scenes.
    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn observer_mut(&mut self) -> &mut Observer {
        &mut self.observer
    }

    pub fn ego(&self) -> Option<ActorId> {
        self.ego
    }

    pub fn is_running(&self) -> bool {
        self.phase == Phase::Running
    }

    /// Rebuilds the world for a new episode seeded with `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<(ObservationBundle, Info), EnvError> {
        self.phase = Phase::Unreset;
        self.ego = None;
        self.pending_respawns = 0;
        self.world.destroy_all(seed);

        let ego = self.world.spawn_vehicle(&self.config.ego, Role::Ego)?;
        let ego_state = self.world.actor(ego).cloned().ok_or(WorldError::UnknownActor(ego))?;
        let route = init_route(&self.config.planner, &self.map, &ego_state, self.world.rng_mut())?;
        self.world.set_route(ego, route)?;
        self.ego = Some(ego);

        for spec in self.config.traffic.fixed.clone() {
            let id = self.world.spawn_vehicle(&spec, Role::Background)?;
            self.give_roam_route(id)?;
        }
        for index in 0..self.config.traffic.count(self.config.difficulty) {
            if !self.place_random(None)? {
                return Err(EnvError::Spawn { index });
            }
        }
        self.phase = Phase::Running;
        let obs = self.observe()?;
        let ego_state = &self.world.actors()[&ego];
        let info = self.info(ego_state, &RewardTerms::default(), None);
        Ok((obs, info))
    }

    fn give_roam_route(&mut self, id: ActorId) -> Result<(), EnvError> {
        let state = self.world.actor(id).cloned().ok_or(WorldError::UnknownActor(id))?;
        if matches!(state.controller, Controller::Autopilot(_)) {
            let route = init_route(&PlannerKind::RandomRoam, &self.map, &state, self.world.rng_mut())?;
            self.world.set_route(id, route)?;
        }
        Ok(())
    }

    /// Tries to place one random background vehicle, at a random offset or
    /// at `offset` when given. Returns whether a spot was found.
    fn place_random(&mut self, offset: Option<F>) -> Result<bool, EnvError> {
        let flow = &self.config.traffic;
        if flow.spawn_lanes.is_empty() {
            return Ok(false);
        }
        let attempts = if offset.is_some() { flow.spawn_lanes.len() } else { SPAWN_ATTEMPTS };
        let spec = SpawnSpec {
            lane: String::new(),
            offset: 0.0,
            speed: flow.behavior.target_speed,
            controller: Controller::Autopilot(flow.behavior),
            blueprint: Default::default(),
        };
        for _ in 0..attempts {
            let rng = self.world.rng_mut();
            let lane_id = &flow.spawn_lanes[rng.gen_range(0..flow.spawn_lanes.len())];
            let lane = self.map.lane_index(lane_id).ok_or_else(|| WorldError::UnknownLane(lane_id.clone()))?;
            let len = self.map.lane(lane).length();
            let s = match offset {
                Some(s) => s.min(len),
                None => rng.gen_range(0.0..=len),
            };
            let (p, h) = self.map.lane(lane).centerline.sample(s);
            let pose = Pose::new(p, h);
            let bp = spec.blueprint;
            let clearance = Obb::new(p, h, bp.length + 2.0 * SPAWN_CLEARANCE, bp.width + 0.5);
            if self.world.overlapping(&clearance).is_some() {
                continue;
            }
            let id = self.world.spawn_at(pose, spec.speed, spec.controller, bp, Role::Background)?;
            self.give_roam_route(id)?;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn observe(&self) -> Result<ObservationBundle, EnvError> {
        let ego = self.ego.ok_or_else(|| EnvError::Protocol("reset has not been called".into()))?;
        Ok(self.observer.collect(&self.world, ego, &self.config.visibility, &self.config.intention)?)
    }

    fn stops_served(&self, ego: ActorId) -> usize {
        self.map
            .signals()
            .iter()
            .enumerate()
            .filter(|(i, s)| s.kind == SignalKind::StopSign && self.world.stop_served(ego, *i))
            .count()
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        let ego = match (self.phase, self.ego) {
            (Phase::Running, Some(ego)) => ego,
            (Phase::Unreset, _) | (_, None) => return Err(EnvError::Protocol("step before reset".into())),
            (Phase::Finished, _) => return Err(EnvError::Protocol("step after the episode ended; call reset".into())),
        };
        let control = action.to_control()?;
        let prev = self.world.actors()[&ego].clone();
        let prev_phases: Vec<_> = (0..self.map.signals().len()).map(|i| self.world.signal_phase(i)).collect();
        let served_before = self.stops_served(ego);

        self.world.tick(&BTreeMap::from([(ego, control)]))?;
        let collided = self.world.detect_collisions().iter().any(|(a, b)| *a == ego || *b == ego);

        let ego_state = self.world.actors()[&ego].clone();
        let (route, rng) = self.world.route_and_rng_mut(ego).ok_or(WorldError::MissingRoute(ego))?;
        let reached = extend_route(&self.config.planner, &self.map, &ego_state, route, rng);
        self.advance_traffic()?;

        let route = self.world.route(ego).ok_or(WorldError::MissingRoute(ego))?;
        let cause = check_termination(&self.world, &ego_state, route, &self.config, collided);
        let events = StepEvents {
            collided,
            waypoints_reached: reached,
            destination: cause == Some(TerminationCause::Destination),
            out_of_lane: cause == Some(TerminationCause::OutOfLane),
            red_lights_run: red_light_crossed(&self.map, &prev, &ego_state, &prev_phases),
            stop_signs_served: self.stops_served(ego) - served_before,
        };
        let terms = compute_reward(&ego_state, route.next_waypoint(), &self.config.reward, &events);
        if cause.is_some() {
            self.phase = Phase::Finished;
        }
        let obs = self.observe()?;
        let info = self.info(&ego_state, &terms, cause);
        Ok(StepResult {
            obs,
            reward: terms.total,
            terminated: cause.is_some_and(|c| c != TerminationCause::Timeout),
            truncated: cause == Some(TerminationCause::Timeout),
            info,
            terms,
            cause,
        })
    }

    /// Moves background route cursors forward and replaces vehicles that
    /// have run out of road.
    fn advance_traffic(&mut self) -> Result<(), EnvError> {
        let ids: Vec<ActorId> = self
            .world
            .actors()
            .values()
            .filter(|a| a.role == Role::Background && matches!(a.controller, Controller::Autopilot(_)))
            .map(|a| a.id)
            .collect();
        for id in ids {
            let state = self.world.actors()[&id].clone();
            let Some((route, rng)) = self.world.route_and_rng_mut(id) else { continue };
            extend_route(&PlannerKind::RandomRoam, &self.map, &state, route, rng);
            if self.config.traffic.respawn && route.dead_end && route.is_exhausted() {
                self.world.remove_actor(id);
                self.pending_respawns += 1;
            }
        }
        while self.pending_respawns > 0 && self.place_random(Some(0.0))? {
            self.pending_respawns -= 1;
        }
        Ok(())
    }

    fn info(&self, ego: &VehicleState, terms: &RewardTerms, cause: Option<TerminationCause>) -> Info {
        let route = self.world.route(ego.id);
        let v = json!({
            "tick": self.world.tick_count(),
            "sim_time": self.world.sim_time(),
            "ego_x": ego.pose.position.x,
            "ego_y": ego.pose.position.y,
            "ego_heading": ego.pose.heading,
            "ego_speed": ego.speed,
            "odometer": ego.odometer,
            "route_remaining": route.map_or(0, |r| r.remaining().len()),
            "v_parallel": terms.v_parallel,
            "v_perp": terms.v_perp,
            "collision": terms.collision,
            "waypoints_reached": terms.waypoints_reached,
            "bonus_terms": terms.bonus_terms,
            "total": terms.total,
            "cause": cause.map(|c| c.as_str()),
        });
        match v {
            Value::Object(m) => m,
            _ => unreachable!("json! object literal"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_grid_layout() {
        assert_eq!(Action::Discrete(0).to_control().unwrap(), Control::new(-1.0, -0.6));
        assert_eq!(Action::Discrete(7).to_control().unwrap(), Control::new(0.0, 0.0));
        assert_eq!(Action::Discrete(14).to_control().unwrap(), Control::new(1.0, 0.6));
        assert!(Action::Discrete(15).to_control().is_err());
        assert_eq!(Action::continuous(3.0, -9.0).to_control().unwrap(), Control::new(1.0, -1.0));
    }

    #[test]
    fn action_wire_forms() {
        assert_eq!(serde_json::from_str::<Action>("4").unwrap(), Action::Discrete(4));
        assert_eq!(serde_json::from_str::<Action>("[0.5, -1]").unwrap(), Action::continuous(0.5, -1.0));
    }

    #[test]
    fn step_protocol_errors() {
        let mut env = DrivingEnv::from_task("right_turn_simple", &Value::Null).unwrap();
        assert!(matches!(env.step(Action::Discrete(7)), Err(EnvError::Protocol(_))));
        let (_, info) = env.reset(42).unwrap();
        assert_eq!(info["tick"], 0);
        assert_eq!(info["collision"], 0);
    }

    #[test]
    fn one_step_of_full_throttle() {
        let mut env = DrivingEnv::from_task("right_turn_simple", &Value::Null).unwrap();
        env.reset(1).unwrap();
        let r = env.step(Action::continuous(1.0, 0.0)).unwrap();
        assert!((r.info["ego_speed"].as_f64().unwrap() - 0.3).abs() < 1e-12);
        // straight up the approach lane, goal direction is along the heading
        assert!((r.terms.v_parallel - 0.3).abs() < 1e-9);
        assert_eq!(r.reward, r.terms.total);
    }

    #[test]
    fn zero_action_times_out_at_the_limit() {
        let mut env = DrivingEnv::from_task("right_turn_simple", &Value::Null).unwrap();
        env.reset(0).unwrap();
        let mut steps = 0;
        loop {
            let r = env.step(Action::continuous(0.0, 0.0)).unwrap();
            steps += 1;
            if r.done() {
                assert!(r.truncated && !r.terminated);
                assert_eq!(r.cause, Some(TerminationCause::Timeout));
                break;
            }
        }
        assert_eq!(steps, 600);
        assert!(matches!(env.step(Action::Discrete(7)), Err(EnvError::Protocol(_))));
    }

    #[test]
    fn hard_task_spawns_eight_vehicles() {
        let mut env = DrivingEnv::from_task("right_turn_hard", &Value::Null).unwrap();
        env.reset(3).unwrap();
        let bg = env.world().actors().values().filter(|a| a.role == Role::Background).count();
        assert_eq!(bg, 8);
    }

    #[test]
    fn reset_is_deterministic() {
        let mut env = DrivingEnv::from_task("right_turn_medium", &Value::Null).unwrap();
        let a = env.reset(42).unwrap();
        let bytes = env.world().canonical_bytes();
        let b = env.reset(42).unwrap();
        assert_eq!(a, b);
        assert_eq!(bytes, env.world().canonical_bytes());
    }
}
