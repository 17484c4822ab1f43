//! Simulation state: actors, kinematic bicycle dynamics, collisions and signals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autopilot::{autopilot_control, AutopilotConfig};
use crate::geometry::normalize_angle;
use crate::map::{LaneIdx, RoadMap, SignalKind, SignalPhase};
use crate::route::Route;
use crate::{Obb, Pose, Vec2, F};

/// Gap below which two footprints are considered touching.
pub const TOUCH_TOLERANCE: F = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub u32);

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ego,
    Background,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Controller {
    #[default]
    External,
    Autopilot(AutopilotConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blueprint {
    pub length: F,
    pub width: F,
}

impl Default for Blueprint {
    fn default() -> Self {
        Self { length: 4.5, width: 2.0 }
    }
}

/// Where and how to place a new vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnSpec {
    pub lane: String,
    pub offset: F,
    #[serde(default)]
    pub speed: F,
    #[serde(default)]
    pub controller: Controller,
    #[serde(default)]
    pub blueprint: Blueprint,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VehicleState {
    pub id: ActorId,
    pub pose: Pose,
    pub speed: F,
    pub steer: F,
    pub length: F,
    pub width: F,
    pub role: Role,
    pub controller: Controller,
    /// Distance driven since spawn.
    pub odometer: F,
}

impl VehicleState {
    pub fn footprint(&self) -> Obb {
        Obb::new(self.pose.position, self.pose.heading, self.length, self.width)
    }

    pub fn wheelbase(&self) -> F {
        0.6 * self.length
    }

    pub fn front(&self) -> Vec2 {
        self.pose.position + self.pose.forward() * (self.length / 2.0)
    }

    pub fn velocity(&self) -> Vec2 {
        self.pose.forward() * self.speed
    }
}

/// Throttle and steering command, both in `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub throttle: F,
    pub steer: F,
}

impl Control {
    pub fn new(throttle: F, steer: F) -> Self {
        Self { throttle, steer }.clamped()
    }

    /// Clamps both components into `[-1, 1]`; NaN becomes 0.
    pub fn clamped(self) -> Self {
        let c = |v: F| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self { throttle: c(self.throttle), steer: c(self.steer) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsParams {
    pub dt: F,
    pub a_max: F,
    pub v_max: F,
    pub v_min: F,
    pub max_steer: F,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { dt: 0.1, a_max: 3.0, v_max: 12.0, v_min: -2.0, max_steer: 0.6 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("unknown actor {0}")]
    UnknownActor(ActorId),
    #[error("unknown lane \"{0}\"")]
    UnknownLane(String),
    #[error("offset {offset} outside lane {lane} of length {length}")]
    OffsetOutOfRange { lane: String, offset: F, length: F },
    #[error("spawn overlaps actor {0}")]
    SpawnOverlap(ActorId),
    #[error("actor {0} has no route")]
    MissingRoute(ActorId),
    #[error("actor {0} is autopilot-controlled and takes no external control")]
    NotExternallyControlled(ActorId),
    #[error("invalid blueprint: length must exceed width and both be positive")]
    InvalidBlueprint,
}

/// The single source of simulation truth.
#[derive(Clone, Debug)]
pub struct World {
    map: Arc<RoadMap>,
    params: DynamicsParams,
    tick: u64,
    seed: u64,
    next_id: u32,
    actors: BTreeMap<ActorId, VehicleState>,
    routes: BTreeMap<ActorId, Route>,
    signal_phases: Vec<SignalPhase>,
    /// Stop signs (by signal index) each vehicle has already stopped at.
    stops_served: BTreeMap<ActorId, BTreeSet<usize>>,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(map: Arc<RoadMap>, params: DynamicsParams, seed: u64) -> Self {
        let mut w = Self {
            map,
            params,
            tick: 0,
            seed,
            next_id: 0,
            actors: BTreeMap::new(),
            routes: BTreeMap::new(),
            signal_phases: Vec::new(),
            stops_served: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        w.refresh_signals();
        w
    }

    pub fn map(&self) -> &RoadMap {
        &self.map
    }

    pub fn map_arc(&self) -> &Arc<RoadMap> {
        &self.map
    }

    pub fn params(&self) -> &DynamicsParams {
        &self.params
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn sim_time(&self) -> F {
        self.tick as F * self.params.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn actors(&self) -> &BTreeMap<ActorId, VehicleState> {
        &self.actors
    }

    pub fn actor(&self, id: ActorId) -> Option<&VehicleState> {
        self.actors.get(&id)
    }

    /// Direct state access for constructed scenes and tests.
    pub fn actor_mut(&mut self, id: ActorId) -> Option<&mut VehicleState> {
        self.actors.get_mut(&id)
    }

    pub fn routes(&self) -> &BTreeMap<ActorId, Route> {
        &self.routes
    }

    pub fn route(&self, id: ActorId) -> Option<&Route> {
        self.routes.get(&id)
    }

    pub fn set_route(&mut self, id: ActorId, route: Route) -> Result<(), WorldError> {
        if !self.actors.contains_key(&id) {
            return Err(WorldError::UnknownActor(id));
        }
        self.routes.insert(id, route);
        Ok(())
    }

    pub fn route_mut(&mut self, id: ActorId) -> Option<&mut Route> {
        self.routes.get_mut(&id)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// A route and the world RNG together, for planners that extend routes
    /// by sampling.
    pub fn route_and_rng_mut(&mut self, id: ActorId) -> Option<(&mut Route, &mut ChaCha8Rng)> {
        let r = self.routes.get_mut(&id)?;
        Some((r, &mut self.rng))
    }

    pub fn signal_phase(&self, signal: usize) -> SignalPhase {
        self.signal_phases[signal]
    }

    pub fn stop_served(&self, id: ActorId, signal: usize) -> bool {
        self.stops_served.get(&id).is_some_and(|s| s.contains(&signal))
    }

    /// Removes every actor, rewinds time and reseeds the RNG from `seed`.
    pub fn destroy_all(&mut self, seed: u64) {
        self.actors.clear();
        self.routes.clear();
        self.stops_served.clear();
        self.tick = 0;
        self.next_id = 0;
        self.seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.refresh_signals();
    }

    pub fn remove_actor(&mut self, id: ActorId) -> Option<VehicleState> {
        self.routes.remove(&id);
        self.stops_served.remove(&id);
        self.actors.remove(&id)
    }

    /// Pose on a lane centerline at `offset`, heading along the lane tangent.
    pub fn lane_pose(&self, lane: &str, offset: F) -> Result<(LaneIdx, Pose), WorldError> {
        let idx = self.map.lane_index(lane).ok_or_else(|| WorldError::UnknownLane(lane.to_string()))?;
        let l = self.map.lane(idx);
        if !(offset >= 0.0 && offset <= l.length()) {
            return Err(WorldError::OffsetOutOfRange { lane: lane.to_string(), offset, length: l.length() });
        }
        let (p, h) = l.centerline.sample(offset);
        Ok((idx, Pose::new(p, h)))
    }

    /// First existing actor whose footprint overlaps `footprint`.
    pub fn overlapping(&self, footprint: &Obb) -> Option<ActorId> {
        self.actors.values().find(|a| a.footprint().overlaps(footprint, TOUCH_TOLERANCE)).map(|a| a.id)
    }

    pub fn spawn_vehicle(&mut self, spec: &SpawnSpec, role: Role) -> Result<ActorId, WorldError> {
        let bp = spec.blueprint;
        if !(bp.width > 0.0 && bp.length > bp.width) {
            return Err(WorldError::InvalidBlueprint);
        }
        let (_, pose) = self.lane_pose(&spec.lane, spec.offset)?;
        self.spawn_at(pose, spec.speed, spec.controller, bp, role)
    }

    /// Places a vehicle at an arbitrary pose (used by constructed scenes).
    pub fn spawn_at(
        &mut self,
        pose: Pose,
        speed: F,
        controller: Controller,
        blueprint: Blueprint,
        role: Role,
    ) -> Result<ActorId, WorldError> {
        let footprint = Obb::new(pose.position, pose.heading, blueprint.length, blueprint.width);
        if let Some(other) = self.overlapping(&footprint) {
            return Err(WorldError::SpawnOverlap(other));
        }
        let id = ActorId(self.next_id);
        self.next_id += 1;
        let speed = speed.clamp(self.params.v_min, self.params.v_max);
        self.actors.insert(
            id,
            VehicleState {
                id,
                pose,
                speed,
                steer: 0.0,
                length: blueprint.length,
                width: blueprint.width,
                role,
                controller,
                odometer: 0.0,
            },
        );
        Ok(id)
    }

    /// Advances the world by one fixed step. Externally controlled actors
    /// missing from `controls` coast with zero input.
    pub fn tick(&mut self, controls: &BTreeMap<ActorId, Control>) -> Result<(), WorldError> {
        for id in controls.keys() {
            let a = self.actors.get(id).ok_or(WorldError::UnknownActor(*id))?;
            if matches!(a.controller, Controller::Autopilot(_)) {
                return Err(WorldError::NotExternallyControlled(*id));
            }
        }
        let mut commands = BTreeMap::new();
        for (id, a) in &self.actors {
            let c = match a.controller {
                Controller::External => controls.get(id).copied().unwrap_or_default(),
                Controller::Autopilot(cfg) => autopilot_control(self, *id, &cfg)?,
            };
            commands.insert(*id, c.clamped());
        }
        let p = self.params;
        for (id, a) in self.actors.iter_mut() {
            integrate(a, commands[id], &p);
        }
        self.tick += 1;
        self.refresh_signals();
        self.record_stops();
        Ok(())
    }

    fn refresh_signals(&mut self) {
        let t = self.sim_time();
        self.signal_phases = self.map.signals().iter().map(|s| s.phase_at(t)).collect();
    }

    fn record_stops(&mut self) {
        for (idx, sig) in self.map.signals().iter().enumerate() {
            if sig.kind != SignalKind::StopSign {
                continue;
            }
            for a in self.actors.values() {
                if a.speed.abs() < crate::autopilot::STOPPED_SPEED
                    && a.front().distance(sig.position) <= crate::autopilot::STOP_ZONE
                {
                    self.stops_served.entry(a.id).or_default().insert(idx);
                }
            }
        }
    }

    /// Unordered colliding pairs `(a, b)` with `a < b`, sorted.
    pub fn detect_collisions(&self) -> Vec<(ActorId, ActorId)> {
        let boxes: Vec<(ActorId, Obb)> = self.actors.values().map(|a| (a.id, a.footprint())).collect();
        let mut out = Vec::new();
        for (i, (ia, ba)) in boxes.iter().enumerate() {
            for (ib, bb) in &boxes[i + 1..] {
                if ba.overlaps(bb, TOUCH_TOLERANCE) {
                    out.push((*ia, *ib));
                }
            }
        }
        out
    }

    /// Byte encoding of the full state, with floats written bit-exactly.
    /// Two worlds are in the same state iff their encodings are equal.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(256 + self.actors.len() * 128);
        let f = |buf: &mut Vec<u8>, v: F| buf.extend_from_slice(&v.to_bits().to_le_bytes());
        buf.extend_from_slice(&self.tick.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.next_id.to_le_bytes());
        buf.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        buf.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        buf.extend_from_slice(&(self.actors.len() as u64).to_le_bytes());
        for a in self.actors.values() {
            buf.extend_from_slice(&a.id.0.to_le_bytes());
            f(&mut buf, a.pose.position.x);
            f(&mut buf, a.pose.position.y);
            f(&mut buf, a.pose.heading);
            f(&mut buf, a.speed);
            f(&mut buf, a.steer);
            f(&mut buf, a.length);
            f(&mut buf, a.width);
            f(&mut buf, a.odometer);
            buf.push(a.role as u8);
            match a.controller {
                Controller::External => buf.push(0),
                Controller::Autopilot(c) => {
                    buf.push(1);
                    f(&mut buf, c.target_speed);
                    f(&mut buf, c.headway_distance);
                    buf.push(c.aggression as u8);
                }
            }
        }
        buf.extend_from_slice(&(self.routes.len() as u64).to_le_bytes());
        for (id, r) in &self.routes {
            buf.extend_from_slice(&id.0.to_le_bytes());
            buf.extend_from_slice(&(r.cursor as u64).to_le_bytes());
            buf.extend_from_slice(&(r.waypoints.len() as u64).to_le_bytes());
            for w in &r.waypoints {
                f(&mut buf, w.x);
                f(&mut buf, w.y);
            }
        }
        for p in &self.signal_phases {
            buf.push(*p as u8);
        }
        for (id, set) in &self.stops_served {
            buf.extend_from_slice(&id.0.to_le_bytes());
            for s in set {
                buf.extend_from_slice(&(*s as u64).to_le_bytes());
            }
        }
        buf
    }
}

/// One semi-implicit Euler step of the kinematic bicycle model: the updated
/// speed drives both the yaw rate and the displacement.
pub fn integrate(a: &mut VehicleState, c: Control, p: &DynamicsParams) {
    let speed = (a.speed + c.throttle * p.a_max * p.dt).clamp(p.v_min, p.v_max);
    let steer = c.steer * p.max_steer;
    let heading = normalize_angle(a.pose.heading + speed / a.wheelbase() * steer.tan() * p.dt);
    let (s, co) = heading.sin_cos();
    a.pose.position = a.pose.position + Vec2::new(co, s) * (speed * p.dt);
    a.pose.heading = heading;
    a.speed = speed;
    a.steer = steer;
    a.odometer += speed.abs() * p.dt;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::load_map;
    use approx::assert_relative_eq;

    fn straight_world() -> World {
        let map = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[100,0]]}]}"#).unwrap();
        World::new(Arc::new(map), DynamicsParams::default(), 1)
    }

    fn spec(offset: F) -> SpawnSpec {
        SpawnSpec {
            lane: "a".into(),
            offset,
            speed: 0.0,
            controller: Controller::External,
            blueprint: Blueprint::default(),
        }
    }

    #[test]
    fn spawn_on_axis_lane() {
        let mut w = straight_world();
        let id = w.spawn_vehicle(&spec(0.0), Role::Ego).unwrap();
        let a = w.actor(id).unwrap();
        assert_eq!(a.pose.position, Vec2::new(0.0, 0.0));
        assert_eq!(a.pose.heading, 0.0);
        assert_eq!(w.spawn_vehicle(&spec(0.0), Role::Background), Err(WorldError::SpawnOverlap(id)));
        assert!(matches!(w.spawn_vehicle(&spec(101.0), Role::Background), Err(WorldError::OffsetOutOfRange { .. })));
    }

    #[test]
    fn straight_line_step() {
        let mut w = straight_world();
        let mut s = spec(10.0);
        s.speed = 2.0;
        let id = w.spawn_vehicle(&s, Role::Ego).unwrap();
        w.tick(&BTreeMap::new()).unwrap();
        let a = w.actor(id).unwrap();
        assert_relative_eq!(a.pose.position.x, 10.2, epsilon = 1e-12);
        assert_eq!(a.pose.position.y, 0.0);
        assert_eq!(w.tick_count(), 1);
    }

    #[test]
    fn unknown_control_rejected() {
        let mut w = straight_world();
        let mut c = BTreeMap::new();
        c.insert(ActorId(9), Control::default());
        assert_eq!(w.tick(&c), Err(WorldError::UnknownActor(ActorId(9))));
    }

    #[test]
    fn destroy_all_is_idempotent() {
        let mut w = straight_world();
        for i in 0..5 {
            w.spawn_vehicle(&spec(10.0 * i as F), Role::Background).unwrap();
        }
        w.destroy_all(3);
        assert!(w.actors().is_empty());
        let once = w.canonical_bytes();
        w.destroy_all(3);
        assert_eq!(once, w.canonical_bytes());
    }

    #[test]
    fn collisions_are_pairs_in_id_order() {
        let mut w = straight_world();
        let a = w.spawn_at(Pose::new(Vec2::new(0.0, 0.0), 0.0), 0.0, Controller::External, Blueprint { length: 2.0, width: 1.0 }, Role::Ego).unwrap();
        // place the second box far away first, then move it to overlap
        let b = w.spawn_at(Pose::new(Vec2::new(10.0, 0.0), 0.0), 0.0, Controller::External, Blueprint { length: 2.0, width: 1.0 }, Role::Background).unwrap();
        assert!(w.detect_collisions().is_empty());
        w.actors.get_mut(&b).unwrap().pose.position = Vec2::new(0.5, 0.0);
        assert_eq!(w.detect_collisions(), vec![(a, b)]);
    }
}
