//! Rule-based driver: pure-pursuit steering, proportional speed control and,
//! in lawful mode, braking for signals and leading vehicles.

use serde::{Deserialize, Serialize};

use crate::map::{SignalKind, SignalPhase};
use crate::world::{ActorId, Control, VehicleState, World, WorldError};
use crate::{Vec2, F};

/// Below this speed a vehicle counts as stopped.
pub const STOPPED_SPEED: F = 0.1;
/// A stop is registered when the front bumper is within this distance of the sign.
pub const STOP_ZONE: F = 3.0;

const MIN_LOOKAHEAD: F = 3.0;
const LOOKAHEAD_TIME: F = 1.0;
const SPEED_GAIN: F = 1.0;
/// Comfortable lateral acceleration used to slow down for curves.
const LATERAL_ACCEL: F = 2.0;
const CURVE_HORIZON: F = 15.0;
/// Where the front bumper aims to stop relative to a stop line.
const STOP_MARGIN: F = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggression {
    #[default]
    Lawful,
    /// Ignores signals and never yields to leading vehicles.
    Aggressive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutopilotConfig {
    pub target_speed: F,
    pub headway_distance: F,
    pub aggression: Aggression,
}

impl Default for AutopilotConfig {
    fn default() -> Self {
        Self { target_speed: 5.0, headway_distance: 8.0, aggression: Aggression::Lawful }
    }
}

impl AutopilotConfig {
    pub fn aggressive(target_speed: F) -> Self {
        Self { target_speed, headway_distance: 0.0, aggression: Aggression::Aggressive }
    }
}

/// Throttle that brings the vehicle to rest without reversing.
fn brake(speed: F, a_max: F, dt: F) -> F {
    let full = a_max * dt;
    if speed > full {
        -1.0
    } else {
        -speed / full
    }
}

/// Speed cap from the sharpest bend within the curve horizon.
fn curve_speed_cap(route_ahead: &[Vec2]) -> F {
    let mut cap = F::INFINITY;
    let mut along = 0.0;
    for w in route_ahead.windows(3) {
        let a = w[1] - w[0];
        let b = w[2] - w[1];
        let la = a.norm();
        let lb = b.norm();
        along += la;
        if along > CURVE_HORIZON {
            break;
        }
        if la <= 0.0 || lb <= 0.0 {
            continue;
        }
        let turn = a.cross(b).atan2(a.dot(b)).abs();
        let curvature = turn / (0.5 * (la + lb));
        if curvature > 1e-6 {
            cap = cap.min((LATERAL_ACCEL / curvature).sqrt());
        }
    }
    cap
}

/// Distance from the front bumper to the first point along the route where
/// `lane` reaches arc length `s`, if the route passes it.
fn distance_to_lane_point(world: &World, v: &VehicleState, lane: usize, s: F) -> Option<F> {
    let route = world.route(v.id)?;
    for (i, along) in route.ahead(v.pose.position) {
        let anchor = route.anchors[i];
        if along > 200.0 {
            break;
        }
        if anchor.lane == lane && anchor.s >= s - 1e-9 {
            return Some(along - (anchor.s - s) - v.length / 2.0);
        }
    }
    None
}

/// Bumper-to-bumper gap to the nearest vehicle sitting on the route ahead.
fn leader_gap(world: &World, v: &VehicleState, horizon: F) -> Option<(F, F)> {
    let route = world.route(v.id)?;
    let fwd = v.pose.forward();
    let mut best: Option<(F, F)> = None;
    for other in world.actors().values() {
        if other.id == v.id {
            continue;
        }
        let rel = other.pose.position - v.pose.position;
        if rel.dot(fwd) <= 0.0 || rel.norm() > horizon + v.length + other.length {
            continue;
        }
        let lateral_tol = 0.5 * (v.width + other.width);
        for (i, along) in route.ahead(v.pose.position) {
            if along > horizon + v.length + other.length {
                break;
            }
            if route.waypoints[i].distance(other.pose.position) <= lateral_tol {
                let gap = along - 0.5 * (v.length + other.length);
                let speed_along = other.velocity().dot(fwd);
                if best.map_or(true, |(g, _)| gap < g) {
                    best = Some((gap, speed_along));
                }
                break;
            }
        }
    }
    best
}

/// Control for autopilot vehicle `id`. Pure function of the world state.
pub fn autopilot_control(world: &World, id: ActorId, cfg: &AutopilotConfig) -> Result<Control, WorldError> {
    let v = world.actor(id).ok_or(WorldError::UnknownActor(id))?;
    let route = world.route(id).filter(|r| !r.is_empty()).ok_or(WorldError::MissingRoute(id))?;
    let p = world.params();

    let lookahead = MIN_LOOKAHEAD.max(LOOKAHEAD_TIME * v.speed.abs());
    let target = route
        .remaining()
        .iter()
        .copied()
        .find(|w| w.distance(v.pose.position) >= lookahead)
        .unwrap_or_else(|| *route.waypoints.last().expect("non-empty route"));
    let local = v.pose.to_local(target);
    let dist = local.norm();
    let steer_angle = if dist > 1e-9 {
        let alpha = local.y.atan2(local.x);
        (2.0 * v.wheelbase() * alpha.sin() / dist).atan()
    } else {
        0.0
    };
    let steer = (steer_angle / p.max_steer).clamp(-1.0, 1.0);

    let mut desired = cfg.target_speed.min(curve_speed_cap(route.remaining()));
    let mut must_stop = false;

    if cfg.aggression == Aggression::Lawful {
        let horizon = cfg.headway_distance;
        if let Some((gap, lead_speed)) = leader_gap(world, v, horizon) {
            if gap <= 0.5 * horizon {
                must_stop = true;
            } else if gap <= horizon {
                desired = desired.min(lead_speed.max(0.0) * gap / horizon);
            }
        }
        for (idx, sig) in world.map().signals().iter().enumerate() {
            let Some(d) = distance_to_lane_point(world, v, sig.lane, sig.s) else { continue };
            if d < -0.5 || d > horizon {
                continue;
            }
            match (sig.kind, world.signal_phase(idx)) {
                (SignalKind::TrafficLight, SignalPhase::Red) => must_stop = true,
                (SignalKind::TrafficLight, SignalPhase::Yellow) => {
                    if d >= v.speed * v.speed / (2.0 * p.a_max) {
                        must_stop = true;
                    }
                }
                (SignalKind::TrafficLight, SignalPhase::Green) => {}
                (SignalKind::StopSign, _) => {
                    if !world.stop_served(id, idx) {
                        let room = d - STOP_MARGIN;
                        if room <= 0.0 {
                            must_stop = true;
                        } else {
                            desired = desired.min((p.a_max * room).sqrt());
                        }
                    }
                }
            }
        }
    }

    let throttle = if must_stop {
        brake(v.speed, p.a_max, p.dt)
    } else {
        (SPEED_GAIN * (desired - v.speed)).clamp(-1.0, 1.0)
    };
    Ok(Control::new(throttle, steer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::load_map;
    use crate::route::a_star_route;
    use crate::world::{Blueprint, Controller, DynamicsParams, Role};
    use crate::Pose;
    use std::sync::Arc;

    fn light_world(phase: &str) -> World {
        // a light whose schedule starts in the requested phase
        let sched = match phase {
            "red" => "[0, 0, 30]",
            _ => "[30, 0, 0]",
        };
        let doc = format!(
            r#"{{"lanes":[{{"id":"a","width":3.5,"centerline":[[0,0],[200,0]]}}],
               "signals":[{{"id":"t","kind":"traffic_light","lane":"a","s":50,"phase":{sched}}}]}}"#
        );
        World::new(Arc::new(load_map(&doc).unwrap()), DynamicsParams::default(), 0)
    }

    fn place(world: &mut World, x: F, speed: F, cfg: AutopilotConfig) -> ActorId {
        let id = world
            .spawn_at(Pose::new(Vec2::new(x, 0.0), 0.0), speed, Controller::Autopilot(cfg), Blueprint::default(), Role::Background)
            .unwrap();
        let route = a_star_route(world.map(), Vec2::new(x, 0.0), Vec2::new(190.0, 0.0)).unwrap();
        world.set_route(id, route).unwrap();
        id
    }

    #[test]
    fn equilibrium_on_centerline() {
        let mut w = light_world("green");
        let cfg = AutopilotConfig::default();
        let id = place(&mut w, 100.0, cfg.target_speed, cfg);
        let c = autopilot_control(&w, id, &cfg).unwrap();
        assert!(c.steer.abs() < 0.05);
        assert!(c.throttle.abs() < 1e-12);
    }

    #[test]
    fn lawful_brakes_for_red_aggressive_does_not() {
        let mut w = light_world("red");
        let lawful = AutopilotConfig { target_speed: 5.0, headway_distance: 10.0, aggression: Aggression::Lawful };
        // front bumper 5 m before the stop line at x = 50
        let id = place(&mut w, 50.0 - 5.0 - 2.25, 5.0, lawful);
        assert_eq!(autopilot_control(&w, id, &lawful).unwrap().throttle, -1.0);

        let mut w = light_world("red");
        let aggressive = AutopilotConfig { aggression: Aggression::Aggressive, ..lawful };
        let id = place(&mut w, 50.0 - 5.0 - 2.25, 3.0, aggressive);
        assert!(autopilot_control(&w, id, &aggressive).unwrap().throttle > 0.0);
    }

    #[test]
    fn missing_route_is_an_error() {
        let mut w = light_world("green");
        let cfg = AutopilotConfig::default();
        let id = w
            .spawn_at(Pose::new(Vec2::new(0.0, 0.0), 0.0), 0.0, Controller::Autopilot(cfg), Blueprint::default(), Role::Background)
            .unwrap();
        assert_eq!(autopilot_control(&w, id, &cfg), Err(WorldError::MissingRoute(id)));
    }

    #[test]
    fn brakes_for_stopped_leader() {
        let mut w = light_world("green");
        let cfg = AutopilotConfig::default();
        let id = place(&mut w, 100.0, 5.0, cfg);
        w.spawn_at(Pose::new(Vec2::new(107.0, 0.0), 0.0), 0.0, Controller::External, Blueprint::default(), Role::Background)
            .unwrap();
        // gap = 7 - 4.5 = 2.5 m, under half the 8 m headway
        assert_eq!(autopilot_control(&w, id, &cfg).unwrap().throttle, -1.0);
    }
}
