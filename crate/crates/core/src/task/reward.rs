//! Per-step reward and the episode termination rule.

use serde::{Deserialize, Serialize};

use super::{TaskConfig, TerminationCause};
use crate::map::{LaneIdx, RoadMap, SignalKind, SignalPhase};
use crate::route::Route;
use crate::world::{VehicleState, World};
use crate::{Vec2, F};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub alpha: F,
    pub beta: F,
    pub gamma: F,
    pub waypoint_bonus: F,
    pub out_of_lane_penalty: F,
    pub destination_bonus: F,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            gamma: 100.0,
            waypoint_bonus: 5.0,
            out_of_lane_penalty: 20.0,
            destination_bonus: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub v_parallel: F,
    pub v_perp: F,
    /// 1 if the ego collided this step, else 0.
    pub collision: u8,
    pub waypoints_reached: usize,
    pub bonus_terms: F,
    pub total: F,
}

/// What happened during one step, as far as the reward is concerned.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepEvents {
    pub collided: bool,
    pub waypoints_reached: usize,
    pub destination: bool,
    pub out_of_lane: bool,
    pub red_lights_run: usize,
    pub stop_signs_served: usize,
}

/// Speed along and across the goal direction, plus event bonuses.
/// The goal direction points from the ego to `next_waypoint`; without one
/// (or when standing on it) the ego heading is used.
pub fn compute_reward(ego: &VehicleState, next_waypoint: Option<Vec2>, cfg: &RewardConfig, ev: &StepEvents) -> RewardTerms {
    let fwd = ego.pose.forward();
    let g = next_waypoint.and_then(|w| (w - ego.pose.position).normalized()).unwrap_or(fwd);
    let w = fwd * ego.speed;
    let v_parallel = w.dot(g);
    let v_perp = w.cross(g).abs();
    let collision = u8::from(ev.collided);
    let bonus_terms = cfg.waypoint_bonus * ev.waypoints_reached as F
        + if ev.destination { cfg.destination_bonus } else { 0.0 }
        - if ev.out_of_lane { cfg.out_of_lane_penalty } else { 0.0 }
        - cfg.gamma * ev.red_lights_run as F
        + cfg.waypoint_bonus * ev.stop_signs_served as F;
    let total = cfg.alpha * v_parallel - cfg.beta * v_perp - cfg.gamma * F::from(collision) + bonus_terms;
    RewardTerms { v_parallel, v_perp, collision, waypoints_reached: ev.waypoints_reached, bonus_terms, total }
}

/// Arc length of `p` along `lane`, if `p` is on that lane's surface.
pub fn front_arc_length(map: &RoadMap, lane: LaneIdx, p: Vec2) -> Option<F> {
    let l = map.lane(lane);
    let proj = l.centerline.project(p);
    (proj.distance <= l.width / 2.0).then_some(proj.s)
}

/// Red lights whose stop line the ego's front bumper crossed between `prev`
/// and `curr`. `phases` are the signal phases in force during the step.
pub fn red_light_crossed(map: &RoadMap, prev: &VehicleState, curr: &VehicleState, phases: &[SignalPhase]) -> usize {
    map.signals()
        .iter()
        .zip(phases)
        .filter(|(sig, phase)| sig.kind == SignalKind::TrafficLight && **phase == SignalPhase::Red)
        .filter(|(sig, _)| {
            match (front_arc_length(map, sig.lane, prev.front()), front_arc_length(map, sig.lane, curr.front())) {
                (Some(a), Some(b)) => a < sig.s && b >= sig.s,
                _ => false,
            }
        })
        .count()
}

/// First applicable cause in priority order collision, out_of_lane,
/// destination, timeout.
pub fn check_termination(
    world: &World,
    ego: &VehicleState,
    route: &Route,
    cfg: &TaskConfig,
    collided: bool,
) -> Option<TerminationCause> {
    if collided {
        return Some(TerminationCause::Collision);
    }
    if let Ok(q) = world.map().lane_query_aligned(ego.pose.position, ego.pose.heading) {
        if q.lateral.abs() > world.map().lane(q.lane).width / 2.0 + cfg.out_of_lane_limit {
            return Some(TerminationCause::OutOfLane);
        }
    }
    let arrived = match cfg.distance_budget {
        Some(budget) => ego.odometer >= budget,
        None => route.is_exhausted(),
    };
    if arrived {
        return Some(TerminationCause::Destination);
    }
    if world.tick_count() >= cfg.tick_limit() {
        return Some(TerminationCause::Timeout);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Controller, Role};
    use crate::Pose;

    fn car(heading: F, speed: F) -> VehicleState {
        VehicleState {
            id: crate::ActorId(0),
            pose: Pose::new(Vec2::zero(), heading),
            speed,
            steer: 0.0,
            length: 4.5,
            width: 2.0,
            role: Role::Ego,
            controller: Controller::External,
            odometer: 0.0,
        }
    }

    #[test]
    fn substitution_examples() {
        let cfg = RewardConfig::default();
        let ahead = Some(Vec2::new(10.0, 0.0));
        let r = compute_reward(&car(0.0, 3.0), ahead, &cfg, &StepEvents::default());
        assert_eq!((r.v_parallel, r.v_perp, r.total), (3.0, 0.0, 3.0));

        let r = compute_reward(&car(std::f64::consts::FRAC_PI_2, 3.0), ahead, &cfg, &StepEvents::default());
        assert!(r.v_parallel.abs() < 1e-12);
        assert!((r.v_perp - 3.0).abs() < 1e-12);
        assert!((r.total + 1.5).abs() < 1e-12);

        let crash = StepEvents { collided: true, ..Default::default() };
        assert_eq!(compute_reward(&car(0.0, 0.0), ahead, &cfg, &crash).total, -100.0);
    }

    #[test]
    fn bonuses_add_up() {
        let cfg = RewardConfig::default();
        let ev = StepEvents {
            waypoints_reached: 2,
            destination: true,
            out_of_lane: true,
            red_lights_run: 1,
            stop_signs_served: 1,
            ..Default::default()
        };
        let r = compute_reward(&car(0.0, 0.0), None, &cfg, &ev);
        assert_eq!(r.bonus_terms, 10.0 + 100.0 - 20.0 - 100.0 + 5.0);
        assert_eq!(r.total, r.bonus_terms);
    }

    #[test]
    fn degenerate_goal_direction_falls_back_to_heading() {
        let r = compute_reward(&car(0.3, 2.0), Some(Vec2::zero()), &RewardConfig::default(), &StepEvents::default());
        assert!((r.v_parallel - 2.0).abs() < 1e-12);
        assert!(r.v_perp.abs() < 1e-12);
    }
}
