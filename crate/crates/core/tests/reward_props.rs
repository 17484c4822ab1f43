mod common;

use std::collections::BTreeMap;

use lanesim::env::{evaluate, AutopilotAgent, RandomAgent};
use lanesim::route::a_star_route;
use lanesim::task::{check_termination, compute_reward, make_task, RewardConfig, StepEvents};
use lanesim::world::Control;
use lanesim::{Action, DrivingEnv, TerminationCause, Vec2};
use proptest::prelude::*;
use serde_json::json;

use common::{open_world, spawn};

fn events() -> impl Strategy<Value = StepEvents> {
    (any::<bool>(), 0usize..4, any::<bool>(), any::<bool>(), 0usize..2, 0usize..2).prop_map(|(c, w, d, o, r, s)| StepEvents {
        collided: c,
        waypoints_reached: w,
        destination: d,
        out_of_lane: o,
        red_lights_run: r,
        stop_signs_served: s,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decomposition_and_pythagoras(
        heading in -3.2..3.2f64,
        speed in -2.0..12.0f64,
        wp in prop::option::of((-30.0..30.0f64, -30.0..30.0f64)),
        ev in events(),
    ) {
        let mut world = open_world(0);
        let id = spawn(&mut world, 0.0, 0.0, heading, speed).unwrap();
        let ego = &world.actors()[&id];
        let cfg = RewardConfig::default();
        let t = compute_reward(ego, wp.map(|(x, y)| Vec2::new(x, y)), &cfg, &ev);
        let expected = cfg.alpha * t.v_parallel - cfg.beta * t.v_perp - cfg.gamma * f64::from(t.collision) + t.bonus_terms;
        prop_assert!((t.total - expected).abs() < 1e-9);
        prop_assert!((t.v_parallel.powi(2) + t.v_perp.powi(2) - speed * speed).abs() < 1e-9);
        prop_assert!(t.v_perp >= 0.0);
    }

    #[test]
    fn collision_costs_exactly_gamma(heading in -3.2..3.2f64, speed in -2.0..12.0f64, ev in events()) {
        let mut world = open_world(0);
        let id = spawn(&mut world, 0.0, 0.0, heading, speed).unwrap();
        let cfg = RewardConfig::default();
        let wp = Some(Vec2::new(5.0, 1.0));
        let hit = compute_reward(&world.actors()[&id], wp, &cfg, &StepEvents { collided: true, ..ev });
        let clean = compute_reward(&world.actors()[&id], wp, &cfg, &StepEvents { collided: false, ..ev });
        prop_assert!((clean.total - hit.total - cfg.gamma).abs() < 1e-9);
    }
}

#[test]
fn standing_still_earns_nothing() {
    let mut env = DrivingEnv::from_task("four_lane", &json!({})).unwrap();
    env.reset(0).unwrap();
    let mut moving = 0.0;
    for _ in 0..20 {
        moving += env.step(Action::continuous(1.0, 0.0)).unwrap().reward;
    }
    // brake to an exact stop, then hold still
    let full = env.config().dynamics.a_max * env.config().dynamics.dt;
    let mut stopped = 0;
    for _ in 0..100 {
        let speed = env.world().actor(env.ego().unwrap()).unwrap().speed;
        let was_stopped = speed == 0.0;
        let r = env.step(Action::continuous(if speed > full { -1.0 } else { -speed / full }, 0.0)).unwrap();
        if was_stopped {
            assert_eq!(r.reward, 0.0, "reward while stationary");
            stopped += 1;
        }
    }
    assert!(stopped > 50);
    assert!(moving > 0.0);
}

#[test]
fn collision_outranks_out_of_lane() {
    let cfg = make_task("right_turn_simple", &json!({})).unwrap();
    let mut world = open_world(0);
    let id = spawn(&mut world, 0.0, 0.0, 0.0, 1.0).unwrap();
    let route = a_star_route(world.map(), Vec2::new(0.0, 0.0), Vec2::new(50.0, 0.0)).unwrap();
    let ego = world.actors()[&id].clone();
    assert_eq!(check_termination(&world, &ego, &route, &cfg, true), Some(TerminationCause::Collision));
    assert_eq!(check_termination(&world, &ego, &route, &cfg, false), None);

    let map = std::sync::Arc::new(lanesim::load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[100,0]]}]}"#).unwrap());
    let mut world = lanesim::World::new(map, Default::default(), 0);
    let id = spawn(&mut world, 10.0, 3.0, 0.0, 1.0).unwrap();
    let route = a_star_route(world.map(), Vec2::new(10.0, 0.0), Vec2::new(50.0, 0.0)).unwrap();
    let mut exhausted = route.clone();
    exhausted.cursor = exhausted.len();
    let ego = world.actors()[&id].clone();
    assert_eq!(check_termination(&world, &ego, &exhausted, &cfg, false), Some(TerminationCause::OutOfLane));
    assert_eq!(check_termination(&world, &ego, &exhausted, &cfg, true), Some(TerminationCause::Collision));
    world.tick(&BTreeMap::from([(id, Control::default())])).unwrap();
}

#[test]
fn step_results_are_well_formed() {
    for (i, task) in ["lane_merge", "navigation", "stop_sign"].iter().enumerate() {
        let mut env = DrivingEnv::from_task(task, &json!({})).unwrap();
        let mut seen = 0;
        evaluate(&mut env, &mut RandomAgent::new(i as u64), 3, 10, &mut |ev| {
            let r = ev.result;
            assert!(!(r.terminated && r.truncated));
            assert_eq!(r.done(), r.cause.is_some());
            assert_eq!(r.info["cause"], json!(r.cause.map(|c| c.as_str())));
            assert_eq!(r.truncated, r.cause == Some(TerminationCause::Timeout));
            seen += 1;
        })
        .unwrap();
        assert!(seen > 0);
    }
}

#[test]
fn evaluation_is_reproducible() {
    let run = || {
        let mut env = DrivingEnv::from_task("right_turn_medium", &json!({})).unwrap();
        evaluate(&mut env, &mut AutopilotAgent::default(), 4, 3, &mut |_| {}).unwrap()
    };
    assert_eq!(run(), run());
}
