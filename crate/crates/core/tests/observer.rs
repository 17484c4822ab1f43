mod common;

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use lanesim::observer::{
    collect_intentions, palette, render_bev, BevSpec, IntentionConfig, IntentionScope, LidarSpec, ObserverError,
    VisibilityConfig, VisibilityMode, BUILTIN_HANDLERS,
};
use lanesim::route::a_star_route;
use lanesim::{ObservationBundle, Observer, Payload, Vec2};
use proptest::prelude::*;

use common::{open_world, spawn};

fn observer(names: &[&str]) -> Observer {
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    Observer::with_modalities(&names, BevSpec::default(), LidarSpec::default(), 10).unwrap()
}

fn vehicle_pixels(b: &ObservationBundle) -> usize {
    match b.get("bev") {
        Some(Payload::Image { data, .. }) => data.iter().filter(|p| **p == palette::OTHER_VEHICLE).count(),
        other => panic!("no bev: {other:?}"),
    }
}

#[test]
fn fov_hides_what_full_shows() {
    let mut world = open_world(0);
    let ego = spawn(&mut world, 0.0, 0.0, FRAC_PI_2, 0.0).unwrap();
    // behind-left of a north-facing ego
    spawn(&mut world, -8.0, -3.0, 0.0, 0.0).unwrap();
    let obs = observer(&["bev", "state_vector", "lidar"]);
    let icfg = IntentionConfig::default();
    let fov = obs.collect(&world, ego, &VisibilityConfig::with_mode(VisibilityMode::Fov), &icfg).unwrap();
    let full = obs.collect(&world, ego, &VisibilityConfig::with_mode(VisibilityMode::Full), &icfg).unwrap();
    assert_eq!(vehicle_pixels(&fov), 0);
    assert!(vehicle_pixels(&full) > 0);
    let Some(Payload::Vector(sv)) = full.get("state_vector") else { panic!() };
    assert!(sv[4..8].iter().any(|v| *v != 0.0));
    let Some(Payload::Vector(sv)) = fov.get("state_vector") else { panic!() };
    assert!(sv[4..].iter().all(|v| *v == 0.0));
    // lidar is a range sensor and ignores the observability mask
    assert_eq!(fov.get("lidar"), full.get("lidar"));
}

#[test]
fn intentions_are_truncated_to_k() {
    let mut world = open_world(0);
    let ego = spawn(&mut world, 0.0, 0.0, 0.0, 0.0).unwrap();
    let near = spawn(&mut world, 10.0, 5.0, 0.0, 0.0).unwrap();
    let far = spawn(&mut world, 10.0, -5.0, 0.0, 0.0).unwrap();
    let long = a_star_route(world.map(), Vec2::new(10.0, 0.0), Vec2::new(60.0, 0.0)).unwrap();
    let short = a_star_route(world.map(), Vec2::new(10.0, 0.0), Vec2::new(13.0, 0.0)).unwrap();
    world.set_route(near, long.clone()).unwrap();
    world.set_route(far, short.clone()).unwrap();
    let visible: BTreeSet<_> = world.actors().keys().copied().collect();
    for k in [0, 1, 3, 10, 100] {
        let cfg = IntentionConfig { enabled: true, shared_waypoints: k, scope: IntentionScope::All };
        let got = collect_intentions(&world, ego, &cfg, world.routes(), &visible);
        assert_eq!(got[&near].len(), k.min(long.remaining().len()));
        assert_eq!(got[&far].len(), k.min(short.remaining().len()));
        assert!(!got.contains_key(&ego));
    }
    let only_ego: BTreeSet<_> = [ego].into();
    let cfg = IntentionConfig { enabled: true, ..Default::default() };
    assert!(collect_intentions(&world, ego, &cfg, world.routes(), &only_ego).is_empty());
}

#[test]
fn intentions_show_up_in_the_bev() {
    let mut world = open_world(0);
    let ego = spawn(&mut world, 0.0, 0.0, 0.0, 0.0).unwrap();
    let other = spawn(&mut world, 8.0, 4.0, 0.0, 0.0).unwrap();
    world.set_route(other, a_star_route(world.map(), Vec2::new(8.0, 4.0), Vec2::new(20.0, 4.0)).unwrap()).unwrap();
    let visible: BTreeSet<_> = world.actors().keys().copied().collect();
    let spec = BevSpec::default();
    let cfg = IntentionConfig { enabled: true, shared_waypoints: 5, scope: IntentionScope::All };
    let with = collect_intentions(&world, ego, &cfg, world.routes(), &visible);
    let img = render_bev(&world, ego, &spec, &visible, &with).unwrap();
    assert!(img.data.contains(&palette::INTENTION_WAYPOINT));
    let img = render_bev(&world, ego, &spec, &visible, &Default::default()).unwrap();
    assert!(!img.data.contains(&palette::INTENTION_WAYPOINT));
}

#[test]
fn custom_handlers_run_in_order_and_report_failures() {
    let mut world = open_world(0);
    let ego = spawn(&mut world, 0.0, 0.0, 0.0, 2.5).unwrap();
    spawn(&mut world, 20.0, 0.0, 0.0, 0.0).unwrap();
    let mut obs = observer(&["state_vector"]);
    obs.register_handler("visible_count", Box::new(|s| Ok(Payload::Scalars([("visible".to_string(), s.visible.len() as f64)].into())))).unwrap();
    assert!(matches!(
        obs.register_handler("state_vector", Box::new(|_| Ok(Payload::Scalars(Default::default())))),
        Err(ObserverError::DuplicateHandler(_))
    ));
    let b = obs.collect(&world, ego, &VisibilityConfig::default(), &IntentionConfig::default()).unwrap();
    assert_eq!(b.keys().collect::<Vec<_>>(), ["state_vector", "visible_count"]);
    assert_eq!(b.get("visible_count"), Some(&Payload::Scalars([("visible".to_string(), 2.0)].into())));

    obs.register_handler("broken", Box::new(|_| Err("sensor offline".into()))).unwrap();
    let err = obs.collect(&world, ego, &VisibilityConfig::default(), &IntentionConfig::default()).unwrap_err();
    assert!(matches!(err, ObserverError::Handler { ref name, .. } if name == "broken"));

    let names: Vec<String> = vec!["sonar".into()];
    assert!(matches!(
        Observer::with_modalities(&names, BevSpec::default(), LidarSpec::default(), 10),
        Err(ObserverError::UnknownModality { .. })
    ));
    assert_eq!(BUILTIN_HANDLERS.len(), 4);
}

#[test]
fn bundle_json_roundtrip() {
    let mut world = open_world(0);
    let ego = spawn(&mut world, 0.0, 0.0, 0.3, 4.0).unwrap();
    spawn(&mut world, 6.0, 2.0, 0.0, 1.0).unwrap();
    let b = observer(&["bev", "lidar", "state_vector", "intentions"])
        .collect(&world, ego, &VisibilityConfig::default(), &IntentionConfig::default())
        .unwrap();
    let back = ObservationBundle::from_json(&b.to_json().unwrap()).unwrap();
    assert_eq!(back, b);
    let Some(Payload::Vector(v)) = back.get("intentions") else { panic!() };
    assert_eq!(v.len(), 15 * 20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn collect_is_pure(placements in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64, -3.2..3.2f64), 1..8), mode in 0usize..3) {
        let mut world = open_world(0);
        let ego = spawn(&mut world, 0.0, 0.0, 0.0, 3.0).unwrap();
        for (x, y, h) in placements {
            spawn(&mut world, x, y, h, 0.0);
        }
        let vcfg = VisibilityConfig::with_mode([VisibilityMode::Fov, VisibilityMode::Sfov, VisibilityMode::Full][mode]);
        let icfg = IntentionConfig::default();
        let obs = observer(&["bev", "lidar", "state_vector"]);
        let a = obs.collect(&world, ego, &vcfg, &icfg).unwrap();
        let b = obs.collect(&world, ego, &vcfg, &icfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
