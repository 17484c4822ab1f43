#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use lanesim::map::LaneQuery;
use lanesim::world::{Blueprint, Controller, DynamicsParams, Role};
use lanesim::{load_map, ActorId, Pose, RoadMap, Vec2, World, F};

pub fn open_world(seed: u64) -> World {
    let map = load_map(r#"{"lanes":[{"id":"a","width":200,"centerline":[[-100,0],[100,0]]}]}"#).unwrap();
    World::new(Arc::new(map), DynamicsParams::default(), seed)
}

pub fn spawn(world: &mut World, x: F, y: F, heading: F, speed: F) -> Option<ActorId> {
    world
        .spawn_at(Pose::new(Vec2::new(x, y), heading), speed, Controller::External, Blueprint::default(), Role::Background)
        .ok()
}

/// Lane-following distance by Dijkstra over lane entry points.
pub fn lane_distance(map: &RoadMap, start: LaneQuery, goal: LaneQuery) -> Option<F> {
    let lanes = map.lanes();
    let gap = |a: usize, b: usize| lanes[a].centerline.points().last().unwrap().distance(lanes[b].centerline.points()[0]);
    let mut best = if start.lane == goal.lane && goal.s >= start.s { goal.s - start.s } else { F::INFINITY };
    let mut dist = vec![F::INFINITY; lanes.len()];
    let mut heap = BinaryHeap::new();
    for &s in &lanes[start.lane].successors {
        let d = lanes[start.lane].length() - start.s + gap(start.lane, s);
        if d < dist[s] {
            dist[s] = d;
            heap.push(Reverse((d.to_bits(), s)));
        }
    }
    while let Some(Reverse((bits, l))) = heap.pop() {
        let d = F::from_bits(bits);
        if d > dist[l] {
            continue;
        }
        for &m in &lanes[l].successors {
            let nd = d + lanes[l].length() + gap(l, m);
            if nd < dist[m] {
                dist[m] = nd;
                heap.push(Reverse((nd.to_bits(), m)));
            }
        }
    }
    best = best.min(dist[goal.lane] + goal.s);
    best.is_finite().then_some(best)
}
