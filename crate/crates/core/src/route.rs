//! Route planners behind a common `init_route` / `extend_route` contract.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{LaneIdx, LaneQuery, RoadMap};
use crate::world::VehicleState;
use crate::{Vec2, F};

/// Target spacing between consecutive waypoints.
pub const WAYPOINT_SPACING: F = 1.0;
pub const DEFAULT_REACH_RADIUS: F = 2.0;
/// Random-roam routes are topped up when fewer waypoints than this remain.
pub const ROAM_MIN_AHEAD: usize = 20;
/// Arc length of lanes appended per random-roam batch.
const ROAM_BATCH_LENGTH: F = 40.0;
/// Waypoints beyond the cursor considered by the reach rule.
const REACH_WINDOW: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("position ({x:.2}, {y:.2}) does not project onto any lane")]
    OffMap { x: F, y: F },
    #[error("no route to goal ({x:.2}, {y:.2})")]
    NoRoute { x: F, y: F },
    #[error("fixed path needs at least two points")]
    TooFewPoints,
}

/// Lane and arc length a waypoint was sampled from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneAnchor {
    pub lane: LaneIdx,
    pub s: F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub waypoints: Vec<Vec2>,
    pub anchors: Vec<LaneAnchor>,
    /// Index of the next unreached waypoint.
    pub cursor: usize,
    pub reach_radius: F,
    /// Set once a random-roam route has run into a lane without successors.
    pub dead_end: bool,
}

impl Route {
    fn from_samples(samples: Vec<(Vec2, LaneAnchor)>) -> Self {
        let (waypoints, anchors) = samples.into_iter().unzip();
        Self { waypoints, anchors, cursor: 0, reach_radius: DEFAULT_REACH_RADIUS, dead_end: false }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.waypoints.len()
    }

    pub fn remaining(&self) -> &[Vec2] {
        &self.waypoints[self.cursor.min(self.waypoints.len())..]
    }

    pub fn next_waypoint(&self) -> Option<Vec2> {
        self.waypoints.get(self.cursor).copied()
    }

    /// Arc length of the waypoint polyline.
    pub fn length(&self) -> F {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Moves the cursor past every waypoint within `reach_radius` of
    /// `position`. Returns how many waypoints were passed.
    pub fn advance(&mut self, position: Vec2) -> usize {
        let start = self.cursor;
        loop {
            let end = (self.cursor + REACH_WINDOW).min(self.waypoints.len());
            let hit = (self.cursor..end).rev().find(|&j| self.waypoints[j].distance(position) <= self.reach_radius);
            match hit {
                Some(j) => self.cursor = j + 1,
                None => break,
            }
        }
        self.cursor - start
    }

    /// Remaining waypoints with their distance along the route measured from
    /// `position` (straight to the cursor waypoint, then along the polyline).
    pub fn ahead(&self, position: Vec2) -> impl Iterator<Item = (usize, F)> + '_ {
        let mut along = 0.0;
        let mut prev = position;
        (self.cursor..self.waypoints.len()).map(move |i| {
            along += prev.distance(self.waypoints[i]);
            prev = self.waypoints[i];
            (i, along)
        })
    }
}

/// Which planner builds a vehicle's route.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PlannerKind {
    RandomRoam,
    FixedPath { points: Vec<[F; 2]> },
    FixedEnding { goal: [F; 2] },
}

/// A stretch of lane `lane` from arc length `from` to `to` (`from <= to`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub lane: LaneIdx,
    pub from: F,
    pub to: F,
}

/// Evenly resamples the concatenation of `pieces` at no more than `spacing`.
/// Consecutive pieces are assumed to join end to start.
fn resample(map: &RoadMap, pieces: &[Piece], spacing: F) -> Vec<(Vec2, LaneAnchor)> {
    if pieces.is_empty() {
        return Vec::new();
    }
    let total: F = pieces.iter().map(|p| p.to - p.from).sum();
    let n = ((total / spacing).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(n + 1);
    let mut piece = 0;
    let mut consumed = 0.0;
    for k in 0..=n {
        let target = if k == n { total } else { total * k as F / n as F };
        while piece + 1 < pieces.len() && target > consumed + (pieces[piece].to - pieces[piece].from) {
            consumed += pieces[piece].to - pieces[piece].from;
            piece += 1;
        }
        let p = pieces[piece];
        let s = (p.from + (target - consumed)).min(p.to);
        let (pos, _) = map.lane(p.lane).centerline.sample(s);
        let anchor = LaneAnchor { lane: p.lane, s };
        if out.last().map_or(true, |(q, _): &(Vec2, LaneAnchor)| q.distance(pos) > 1e-9) {
            out.push((pos, anchor));
        }
    }
    out
}

fn project_ego(map: &RoadMap, ego: &VehicleState) -> Result<LaneQuery, RouteError> {
    let p = ego.pose.position;
    let q = map.lane_query_aligned(p, ego.pose.heading).map_err(|_| RouteError::OffMap { x: p.x, y: p.y })?;
    if q.lateral.abs() > map.lane(q.lane).width {
        return Err(RouteError::OffMap { x: p.x, y: p.y });
    }
    Ok(q)
}

fn project_point(map: &RoadMap, p: Vec2) -> Result<LaneQuery, RouteError> {
    let q = map.lane_query(p).map_err(|_| RouteError::OffMap { x: p.x, y: p.y })?;
    if q.lateral.abs() > map.lane(q.lane).width {
        return Err(RouteError::OffMap { x: p.x, y: p.y });
    }
    Ok(q)
}

/// Appends whole successor lanes, chosen uniformly, until at least
/// `min_length` has been added or a dead end is hit.
fn roam_pieces<R: Rng + ?Sized>(map: &RoadMap, mut lane: LaneIdx, min_length: F, rng: &mut R) -> (Vec<Piece>, bool) {
    let mut pieces = Vec::new();
    let mut added = 0.0;
    while added < min_length {
        let succ = &map.lane(lane).successors;
        if succ.is_empty() {
            return (pieces, true);
        }
        lane = succ[rng.gen_range(0..succ.len())];
        let len = map.lane(lane).length();
        pieces.push(Piece { lane, from: 0.0, to: len });
        added += len;
    }
    (pieces, false)
}

pub fn init_route<R: Rng + ?Sized>(
    kind: &PlannerKind,
    map: &RoadMap,
    ego: &VehicleState,
    rng: &mut R,
) -> Result<Route, RouteError> {
    match kind {
        PlannerKind::RandomRoam => {
            let q = project_ego(map, ego)?;
            let lane_len = map.lane(q.lane).length();
            let mut pieces = vec![Piece { lane: q.lane, from: q.s, to: lane_len }];
            let (more, dead_end) = roam_pieces(map, q.lane, ROAM_BATCH_LENGTH - (lane_len - q.s), rng);
            pieces.extend(more);
            let mut route = Route::from_samples(resample(map, &pieces, WAYPOINT_SPACING));
            route.dead_end = dead_end;
            Ok(route)
        }
        PlannerKind::FixedPath { points } => {
            if points.len() < 2 {
                return Err(RouteError::TooFewPoints);
            }
            let mut pieces: Vec<Piece> = Vec::new();
            for w in points.windows(2) {
                let a = project_point(map, Vec2::new(w[0][0], w[0][1]))?;
                let b = project_point(map, Vec2::new(w[1][0], w[1][1]))?;
                let found = a_star_search(map, a, b, Heuristic::Euclidean).ok_or(RouteError::NoRoute { x: w[1][0], y: w[1][1] })?;
                pieces.extend(found.pieces);
            }
            Ok(Route::from_samples(resample(map, &merge_pieces(pieces), WAYPOINT_SPACING)))
        }
        PlannerKind::FixedEnding { goal } => {
            let start = project_ego(map, ego)?;
            let g = Vec2::new(goal[0], goal[1]);
            let goal_q = project_point(map, g)?;
            let found = a_star_search(map, start, goal_q, Heuristic::Euclidean).ok_or(RouteError::NoRoute { x: g.x, y: g.y })?;
            Ok(Route::from_samples(resample(map, &found.pieces, WAYPOINT_SPACING)))
        }
    }
}

/// Advances the cursor for `ego` and, for random roaming, tops the route up.
/// Returns the number of waypoints reached this call.
pub fn extend_route<R: Rng + ?Sized>(
    kind: &PlannerKind,
    map: &RoadMap,
    ego: &VehicleState,
    route: &mut Route,
    rng: &mut R,
) -> usize {
    let reached = route.advance(ego.pose.position);
    if matches!(kind, PlannerKind::RandomRoam) && !route.dead_end && route.remaining().len() < ROAM_MIN_AHEAD {
        if let Some(last) = route.anchors.last().copied() {
            let (pieces, dead_end) = roam_pieces(map, last.lane, ROAM_BATCH_LENGTH, rng);
            route.dead_end = dead_end;
            let tail = route.waypoints.last().copied();
            for (p, a) in resample(map, &pieces, WAYPOINT_SPACING) {
                if tail.map_or(true, |t| t.distance(p) > 1e-9) {
                    route.waypoints.push(p);
                    route.anchors.push(a);
                }
            }
        }
    }
    reached
}

fn merge_pieces(pieces: Vec<Piece>) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    for p in pieces {
        match out.last_mut() {
            Some(last) if last.lane == p.lane && (last.to - p.from).abs() < 1e-9 => last.to = p.to,
            _ => out.push(p),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heuristic {
    Euclidean,
    Zero,
}

/// Search node: start, a 1 m grid point on a lane, or the goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Start,
    Grid { lane: LaneIdx, k: usize },
    Goal,
}

/// Node expansion record, kept for admissibility checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expansion {
    pub node: Node,
    pub g: F,
    pub h: F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub cost: F,
    pub pieces: Vec<Piece>,
    pub nodes: Vec<Node>,
    pub expanded: Vec<Expansion>,
}

/// Grid positions along a lane: 0, 1, 2, ... and the lane end.
pub fn grid_len(length: F) -> usize {
    (length - 1e-12).ceil().max(0.0) as usize
}

pub fn grid_s(length: F, k: usize) -> F {
    (k as F).min(length)
}

#[derive(PartialEq)]
struct Queued {
    f: F,
    lane: LaneIdx,
    s: F,
    node: Node,
    g: F,
}

impl Eq for Queued {}

impl Ord for Queued {
    // BinaryHeap is a max-heap; invert so the smallest (f, lane, s) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.lane.cmp(&self.lane))
            .then_with(|| other.s.total_cmp(&self.s))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over the lane graph discretised at 1 m. Edge costs are arc lengths;
/// the Euclidean heuristic to the projected goal point is admissible.
/// Ties on f are broken by smaller lane id, then smaller s.
pub fn a_star_search(map: &RoadMap, start: LaneQuery, goal: LaneQuery, heuristic: Heuristic) -> Option<SearchResult> {
    let goal_pos = map.lane(goal.lane).centerline.sample(goal.s).0;
    let start_pos = map.lane(start.lane).centerline.sample(start.s).0;
    let pos_of = |node: Node| match node {
        Node::Start => start_pos,
        Node::Goal => goal_pos,
        Node::Grid { lane, k } => {
            let l = map.lane(lane);
            l.centerline.sample(grid_s(l.length(), k)).0
        }
    };
    let h = |node: Node| match heuristic {
        Heuristic::Zero => 0.0,
        Heuristic::Euclidean => pos_of(node).distance(goal_pos),
    };
    let key = |node: Node| match node {
        Node::Start => (start.lane, start.s),
        Node::Goal => (goal.lane, goal.s),
        Node::Grid { lane, k } => (lane, grid_s(map.lane(lane).length(), k)),
    };

    let lanes = map.lanes();
    let mut best_g: Vec<Vec<F>> = lanes.iter().map(|l| vec![F::INFINITY; grid_len(l.length()) + 1]).collect();
    let mut parent: Vec<Vec<Option<Node>>> = lanes.iter().map(|l| vec![None; grid_len(l.length()) + 1]).collect();
    let mut closed: Vec<Vec<bool>> = lanes.iter().map(|l| vec![false; grid_len(l.length()) + 1]).collect();
    let mut goal_g = F::INFINITY;
    let mut goal_parent: Option<Node> = None;
    let mut expanded = Vec::new();

    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Queued>, node: Node, g: F| {
        let (lane, s) = key(node);
        heap.push(Queued { f: g + h(node), lane, s, node, g });
    };
    push(&mut heap, Node::Start, 0.0);

    while let Some(Queued { node, g, .. }) = heap.pop() {
        let mut successors: Vec<(Node, F)> = Vec::new();
        match node {
            Node::Goal => {
                if g > goal_g {
                    continue;
                }
                expanded.push(Expansion { node, g, h: h(node) });
                let mut nodes = vec![Node::Goal];
                let mut cur = goal_parent;
                while let Some(n) = cur {
                    nodes.push(n);
                    cur = match n {
                        Node::Grid { lane, k } => parent[lane][k],
                        _ => None,
                    };
                }
                nodes.reverse();
                let pieces = nodes_to_pieces(map, &nodes, start, goal);
                return Some(SearchResult { cost: g, pieces, nodes, expanded });
            }
            Node::Start => {
                expanded.push(Expansion { node, g, h: h(node) });
                let len = lanes[start.lane].length();
                if goal.lane == start.lane && goal.s >= start.s {
                    successors.push((Node::Goal, goal.s - start.s));
                }
                let k = (start.s - 1e-12).ceil().max(0.0) as usize;
                if k <= grid_len(len) {
                    successors.push((Node::Grid { lane: start.lane, k }, grid_s(len, k) - start.s));
                }
            }
            Node::Grid { lane, k } => {
                if closed[lane][k] || g > best_g[lane][k] {
                    continue;
                }
                closed[lane][k] = true;
                expanded.push(Expansion { node, g, h: h(node) });
                let len = lanes[lane].length();
                let s = grid_s(len, k);
                let last = grid_len(len);
                if lane == goal.lane && s <= goal.s && (k == last || grid_s(len, k + 1) > goal.s) {
                    successors.push((Node::Goal, goal.s - s));
                }
                if k < last {
                    successors.push((Node::Grid { lane, k: k + 1 }, grid_s(len, k + 1) - s));
                } else {
                    let end = lanes[lane].centerline.sample(len).0;
                    for &succ in &lanes[lane].successors {
                        let gap = end.distance(lanes[succ].centerline.points()[0]);
                        successors.push((Node::Grid { lane: succ, k: 0 }, gap));
                    }
                }
            }
        }
        for (next, cost) in successors {
            let ng = g + cost;
            match next {
                Node::Goal => {
                    if ng < goal_g {
                        goal_g = ng;
                        goal_parent = Some(node);
                        push(&mut heap, next, ng);
                    }
                }
                Node::Grid { lane, k } => {
                    if !closed[lane][k] && ng < best_g[lane][k] {
                        best_g[lane][k] = ng;
                        parent[lane][k] = Some(node);
                        push(&mut heap, next, ng);
                    }
                }
                Node::Start => {}
            }
        }
    }
    None
}

fn nodes_to_pieces(map: &RoadMap, nodes: &[Node], start: LaneQuery, goal: LaneQuery) -> Vec<Piece> {
    let mut pieces: Vec<Piece> = Vec::new();
    let mut extend = |lane: LaneIdx, s: F| match pieces.last_mut() {
        Some(p) if p.lane == lane && s >= p.to => p.to = s,
        _ => pieces.push(Piece { lane, from: s, to: s }),
    };
    for &n in nodes {
        match n {
            Node::Start => extend(start.lane, start.s),
            Node::Goal => extend(goal.lane, goal.s),
            Node::Grid { lane, k } => extend(lane, grid_s(map.lane(lane).length(), k)),
        }
    }
    pieces.retain(|p| p.to > p.from);
    pieces
}

/// Shortest lane-following route from `start` to `goal` (both projected onto
/// their nearest lanes).
pub fn a_star_route(map: &RoadMap, start: Vec2, goal: Vec2) -> Result<Route, RouteError> {
    let a = project_point(map, start)?;
    let b = project_point(map, goal)?;
    let found = a_star_search(map, a, b, Heuristic::Euclidean).ok_or(RouteError::NoRoute { x: goal.x, y: goal.y })?;
    Ok(Route::from_samples(resample(map, &found.pieces, WAYPOINT_SPACING)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{load_builtin, load_map};
    use crate::world::{Controller, Role};
    use crate::Pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vehicle_at(p: Vec2, heading: F) -> VehicleState {
        VehicleState {
            id: crate::ActorId(0),
            pose: Pose::new(p, heading),
            speed: 0.0,
            steer: 0.0,
            length: 4.5,
            width: 2.0,
            role: Role::Ego,
            controller: Controller::External,
            odometer: 0.0,
        }
    }

    #[test]
    fn fixed_path_on_straight_lane_is_even() {
        let map = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[100,0]]}]}"#).unwrap();
        let kind = PlannerKind::FixedPath { points: vec![[10.0, 0.0], [20.5, 0.0]] };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = init_route(&kind, &map, &vehicle_at(Vec2::new(10.0, 0.0), 0.0), &mut rng).unwrap();
        assert_eq!(r.waypoints.first().unwrap().x, 10.0);
        assert_eq!(r.waypoints.last().unwrap().x, 20.5);
        let gaps: Vec<F> = r.waypoints.windows(2).map(|w| w[1].x - w[0].x).collect();
        assert_eq!(gaps.len(), 11);
        for g in &gaps {
            assert!((g - 10.5 / 11.0).abs() < 1e-9);
        }
    }

    #[test]
    fn a_star_same_lane_length() {
        let map = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[100,0]]}]}"#).unwrap();
        let a = map.lane_query(Vec2::new(12.3, 0.0)).unwrap();
        let b = map.lane_query(Vec2::new(57.9, 0.0)).unwrap();
        let r = a_star_search(&map, a, b, Heuristic::Euclidean).unwrap();
        assert!((r.cost - 45.6).abs() < 1e-9);
        let z = a_star_search(&map, a, b, Heuristic::Zero).unwrap();
        assert_eq!(r.cost, z.cost);
    }

    #[test]
    fn goal_behind_on_one_way_lane_is_unreachable() {
        let map = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[100,0]]}]}"#).unwrap();
        let err = a_star_route(&map, Vec2::new(50.0, 0.0), Vec2::new(10.0, 0.0)).unwrap_err();
        assert!(matches!(err, RouteError::NoRoute { .. }));
    }

    #[test]
    fn random_roam_is_seeded() {
        let map = load_builtin("town.map.json").unwrap();
        let ego = vehicle_at(Vec2::new(1.75, -50.0), std::f64::consts::FRAC_PI_2);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut r = init_route(&PlannerKind::RandomRoam, &map, &ego, &mut rng).unwrap();
            for _ in 0..30 {
                let mut v = ego.clone();
                v.pose.position = r.remaining()[0];
                extend_route(&PlannerKind::RandomRoam, &map, &v, &mut r, &mut rng);
            }
            r.waypoints
        };
        assert_eq!(run(4), run(4));
    }

    #[test]
    fn reach_rule_advances_cursor() {
        let map = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[100,0]]}]}"#).unwrap();
        let mut r = a_star_route(&map, Vec2::new(0.0, 0.0), Vec2::new(50.0, 0.0)).unwrap();
        let ego = vehicle_at(Vec2::new(-10.0, 0.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(extend_route(&PlannerKind::FixedEnding { goal: [50.0, 0.0] }, &map, &ego, &mut r, &mut rng), 0);
        let before = r.waypoints.clone();
        let ego = vehicle_at(Vec2::new(1.0, 0.5), 0.0);
        let n = extend_route(&PlannerKind::FixedEnding { goal: [50.0, 0.0] }, &map, &ego, &mut r, &mut rng);
        // waypoints at x = 0, 1, 2 are within 2 m of (1, 0.5); x = 3 is not
        assert_eq!(n, 3);
        assert_eq!(r.cursor, 3);
        assert_eq!(before, r.waypoints);
    }
}
