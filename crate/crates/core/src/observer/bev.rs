//! Ego-centric bird's-eye-view raster with fixed palette indices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::{closest_on_segment, segment_distance};
use crate::map::{SignalKind, SignalPhase};
use crate::world::{ActorId, World};
use crate::{Vec2, F};

pub mod palette {
    pub const BACKGROUND: u8 = 0;
    pub const ROAD: u8 = 1;
    pub const EGO: u8 = 2;
    pub const OTHER_VEHICLE: u8 = 3;
    pub const ROUTE_WAYPOINT: u8 = 4;
    pub const INTENTION_WAYPOINT: u8 = 5;
    pub const SIGNAL_RED: u8 = 6;
    pub const SIGNAL_GREEN: u8 = 7;
}

const WAYPOINT_RADIUS: F = 0.4;
const SIGNAL_RADIUS: F = 1.0;
/// Ego-frame coordinates are snapped to this grid so that rigidly rotating
/// the scene about the ego cannot flip a pixel through rounding noise.
const SNAP: F = 1.0 / (1u64 << 20) as F;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BevSpec {
    pub size: usize,
    /// Metres per pixel.
    pub resolution: F,
}

impl Default for BevSpec {
    fn default() -> Self {
        Self { size: 128, resolution: 0.25 }
    }
}

impl BevSpec {
    pub fn is_valid(&self) -> bool {
        self.size >= 2 && self.size % 2 == 0 && self.resolution > 0.0
    }

    /// `(row, col)` of the ego centre.
    pub fn anchor(&self) -> (usize, usize) {
        (self.size * 3 / 4, self.size / 2)
    }
}

/// Row-major `size × size` palette-index image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BevImage {
    pub size: usize,
    pub data: Vec<u8>,
}

impl BevImage {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.size + col]
    }
}

fn snap(v: F) -> F {
    (v / SNAP).round() * SNAP
}

struct Canvas<'a> {
    spec: &'a BevSpec,
    data: Vec<u8>,
}

impl Canvas<'_> {
    /// Ego-frame point (forward, left) at the centre of pixel `(row, col)`.
    fn pixel_center(&self, row: usize, col: usize) -> Vec2 {
        let (ar, ac) = self.spec.anchor();
        Vec2::new((ar as F - row as F) * self.spec.resolution, (ac as F - col as F) * self.spec.resolution)
    }

    /// Pixel rectangle covering the ego-frame box `[lo, hi]`, clipped to the image.
    fn pixel_range(&self, lo: Vec2, hi: Vec2) -> Option<(usize, usize, usize, usize)> {
        let (ar, ac) = self.spec.anchor();
        let res = self.spec.resolution;
        let n = self.spec.size as F;
        let r0 = (ar as F - hi.x / res).floor() - 1.0;
        let r1 = (ar as F - lo.x / res).ceil() + 1.0;
        let c0 = (ac as F - hi.y / res).floor() - 1.0;
        let c1 = (ac as F - lo.y / res).ceil() + 1.0;
        if r1 < 0.0 || c1 < 0.0 || r0 >= n || c0 >= n {
            return None;
        }
        let clip = |v: F| v.max(0.0).min(n - 1.0) as usize;
        Some((clip(r0), clip(r1), clip(c0), clip(c1)))
    }

    fn fill(&mut self, lo: Vec2, hi: Vec2, value: u8, inside: impl Fn(Vec2) -> bool) {
        let Some((r0, r1, c0, c1)) = self.pixel_range(lo, hi) else { return };
        for row in r0..=r1 {
            for col in c0..=c1 {
                let i = row * self.spec.size + col;
                // repainting a pixel with its own value changes nothing
                if self.data[i] != value && inside(self.pixel_center(row, col)) {
                    self.data[i] = value;
                }
            }
        }
    }

    fn capsule(&mut self, a: Vec2, b: Vec2, radius: F, value: u8) {
        let lo = Vec2::new(a.x.min(b.x) - radius, a.y.min(b.y) - radius);
        let hi = Vec2::new(a.x.max(b.x) + radius, a.y.max(b.y) + radius);
        let r2 = radius * radius;
        self.fill(lo, hi, value, |p| (closest_on_segment(p, a, b).1 - p).norm_sq() <= r2);
    }

    fn disk(&mut self, c: Vec2, radius: F, value: u8) {
        self.capsule(c, c, radius, value);
    }

    /// Convex polygon given counter-clockwise.
    fn polygon(&mut self, pts: &[Vec2; 4], value: u8) {
        let lo = Vec2::new(pts.iter().map(|p| p.x).fold(F::INFINITY, F::min), pts.iter().map(|p| p.y).fold(F::INFINITY, F::min));
        let hi = Vec2::new(pts.iter().map(|p| p.x).fold(F::NEG_INFINITY, F::max), pts.iter().map(|p| p.y).fold(F::NEG_INFINITY, F::max));
        self.fill(lo, hi, value, |p| (0..4).all(|i| (pts[(i + 1) % 4] - pts[i]).cross(p - pts[i]) >= 0.0));
    }
}

/// Renders the scene around `ego`. Only actors in `visible` are drawn; the
/// ego itself is always drawn last.
pub fn render_bev(
    world: &World,
    ego: ActorId,
    spec: &BevSpec,
    visible: &BTreeSet<ActorId>,
    intentions: &BTreeMap<ActorId, Vec<Vec2>>,
) -> Option<BevImage> {
    let e = world.actor(ego)?;
    let to_ego = |p: Vec2| {
        let l = e.pose.to_local(p);
        Vec2::new(snap(l.x), snap(l.y))
    };
    let mut canvas = Canvas { spec, data: vec![palette::BACKGROUND; spec.size * spec.size] };
    // farthest image corner is within size * resolution of the ego
    let view_radius = spec.size as F * spec.resolution;

    for lane in world.map().lanes() {
        let r = lane.width / 2.0;
        for (a, b) in lane.centerline.segments() {
            if segment_distance(e.pose.position, a, b) > view_radius + r {
                continue;
            }
            canvas.capsule(to_ego(a), to_ego(b), r, palette::ROAD);
        }
    }
    if let Some(route) = world.route(ego) {
        for w in route.remaining() {
            canvas.disk(to_ego(*w), WAYPOINT_RADIUS, palette::ROUTE_WAYPOINT);
        }
    }
    for wps in intentions.values() {
        for w in wps {
            canvas.disk(to_ego(*w), WAYPOINT_RADIUS, palette::INTENTION_WAYPOINT);
        }
    }
    for (idx, sig) in world.map().signals().iter().enumerate() {
        let value = match (sig.kind, world.signal_phase(idx)) {
            (SignalKind::TrafficLight, SignalPhase::Green) => palette::SIGNAL_GREEN,
            _ => palette::SIGNAL_RED,
        };
        canvas.disk(to_ego(sig.position), SIGNAL_RADIUS, value);
    }
    for a in world.actors().values() {
        if a.id != ego && visible.contains(&a.id) {
            canvas.polygon(&a.footprint().corners().map(to_ego), palette::OTHER_VEHICLE);
        }
    }
    canvas.polygon(&e.footprint().corners().map(to_ego), palette::EGO);
    Some(BevImage { size: spec.size, data: canvas.data })
}
