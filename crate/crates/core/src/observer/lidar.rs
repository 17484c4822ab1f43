//! Planar range scan against vehicle footprints and the road edge.

use serde::{Deserialize, Serialize};

use crate::geometry::{ray_capsule_interval, segment_distance};
use crate::map::RoadMap;
use crate::world::{ActorId, World};
use crate::{Vec2, F};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarSpec {
    pub beams: usize,
    pub max_range: F,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self { beams: 72, max_range: 30.0 }
    }
}

impl LidarSpec {
    pub fn is_valid(&self) -> bool {
        self.beams >= 1 && self.max_range > 0.0
    }

    /// World-frame angle of beam `i` for a sensor facing `heading`.
    pub fn beam_angle(&self, heading: F, i: usize) -> F {
        heading + std::f64::consts::TAU * i as F / self.beams as F
    }
}

const MERGE_TOLERANCE: F = 1e-9;

/// One lane-surface piece with a bounding circle for cheap rejection.
struct Capsule {
    a: Vec2,
    b: Vec2,
    radius: F,
    mid: Vec2,
    bound: F,
}

/// Lane-surface capsules that come within `reach` of `origin`.
fn nearby_capsules(map: &RoadMap, origin: Vec2, reach: F) -> Vec<Capsule> {
    let mut out = Vec::new();
    for lane in map.lanes() {
        let radius = lane.width / 2.0;
        for (a, b) in lane.centerline.segments() {
            if segment_distance(origin, a, b) <= reach + radius {
                let bound = a.distance(b) / 2.0 + radius;
                out.push(Capsule { a, b, radius, mid: a.lerp(b, 0.5), bound });
            }
        }
    }
    out
}

fn exit_among(capsules: &[Capsule], origin: Vec2, dir: Vec2, max_range: F) -> Option<F> {
    let mut intervals: Vec<(F, F)> = capsules
        .iter()
        .filter(|c| {
            let rel = c.mid - origin;
            rel.dot(dir) >= -c.bound && rel.cross(dir).abs() <= c.bound
        })
        .filter_map(|c| ray_capsule_interval(origin, dir, c.a, c.b, c.radius))
        .filter(|iv| iv.0 <= max_range)
        .collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    if intervals.first().map_or(true, |iv| iv.0 > 0.0) {
        return None;
    }
    let mut reach: F = 0.0;
    for (t0, t1) in intervals {
        // lanes sharing an edge leave rounding-sized gaps between intervals
        if t0 > reach + MERGE_TOLERANCE {
            break;
        }
        reach = reach.max(t1);
    }
    Some(reach)
}

/// Distance along the ray until it leaves the drivable surface, if the
/// origin is on it. Lanes overlap at joints, so the capsule intervals are
/// merged before taking the first exit.
pub fn road_exit(map: &RoadMap, origin: Vec2, dir: Vec2, max_range: F) -> Option<F> {
    exit_among(&nearby_capsules(map, origin, max_range), origin, dir, max_range)
}

/// One range per beam, capped at `max_range`. Every actor except the ego is
/// a target regardless of observability.
pub fn lidar_scan(world: &World, ego: ActorId, spec: &LidarSpec) -> Option<Vec<F>> {
    let e = world.actor(ego)?;
    let origin = e.pose.position;
    let capsules = if world.map().on_road(origin) {
        nearby_capsules(world.map(), origin, spec.max_range)
    } else {
        Vec::new()
    };
    let targets: Vec<_> = world
        .actors()
        .values()
        .filter(|a| a.id != ego)
        .map(|a| a.footprint())
        .filter(|b| b.center.distance(origin) - b.bounding_radius() <= spec.max_range)
        .collect();
    let ranges = (0..spec.beams)
        .map(|i| {
            let dir = Vec2::from_angle(spec.beam_angle(e.pose.heading, i));
            let mut best = spec.max_range;
            for t in &targets {
                if let Some(d) = t.ray_hit(origin, dir) {
                    best = best.min(d);
                }
            }
            if !capsules.is_empty() {
                if let Some(d) = exit_among(&capsules, origin, dir, best) {
                    best = best.min(d);
                }
            }
            best
        })
        .collect();
    Some(ranges)
}
