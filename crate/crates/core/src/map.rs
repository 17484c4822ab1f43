//! Lane-graph road maps: JSON schema, validation, and spatial queries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{segment_distance, Polyline};
use crate::{Vec2, F};

/// Index of a lane inside its [`RoadMap`]. Lanes are stored sorted by id, so
/// index order equals id order.
pub type LaneIdx = usize;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map schema violation: {0}")]
    Schema(String),
    #[error("lane {lane}: reference to unknown lane \"{target}\"")]
    DanglingReference { lane: String, target: String },
    #[error("lane {lane}: degenerate centerline at segment {segment}")]
    DegeneratePolyline { lane: String, segment: usize },
    #[error("lane {lane}: width must be positive and finite")]
    BadWidth { lane: String },
    #[error("duplicate lane id {0}")]
    DuplicateLane(String),
    #[error("signal {signal}: {reason}")]
    BadSignal { signal: String, reason: String },
    #[error("unknown built-in map {0}")]
    UnknownBuiltin(String),
    #[error("map has no lanes")]
    Empty,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneDoc {
    id: String,
    width: F,
    centerline: Vec<[F; 2]>,
    #[serde(default)]
    successors: Vec<String>,
    #[serde(default)]
    left: Option<String>,
    #[serde(default)]
    right: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalDoc {
    id: String,
    kind: SignalKind,
    lane: String,
    s: F,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase: Option<[F; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    lanes: Vec<LaneDoc>,
    #[serde(default)]
    signals: Vec<SignalDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    TrafficLight,
    StopSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPhase {
    Green,
    Yellow,
    Red,
}

/// Durations of the green, yellow and red phases of a traffic light.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSchedule {
    pub green: F,
    pub yellow: F,
    pub red: F,
}

impl PhaseSchedule {
    pub fn cycle(&self) -> F {
        self.green + self.yellow + self.red
    }

    /// Phase at absolute time `t` of a schedule that starts green at t = 0.
    pub fn phase_at(&self, t: F) -> SignalPhase {
        let m = t.rem_euclid(self.cycle());
        if m < self.green {
            SignalPhase::Green
        } else if m < self.green + self.yellow {
            SignalPhase::Yellow
        } else {
            SignalPhase::Red
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub width: F,
    pub centerline: Polyline<F>,
    pub successors: Vec<LaneIdx>,
    pub left: Option<LaneIdx>,
    pub right: Option<LaneIdx>,
}

impl Lane {
    pub fn length(&self) -> F {
        self.centerline.length()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub id: String,
    pub kind: SignalKind,
    pub lane: LaneIdx,
    pub s: F,
    pub schedule: Option<PhaseSchedule>,
    /// World position of the stop line point on the lane centerline.
    pub position: Vec2,
}

impl Signal {
    /// Stop signs read as permanently red.
    pub fn phase_at(&self, t: F) -> SignalPhase {
        match (self.kind, self.schedule) {
            (SignalKind::TrafficLight, Some(s)) => s.phase_at(t),
            (SignalKind::TrafficLight, None) => SignalPhase::Green,
            (SignalKind::StopSign, _) => SignalPhase::Red,
        }
    }
}

/// Result of [`RoadMap::lane_query`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneQuery {
    pub lane: LaneIdx,
    pub s: F,
    /// Positive to the left of the lane direction.
    pub lateral: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadMap {
    lanes: Vec<Lane>,
    signals: Vec<Signal>,
    by_id: BTreeMap<String, LaneIdx>,
}

/// Names of the map assets shipped with the crate.
pub const BUILTIN_MAPS: &[&str] =
    &["four_lane", "intersection", "intersection_lights", "intersection_stop", "lane_merge", "overtake", "roundabout", "town"];

/// Source of a shipped map, by name with or without the `.map.json` suffix.
pub fn builtin_map_source(name: &str) -> Option<&'static str> {
    Some(match name.strip_suffix(".map.json").unwrap_or(name) {
        "four_lane" => include_str!("../maps/four_lane.map.json"),
        "intersection" => include_str!("../maps/intersection.map.json"),
        "intersection_lights" => include_str!("../maps/intersection_lights.map.json"),
        "intersection_stop" => include_str!("../maps/intersection_stop.map.json"),
        "lane_merge" => include_str!("../maps/lane_merge.map.json"),
        "overtake" => include_str!("../maps/overtake.map.json"),
        "roundabout" => include_str!("../maps/roundabout.map.json"),
        "town" => include_str!("../maps/town.map.json"),
        _ => return None,
    })
}

pub fn load_builtin(name: &str) -> Result<RoadMap, MapError> {
    let src = builtin_map_source(name).ok_or_else(|| MapError::UnknownBuiltin(name.to_string()))?;
    load_map(src)
}

/// Parses and validates a map document.
pub fn load_map(document: &str) -> Result<RoadMap, MapError> {
    let doc: MapDoc = serde_json::from_str(document).map_err(|e| MapError::Schema(e.to_string()))?;
    RoadMap::from_doc(doc)
}

impl RoadMap {
    fn from_doc(mut doc: MapDoc) -> Result<Self, MapError> {
        if doc.lanes.is_empty() {
            return Err(MapError::Empty);
        }
        doc.lanes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = BTreeMap::new();
        for (i, l) in doc.lanes.iter().enumerate() {
            if by_id.insert(l.id.clone(), i).is_some() {
                return Err(MapError::DuplicateLane(l.id.clone()));
            }
        }
        let resolve = |lane: &str, target: &str| {
            by_id.get(target).copied().ok_or_else(|| MapError::DanglingReference {
                lane: lane.to_string(),
                target: target.to_string(),
            })
        };
        let mut lanes = Vec::with_capacity(doc.lanes.len());
        for l in &doc.lanes {
            if !(l.width > 0.0 && l.width.is_finite()) {
                return Err(MapError::BadWidth { lane: l.id.clone() });
            }
            let pts = l.centerline.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            let centerline = Polyline::new(pts)
                .map_err(|segment| MapError::DegeneratePolyline { lane: l.id.clone(), segment })?;
            let successors = l.successors.iter().map(|s| resolve(&l.id, s)).collect::<Result<Vec<_>, _>>()?;
            let left = l.left.as_deref().map(|s| resolve(&l.id, s)).transpose()?;
            let right = l.right.as_deref().map(|s| resolve(&l.id, s)).transpose()?;
            lanes.push(Lane { id: l.id.clone(), width: l.width, centerline, successors, left, right });
        }
        let mut signals = Vec::with_capacity(doc.signals.len());
        for s in &doc.signals {
            let bad = |reason: &str| MapError::BadSignal { signal: s.id.clone(), reason: reason.to_string() };
            let lane = *by_id.get(&s.lane).ok_or_else(|| bad(&format!("unknown lane \"{}\"", s.lane)))?;
            let len = lanes[lane].length();
            if !(s.s >= 0.0 && s.s <= len) {
                return Err(bad("position outside lane"));
            }
            let schedule = match (s.kind, s.phase) {
                (SignalKind::TrafficLight, Some([g, y, r])) => {
                    if g < 0.0 || y < 0.0 || r < 0.0 || g + y + r <= 0.0 {
                        return Err(bad("phase durations must be non-negative with a positive cycle"));
                    }
                    Some(PhaseSchedule { green: g, yellow: y, red: r })
                }
                (SignalKind::TrafficLight, None) => return Err(bad("traffic light without phase schedule")),
                (SignalKind::StopSign, _) => None,
            };
            let position = lanes[lane].centerline.sample(s.s).0;
            signals.push(Signal { id: s.id.clone(), kind: s.kind, lane, s: s.s, schedule, position });
        }
        signals.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { lanes, signals, by_id })
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, idx: LaneIdx) -> &Lane {
        &self.lanes[idx]
    }

    pub fn signals(&self) -> &[Signal] {
        &self.signals
    }

    pub fn lane_index(&self, id: &str) -> Option<LaneIdx> {
        self.by_id.get(id).copied()
    }

    /// Nearest lane by distance to its centerline. Ties go to the smaller lane id.
    pub fn lane_query(&self, p: Vec2) -> Result<LaneQuery, MapError> {
        let mut best: Option<(F, LaneQuery)> = None;
        for (idx, lane) in self.lanes.iter().enumerate() {
            let proj = lane.centerline.project(p);
            if best.map_or(true, |(d, _)| proj.distance < d) {
                best = Some((proj.distance, LaneQuery { lane: idx, s: proj.s, lateral: proj.lateral }));
            }
        }
        best.map(|(_, q)| q).ok_or(MapError::Empty)
    }

    /// Like [`lane_query`](Self::lane_query) but, among lanes whose surface
    /// contains `p`, prefers the one best aligned with `heading`.
    pub fn lane_query_aligned(&self, p: Vec2, heading: F) -> Result<LaneQuery, MapError> {
        let mut best: Option<(F, LaneQuery)> = None;
        for (idx, lane) in self.lanes.iter().enumerate() {
            let proj = lane.centerline.project(p);
            if proj.distance > lane.width / 2.0 {
                continue;
            }
            let tangent = lane.centerline.sample(proj.s).1;
            let misalign = crate::geometry::normalize_angle(tangent - heading).abs();
            let score = misalign + 0.05 * proj.distance;
            if best.map_or(true, |(b, _)| score < b) {
                best = Some((score, LaneQuery { lane: idx, s: proj.s, lateral: proj.lateral }));
            }
        }
        match best {
            Some((_, q)) => Ok(q),
            None => self.lane_query(p),
        }
    }

    /// Whether `p` lies on the drivable surface (within half a lane width of
    /// some centerline).
    pub fn on_road(&self, p: Vec2) -> bool {
        self.lanes
            .iter()
            .any(|l| l.centerline.segments().any(|(a, b)| segment_distance(p, a, b) <= l.width / 2.0))
    }

    /// Weak connectivity over successor and adjacency links.
    pub fn is_connected(&self) -> bool {
        let n = self.lanes.len();
        let mut adj = vec![Vec::new(); n];
        for (i, l) in self.lanes.iter().enumerate() {
            for &j in l.successors.iter().chain(l.left.iter()).chain(l.right.iter()) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let m = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[10,0]],"successors":[],"left":null,"right":null}],"signals":[]}"#).unwrap();
        assert_eq!(m.lanes().len(), 1);
        assert_eq!(m.signals().len(), 0);
    }

    #[test]
    fn dangling_successor_is_named() {
        let err = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[10,0]],"successors":["L9"],"left":null,"right":null}],"signals":[]}"#).unwrap_err();
        assert_eq!(err, MapError::DanglingReference { lane: "a".into(), target: "L9".into() });
        assert!(err.to_string().contains("L9"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[10,0]],"speed":3}]}"#).unwrap_err();
        assert!(matches!(err, MapError::Schema(_)));
        let err = load_map(r#"{"lanes":[],"extra":1}"#).unwrap_err();
        assert!(matches!(err, MapError::Schema(_)));
    }

    #[test]
    fn degenerate_polyline_reports_lane() {
        let err = load_map(r#"{"lanes":[{"id":"z","width":3.5,"centerline":[[0,0],[0,0]]}]}"#).unwrap_err();
        assert_eq!(err, MapError::DegeneratePolyline { lane: "z".into(), segment: 0 });
        let err = load_map(r#"{"lanes":[{"id":"z","width":3.5,"centerline":[[0,0]]}]}"#).unwrap_err();
        assert!(matches!(err, MapError::DegeneratePolyline { .. }));
    }

    #[test]
    fn traffic_light_needs_schedule() {
        let err = load_map(r#"{"lanes":[{"id":"a","width":3.5,"centerline":[[0,0],[10,0]]}],
            "signals":[{"id":"t","kind":"traffic_light","lane":"a","s":5}]}"#)
        .unwrap_err();
        assert!(matches!(err, MapError::BadSignal { .. }));
    }

    #[test]
    fn phase_schedule_closed_form() {
        let s = PhaseSchedule { green: 10.0, yellow: 3.0, red: 12.0 };
        assert_eq!(s.phase_at(0.0), SignalPhase::Green);
        assert_eq!(s.phase_at(9.99), SignalPhase::Green);
        assert_eq!(s.phase_at(10.0), SignalPhase::Yellow);
        assert_eq!(s.phase_at(13.0), SignalPhase::Red);
        assert_eq!(s.phase_at(25.0), SignalPhase::Green);
    }

    #[test]
    fn every_builtin_loads_and_is_connected() {
        for name in BUILTIN_MAPS {
            let m = load_builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(m.is_connected(), "{name} not connected");
        }
    }

    #[test]
    fn lane_query_left_positive() {
        let m = load_builtin("overtake.map.json").unwrap();
        let q = m.lane_query(Vec2::new(10.0, 1.0)).unwrap();
        assert_eq!(m.lane(q.lane).id, "A");
        assert!((q.lateral - 1.0).abs() < 1e-12);
        assert!((q.s - 60.0).abs() < 1e-12);
        let q = m.lane_query(Vec2::new(10.0, 3.5)).unwrap();
        assert_eq!(m.lane(q.lane).id, "B");
        assert_eq!(q.lateral, 0.0);
    }
}
