//! Observability settings: which actors the ego gets to see.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_3;

use serde::{Deserialize, Serialize};

use crate::geometry::normalize_angle;
use crate::route::Route;
use crate::world::{ActorId, VehicleState, World, WorldError};
use crate::{Vec2, F};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum VisibilityMode {
    #[serde(rename = "FOV", alias = "fov")]
    Fov,
    #[serde(rename = "SFOV", alias = "sfov")]
    Sfov,
    #[default]
    #[serde(rename = "FULL", alias = "full")]
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisibilityConfig {
    pub mode: VisibilityMode,
    /// Half the opening angle of the view cone, in radians.
    pub cone_half_angle: F,
    pub range: F,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        Self { mode: VisibilityMode::Full, cone_half_angle: FRAC_PI_3, range: 30.0 }
    }
}

impl VisibilityConfig {
    pub fn with_mode(mode: VisibilityMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn is_valid(&self) -> bool {
        self.cone_half_angle > 0.0 && self.cone_half_angle <= std::f64::consts::PI && self.range > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntentionScope {
    #[default]
    VisibleOnly,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntentionConfig {
    pub enabled: bool,
    pub shared_waypoints: usize,
    pub scope: IntentionScope,
}

impl Default for IntentionConfig {
    fn default() -> Self {
        Self { enabled: false, shared_waypoints: 10, scope: IntentionScope::VisibleOnly }
    }
}

/// Whether `target` sits inside the view cone of `viewer`.
pub fn in_fov(viewer: &VehicleState, target: Vec2, cfg: &VisibilityConfig) -> bool {
    let rel = target - viewer.pose.position;
    let dist = rel.norm();
    if dist > cfg.range {
        return false;
    }
    if dist == 0.0 {
        return true;
    }
    normalize_angle(rel.angle() - viewer.pose.heading).abs() <= cfg.cone_half_angle
}

/// Other actors inside `viewer`'s cone.
pub fn fov_of(world: &World, viewer: &VehicleState, cfg: &VisibilityConfig) -> BTreeSet<ActorId> {
    world
        .actors()
        .values()
        .filter(|a| a.id != viewer.id && in_fov(viewer, a.pose.position, cfg))
        .map(|a| a.id)
        .collect()
}

/// Actors the ego observes under `cfg`. The ego is always included.
pub fn visible_set(world: &World, ego: ActorId, cfg: &VisibilityConfig) -> Result<BTreeSet<ActorId>, WorldError> {
    let e = world.actor(ego).ok_or(WorldError::UnknownActor(ego))?;
    let mut out: BTreeSet<ActorId> = match cfg.mode {
        VisibilityMode::Full => return Ok(world.actors().keys().copied().collect()),
        VisibilityMode::Fov => fov_of(world, e, cfg),
        VisibilityMode::Sfov => {
            let direct = fov_of(world, e, cfg);
            let mut all = direct.clone();
            for id in &direct {
                all.extend(fov_of(world, &world.actors()[id], cfg));
            }
            all
        }
    };
    out.insert(ego);
    Ok(out)
}

/// The next `K` route waypoints of every actor in scope other than the ego.
pub fn collect_intentions(
    world: &World,
    ego: ActorId,
    cfg: &IntentionConfig,
    routes: &BTreeMap<ActorId, Route>,
    visible: &BTreeSet<ActorId>,
) -> BTreeMap<ActorId, Vec<Vec2>> {
    if !cfg.enabled {
        return BTreeMap::new();
    }
    routes
        .iter()
        .filter(|(id, _)| **id != ego && world.actor(**id).is_some())
        .filter(|(id, _)| cfg.scope == IntentionScope::All || visible.contains(id))
        .map(|(id, r)| (*id, r.remaining().iter().take(cfg.shared_waypoints).copied().collect()))
        .collect()
}
