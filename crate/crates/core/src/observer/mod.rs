//! The observer: a registry of data handlers that turn a world snapshot into
//! a multi-modal observation bundle.

mod bev;
mod lidar;
mod payload;
mod visibility;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::geometry::normalize_angle;
use crate::world::{ActorId, World, WorldError};
use crate::{Vec2, F};

pub use bev::{palette, render_bev, BevImage, BevSpec};
pub use lidar::{lidar_scan, road_exit, LidarSpec};
pub use payload::{decode_png, encode_png, ObservationBundle, Payload, PayloadError};
pub use visibility::{
    collect_intentions, fov_of, in_fov, visible_set, IntentionConfig, IntentionScope, VisibilityConfig, VisibilityMode,
};

/// Rows in the state-vector handler's fixed-shape output, ego included.
pub const STATE_ACTOR_CAP: usize = 16;
pub const STATE_ROW_LEN: usize = 4;

/// Names of the handlers [`Observer::with_modalities`] knows how to build.
pub const BUILTIN_HANDLERS: &[&str] = &["bev", "lidar", "state_vector", "intentions"];

#[derive(Debug, Error, PartialEq)]
pub enum ObserverError {
    #[error("handler \"{0}\" is already registered")]
    DuplicateHandler(String),
    #[error("unknown modality \"{name}\" (built-in: {})", BUILTIN_HANDLERS.join(", "))]
    UnknownModality { name: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("handler \"{name}\" failed: {message}")]
    Handler { name: String, message: String },
}

/// What every handler sees: an immutable world plus the per-collect
/// visibility and intention results.
pub struct Snapshot<'a> {
    pub world: &'a World,
    pub ego: ActorId,
    pub visible: &'a BTreeSet<ActorId>,
    pub intentions: &'a BTreeMap<ActorId, Vec<Vec2>>,
}

pub type Handler = Box<dyn Fn(&Snapshot<'_>) -> Result<Payload, String> + Send + Sync>;

pub struct Observer {
    handlers: Vec<(String, Handler)>,
}

impl std::fmt::Debug for Observer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.handlers.iter().map(|(n, _)| n)).finish()
    }
}

impl Default for Observer {
    fn default() -> Self {
        Self::new()
    }
}

impl Observer {
    pub fn new() -> Self {
        Self { handlers: Vec::new() }
    }

    /// Observer with the named built-in handlers, in the given order.
    pub fn with_modalities(
        names: &[String],
        bev: BevSpec,
        lidar: LidarSpec,
        intention_k: usize,
    ) -> Result<Self, ObserverError> {
        let mut obs = Self::new();
        for name in names {
            let h: Handler = match name.as_str() {
                "bev" => Box::new(move |s| {
                    let img = render_bev(s.world, s.ego, &bev, s.visible, s.intentions).ok_or("ego missing")?;
                    Ok(Payload::Image { height: img.size, width: img.size, data: img.data })
                }),
                "lidar" => Box::new(move |s| Ok(Payload::Vector(lidar_scan(s.world, s.ego, &lidar).ok_or("ego missing")?))),
                "state_vector" => Box::new(|s| Ok(Payload::Vector(state_vector(s).ok_or("ego missing")?))),
                "intentions" => Box::new(move |s| Ok(Payload::Vector(intention_vector(s, intention_k).ok_or("ego missing")?))),
                _ => return Err(ObserverError::UnknownModality { name: name.clone() }),
            };
            obs.register_handler(name, h)?;
        }
        Ok(obs)
    }

    pub fn register_handler(&mut self, name: &str, handler: Handler) -> Result<&mut Self, ObserverError> {
        if self.handlers.iter().any(|(n, _)| n == name) {
            return Err(ObserverError::DuplicateHandler(name.to_string()));
        }
        self.handlers.push((name.to_string(), handler));
        Ok(self)
    }

    pub fn handler_names(&self) -> impl Iterator<Item = &str> {
        self.handlers.iter().map(|(n, _)| n.as_str())
    }

    /// Runs every handler once, in registration order.
    pub fn collect(
        &self,
        world: &World,
        ego: ActorId,
        vcfg: &VisibilityConfig,
        icfg: &IntentionConfig,
    ) -> Result<ObservationBundle, ObserverError> {
        let visible = visible_set(world, ego, vcfg)?;
        let intentions = collect_intentions(world, ego, icfg, world.routes(), &visible);
        let snap = Snapshot { world, ego, visible: &visible, intentions: &intentions };
        let mut bundle = ObservationBundle::default();
        for (name, h) in &self.handlers {
            let payload = h(&snap).map_err(|message| ObserverError::Handler { name: name.clone(), message })?;
            bundle.insert(name.clone(), payload);
        }
        Ok(bundle)
    }
}

/// Visible actors other than the ego, nearest first (ties by id).
fn others_by_distance(s: &Snapshot<'_>) -> Option<Vec<ActorId>> {
    let e = s.world.actor(s.ego)?;
    let mut others: Vec<(F, ActorId)> = s
        .visible
        .iter()
        .filter(|id| **id != s.ego)
        .filter_map(|id| s.world.actor(*id).map(|a| (a.pose.position.distance(e.pose.position), *id)))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Some(others.into_iter().map(|(_, id)| id).collect())
}

/// `[x, y, heading, speed]` per visible actor in the ego frame, ego first,
/// zero-padded to [`STATE_ACTOR_CAP`] rows.
pub fn state_vector(s: &Snapshot<'_>) -> Option<Vec<F>> {
    let e = s.world.actor(s.ego)?;
    let mut out = vec![0.0; STATE_ACTOR_CAP * STATE_ROW_LEN];
    out[3] = e.speed;
    for (row, id) in others_by_distance(s)?.into_iter().take(STATE_ACTOR_CAP - 1).enumerate() {
        let a = &s.world.actors()[&id];
        let rel = e.pose.to_local(a.pose.position);
        let base = (row + 1) * STATE_ROW_LEN;
        out[base..base + STATE_ROW_LEN].copy_from_slice(&[
            rel.x,
            rel.y,
            normalize_angle(a.pose.heading - e.pose.heading),
            a.speed,
        ]);
    }
    Some(out)
}

/// Shared waypoints of up to `STATE_ACTOR_CAP - 1` actors (nearest first),
/// `k` ego-frame points each, zero-padded.
pub fn intention_vector(s: &Snapshot<'_>, k: usize) -> Option<Vec<F>> {
    let e = s.world.actor(s.ego)?;
    let mut ids: Vec<(F, ActorId)> = s
        .intentions
        .keys()
        .filter_map(|id| s.world.actor(*id).map(|a| (a.pose.position.distance(e.pose.position), *id)))
        .collect();
    ids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let row_len = 2 * k;
    let mut out = vec![0.0; (STATE_ACTOR_CAP - 1) * row_len];
    for (row, (_, id)) in ids.into_iter().take(STATE_ACTOR_CAP - 1).enumerate() {
        for (j, w) in s.intentions[&id].iter().take(k).enumerate() {
            let l = e.pose.to_local(*w);
            out[row * row_len + 2 * j] = l.x;
            out[row * row_len + 2 * j + 1] = l.y;
        }
    }
    Some(out)
}
