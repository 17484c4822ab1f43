//! Live telemetry over HTTP: the simulation loop publishes snapshots into a
//! latest-value mailbox and an axum server reads from it.
//!
//! * `GET /status`: the latest snapshot without its frame, as JSON.
//! * `GET /frame`: the latest bird's-eye view as a palette-index PNG.
//! * `GET /stream`: the same frames as `multipart/x-mixed-replace`, at most 10 per second.
//! * `GET /`: a small monitoring page.
//!
//! Both data endpoints answer 503 until the first publish.

mod recorder;
mod server;

use std::sync::Arc;

use arc_swap::ArcSwapOption;
use chrono::{DateTime, Utc};
use serde::Serialize;

pub use recorder::{TelemetryRecorder, EPISODE_WINDOW, REWARD_WINDOW};
pub use server::{router, VizServer, STREAM_INTERVAL};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelemetrySnapshot {
    pub episode: u64,
    pub tick: u64,
    pub reward: f64,
    pub reward_mean_100: f64,
    /// Rolling episode metrics over the last [`EPISODE_WINDOW`] episodes.
    pub metrics: serde_json::Value,
    #[serde(skip)]
    pub frame: Option<Arc<Vec<u8>>>,
    pub ts: DateTime<Utc>,
}

/// Latest-value mailbox. Publishing is a single atomic pointer swap, so the
/// producer never waits on readers.
#[derive(Debug, Default)]
pub struct TelemetryHub {
    latest: ArcSwapOption<TelemetrySnapshot>,
}

impl TelemetryHub {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn publish(&self, snapshot: TelemetrySnapshot) {
        self.latest.store(Some(Arc::new(snapshot)));
    }

    pub fn latest(&self) -> Option<Arc<TelemetrySnapshot>> {
        self.latest.load_full()
    }
}
