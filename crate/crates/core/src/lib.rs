//! A deterministic 2D driving simulator built around a lane graph.
//!
//! The crate is layered bottom-up:
//!
//! * [`geometry`]: scalar-generic planar primitives (vectors, oriented boxes, polylines).
//! * [`map`]: lane-graph road maps loaded from JSON.
//! * [`world`] and [`autopilot`]: actors, kinematic bicycle dynamics, collisions,
//!   rule-based background traffic.
//! * [`route`]: random-roam, fixed-path and A* fixed-ending route planners.
//! * [`observer`]: visibility filtering, intention sharing and data handlers
//!   (bird's-eye view raster, 2D lidar, state vector).
//! * [`task`]: task registry, reward and termination rules.
//! * [`env`]: the reset/step episode protocol, metrics, baseline agents,
//!   rollout recording and the newline-delimited JSON wire server.

pub mod autopilot;
pub mod env;
pub mod geometry;
pub mod map;
pub mod observer;
pub mod route;
pub mod task;
pub mod world;

/// Scalar used by the simulation.
pub type F = f64;
pub type Vec2 = geometry::Vec2<F>;
pub type Pose = geometry::Pose<F>;
pub type Obb = geometry::Obb<F>;
pub type Polyline = geometry::Polyline<F>;

pub use env::{Action, DrivingEnv, EnvError, EpisodeMetrics, StepResult};
pub use map::{load_map, RoadMap};
pub use observer::{ObservationBundle, Observer, Payload};
pub use route::{PlannerKind, Route};
pub use task::{make_task, TaskConfig, TerminationCause};
pub use world::{ActorId, VehicleState, World};
