//! Deterministic shepherding simulator with a Boids flock, roadmap-based
//! geodesic guidance, an egocentric raster observation, the moving-reward
//! engine, rule-based shepherds and a desk-scale double-DQN learner.

pub mod config;
pub mod dqn;
pub mod env;
pub mod envgen;
pub mod error;
pub mod eval;
pub mod flock;
pub mod geometry;
pub mod nn;
pub mod policy;
pub mod protocol;
pub mod render;
pub mod replay;
pub mod reward;
pub mod rng;
pub mod roadmap;
pub mod workspace;

pub use error::{Error, Result};
pub use geometry::{Polygon, Rect, Vec2};
pub use workspace::Workspace;
