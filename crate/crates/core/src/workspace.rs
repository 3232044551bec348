//! The bounded 2D world: polygonal obstacles, a circular goal and the
//! start anchor, plus the collision predicates shared by every module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Polygon, Rect, Vec2};

/// A clearance-relevant feature: an obstacle polygon or one of the four walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Obstacle(usize),
    Wall(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    #[serde(default)]
    pub name: String,
    pub bounds: Rect,
    pub obstacles: Vec<Polygon>,
    pub goal_center: Vec2,
    pub goal_radius: f64,
    /// Nominal group start; fixed environments alternate it with the goal.
    pub start: Vec2,
}

impl Workspace {
    pub fn empty(width: f64, height: f64, goal_center: Vec2, goal_radius: f64, start: Vec2) -> Self {
        Self {
            name: "empty".into(),
            bounds: Rect::from_size(width, height),
            obstacles: Vec::new(),
            goal_center,
            goal_radius,
            start,
        }
    }

    /// Same geometry with start and goal exchanged.
    pub fn swapped(&self) -> Self {
        let mut ws = self.clone();
        ws.start = self.goal_center;
        ws.goal_center = self.start;
        ws
    }

    /// Checks every structural invariant of a workspace.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidWorkspace(m));
        if !(self.bounds.width() > 0.0 && self.bounds.height() > 0.0) {
            return bad("bounds must have positive extent".into());
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal radius must be positive".into());
        }
        if !self.bounds.contains(self.goal_center) {
            return bad("goal center outside bounds".into());
        }
        for (i, poly) in self.obstacles.iter().enumerate() {
            if !poly.vertices.iter().all(|v| self.bounds.contains(*v)) {
                return bad(format!("obstacle {i} leaves the bounds"));
            }
            if !poly.is_simple() {
                return bad(format!("obstacle {i} is not a simple polygon"));
            }
            if poly.distance(self.goal_center) <= self.goal_radius {
                return bad(format!("obstacle {i} intersects the goal disk"));
            }
        }
        Ok(())
    }

    /// Inside the bounds and strictly outside every obstacle.
    pub fn is_free(&self, p: Vec2) -> bool {
        if !self.bounds.contains(p) {
            return false;
        }
        self.obstacles.iter().all(|o| {
            let bb = o.bbox();
            if !bb.contains(p) {
                return true;
            }
            !o.contains(p) && o.closest_boundary_point(p).0 > 0.0
        })
    }

    /// True iff the segment touches no obstacle. Grazing a vertex or edge
    /// counts as blocked.
    pub fn segment_clear(&self, p: Vec2, q: Vec2) -> bool {
        !self.obstacles.iter().any(|o| o.intersects_segment(p, q))
    }

    /// Distance to, and closest point on, every feature.
    pub fn feature_distances(&self, p: Vec2) -> Vec<(Feature, f64, Vec2)> {
        let mut out = Vec::with_capacity(self.obstacles.len() + 4);
        for (i, o) in self.obstacles.iter().enumerate() {
            let (d, c) = o.closest_boundary_point(p);
            let d = if o.contains(p) { 0.0 } else { d };
            out.push((Feature::Obstacle(i), d, c));
        }
        for (i, (d, c)) in self.bounds.wall_distances(p).into_iter().enumerate() {
            out.push((Feature::Wall(i), d, c));
        }
        out
    }

    /// Distance to the nearest obstacle or wall.
    pub fn clearance(&self, p: Vec2) -> f64 {
        self.feature_distances(p)
            .into_iter()
            .map(|(_, d, _)| d)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn in_goal(&self, p: Vec2) -> bool {
        p.distance(self.goal_center) <= self.goal_radius
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ws: Workspace = serde_json::from_str(text)?;
        ws.validate()?;
        Ok(ws)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
