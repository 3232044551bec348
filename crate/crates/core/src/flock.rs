//! Boids sheep model: neighborhood queries, per-agent force breakdown and
//! semi-implicit Euler integration with slide-along-wall collision handling.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{segment_hit_param, Vec2};
use crate::workspace::Workspace;

/// Distance (px) or speed difference (px/step) below which cohesion and
/// alignment fall off linearly instead of staying unit length.
const SOFT_NORM_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
}

impl AgentState {
    pub fn at(position: Vec2) -> Self {
        Self {
            position,
            ..Default::default()
        }
    }
}

/// Force weights and perception limits of one species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorParams {
    pub w_separation: f64,
    pub w_cohesion: f64,
    pub w_alignment: f64,
    pub w_fear: f64,
    pub w_obstacle: f64,
    pub w_damping: f64,
    /// Perception radius in pixels.
    pub view_range: f64,
    /// Full angular width of the perception cone, radians.
    pub field_of_view: f64,
    /// Pixels per step.
    pub max_speed: f64,
    /// Divides the weighted force sum; sets how quickly agents respond.
    pub mass: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            w_separation: 1.0,
            w_cohesion: 5.0,
            w_alignment: 3.0,
            w_fear: 15.0,
            w_obstacle: 10.0,
            w_damping: 2.0,
            view_range: 25.0,
            field_of_view: TAU,
            max_speed: 2.0,
            mass: 20.0,
        }
    }
}

impl BehaviorParams {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.w_separation,
            self.w_cohesion,
            self.w_alignment,
            self.w_fear,
            self.w_obstacle,
            self.w_damping,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("behavior weights must be >= 0".into()));
        }
        if !(self.view_range > 0.0) {
            return Err(Error::InvalidArgument("view_range must be > 0".into()));
        }
        if !(self.field_of_view > 0.0 && self.field_of_view <= TAU) {
            return Err(Error::InvalidArgument("field_of_view must lie in (0, 2pi]".into()));
        }
        if !(self.max_speed > 0.0 && self.mass > 0.0) {
            return Err(Error::InvalidArgument("max_speed and mass must be > 0".into()));
        }
        Ok(())
    }

    /// Copy with every weight multiplied by `k`.
    pub fn scaled_weights(&self, k: f64) -> Self {
        Self {
            w_separation: self.w_separation * k,
            w_cohesion: self.w_cohesion * k,
            w_alignment: self.w_alignment * k,
            w_fear: self.w_fear * k,
            w_obstacle: self.w_obstacle * k,
            w_damping: self.w_damping * k,
            ..*self
        }
    }
}

/// Unweighted steering directions; damping already carries its weight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceBreakdown {
    pub separation: Vec2,
    pub cohesion: Vec2,
    pub alignment: Vec2,
    pub fear: Vec2,
    pub obstacle_avoidance: Vec2,
    pub damping: Vec2,
}

impl ForceBreakdown {
    /// Weighted linear combination divided by the species mass.
    pub fn acceleration(&self, params: &BehaviorParams) -> Vec2 {
        let sum = self.separation * params.w_separation
            + self.cohesion * params.w_cohesion
            + self.alignment * params.w_alignment
            + self.fear * params.w_fear
            + self.obstacle_avoidance * params.w_obstacle
            + self.damping;
        sum / params.mass
    }

    pub fn is_finite(&self) -> bool {
        [
            self.separation,
            self.cohesion,
            self.alignment,
            self.fear,
            self.obstacle_avoidance,
            self.damping,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Whether an observer with velocity `heading` perceives a point at `offset`.
fn perceives(heading: Vec2, offset: Vec2, params: &BehaviorParams) -> bool {
    let d = offset.norm();
    if d > params.view_range {
        return false;
    }
    if params.field_of_view >= TAU || heading.norm_sq() == 0.0 || d == 0.0 {
        return true;
    }
    let cos_bearing = heading.dot(offset) / (heading.norm() * d);
    cos_bearing >= (params.field_of_view * 0.5).cos()
}

/// Indices of the agents the `agent_index`-th agent can see.
pub fn neighbors_of(agent_index: usize, flock: &[AgentState], params: &BehaviorParams) -> Vec<usize> {
    let me = &flock[agent_index];
    flock
        .iter()
        .enumerate()
        .filter(|(j, other)| *j != agent_index && perceives(me.velocity, other.position - me.position, params))
        .map(|(j, _)| j)
        .collect()
}

pub fn compute_forces(
    agent_index: usize,
    flock: &[AgentState],
    shepherd: &AgentState,
    workspace: &Workspace,
    params: &BehaviorParams,
) -> ForceBreakdown {
    let me = flock[agent_index];
    let neighbors = neighbors_of(agent_index, flock, params);
    let mut f = ForceBreakdown {
        damping: me.velocity * -params.w_damping,
        ..Default::default()
    };

    if !neighbors.is_empty() {
        let n = neighbors.len() as f64;
        let mut centroid = Vec2::ZERO;
        let mut mean_velocity = Vec2::ZERO;
        for &j in &neighbors {
            let other = flock[j];
            let away = me.position - other.position;
            let d2 = away.norm_sq();
            if d2 > 0.0 {
                // 1/d falloff, expressed in units of the view range.
                f.separation += away * (params.view_range / d2);
            }
            centroid += other.position;
            mean_velocity += other.velocity;
        }
        centroid = centroid / n;
        mean_velocity = mean_velocity / n;
        f.cohesion = (centroid - me.position).soft_normalized(SOFT_NORM_FLOOR);
        f.alignment = (mean_velocity - me.velocity).soft_normalized(SOFT_NORM_FLOOR);
    }

    if perceives(me.velocity, shepherd.position - me.position, params) {
        f.fear = (me.position - shepherd.position).normalized();
    }

    for (_, d, closest) in workspace.feature_distances(me.position) {
        if d < params.view_range {
            let strength = 1.0 - d / params.view_range;
            f.obstacle_avoidance += (me.position - closest).normalized() * strength;
        }
    }
    f
}

/// Moves `from` by `velocity * dt`, keeping the result inside the bounds and
/// out of every obstacle. A blocked move slides along the first edge hit;
/// if that is blocked too the agent stops.
pub fn resolve_motion(workspace: &Workspace, from: Vec2, velocity: Vec2, dt: f64) -> (Vec2, Vec2) {
    let clamp = |p: Vec2| {
        let b = &workspace.bounds;
        Vec2::new(p.x.clamp(b.min.x, b.max.x), p.y.clamp(b.min.y, b.max.y))
    };
    let valid = |to: Vec2| workspace.is_free(to) && workspace.segment_clear(from, to);

    let target = clamp(from + velocity * dt);
    if valid(target) {
        return (target, (target - from) / dt);
    }

    let mut first_hit: Option<(f64, Vec2, Vec2)> = None;
    for poly in &workspace.obstacles {
        for (a, b) in poly.edges() {
            if let Some(t) = segment_hit_param(from, target, a, b) {
                if first_hit.is_none_or(|(best, _, _)| t < best) {
                    first_hit = Some((t, a, b));
                }
            }
        }
    }
    if let Some((_, a, b)) = first_hit {
        let tangent = (b - a).normalized();
        let slide = tangent * velocity.dot(tangent);
        let target = clamp(from + slide * dt);
        if valid(target) {
            return (target, (target - from) / dt);
        }
    }
    (from, Vec2::ZERO)
}

/// One synchronous semi-implicit Euler step for the whole flock.
pub fn step_flock(
    flock: &[AgentState],
    shepherd: &AgentState,
    workspace: &Workspace,
    params: &BehaviorParams,
    dt: f64,
) -> Result<Vec<AgentState>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if let Some((i, a)) = flock.iter().enumerate().find(|(_, a)| !workspace.is_free(a.position)) {
        return Err(Error::InvalidState(format!(
            "agent {i} at {:?} is not in free space",
            a.position
        )));
    }
    let next = (0..flock.len())
        .map(|i| {
            let forces = compute_forces(i, flock, shepherd, workspace, params);
            let acceleration = forces.acceleration(params);
            let velocity = (flock[i].velocity + acceleration * dt).clamp_norm(params.max_speed);
            let (position, velocity) = resolve_motion(workspace, flock[i].position, velocity, dt);
            AgentState {
                position,
                velocity,
                acceleration,
            }
        })
        .collect();
    Ok(next)
}

/// Shepherd kinematics. The learner pushes with a fixed-magnitude force;
/// rule policies command a velocity directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShepherdParams {
    pub max_speed: f64,
    /// Fraction of velocity lost per step under force control.
    pub damping: f64,
    pub force_magnitude: f64,
}

impl Default for ShepherdParams {
    fn default() -> Self {
        Self {
            max_speed: 3.0,
            damping: 0.1,
            force_magnitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShepherdControl {
    Force(Vec2),
    Velocity(Vec2),
}

pub fn step_shepherd(
    shepherd: &AgentState,
    control: ShepherdControl,
    workspace: &Workspace,
    params: &ShepherdParams,
    dt: f64,
) -> AgentState {
    let (velocity, acceleration) = match control {
        ShepherdControl::Force(force) => {
            let acc = force - shepherd.velocity * params.damping;
            ((shepherd.velocity + acc * dt).clamp_norm(params.max_speed), acc)
        }
        ShepherdControl::Velocity(v) => {
            let v = v.clamp_norm(params.max_speed);
            (v, (v - shepherd.velocity) / dt)
        }
    };
    let (position, velocity) = resolve_motion(workspace, shepherd.position, velocity, dt);
    AgentState {
        position,
        velocity,
        acceleration,
    }
}

/// Mean sheep position.
pub fn centroid(flock: &[AgentState]) -> Vec2 {
    flock.iter().map(|a| a.position).sum::<Vec2>() / flock.len() as f64
}

/// Largest distance from any member to the centroid.
pub fn group_radius(flock: &[AgentState]) -> f64 {
    let c = centroid(flock);
    flock.iter().map(|a| a.position.distance(c)).fold(0.0, f64::max)
}
