//! Shepherd controllers: discrete actions for the learner, the two
//! rule-based baselines and a random floor.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::rng::clipped_noise;

pub const N_ACTIONS: usize = 8;
/// Largest angular deviation from an action's nominal direction.
pub const ANGLE_NOISE_LIMIT: f64 = PI / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub direction_index: usize,
    pub angle_noise: f64,
}

impl Action {
    pub fn new(direction_index: usize) -> Self {
        Self {
            direction_index,
            angle_noise: 0.0,
        }
    }

    pub fn angle(&self) -> f64 {
        self.direction_index as f64 * (TAU / N_ACTIONS as f64) + self.angle_noise
    }
}

pub fn action_to_force(a: Action, magnitude: f64) -> Vec2 {
    Vec2::from_angle(a.angle()) * magnitude
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    SimpleRule,
    ComplexRule,
    Learned,
    Random,
}

impl std::str::FromStr for PolicyKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "simple" | "simple_rule" => Ok(Self::SimpleRule),
            "complex" | "complex_rule" => Ok(Self::ComplexRule),
            "learned" | "dqn" => Ok(Self::Learned),
            "random" => Ok(Self::Random),
            _ => Err(crate::Error::InvalidArgument(format!("unknown policy {s:?}"))),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice over Q-values, plus clipped Gaussian angle noise.
pub fn greedy_policy<T: PartialOrd + Copy, R: Rng + ?Sized>(q: &[T], epsilon: f64, rng: &mut R) -> Action {
    let direction_index = if rng.random::<f64>() < epsilon {
        rng.random_range(0..q.len())
    } else {
        argmax(q)
    };
    Action {
        direction_index,
        angle_noise: clipped_noise(rng, ANGLE_NOISE_LIMIT),
    }
}

pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    Action {
        direction_index: rng.random_range(0..N_ACTIONS),
        angle_noise: clipped_noise(rng, ANGLE_NOISE_LIMIT),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleParams {
    /// Distance behind the group kept while repositioning.
    pub offset_behind: f64,
    /// Distance behind the group center while pushing.
    pub drive_offset: f64,
    /// Group radius above which the shepherd collects the outermost sheep.
    pub merge_radius: f64,
    /// Distance kept behind a stray sheep while collecting it.
    pub collect_offset: f64,
    /// Angle from the drive axis within which the shepherd pushes.
    pub behind_tolerance: f64,
    /// Largest angle walked around the group in one step, radians.
    pub orbit_step: f64,
    /// Lateral swing of the complex rule.
    pub amplitude: f64,
    /// Swing period in decision steps.
    pub period: f64,
    /// Upcoming turn angle that triggers the outside bias, radians.
    pub turn_threshold: f64,
    pub max_speed: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self::for_view_range(25.0, 3.0)
    }
}

impl RuleParams {
    pub fn for_view_range(view_range: f64, max_speed: f64) -> Self {
        Self {
            offset_behind: 1.5 * view_range,
            drive_offset: 0.8 * view_range,
            merge_radius: 0.6 * view_range,
            collect_offset: 0.4 * view_range,
            behind_tolerance: 45f64.to_radians(),
            orbit_step: 30f64.to_radians(),
            amplitude: view_range,
            period: 40.0,
            turn_threshold: 30f64.to_radians(),
            max_speed,
        }
    }
}

/// What a rule sees: world state plus the group's geodesic guidance.
#[derive(Debug, Clone, Copy)]
pub struct RuleView<'a> {
    pub sheep: &'a [Vec2],
    pub shepherd: Vec2,
    /// First waypoint of the group's path to the goal.
    pub sub_goal: Vec2,
    /// The waypoint after the sub-goal, if any.
    pub next_waypoint: Option<Vec2>,
}

impl RuleView<'_> {
    pub fn center(&self) -> Vec2 {
        self.sheep.iter().copied().sum::<Vec2>() / self.sheep.len() as f64
    }

    fn farthest(&self, center: Vec2) -> (Vec2, f64) {
        self.sheep
            .iter()
            .map(|p| (*p, p.distance(center)))
            .fold((center, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
    }
}

/// The point `offset` behind `center` on the line away from `sub_goal`.
pub fn steering_point(center: Vec2, sub_goal: Vec2, offset: f64) -> Vec2 {
    center + (center - sub_goal).normalized() * offset
}

fn wrap_angle(a: f64) -> f64 {
    let a = a.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Velocity toward `target` at up to `max_speed`, stopping exactly on it.
fn seek(from: Vec2, target: Vec2, max_speed: f64) -> Vec2 {
    let d = target - from;
    let dist = d.norm();
    if dist == 0.0 {
        Vec2::ZERO
    } else {
        d * (dist.min(max_speed) / dist)
    }
}

/// Target that reaches `goal_point` (behind `anchor` along `axis`) without
/// cutting through the group: walk around on a circle of radius `orbit`
/// until within `tolerance` of the axis.
fn approach(view: &RuleView<'_>, anchor: Vec2, axis: Vec2, goal_point: Vec2, orbit: f64, p: &RuleParams) -> Vec2 {
    let rel = view.shepherd - anchor;
    if rel.norm() == 0.0 || axis.norm() == 0.0 {
        return goal_point;
    }
    let off = wrap_angle(axis.angle() - rel.angle());
    if off.abs() <= p.behind_tolerance {
        return goal_point;
    }
    let step = off.clamp(-p.orbit_step, p.orbit_step);
    anchor + Vec2::from_angle(rel.angle() + step) * orbit
}

/// Collect a stray sheep by getting behind it, measured from the center.
fn collect(view: &RuleView<'_>, center: Vec2, p: &RuleParams) -> Option<Vec2> {
    let (far, radius) = view.farthest(center);
    if radius <= p.merge_radius {
        return None;
    }
    let axis = (far - center).normalized();
    let point = far + axis * p.collect_offset;
    Some(approach(view, far, axis, point, p.collect_offset.max(p.offset_behind * 0.5), p))
}

/// Straight push from behind toward the sub-goal; returns the desired
/// shepherd velocity.
pub fn simple_rule(view: &RuleView<'_>, p: &RuleParams) -> Vec2 {
    let center = view.center();
    if let Some(target) = collect(view, center, p) {
        return seek(view.shepherd, target, p.max_speed);
    }
    let axis = (center - view.sub_goal).normalized();
    let drive = steering_point(center, view.sub_goal, p.drive_offset);
    let target = approach(view, center, axis, drive, p.offset_behind, p);
    seek(view.shepherd, target, p.max_speed)
}

/// Phase of the complex rule's swing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseState {
    pub step: u64,
}

/// Lateral offset of the swing, along the left normal of the drive axis.
pub fn swing_offset(phase: PhaseState, p: &RuleParams) -> f64 {
    p.amplitude * (TAU * phase.step as f64 / p.period).sin()
}

/// Shift toward the outside of an upcoming turn: positive is left of the
/// group-to-goal direction.
pub fn turn_bias(center: Vec2, sub_goal: Vec2, next: Option<Vec2>, p: &RuleParams) -> f64 {
    let Some(next) = next else { return 0.0 };
    let heading = sub_goal - center;
    let after = next - sub_goal;
    if heading.norm() == 0.0 || after.norm() == 0.0 {
        return 0.0;
    }
    let turn = wrap_angle(after.angle() - heading.angle());
    if turn.abs() <= p.turn_threshold {
        return 0.0;
    }
    // Left turn -> push from the right, and vice versa.
    -turn.signum() * 0.5 * p.amplitude
}

/// Side-to-side drive around the steering point with proactive turn bias.
pub fn complex_rule(view: &RuleView<'_>, p: &RuleParams, phase: PhaseState) -> (Vec2, PhaseState) {
    let next_phase = PhaseState { step: phase.step + 1 };
    let center = view.center();
    if let Some(target) = collect(view, center, p) {
        return (seek(view.shepherd, target, p.max_speed), next_phase);
    }
    let back = (center - view.sub_goal).normalized();
    let left = (view.sub_goal - center).normalized().perp();
    let lateral = swing_offset(phase, p) + turn_bias(center, view.sub_goal, view.next_waypoint, p);
    // The swing is laid out at the steering distance, then pulled in onto
    // the drive circle so the push distance stays fixed.
    let raw = center + back * p.offset_behind + left * lateral;
    let axis = (raw - center).normalized();
    let drive = center + axis * p.drive_offset;
    let target = approach(view, center, axis, drive, p.offset_behind, p);
    (seek(view.shepherd, target, p.max_speed), next_phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn forces_have_constant_magnitude() {
        assert_eq!(action_to_force(Action::new(0), 2.0), Vec2::new(2.0, 0.0));
        let f = action_to_force(Action::new(4), 2.0);
        assert!((f.x + 2.0).abs() < 1e-12 && f.y.abs() < 1e-12);
        for i in 0..8 {
            let a = Action {
                direction_index: i,
                angle_noise: 0.3,
            };
            assert!((action_to_force(a, 1.5).norm() - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_and_ties() {
        let mut rng = seeded(0);
        assert_eq!(greedy_policy(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 0.0, &mut rng).direction_index, 3);
        assert_eq!(greedy_policy(&[0.5f32; 8], 0.0, &mut rng).direction_index, 0);
        let shifted: Vec<f64> = [0.1, 0.7, 0.2, 0.7].iter().map(|v| v + 100.0).collect();
        assert_eq!(argmax(&shifted), 1);
    }

    #[test]
    fn noise_stays_in_band() {
        let mut rng = seeded(4);
        for _ in 0..5000 {
            let a = random_action(&mut rng);
            assert!(a.angle_noise.abs() <= ANGLE_NOISE_LIMIT);
            assert!(a.direction_index < 8);
        }
    }

    #[test]
    fn uniform_exploration_frequencies() {
        let mut rng = seeded(11);
        let n = 10_000;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            counts[greedy_policy(&[0.0f64; 8], 1.0, &mut rng).direction_index] += 1;
        }
        let p = 1.0 / 8.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn steering_point_behind_group() {
        let s = steering_point(Vec2::ZERO, Vec2::new(100.0, 0.0), 40.0);
        assert_eq!(s, Vec2::new(-40.0, 0.0));
    }

    #[test]
    fn shepherd_on_drive_point_holds_still() {
        let p = RuleParams::default();
        let sheep = [Vec2::new(0.0, 0.0)];
        let view = RuleView {
            sheep: &sheep,
            shepherd: Vec2::new(-p.drive_offset, 0.0),
            sub_goal: Vec2::new(100.0, 0.0),
            next_waypoint: None,
        };
        assert!(simple_rule(&view, &p).norm() < 1e-12);
    }

    #[test]
    fn scattered_group_targets_outermost() {
        let p = RuleParams::default();
        let sheep = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(0.0, 40.0)];
        let view = RuleView {
            sheep: &sheep,
            shepherd: Vec2::new(0.0, 60.0),
            sub_goal: Vec2::new(100.0, 0.0),
            next_waypoint: None,
        };
        let v = simple_rule(&view, &p);
        // Heads down toward the stray above the group, not behind it.
        assert!(v.y < 0.0 && v.x.abs() < 0.1 * v.y.abs());
    }

    #[test]
    fn rules_respect_speed_limit() {
        let p = RuleParams::default();
        let sheep = [Vec2::new(10.0, 0.0), Vec2::new(0.0, 5.0)];
        let mut phase = PhaseState::default();
        for k in 0..200 {
            let view = RuleView {
                sheep: &sheep,
                shepherd: Vec2::from_angle(k as f64 * 0.37) * 45.0,
                sub_goal: Vec2::new(200.0, 30.0),
                next_waypoint: Some(Vec2::new(200.0, 200.0)),
            };
            assert!(simple_rule(&view, &p).norm() <= p.max_speed + 1e-12);
            let (v, next) = complex_rule(&view, &p, phase);
            assert!(v.norm() <= p.max_speed + 1e-12);
            assert_eq!(next.step, phase.step + 1);
            phase = next;
        }
    }

    #[test]
    fn swing_is_symmetric_over_a_period() {
        let p = RuleParams::default();
        let mean: f64 = (0..40).map(|k| swing_offset(PhaseState { step: k }, &p)).sum::<f64>() / 40.0;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn left_turn_biases_right() {
        let p = RuleParams::default();
        let b = turn_bias(Vec2::ZERO, Vec2::new(100.0, 0.0), Some(Vec2::new(100.0, 100.0)), &p);
        assert!(b < 0.0);
        let straight = turn_bias(Vec2::ZERO, Vec2::new(100.0, 0.0), Some(Vec2::new(200.0, 0.0)), &p);
        assert_eq!(straight, 0.0);
    }
}
