//! Moving, violation and goal rewards, and episode termination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::render::RepresentationMode;
use crate::roadmap::GeodesicResult;
use crate::workspace::Workspace;

pub const R_VIOLATION: f64 = -20.0;
pub const R_GOAL: f64 = 20.0;
pub const D_MIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub d_min: f64,
    pub violation_penalty: f64,
    pub goal_reward: f64,
    /// Largest allowed group radius.
    pub scatter_radius: f64,
    /// Largest allowed shepherd distance from the group center.
    pub far_distance: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::for_view_range(25.0)
    }
}

impl RewardConfig {
    pub fn for_view_range(view_range: f64) -> Self {
        Self {
            d_min: D_MIN,
            violation_penalty: R_VIOLATION,
            goal_reward: R_GOAL,
            scatter_radius: view_range,
            far_distance: 2.0 * view_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingRewardInputs {
    pub old_center: Vec2,
    pub new_center: Vec2,
    pub old_path_dist: f64,
    pub new_path_dist: f64,
    pub sub_goal: Vec2,
    pub d_min: f64,
    pub goal_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MoveTerms {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl MoveTerms {
    pub fn total(&self) -> f64 {
        self.r1 + self.r2 + self.r3
    }
}

fn scaled(delta: f64, d_min: f64) -> f64 {
    if delta > d_min {
        2.0 * delta
    } else if delta < -d_min {
        4.0 * delta
    } else {
        -4.0 * d_min
    }
}

/// Stillness and projection terms for one displacement. A zero `u` (already
/// at the sub-goal) takes the middle branch.
pub fn projection_terms(old: Vec2, new: Vec2, sub_goal: Vec2, d_min: f64) -> (f64, f64) {
    let u = sub_goal - old;
    let v = new - old;
    if v.norm() < d_min {
        return (-2.0, 0.0);
    }
    let len = u.norm();
    let proj = if len > 0.0 { v.dot(u) / len } else { 0.0 };
    (0.0, scaled(proj, d_min))
}

pub fn moving_reward(input: &MovingRewardInputs) -> MoveTerms {
    let (r1, r2) = projection_terms(input.old_center, input.new_center, input.sub_goal, input.d_min);
    if r1 != 0.0 {
        return MoveTerms { r1, r2: 0.0, r3: 0.0 };
    }
    let r3 = if input.old_path_dist > input.goal_radius && input.new_path_dist > input.goal_radius {
        scaled(input.old_path_dist - input.new_path_dist, input.d_min)
    } else {
        0.0
    };
    MoveTerms { r1, r2, r3 }
}

/// Group radius above `scatter_radius` or shepherd farther than
/// `far_distance` from the center.
pub fn violation_reward(sheep: &[Vec2], shepherd: Vec2, cfg: &RewardConfig) -> (f64, bool) {
    if sheep.is_empty() {
        return (0.0, false);
    }
    let c = mean(sheep);
    let radius = sheep.iter().map(|p| p.distance(c)).fold(0.0, f64::max);
    let violated = radius > cfg.scatter_radius || shepherd.distance(c) > cfg.far_distance;
    (if violated { cfg.violation_penalty } else { 0.0 }, violated)
}

pub fn goal_reward(sheep: &[Vec2], workspace: &Workspace, cfg: &RewardConfig) -> Result<(f64, bool)> {
    if sheep.is_empty() {
        return Err(Error::InvalidArgument("goal test needs at least one sheep".into()));
    }
    let reached = sheep.iter().all(|p| workspace.in_goal(*p));
    Ok((if reached { cfg.goal_reward } else { 0.0 }, reached))
}

fn mean(points: &[Vec2]) -> Vec2 {
    points.iter().copied().sum::<Vec2>() / points.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r_violation: f64,
    pub r_goal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    #[default]
    None,
    Success,
    Violation,
    Timeout,
}

impl Terminal {
    pub fn is_done(self) -> bool {
        self != Terminal::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub terminal: Terminal,
}

/// Positions before and after one decision step.
pub struct Transition<'a> {
    pub old_sheep: &'a [Vec2],
    pub new_sheep: &'a [Vec2],
    pub shepherd: Vec2,
    pub step: usize,
    pub max_steps: usize,
}

/// Scores one decision step. `geodesic` answers shortest-path queries to
/// the final goal.
pub fn step_outcome(
    tr: &Transition<'_>,
    workspace: &Workspace,
    mode: RepresentationMode,
    cfg: &RewardConfig,
    geodesic: &mut dyn FnMut(Vec2) -> Result<GeodesicResult>,
) -> Result<StepOutcome> {
    if tr.old_sheep.len() != tr.new_sheep.len() || tr.new_sheep.is_empty() {
        return Err(Error::InvalidState("sheep count changed or is zero".into()));
    }
    let terms = match mode {
        RepresentationMode::Circle => {
            let old_c = mean(tr.old_sheep);
            let new_c = mean(tr.new_sheep);
            let old_geo = geodesic(old_c)?;
            let new_geo = geodesic(new_c)?;
            moving_reward(&MovingRewardInputs {
                old_center: old_c,
                new_center: new_c,
                old_path_dist: old_geo.length,
                new_path_dist: new_geo.length,
                sub_goal: old_geo.sub_goal,
                d_min: cfg.d_min,
                goal_radius: workspace.goal_radius,
            })
        }
        RepresentationMode::Pixel => {
            // Per-sheep projection terms; the stillness penalty applies once,
            // when no sheep moved.
            let mut r2 = 0.0;
            let mut all_still = true;
            for (old, new) in tr.old_sheep.iter().zip(tr.new_sheep) {
                let geo = geodesic(*old)?;
                let (r1, r2_i) = projection_terms(*old, *new, geo.sub_goal, cfg.d_min);
                all_still &= r1 != 0.0;
                r2 += r2_i;
            }
            MoveTerms {
                r1: if all_still { -2.0 } else { 0.0 },
                r2,
                r3: 0.0,
            }
        }
    };

    let (r_goal, reached) = goal_reward(tr.new_sheep, workspace, cfg)?;
    let (r_violation, violated) = violation_reward(tr.new_sheep, tr.shepherd, cfg);
    let terminal = if reached {
        Terminal::Success
    } else if violated {
        Terminal::Violation
    } else if tr.step >= tr.max_steps {
        Terminal::Timeout
    } else {
        Terminal::None
    };
    // A violation on the success step is not charged.
    let r_violation = if reached { 0.0 } else { r_violation };
    let total = terms.total() + r_violation + r_goal;
    Ok(StepOutcome {
        reward: RewardBreakdown {
            r1: terms.r1,
            r2: terms.r2,
            r3: terms.r3,
            r_violation,
            r_goal,
            total,
        },
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(new: Vec2, old_path: f64, new_path: f64) -> MovingRewardInputs {
        MovingRewardInputs {
            old_center: Vec2::ZERO,
            new_center: new,
            old_path_dist: old_path,
            new_path_dist: new_path,
            sub_goal: Vec2::new(100.0, 0.0),
            d_min: 1.0,
            goal_radius: 30.0,
        }
    }

    /// Straight transcription of the reference pseudocode.
    fn oracle(i: &MovingRewardInputs) -> (f64, f64, f64) {
        let ux = i.sub_goal.x - i.old_center.x;
        let uy = i.sub_goal.y - i.old_center.y;
        let vx = i.new_center.x - i.old_center.x;
        let vy = i.new_center.y - i.old_center.y;
        let un = (ux * ux + uy * uy).sqrt();
        let d_proj = if un == 0.0 { 0.0 } else { (vx * ux + vy * uy) / un };
        let d_diff = (vx * vx + vy * vy).sqrt();
        let (mut r1, mut r2, mut r3) = (0.0, 0.0, 0.0);
        if d_diff < i.d_min {
            r1 = -2.0;
        } else {
            if d_proj > i.d_min {
                r2 = 2.0 * d_proj;
            } else if d_proj < -i.d_min {
                r2 = 4.0 * d_proj;
            } else {
                r2 = -4.0 * i.d_min;
            }
            if i.old_path_dist > i.goal_radius && i.new_path_dist > i.goal_radius {
                let dd = i.old_path_dist - i.new_path_dist;
                if dd > i.d_min {
                    r3 = 2.0 * dd;
                } else if dd < -i.d_min {
                    r3 = 4.0 * dd;
                } else {
                    r3 = -4.0 * i.d_min;
                }
            }
        }
        (r1, r2, r3)
    }

    #[test]
    fn still_group_gets_stillness_penalty() {
        let t = moving_reward(&inputs(Vec2::new(0.5, 0.0), 100.0, 99.5));
        assert_eq!((t.r1, t.r2, t.r3), (-2.0, 0.0, 0.0));
    }

    #[test]
    fn forward_and_backward_traces() {
        let t = moving_reward(&inputs(Vec2::new(5.0, 0.0), 100.0, 95.0));
        assert_eq!((t.r2, t.r3, t.total()), (10.0, 10.0, 20.0));
        let t = moving_reward(&inputs(Vec2::new(-5.0, 0.0), 100.0, 105.0));
        assert_eq!((t.r2, t.r3, t.total()), (-20.0, -20.0, -40.0));
    }

    #[test]
    fn perpendicular_motion_hits_middle_branches() {
        let t = moving_reward(&inputs(Vec2::new(0.0, 5.0), 100.0, 100.125));
        assert_eq!((t.r1, t.r2, t.r3), (0.0, -4.0, -4.0));
    }

    #[test]
    fn path_term_suppressed_near_goal() {
        let t = moving_reward(&inputs(Vec2::new(5.0, 0.0), 30.0, 25.0));
        assert_eq!(t.r3, 0.0);
    }

    #[test]
    fn zero_u_takes_middle_branch() {
        let mut i = inputs(Vec2::new(5.0, 0.0), 100.0, 95.0);
        i.sub_goal = Vec2::ZERO;
        assert_eq!(moving_reward(&i).r2, -4.0);
    }

    #[test]
    fn violation_thresholds() {
        let cfg = RewardConfig::default();
        let wide = [Vec2::new(-30.0, 0.0), Vec2::new(30.0, 0.0)];
        assert_eq!(violation_reward(&wide, Vec2::ZERO, &cfg), (R_VIOLATION, true));
        let tight = [Vec2::new(-10.0, 0.0), Vec2::new(10.0, 0.0)];
        assert_eq!(violation_reward(&tight, Vec2::new(0.0, 40.0), &cfg), (0.0, false));
        assert_eq!(violation_reward(&[Vec2::ZERO], Vec2::new(60.0, 0.0), &cfg), (R_VIOLATION, true));
    }

    #[test]
    fn goal_boundary_and_empty() {
        let cfg = RewardConfig::default();
        let ws = Workspace::empty(200.0, 200.0, Vec2::new(100.0, 100.0), 30.0, Vec2::new(10.0, 10.0));
        assert_eq!(goal_reward(&[Vec2::new(100.0, 100.0)], &ws, &cfg).unwrap(), (R_GOAL, true));
        assert!(!goal_reward(&[Vec2::new(131.0, 100.0)], &ws, &cfg).unwrap().1);
        assert!(goal_reward(&[], &ws, &cfg).is_err());
    }

    fn straight_line(ws: &Workspace) -> impl FnMut(Vec2) -> Result<GeodesicResult> + '_ {
        move |p| {
            Ok(GeodesicResult {
                length: p.distance(ws.goal_center),
                waypoints: vec![p, ws.goal_center],
                sub_goal: ws.goal_center,
            })
        }
    }

    #[test]
    fn success_outranks_violation() {
        let cfg = RewardConfig::default();
        let ws = Workspace::empty(400.0, 400.0, Vec2::new(200.0, 200.0), 30.0, Vec2::new(10.0, 10.0));
        let old = [Vec2::new(200.0, 240.0)];
        let new = [Vec2::new(200.0, 200.0)];
        let tr = Transition {
            old_sheep: &old,
            new_sheep: &new,
            shepherd: Vec2::new(200.0, 300.0),
            step: 1,
            max_steps: 1,
        };
        let out = step_outcome(&tr, &ws, RepresentationMode::Circle, &cfg, &mut straight_line(&ws)).unwrap();
        assert_eq!(out.terminal, Terminal::Success);
        assert_eq!(out.reward.r_goal, R_GOAL);
        let r = out.reward;
        assert_eq!(r.total, r.r1 + r.r2 + r.r3 + r.r_violation + r.r_goal);
    }

    #[test]
    fn scattered_group_is_violation() {
        let cfg = RewardConfig::default();
        let ws = Workspace::empty(400.0, 400.0, Vec2::new(350.0, 350.0), 30.0, Vec2::new(10.0, 10.0));
        let old = [Vec2::new(100.0, 100.0), Vec2::new(110.0, 100.0)];
        let new = [Vec2::new(70.0, 100.0), Vec2::new(140.0, 100.0)];
        let tr = Transition {
            old_sheep: &old,
            new_sheep: &new,
            shepherd: Vec2::new(105.0, 80.0),
            step: 3,
            max_steps: 500,
        };
        let out = step_outcome(&tr, &ws, RepresentationMode::Circle, &cfg, &mut straight_line(&ws)).unwrap();
        assert_eq!(out.terminal, Terminal::Violation);
        assert!(out.reward.r_violation < 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn matches_transcription(
            ox in -200.0..200.0f64, oy in -200.0..200.0f64,
            vx in -6.0..6.0f64, vy in -6.0..6.0f64,
            gx in -200.0..200.0f64, gy in -200.0..200.0f64,
            op in 0.0..300.0f64, dp in -8.0..8.0f64,
        ) {
            let i = MovingRewardInputs {
                old_center: Vec2::new(ox, oy),
                new_center: Vec2::new(ox + vx, oy + vy),
                old_path_dist: op,
                new_path_dist: (op + dp).max(0.0),
                sub_goal: Vec2::new(gx, gy),
                d_min: 1.0,
                goal_radius: 30.0,
            };
            let t = moving_reward(&i);
            let (r1, r2, r3) = oracle(&i);
            prop_assert_eq!(t.r1, r1);
            // Same branch taken: the middle branches are exact constants.
            prop_assert_eq!(t.r2 == -4.0, r2 == -4.0);
            prop_assert_eq!(t.r3 == -4.0, r3 == -4.0);
            prop_assert!((t.r2 - r2).abs() <= 1e-9 && (t.r3 - r3).abs() <= 1e-9);
        }

        #[test]
        fn forward_motion_is_rewarded(step in 1.01..10.0f64, angle in 0.0..std::f64::consts::TAU, dist in 40.0..300.0f64) {
            let dir = Vec2::from_angle(angle);
            let i = MovingRewardInputs {
                old_center: Vec2::ZERO,
                new_center: dir * step,
                old_path_dist: dist,
                new_path_dist: dist - step,
                sub_goal: dir * dist,
                d_min: 1.0,
                goal_radius: 30.0,
            };
            let t = moving_reward(&i);
            prop_assert!(t.r2 > 0.0);
            prop_assert!(t.r3 >= 0.0);
        }

        #[test]
        fn backward_costs_double(step in 1.01..10.0f64) {
            let fwd = moving_reward(&inputs(Vec2::new(step, 0.0), 100.0, 100.0 - step));
            let back = moving_reward(&inputs(Vec2::new(-step, 0.0), 100.0, 100.0 + step));
            prop_assert!((back.total().abs() - 2.0 * fwd.total().abs()).abs() < 1e-9);
        }

        #[test]
        fn pixel_mode_single_sheep_matches_circle_projection(
            sx in 50.0..350.0f64, sy in 50.0..350.0f64, vx in -5.0..5.0f64, vy in -5.0..5.0f64,
        ) {
            let cfg = RewardConfig::default();
            let ws = Workspace::empty(400.0, 400.0, Vec2::new(380.0, 380.0), 15.0, Vec2::new(10.0, 10.0));
            let old = [Vec2::new(sx, sy)];
            let new = [Vec2::new(sx + vx, sy + vy)];
            let tr = Transition { old_sheep: &old, new_sheep: &new, shepherd: old[0], step: 1, max_steps: 100 };
            let c = step_outcome(&tr, &ws, RepresentationMode::Circle, &cfg, &mut straight_line(&ws)).unwrap();
            let p = step_outcome(&tr, &ws, RepresentationMode::Pixel, &cfg, &mut straight_line(&ws)).unwrap();
            prop_assert_eq!(c.reward.r1, p.reward.r1);
            prop_assert_eq!(c.reward.r2, p.reward.r2);
            prop_assert_eq!(p.reward.r3, 0.0);
        }
    }
}
