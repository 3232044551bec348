//! Episode runner, metric aggregation and behavior-parameter sweeps.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, ShepherdEnv};
use crate::envgen::EnvKind;
use crate::error::{Error, Result};
use crate::flock::ShepherdControl;
use crate::geometry::Vec2;
use crate::policy::{action_to_force, complex_rule, random_action, simple_rule, PhaseState, PolicyKind, RuleParams, RuleView};
use crate::reward::Terminal;
use crate::rng::{self, SimRng};

/// Minimum number of successes for success-only statistics.
pub const MIN_SUCCESS_SAMPLES: usize = 30;

/// Anything that can drive the shepherd for one episode.
pub trait Controller {
    fn name(&self) -> &str;
    fn reset(&mut self, seed: u64);
    fn act(&mut self, env: &ShepherdEnv) -> Result<ShepherdControl>;
}

/// Gathers what the rule policies read from the world.
fn with_rule_view<T>(env: &ShepherdEnv, f: impl FnOnce(&RuleView<'_>) -> T) -> Result<T> {
    let sheep: Vec<Vec2> = env.sheep().iter().map(|a| a.position).collect();
    let guide = env.guidance()?;
    let view = RuleView {
        sheep: &sheep,
        shepherd: env.shepherd().position,
        sub_goal: guide.sub_goal,
        next_waypoint: guide.waypoints.get(2).copied(),
    };
    Ok(f(&view))
}

pub struct SimpleRule {
    pub params: RuleParams,
}

impl Controller for SimpleRule {
    fn name(&self) -> &str {
        "simple_rule"
    }
    fn reset(&mut self, _seed: u64) {}
    fn act(&mut self, env: &ShepherdEnv) -> Result<ShepherdControl> {
        with_rule_view(env, |v| ShepherdControl::Velocity(simple_rule(v, &self.params)))
    }
}

pub struct ComplexRule {
    pub params: RuleParams,
    pub phase: PhaseState,
}

impl Controller for ComplexRule {
    fn name(&self) -> &str {
        "complex_rule"
    }
    fn reset(&mut self, _seed: u64) {
        self.phase = PhaseState::default();
    }
    fn act(&mut self, env: &ShepherdEnv) -> Result<ShepherdControl> {
        let (v, phase) = with_rule_view(env, |v| complex_rule(v, &self.params, self.phase))?;
        self.phase = phase;
        Ok(ShepherdControl::Velocity(v))
    }
}

/// Uniformly random discrete actions.
pub struct RandomController {
    rng: SimRng,
}

impl RandomController {
    pub fn new() -> Self {
        Self { rng: rng::seeded(0) }
    }
}

impl Default for RandomController {
    fn default() -> Self {
        Self::new()
    }
}

impl Controller for RandomController {
    fn name(&self) -> &str {
        "random"
    }
    fn reset(&mut self, seed: u64) {
        self.rng = rng::seeded(rng::sub_seed(seed, 21));
    }
    fn act(&mut self, env: &ShepherdEnv) -> Result<ShepherdControl> {
        let a = random_action(&mut self.rng);
        Ok(ShepherdControl::Force(action_to_force(a, env.config().shepherd.force_magnitude)))
    }
}

/// Never moves.
pub struct Stationary;

impl Controller for Stationary {
    fn name(&self) -> &str {
        "stationary"
    }
    fn reset(&mut self, _seed: u64) {}
    fn act(&mut self, _env: &ShepherdEnv) -> Result<ShepherdControl> {
        Ok(ShepherdControl::Velocity(Vec2::ZERO))
    }
}

/// Rule and random controllers; learned ones come from a checkpoint.
pub fn baseline_controller(kind: PolicyKind, params: RuleParams) -> Result<Box<dyn Controller>> {
    match kind {
        PolicyKind::SimpleRule => Ok(Box::new(SimpleRule { params })),
        PolicyKind::ComplexRule => Ok(Box::new(ComplexRule {
            params,
            phase: PhaseState::default(),
        })),
        PolicyKind::Random => Ok(Box::new(RandomController::new())),
        PolicyKind::Learned => Err(Error::InvalidArgument("a learned policy needs a checkpoint".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Decision steps taken.
    pub steps: usize,
    /// Frames to success, or the episode limit on failure.
    pub completion_time: usize,
    pub shepherd_path_length: f64,
    pub sheep_path_length: f64,
    pub termination: Terminal,
    pub seed: u64,
    /// Sum of undiscounted rewards.
    pub total_return: f64,
    pub rewards: Vec<f64>,
}

/// Runs one episode from `env.reset(seed)` to termination.
pub fn run_episode(env: &mut ShepherdEnv, controller: &mut dyn Controller, seed: u64) -> Result<EpisodeResult> {
    env.reset(seed)?;
    finish_episode(env, controller, seed)
}

/// Runs an episode on an environment that was already reset.
pub fn finish_episode(env: &mut ShepherdEnv, controller: &mut dyn Controller, seed: u64) -> Result<EpisodeResult> {
    controller.reset(seed);
    let max_steps = env.config().max_steps;
    let mut rewards = Vec::new();
    let mut steps = 0;
    while env.terminal().is_none() {
        let control = controller.act(env)?;
        let info = env.step_control(control)?;
        rewards.push(info.reward.total);
        steps += 1;
    }
    let termination = env.terminal().unwrap_or(Terminal::Timeout);
    let success = termination == Terminal::Success;
    Ok(EpisodeResult {
        success,
        steps,
        completion_time: if success { env.frame() } else { max_steps },
        shepherd_path_length: env.shepherd_path_length(),
        sheep_path_length: env.sheep_path_length(),
        termination,
        seed,
        total_return: rewards.iter().sum(),
        rewards,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub level: f64,
    pub policy: String,
    pub success_rate: f64,
    /// `None` when fewer than `MIN_SUCCESS_SAMPLES` successes.
    pub time_success: Option<(f64, f64)>,
    pub time_all: (f64, f64),
    pub path_success: Option<(f64, f64)>,
    pub n: usize,
    pub n_success: usize,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "level,policy,success_rate,time_success_mean,time_success_std,time_all_mean,time_all_std,path_success_mean,path_success_std,n,n_success";

    pub fn csv_line(&self) -> String {
        let pair = |p: Option<(f64, f64)>| match p {
            Some((m, s)) => format!("{m:.6},{s:.6}"),
            None => "insufficient,insufficient".to_string(),
        };
        format!(
            "{},{},{:.6},{},{:.6},{:.6},{},{},{}",
            self.level,
            self.policy,
            self.success_rate,
            pair(self.time_success),
            self.time_all.0,
            self.time_all.1,
            pair(self.path_success),
            self.n,
            self.n_success
        )
    }
}

pub fn aggregate_metrics(level: f64, policy: &str, results: &[EpisodeResult]) -> Result<MetricsRow> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no episodes to aggregate".into()));
    }
    let wins: Vec<&EpisodeResult> = results.iter().filter(|r| r.success).collect();
    let times: Vec<f64> = results.iter().map(|r| r.completion_time as f64).collect();
    let enough = wins.len() >= MIN_SUCCESS_SAMPLES;
    let stat = |f: fn(&EpisodeResult) -> f64| {
        let v: Vec<f64> = wins.iter().map(|r| f(r)).collect();
        enough.then(|| mean_std(&v))
    };
    Ok(MetricsRow {
        level,
        policy: policy.to_string(),
        success_rate: wins.len() as f64 / results.len() as f64,
        time_success: stat(|r| r.completion_time as f64),
        time_all: mean_std(&times),
        path_success: stat(|r| r.shepherd_path_length),
        n: results.len(),
        n_success: wins.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Fear weight from 5 to 25.
    Fear,
    /// Separation 0.5 -> 1.5 while cohesion goes 7.5 -> 2.5.
    SeparationCohesion,
}

impl SweepAxis {
    /// Level values, evenly spaced over the axis.
    pub fn levels(self, count: usize) -> Vec<f64> {
        let (lo, hi) = match self {
            SweepAxis::Fear => (5.0, 25.0),
            SweepAxis::SeparationCohesion => (0.5, 1.5),
        };
        if count <= 1 {
            return vec![lo];
        }
        (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
    }

    pub fn apply(self, cfg: &mut EnvConfig, level: f64) {
        match self {
            SweepAxis::Fear => cfg.behavior.w_fear = level,
            SweepAxis::SeparationCohesion => {
                let t = (level - 0.5) / 1.0;
                cfg.behavior.w_separation = level;
                cfg.behavior.w_cohesion = 7.5 - 5.0 * t;
            }
        }
        // The swept coefficients must stay at their level values.
        if let Some(j) = cfg.behavior_jitter.as_mut() {
            match self {
                SweepAxis::Fear => j.fear = None,
                SweepAxis::SeparationCohesion => {
                    j.separation = None;
                    j.cohesion = None;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub levels: usize,
    pub runs_per_level: usize,
    pub env: EnvConfig,
    pub policies: Vec<PolicyKind>,
    pub rule: RuleParams,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Fear,
            levels: 5,
            runs_per_level: 10,
            env: EnvConfig {
                n_sheep: 3,
                max_steps: 5000,
                render: false,
                ..Default::default()
            },
            policies: vec![PolicyKind::SimpleRule, PolicyKind::ComplexRule],
            rule: RuleParams::default(),
            seed: 0,
        }
    }
}

/// Runs every level x policy cell. `learned` supplies controllers for
/// `PolicyKind::Learned`.
pub fn run_sweep(
    spec: &SweepSpec,
    learned: &mut dyn FnMut() -> Result<Box<dyn Controller>>,
) -> Result<Vec<MetricsRow>> {
    if spec.runs_per_level == 0 {
        return Err(Error::InvalidArgument("runs_per_level must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for (li, level) in spec.axis.levels(spec.levels).into_iter().enumerate() {
        let mut cfg = spec.env.clone();
        spec.axis.apply(&mut cfg, level);
        let needs_render = spec.policies.iter().any(|p| *p == PolicyKind::Learned);
        cfg.render = cfg.render || needs_render;
        let mut env = ShepherdEnv::new(cfg)?;
        for policy in &spec.policies {
            let mut controller = match policy {
                PolicyKind::Learned => learned()?,
                other => baseline_controller(*other, spec.rule)?,
            };
            let mut results = Vec::with_capacity(spec.runs_per_level);
            for run in 0..spec.runs_per_level {
                let seed = rng::sub_seed(spec.seed, (li * 1_000_000 + run) as u64);
                results.push(run_episode(&mut env, controller.as_mut(), seed)?);
            }
            rows.push(aggregate_metrics(level, controller.name(), &results)?);
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[MetricsRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{}", MetricsRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn save_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(rows, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Episode limit used at test time for a workspace family.
pub fn test_max_steps(kind: EnvKind) -> usize {
    match kind {
        EnvKind::Layered => 10_000,
        EnvKind::Fixed => 5_000,
        EnvKind::Empty | EnvKind::RandomGrid => 4_000,
    }
}

/// Full-scale episodes per sweep cell for a workspace family.
pub fn full_runs_per_cell(kind: EnvKind) -> usize {
    match kind {
        EnvKind::Layered => 100,
        _ => 500,
    }
}

/// Success statistics per flock size; `level` in each row is the group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupSizeTest {
    pub group_sizes: Vec<usize>,
    pub cases_per_size: usize,
    pub env: EnvConfig,
    pub seed: u64,
}

impl Default for GroupSizeTest {
    fn default() -> Self {
        Self {
            group_sizes: vec![2, 3, 4],
            cases_per_size: 100,
            env: EnvConfig {
                max_steps: test_max_steps(EnvKind::RandomGrid),
                ..Default::default()
            },
            seed: 0,
        }
    }
}

pub fn run_group_size_test(spec: &GroupSizeTest, controller: &mut dyn Controller) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::with_capacity(spec.group_sizes.len());
    for &n in &spec.group_sizes {
        let mut cfg = spec.env.clone();
        cfg.n_sheep = n;
        let mut env = ShepherdEnv::new(cfg)?;
        let results = (0..spec.cases_per_size)
            .map(|k| run_episode(&mut env, controller, rng::sub_seed(spec.seed, (n * 1_000_000 + k) as u64)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(aggregate_metrics(n as f64, controller.name(), &results)?);
    }
    Ok(rows)
}

/// Whitespace-separated columns, one block per policy separated by two
/// blank lines so `plot ... index i` selects a policy. Missing statistics
/// are written as NaN.
pub fn write_gnuplot(rows: &[MetricsRow], out: &mut impl Write) -> Result<()> {
    let mut policies: Vec<&str> = Vec::new();
    for r in rows {
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
    }
    let pair = |p: Option<(f64, f64)>| p.unwrap_or((f64::NAN, f64::NAN));
    for (i, policy) in policies.iter().enumerate() {
        if i > 0 {
            writeln!(out, "\n")?;
        }
        writeln!(out, "# {policy}")?;
        writeln!(out, "# level success_rate time_success_mean time_success_std time_all_mean time_all_std path_success_mean path_success_std n")?;
        for r in rows.iter().filter(|r| r.policy == *policy) {
            let (tm, ts) = pair(r.time_success);
            let (pm, ps) = pair(r.path_success);
            writeln!(
                out,
                "{} {:.6} {tm:.6} {ts:.6} {:.6} {:.6} {pm:.6} {ps:.6} {}",
                r.level, r.success_rate, r.time_all.0, r.time_all.1, r.n
            )?;
        }
    }
    Ok(())
}

pub fn save_gnuplot(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_gnuplot(rows, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Discounted return of a reward sequence.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{EnvironmentSpec, Placement};

    fn result(success: bool, time: usize, path: f64) -> EpisodeResult {
        EpisodeResult {
            success,
            steps: time / 5,
            completion_time: time,
            shepherd_path_length: path,
            sheep_path_length: path,
            termination: if success { Terminal::Success } else { Terminal::Timeout },
            seed: 0,
            total_return: 0.0,
            rewards: vec![],
        }
    }

    fn small_env(max_steps: usize) -> EnvConfig {
        EnvConfig {
            env: EnvironmentSpec {
                kind: EnvKind::Empty,
                size: 270.0,
                ..Default::default()
            },
            roadmap_samples: 60,
            max_steps,
            render: false,
            ..Default::default()
        }
    }

    #[test]
    fn aggregate_all_success() {
        let rs: Vec<_> = (0..40).map(|_| result(true, 100, 10.0)).collect();
        let m = aggregate_metrics(1.0, "p", &rs).unwrap();
        assert_eq!(m.success_rate, 1.0);
        assert_eq!(m.time_success, Some((100.0, 0.0)));
    }

    #[test]
    fn aggregate_half_timeouts() {
        let mut rs: Vec<_> = (0..40).map(|_| result(true, 100, 10.0)).collect();
        rs.extend((0..40).map(|_| result(false, 5000, 50.0)));
        let m = aggregate_metrics(1.0, "p", &rs).unwrap();
        assert_eq!(m.time_all.0, 2550.0);
        assert!(m.time_all.0 >= m.time_success.unwrap().0);
    }

    #[test]
    fn few_successes_are_flagged() {
        let mut rs: Vec<_> = (0..20).map(|_| result(true, 100, 10.0)).collect();
        rs.extend((0..20).map(|_| result(false, 5000, 50.0)));
        let m = aggregate_metrics(1.0, "p", &rs).unwrap();
        assert_eq!(m.time_success, None);
        assert!(m.csv_line().contains("insufficient"));
        let none = aggregate_metrics(1.0, "p", &[result(false, 5000, 1.0)]).unwrap();
        assert_eq!(none.success_rate, 0.0);
        assert!(aggregate_metrics(1.0, "p", &[]).is_err());
    }

    #[test]
    fn spawn_in_goal_is_instant_success() {
        let mut env = ShepherdEnv::new(small_env(100)).unwrap();
        let g = env.workspace().goal_center;
        let placement = Placement {
            sheep_positions: vec![g],
            shepherd_position: g + Vec2::new(20.0, 0.0),
            shepherd_octant: 0,
            group_center: g,
        };
        env.reset_with(1, &placement).unwrap();
        let r = finish_episode(&mut env, &mut Stationary, 1).unwrap();
        assert!(r.success);
        assert_eq!((r.steps, r.completion_time, r.shepherd_path_length), (0, 0, 0.0));
    }

    #[test]
    fn stationary_times_out() {
        let mut env = ShepherdEnv::new(small_env(200)).unwrap();
        let r = run_episode(&mut env, &mut Stationary, 4).unwrap();
        assert_eq!(r.termination, Terminal::Timeout);
        assert_eq!(r.completion_time, 200);
    }

    #[test]
    fn sweep_bookkeeping() {
        let spec = SweepSpec {
            levels: 5,
            runs_per_level: 2,
            env: small_env(50),
            policies: vec![PolicyKind::SimpleRule],
            ..Default::default()
        };
        let rows = run_sweep(&spec, &mut || Err(Error::InvalidArgument("unused".into()))).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows.iter().map(|r| r.n).sum::<usize>(), 10);
        assert_eq!(rows.iter().map(|r| r.level).collect::<Vec<_>>(), vec![5.0, 10.0, 15.0, 20.0, 25.0]);
    }

    #[test]
    fn discounting_matches_forward_sum() {
        let r = [1.0, -2.0, 0.5, 4.0];
        let forward: f64 = r.iter().enumerate().map(|(k, v)| 0.9f64.powi(k as i32) * v).sum();
        assert!((discounted_return(&r, 0.9) - forward).abs() < 1e-12);
    }

    #[test]
    fn gnuplot_blocks_per_policy() {
        let a = aggregate_metrics(1.0, "simple", &[result(true, 100, 10.0)]).unwrap();
        let b = aggregate_metrics(2.0, "simple", &[result(false, 500, 10.0)]).unwrap();
        let c = aggregate_metrics(1.0, "complex", &[result(true, 80, 10.0)]).unwrap();
        let mut out = Vec::new();
        write_gnuplot(&[a, c, b], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let blocks: Vec<&str> = text.split("\n\n\n").collect();
        assert_eq!(blocks.len(), 2);
        assert!(blocks[0].starts_with("# simple"));
        let data: Vec<&str> = blocks[0].lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 2);
        assert!(data[0].contains("NaN"));
        assert_eq!(data[1].split_whitespace().count(), 9);
    }

    #[test]
    fn group_size_rows_follow_sizes() {
        let spec = GroupSizeTest {
            group_sizes: vec![1, 2],
            cases_per_size: 2,
            env: small_env(50),
            seed: 3,
        };
        let rows = run_group_size_test(&spec, &mut Stationary).unwrap();
        assert_eq!(rows.iter().map(|r| (r.level, r.n)).collect::<Vec<_>>(), vec![(1.0, 2), (2.0, 2)]);
        assert_eq!(test_max_steps(EnvKind::Layered), 10_000);
    }
}
