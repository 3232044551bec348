//! Gym-style episodic environment: one shepherd, a flock, a workspace and
//! its roadmap, stepped with frame skipping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envgen::{sample_placement, EnvKind, EnvironmentSpec, Placement};
use crate::error::{Error, Result};
use crate::flock::{step_flock, step_shepherd, AgentState, BehaviorParams, ShepherdControl, ShepherdParams};
use crate::geometry::Vec2;
use crate::policy::{action_to_force, Action};
use crate::render::{render_frame, ObservationStack, RepresentationMode, SceneView, STACK_DEPTH};
use crate::reward::{step_outcome, RewardBreakdown, RewardConfig, StepOutcome, Terminal, Transition};
use crate::rng::{self, clipped_in_range};
use crate::roadmap::{GeodesicResult, GoalField, Roadmap, DEFAULT_NEIGHBORS, DEFAULT_SAMPLES};
use crate::workspace::Workspace;

pub const FRAME_SKIP: usize = 5;

/// Ranges for per-episode behavior randomization. `None` keeps the base
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorJitter {
    pub separation: Option<(f64, f64)>,
    pub cohesion: Option<(f64, f64)>,
    pub alignment: Option<(f64, f64)>,
    pub fear: Option<(f64, f64)>,
}

impl Default for BehaviorJitter {
    fn default() -> Self {
        Self {
            separation: Some((0.5, 1.5)),
            cohesion: Some((3.0, 7.0)),
            alignment: Some((2.0, 4.0)),
            fear: None,
        }
    }
}

impl BehaviorJitter {
    pub fn with_fear() -> Self {
        Self {
            fear: Some((13.0, 17.0)),
            ..Self::default()
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, base: &BehaviorParams, rng: &mut R) -> BehaviorParams {
        let mut out = *base;
        let mut draw = |range: Option<(f64, f64)>, slot: &mut f64| {
            if let Some((lo, hi)) = range {
                *slot = clipped_in_range(rng, lo, hi);
            }
        };
        draw(self.separation, &mut out.w_separation);
        draw(self.cohesion, &mut out.w_cohesion);
        draw(self.alignment, &mut out.w_alignment);
        draw(self.fear, &mut out.w_fear);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub env: EnvironmentSpec,
    pub n_sheep: usize,
    pub behavior: BehaviorParams,
    pub behavior_jitter: Option<BehaviorJitter>,
    pub shepherd: ShepherdParams,
    pub mode: RepresentationMode,
    pub frame_skip: usize,
    /// Episode limit in simulation frames.
    pub max_steps: usize,
    pub reward: RewardConfig,
    pub roadmap_samples: usize,
    pub roadmap_neighbors: usize,
    pub stack_depth: usize,
    /// Draw a fresh workspace from the reset seed (random and perturbed
    /// worlds).
    pub regenerate_world: bool,
    /// Skip rendering; for controllers that read world state directly.
    pub render: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            env: EnvironmentSpec::default(),
            n_sheep: 1,
            behavior: BehaviorParams::default(),
            behavior_jitter: None,
            shepherd: ShepherdParams::default(),
            mode: RepresentationMode::Circle,
            frame_skip: FRAME_SKIP,
            max_steps: 3000,
            reward: RewardConfig::default(),
            roadmap_samples: DEFAULT_SAMPLES,
            roadmap_neighbors: DEFAULT_NEIGHBORS,
            stack_depth: STACK_DEPTH,
            regenerate_world: false,
            render: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.behavior.validate()?;
        if self.n_sheep == 0 || self.frame_skip == 0 || self.max_steps == 0 || self.stack_depth == 0 {
            return Err(Error::Config("n_sheep, frame_skip, max_steps and stack_depth must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one decision step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub reward: RewardBreakdown,
    pub terminal: Terminal,
    /// Simulation frames elapsed in the episode.
    pub frame: usize,
}

impl StepInfo {
    pub fn done(&self) -> bool {
        self.terminal.is_done()
    }
}

struct World {
    spec_seed: u64,
    workspace: Workspace,
    roadmap: Roadmap,
    field: GoalField,
}

impl World {
    fn build(cfg: &EnvConfig, spec_seed: u64) -> Result<Self> {
        let spec = EnvironmentSpec {
            seed: spec_seed,
            ..cfg.env.clone()
        };
        let workspace = spec.generate()?;
        let roadmap = Roadmap::build(&workspace, cfg.roadmap_samples, cfg.roadmap_neighbors, rng::sub_seed(spec_seed, 2))?;
        let field = GoalField::new(&roadmap, &workspace, workspace.goal_center)?;
        Ok(Self {
            spec_seed,
            workspace,
            roadmap,
            field,
        })
    }

    /// Geodesic guidance from `p`, falling back to nearby free points when
    /// `p` itself cannot be attached (e.g. a centroid inside an obstacle).
    fn guidance(&self, p: Vec2, fallbacks: &[Vec2]) -> Result<GeodesicResult> {
        match self.field.query(&self.roadmap, &self.workspace, p) {
            Ok(g) => Ok(g),
            Err(e) => {
                let mut sorted: Vec<Vec2> = fallbacks.to_vec();
                sorted.sort_by(|a, b| a.distance(p).total_cmp(&b.distance(p)));
                for q in sorted {
                    if let Ok(mut g) = self.field.query(&self.roadmap, &self.workspace, q) {
                        g.length += p.distance(q);
                        return Ok(g);
                    }
                }
                Err(e)
            }
        }
    }
}

pub struct ShepherdEnv {
    cfg: EnvConfig,
    world: World,
    behavior: BehaviorParams,
    sheep: Vec<AgentState>,
    shepherd: AgentState,
    stack: Option<ObservationStack>,
    frame: usize,
    decision: usize,
    terminal: Option<Terminal>,
    shepherd_path: f64,
    sheep_path: f64,
    last: Option<StepOutcome>,
    started: bool,
}

impl ShepherdEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let world = World::build(&cfg, cfg.env.seed)?;
        let placeholder = AgentState::at(world.workspace.start);
        Ok(Self {
            behavior: cfg.behavior,
            cfg,
            world,
            sheep: vec![placeholder],
            shepherd: placeholder,
            stack: None,
            frame: 0,
            decision: 0,
            terminal: None,
            shepherd_path: 0.0,
            sheep_path: 0.0,
            last: None,
            started: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn workspace(&self) -> &Workspace {
        &self.world.workspace
    }

    pub fn roadmap(&self) -> &Roadmap {
        &self.world.roadmap
    }

    pub fn sheep(&self) -> &[AgentState] {
        &self.sheep
    }

    pub fn shepherd(&self) -> &AgentState {
        &self.shepherd
    }

    pub fn behavior(&self) -> &BehaviorParams {
        &self.behavior
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn shepherd_path_length(&self) -> f64 {
        self.shepherd_path
    }

    /// Distance travelled per sheep this episode, averaged over the flock.
    pub fn sheep_path_length(&self) -> f64 {
        self.sheep_path
    }

    /// `Some` once the episode has ended.
    pub fn terminal(&self) -> Option<Terminal> {
        self.terminal
    }

    pub fn last_outcome(&self) -> Option<&StepOutcome> {
        self.last.as_ref()
    }

    /// Starts an episode. Placement, behavior jitter and (when enabled) the
    /// workspace are all drawn from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<()> {
        if self.cfg.regenerate_world {
            let spec_seed = rng::sub_seed(seed, 7);
            if spec_seed != self.world.spec_seed {
                self.world = World::build(&self.cfg, spec_seed)?;
            }
        }
        let placement = sample_placement(&self.world.workspace, seed, self.cfg.env.kind, self.cfg.n_sheep, &self.cfg.env.noise)?;
        self.reset_with(seed, &placement)
    }

    /// Starts an episode from an explicit placement.
    pub fn reset_with(&mut self, seed: u64, placement: &Placement) -> Result<()> {
        let ws = &self.world.workspace;
        if placement.sheep_positions.is_empty() {
            return Err(Error::InvalidState("placement has no sheep".into()));
        }
        if !ws.is_free(placement.shepherd_position) || placement.sheep_positions.iter().any(|p| !ws.is_free(*p)) {
            return Err(Error::InvalidState("placement is not in free space".into()));
        }
        self.behavior = match &self.cfg.behavior_jitter {
            Some(j) => j.apply(&self.cfg.behavior, &mut rng::seeded(rng::sub_seed(seed, 11))),
            None => self.cfg.behavior,
        };
        self.sheep = placement.sheep_states();
        self.shepherd = placement.shepherd_state();
        self.frame = 0;
        self.decision = 0;
        self.shepherd_path = 0.0;
        self.sheep_path = 0.0;
        self.last = None;
        self.started = true;
        self.terminal = self.sheep.iter().all(|a| ws.in_goal(a.position)).then_some(Terminal::Success);
        self.stack = self
            .cfg
            .render
            .then(|| ObservationStack::reset(self.render_current(), self.cfg.stack_depth));
        Ok(())
    }

    pub fn render_current(&self) -> crate::render::ObservationFrame {
        let positions: Vec<Vec2> = self.sheep.iter().map(|a| a.position).collect();
        render_frame(
            &SceneView {
                workspace: &self.world.workspace,
                sheep: &positions,
                shepherd: self.shepherd.position,
            },
            self.cfg.mode,
        )
    }

    /// The frame stack; `None` when rendering is disabled.
    pub fn observation(&self) -> Option<&ObservationStack> {
        self.stack.as_ref()
    }

    /// Geodesic guidance from the current group center.
    pub fn guidance(&self) -> Result<GeodesicResult> {
        let positions: Vec<Vec2> = self.sheep.iter().map(|a| a.position).collect();
        let c = positions.iter().copied().sum::<Vec2>() / positions.len() as f64;
        self.world.guidance(c, &positions)
    }

    pub fn step(&mut self, action: Action) -> Result<StepInfo> {
        let force = action_to_force(action, self.cfg.shepherd.force_magnitude);
        self.step_control(ShepherdControl::Force(force))
    }

    /// Repeats `control` for `frame_skip` frames and scores the result.
    pub fn step_control(&mut self, control: ShepherdControl) -> Result<StepInfo> {
        if self.terminal.is_some() {
            return Err(Error::InvalidState("episode is over; call reset".into()));
        }
        if !self.started {
            return Err(Error::InvalidState("step before reset".into()));
        }
        let old: Vec<Vec2> = self.sheep.iter().map(|a| a.position).collect();
        for _ in 0..self.cfg.frame_skip {
            let next_sheep = step_flock(&self.sheep, &self.shepherd, &self.world.workspace, &self.behavior, 1.0)?;
            let next_shepherd = step_shepherd(&self.shepherd, control, &self.world.workspace, &self.cfg.shepherd, 1.0);
            self.shepherd_path += next_shepherd.position.distance(self.shepherd.position);
            self.sheep_path += self
                .sheep
                .iter()
                .zip(&next_sheep)
                .map(|(a, b)| a.position.distance(b.position))
                .sum::<f64>()
                / self.sheep.len() as f64;
            self.sheep = next_sheep;
            self.shepherd = next_shepherd;
            self.frame += 1;
        }
        self.decision += 1;
        let new: Vec<Vec2> = self.sheep.iter().map(|a| a.position).collect();
        let world = &self.world;
        let all: Vec<Vec2> = old.iter().chain(&new).copied().collect();
        let mut geodesic = |p: Vec2| world.guidance(p, &all);
        let outcome = step_outcome(
            &Transition {
                old_sheep: &old,
                new_sheep: &new,
                shepherd: self.shepherd.position,
                step: self.frame,
                max_steps: self.cfg.max_steps,
            },
            &world.workspace,
            self.cfg.mode,
            &self.cfg.reward,
            &mut geodesic,
        )?;
        if outcome.terminal.is_done() {
            self.terminal = Some(outcome.terminal);
        }
        self.last = Some(outcome);
        if self.cfg.render {
            let frame = self.render_current();
            if let Some(stack) = self.stack.as_mut() {
                stack.push(frame);
            }
        }
        Ok(StepInfo {
            reward: outcome.reward,
            terminal: outcome.terminal,
            frame: self.frame,
        })
    }
}

/// True when an environment kind benefits from a fresh world per episode.
pub fn varies_per_episode(spec: &EnvironmentSpec) -> bool {
    matches!(spec.kind, EnvKind::RandomGrid) || (spec.kind == EnvKind::Layered && spec.perturb)
}
