//! Workspace families for training and testing: the fixed maps, the random
//! 9x9 grid with three obstacle rings around the goal, and layered fence
//! rows forming U-turns and gaps. Also initial group/shepherd placements.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Triangular};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flock::AgentState;
use crate::geometry::{Polygon, Rect, Vec2};
use crate::rng::{self, clipped_noise};
use crate::workspace::Workspace;

pub const WORLD_SIZE: f64 = 540.0;
pub const GRID: i32 = 9;
pub const CELL: f64 = WORLD_SIZE / GRID as f64;
pub const OBSTACLE_SIDE: f64 = 30.0;
pub const GOAL_RADIUS: f64 = 30.0;
/// Nominal shepherd distance from the group center at spawn.
pub const SHEPHERD_OFFSET: f64 = 30.0;
/// Sheep spawn uniformly within this radius of the jittered group center.
pub const SPAWN_RADIUS: f64 = 10.0;
const GOAL_RETRIES: u64 = 8;
const PLACEMENT_RETRIES: usize = 200;

const FENCE_THICKNESS: f64 = 10.0;
const LONG_FENCE: f64 = 300.0;
const SHORT_FENCE: f64 = 120.0;
/// Short fences start this far back inside the long fence so the joint
/// stays sealed under perturbation.
const FENCE_OVERLAP: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Noise {
    /// Pixels.
    pub obstacle_center_jitter: f64,
    /// Degrees.
    pub fence_angle_jitter: f64,
    /// Pixels.
    pub placement_jitter: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            obstacle_center_jitter: 2.5,
            fence_angle_jitter: 8.0,
            placement_jitter: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedVariant {
    Figure1,
    Filter0,
    Filter1,
}

/// The nine goal locations of the random grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalCell {
    CornerSw,
    CornerSe,
    CornerNw,
    CornerNe,
    EdgeS,
    EdgeN,
    EdgeW,
    EdgeE,
    Center,
}

impl GoalCell {
    pub const ALL: [GoalCell; 9] = [
        GoalCell::CornerSw,
        GoalCell::CornerSe,
        GoalCell::CornerNw,
        GoalCell::CornerNe,
        GoalCell::EdgeS,
        GoalCell::EdgeN,
        GoalCell::EdgeW,
        GoalCell::EdgeE,
        GoalCell::Center,
    ];

    /// `(column, row)` with row 0 at the south edge.
    pub fn cell(self) -> (i32, i32) {
        match self {
            GoalCell::CornerSw => (0, 0),
            GoalCell::CornerSe => (8, 0),
            GoalCell::CornerNw => (0, 8),
            GoalCell::CornerNe => (8, 8),
            GoalCell::EdgeS => (4, 0),
            GoalCell::EdgeN => (4, 8),
            GoalCell::EdgeW => (0, 4),
            GoalCell::EdgeE => (8, 4),
            GoalCell::Center => (4, 4),
        }
    }

    /// Candidate group cells: the mirrored far cell, or the four corners
    /// when the goal is central.
    pub fn group_cells(self) -> Vec<(i32, i32)> {
        match self {
            GoalCell::Center => vec![(0, 0), (8, 0), (0, 8), (8, 8)],
            other => {
                let (c, r) = other.cell();
                vec![(GRID - 1 - c, GRID - 1 - r)]
            }
        }
    }
}

pub fn cell_center((col, row): (i32, i32)) -> Vec2 {
    Vec2::new((col as f64 + 0.5) * CELL, (row as f64 + 0.5) * CELL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Empty,
    Fixed,
    RandomGrid,
    Layered,
}

/// Everything needed to regenerate one workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentSpec {
    pub kind: EnvKind,
    pub seed: u64,
    /// Obstacle probability per candidate cell; sampled when absent.
    pub density: Option<f64>,
    pub goal_cell: Option<GoalCell>,
    pub variant: FixedVariant,
    pub n_layers: usize,
    pub gaps: usize,
    pub perturb: bool,
    pub noise: Noise,
    /// Side length of the empty world.
    pub size: f64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            kind: EnvKind::RandomGrid,
            seed: 0,
            density: None,
            goal_cell: None,
            variant: FixedVariant::Filter0,
            n_layers: 3,
            gaps: 1,
            perturb: false,
            noise: Noise::default(),
            size: WORLD_SIZE,
        }
    }
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.density {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidArgument(format!("density {d} outside [0, 1]")));
            }
        }
        if self.kind == EnvKind::Layered {
            if !(3..=4).contains(&self.n_layers) {
                return Err(Error::InvalidArgument("n_layers must be 3 or 4".into()));
            }
            if self.gaps > self.n_layers {
                return Err(Error::InvalidArgument("gaps cannot exceed n_layers".into()));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Workspace> {
        self.validate()?;
        match self.kind {
            EnvKind::Empty => Ok(empty_world(self.size)),
            EnvKind::Fixed => Ok(make_fixed(self.variant)),
            EnvKind::RandomGrid => {
                let mut r = rng::seeded(rng::sub_seed(self.seed, 1));
                let density = self.density.unwrap_or_else(|| sample_density(&mut r));
                let goal = self
                    .goal_cell
                    .unwrap_or_else(|| GoalCell::ALL[r.random_range(0..GoalCell::ALL.len())]);
                make_random_grid_with(self.seed, density, goal, &self.noise)
            }
            EnvKind::Layered => make_layered_with(self.seed, self.n_layers, self.gaps, self.perturb, &self.noise),
        }
    }
}

/// Square world with the goal in the north-east and start in the south-west.
pub fn empty_world(size: f64) -> Workspace {
    let margin = size * 0.25;
    let mut ws = Workspace::empty(
        size,
        size,
        Vec2::new(size - margin, size - margin),
        GOAL_RADIUS,
        Vec2::new(margin, margin),
    );
    ws.name = "empty".into();
    ws
}

pub fn make_fixed(variant: FixedVariant) -> Workspace {
    let parse = |text: &str| Workspace::from_json(text).expect("shipped workspace data is valid");
    match variant {
        FixedVariant::Figure1 => parse(include_str!("../data/figure1.json")),
        FixedVariant::Filter0 => {
            let mut ws = parse(include_str!("../data/filter.json"));
            ws.name = "filter0".into();
            ws
        }
        FixedVariant::Filter1 => {
            let mut ws = parse(include_str!("../data/filter.json")).swapped();
            ws.name = "filter1".into();
            ws
        }
    }
}

/// Obstacle density drawn from Triangular(0, 0.3, 0.5).
pub fn sample_density<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Triangular::new(0.0, 0.5, 0.3)
        .expect("valid triangular parameters")
        .sample(rng)
}

pub fn sample_density_seeded(seed: u64) -> f64 {
    sample_density(&mut rng::seeded(seed))
}

/// Cells at Chebyshev distance 1..=3 from `goal`, clipped to the grid, in
/// row-major order.
pub fn ring_cells(goal: (i32, i32)) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for row in 0..GRID {
        for col in 0..GRID {
            let d = (col - goal.0).abs().max((row - goal.1).abs());
            if (1..=3).contains(&d) {
                out.push((col, row));
            }
        }
    }
    out
}

pub fn make_random_grid(seed: u64, density: f64, goal_cell: GoalCell) -> Result<Workspace> {
    make_random_grid_with(seed, density, goal_cell, &Noise::default())
}

pub fn make_random_grid_with(seed: u64, density: f64, goal_cell: GoalCell, noise: &Noise) -> Result<Workspace> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("density {density} outside [0, 1]")));
    }
    let goal = goal_cell.cell();
    let mut last_err = None;
    for attempt in 0..GOAL_RETRIES {
        let mut r = rng::seeded(rng::sub_seed(seed, 100 + attempt));
        let mut obstacles = Vec::new();
        for cell in ring_cells(goal) {
            let occupied = r.random::<f64>() < density;
            let angle = r.random_range(0.0..FRAC_PI_2);
            let jitter = Vec2::new(
                clipped_noise(&mut r, noise.obstacle_center_jitter),
                clipped_noise(&mut r, noise.obstacle_center_jitter),
            );
            if occupied {
                obstacles.push(Polygon::square(cell_center(cell) + jitter, OBSTACLE_SIDE, angle));
            }
        }
        let ws = Workspace {
            name: format!("random_grid_{goal_cell:?}").to_lowercase(),
            bounds: Rect::from_size(WORLD_SIZE, WORLD_SIZE),
            obstacles,
            goal_center: cell_center(goal),
            goal_radius: GOAL_RADIUS,
            start: cell_center(goal_cell.group_cells()[0]),
        };
        match ws.validate() {
            Ok(()) => return Ok(ws),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::InvalidWorkspace("random grid generation failed".into())))
}

/// Indices of the short fences removed to open gaps.
fn gap_layers(rng: &mut impl Rng, n_layers: usize, gaps: usize) -> Vec<usize> {
    let mut layers: Vec<usize> = (0..n_layers).collect();
    layers.shuffle(rng);
    layers.truncate(gaps);
    layers.sort_unstable();
    layers
}

fn fence(start: Vec2, angle: f64, length: f64) -> Polygon {
    let dir = Vec2::from_angle(angle);
    Polygon::rotated_rect(start + dir * (length * 0.5), length * 0.5, FENCE_THICKNESS * 0.5, angle)
}

pub fn make_layered(seed: u64, n_layers: usize, gaps: usize, perturb: bool) -> Result<Workspace> {
    make_layered_with(seed, n_layers, gaps, perturb, &Noise::default())
}

/// Fence rows between a southern start and northern goal. Each row has a
/// long fence on the wall side and a short fence continuing it toward the
/// U-turn opening on the other side; rows alternate sides.
pub fn make_layered_with(seed: u64, n_layers: usize, gaps: usize, perturb: bool, noise: &Noise) -> Result<Workspace> {
    if !(3..=4).contains(&n_layers) || gaps > n_layers {
        return Err(Error::InvalidArgument(format!(
            "layered world needs 3..=4 layers and gaps <= layers, got {n_layers}/{gaps}"
        )));
    }
    let mut r = rng::seeded(rng::sub_seed(seed, 200));
    let gapped = gap_layers(&mut r, n_layers, gaps);
    let (y0, y1) = (110.0, 430.0);
    let mut obstacles = Vec::new();
    for layer in 0..n_layers {
        let y = y0 + (y1 - y0) * layer as f64 / (n_layers - 1) as f64;
        let from_west = layer % 2 == 0;
        let (mut jitter, mut angle, mut short_angle, mut slide) = (Vec2::ZERO, 0.0, 0.0, 0.0);
        if perturb {
            let limit = noise.fence_angle_jitter.to_radians();
            jitter = Vec2::new(
                clipped_noise(&mut r, noise.obstacle_center_jitter),
                clipped_noise(&mut r, noise.obstacle_center_jitter),
            );
            angle = clipped_noise(&mut r, limit);
            short_angle = clipped_noise(&mut r, limit);
            slide = clipped_noise(&mut r, noise.obstacle_center_jitter);
        }
        // Direction from the wall toward the opening.
        let base = if from_west { 0.0 } else { PI };
        let wall_x = if from_west { 0.0 } else { WORLD_SIZE };
        // Rotate about the fence middle, then re-seat it flush against its wall.
        let long_dir = Vec2::from_angle(base + angle);
        let middle = Vec2::new(wall_x, y) + Vec2::from_angle(base) * (0.5 * LONG_FENCE) + jitter;
        let mut long = fence(middle - long_dir * (0.5 * LONG_FENCE), base + angle, LONG_FENCE);
        let bb = long.bbox();
        let shift = Vec2::new(if from_west { -bb.min.x } else { WORLD_SIZE - bb.max.x }, 0.0);
        long = long.translated(shift);
        obstacles.push(long);

        if !gapped.contains(&layer) {
            let joint = middle + shift + long_dir * (0.5 * LONG_FENCE);
            let short_dir = Vec2::from_angle(base + short_angle);
            let start = joint - short_dir * (FENCE_OVERLAP + slide.abs());
            obstacles.push(fence(start, base + short_angle, SHORT_FENCE));
        }
    }
    let ws = Workspace {
        name: format!("layered_{n_layers}x{gaps}"),
        bounds: Rect::from_size(WORLD_SIZE, WORLD_SIZE),
        obstacles,
        goal_center: Vec2::new(WORLD_SIZE * 0.5, 490.0),
        goal_radius: GOAL_RADIUS,
        start: Vec2::new(WORLD_SIZE * 0.5, 50.0),
    };
    ws.validate()?;
    Ok(ws)
}

/// Initial sheep and shepherd positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub sheep_positions: Vec<Vec2>,
    pub shepherd_position: Vec2,
    /// 0 = east, counting counter-clockwise in 45 degree steps.
    pub shepherd_octant: u8,
    /// Jittered nominal group center.
    pub group_center: Vec2,
}

impl Placement {
    pub fn sheep_states(&self) -> Vec<AgentState> {
        self.sheep_positions.iter().map(|p| AgentState::at(*p)).collect()
    }

    pub fn shepherd_state(&self) -> AgentState {
        AgentState::at(self.shepherd_position)
    }
}

pub fn octant_direction(octant: u8) -> Vec2 {
    Vec2::from_angle(octant as f64 * FRAC_PI_4)
}

/// Places a group around `nominal_center` with the shepherd in `octant`.
pub fn place_group(
    workspace: &Workspace,
    nominal_center: Vec2,
    octant: u8,
    n_sheep: usize,
    jitter: f64,
    rng: &mut impl Rng,
) -> Result<Placement> {
    if n_sheep == 0 {
        return Err(Error::InvalidArgument("a placement needs at least one sheep".into()));
    }
    let b = workspace.bounds;
    let inset = |p: Vec2| Vec2::new(p.x.clamp(b.min.x + 1.0, b.max.x - 1.0), p.y.clamp(b.min.y + 1.0, b.max.y - 1.0));
    for _ in 0..PLACEMENT_RETRIES {
        let center = nominal_center + Vec2::new(clipped_noise(rng, jitter), clipped_noise(rng, jitter));
        let shepherd = inset(
            nominal_center
                + octant_direction(octant) * SHEPHERD_OFFSET
                + Vec2::new(clipped_noise(rng, jitter), clipped_noise(rng, jitter)),
        );
        let sheep: Vec<Vec2> = (0..n_sheep)
            .map(|_| {
                let r = SPAWN_RADIUS * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..2.0 * PI);
                center + Vec2::from_angle(a) * r
            })
            .collect();
        if workspace.is_free(shepherd) && sheep.iter().all(|p| workspace.is_free(*p)) {
            return Ok(Placement {
                sheep_positions: sheep,
                shepherd_position: shepherd,
                shepherd_octant: octant,
                group_center: center,
            });
        }
    }
    Err(Error::NoFreeSpace(format!("no free placement near {nominal_center:?}")))
}

/// Seeded placement for a generated workspace. Random-grid worlds use the
/// far cell of the goal (or a random corner for a central goal); the other
/// kinds start from the workspace's start anchor.
pub fn sample_placement(workspace: &Workspace, seed: u64, kind: EnvKind, n_sheep: usize, noise: &Noise) -> Result<Placement> {
    let mut r = rng::seeded(rng::sub_seed(seed, 300));
    let octant = r.random_range(0..8u8);
    let nominal = match kind {
        EnvKind::RandomGrid => {
            let goal = GoalCell::ALL
                .iter()
                .copied()
                .find(|g| cell_center(g.cell()) == workspace.goal_center);
            match goal {
                Some(g) => {
                    let cells = g.group_cells();
                    cell_center(cells[r.random_range(0..cells.len())])
                }
                None => workspace.start,
            }
        }
        _ => workspace.start,
    };
    place_group(workspace, nominal, octant, n_sheep, noise.placement_jitter, &mut r)
}

/// The 12 goal/group cell pairs crossed with 8 shepherd octants.
pub fn nominal_placements() -> Vec<(GoalCell, (i32, i32), u8)> {
    let mut out = Vec::new();
    for g in GoalCell::ALL {
        for cell in g.group_cells() {
            for octant in 0..8 {
                out.push((g, cell, octant));
            }
        }
    }
    out
}
