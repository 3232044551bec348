//! Egocentric 84x84 class-coded frames centered on the shepherd, with
//! off-frame projection of the goal and sheep, and the frame stack fed to
//! the learner.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::workspace::Workspace;

pub const FRAME_SIZE: usize = 84;
pub const FRAME_PIXELS: usize = FRAME_SIZE * FRAME_SIZE;
/// Pixel index of the shepherd along both axes.
pub const CENTER: i64 = 42;
/// Distance from the center to the projection boundary.
pub const HALF_EXTENT: f64 = 41.0;
pub const STACK_DEPTH: usize = 4;

pub const BACKGROUND: u8 = 0;
pub const OBSTACLE: u8 = 64;
pub const SHEEP: u8 = 128;
pub const GOAL: u8 = 192;
pub const SHEPHERD: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationMode {
    #[default]
    Circle,
    Pixel,
}

/// One row-major 84x84 frame; row 0 is the northern edge.
#[derive(Clone, PartialEq, Eq)]
pub struct ObservationFrame {
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ObservationFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ObservationFrame({} px)", self.pixels.len())
    }
}

impl Default for ObservationFrame {
    fn default() -> Self {
        Self {
            pixels: vec![BACKGROUND; FRAME_PIXELS],
        }
    }
}

impl ObservationFrame {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != FRAME_PIXELS {
            return Err(Error::Shape {
                expected: FRAME_PIXELS,
                got: bytes.len(),
            });
        }
        Ok(Self { pixels: bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * FRAME_SIZE + col]
    }

    fn set(&mut self, row: i64, col: i64, code: u8) {
        if (0..FRAME_SIZE as i64).contains(&row) && (0..FRAME_SIZE as i64).contains(&col) {
            self.pixels[row as usize * FRAME_SIZE + col as usize] = code;
        }
    }

    /// Sets the pixel at an integer offset from the shepherd.
    fn set_offset(&mut self, dx: i64, dy: i64, code: u8) {
        self.set(CENTER - dy, CENTER + dx, code);
    }

    fn fill_block(&mut self, dx: i64, dy: i64, code: u8) {
        for oy in -1..=1 {
            for ox in -1..=1 {
                self.set_offset(dx + ox, dy + oy, code);
            }
        }
    }

    /// `(row, col)` of every pixel holding `code`.
    pub fn positions_of(&self, code: u8) -> Vec<(usize, usize)> {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == code)
            .map(|(i, _)| (i / FRAME_SIZE, i % FRAME_SIZE))
            .collect()
    }

    pub fn count(&self, code: u8) -> usize {
        self.pixels.iter().filter(|c| **c == code).count()
    }

    /// Binary PGM (P5) encoding.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{FRAME_SIZE} {FRAME_SIZE}\n255\n").into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let header = format!("P5\n{FRAME_SIZE} {FRAME_SIZE}\n255\n");
        let body = bytes
            .strip_prefix(header.as_bytes())
            .ok_or_else(|| Error::InvalidArgument("not an 84x84 8-bit PGM".into()))?;
        Self::from_bytes(body.to_vec())
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

/// Integer pixel offset of a relative position, if it falls in the frame.
fn visible_offset(rel: Vec2) -> Option<(i64, i64)> {
    let dx = rel.x.round() as i64;
    let dy = rel.y.round() as i64;
    let in_frame = (-CENTER..FRAME_SIZE as i64 - CENTER).contains(&dx) && (-(FRAME_SIZE as i64 - CENTER - 1)..=CENTER).contains(&dy);
    in_frame.then_some((dx, dy))
}

/// Where the segment from `center` toward an outside `target` leaves the
/// square window of half-width `half_extent`.
pub fn project_to_boundary(center: Vec2, target: Vec2, half_extent: f64) -> Result<Vec2> {
    let d = target - center;
    let m = d.x.abs().max(d.y.abs());
    if m <= half_extent {
        return Err(Error::InvalidArgument(format!("{target:?} lies inside the window")));
    }
    let mut p = d * (half_extent / m);
    // Pin the dominant axis exactly onto the boundary.
    if d.x.abs() >= d.y.abs() {
        p.x = half_extent.copysign(d.x);
    } else {
        p.y = half_extent.copysign(d.y);
    }
    Ok(center + p)
}

/// Pixel offset for a point: its own pixel when visible, else its
/// projection on the window boundary.
fn marker_offset(rel: Vec2) -> (i64, i64) {
    match visible_offset(rel) {
        Some(o) => o,
        None => {
            let p = project_to_boundary(Vec2::ZERO, rel, HALF_EXTENT).expect("point outside the frame");
            (p.x.round() as i64, p.y.round() as i64)
        }
    }
}

/// Membership test for the midpoint-circle ring of integer radius `r`
/// centered at the origin.
pub fn on_ring(dx: i64, dy: i64, r: i64) -> bool {
    let (a, b) = {
        let (x, y) = (dx.abs(), dy.abs());
        (x.min(y), x.max(y))
    };
    if r == 0 {
        return a == 0 && b == 0;
    }
    a * a + b * b - b < r * r && r * r <= a * a + b * b + b
}

/// Everything a frame depends on.
pub struct SceneView<'a> {
    pub workspace: &'a Workspace,
    pub sheep: &'a [Vec2],
    pub shepherd: Vec2,
}

pub fn render_frame(scene: &SceneView<'_>, mode: RepresentationMode) -> ObservationFrame {
    let mut frame = ObservationFrame::default();
    let s = scene.shepherd;
    let lo = -CENTER;
    let hi = FRAME_SIZE as i64 - CENTER - 1;

    // Outside the world bounds reads as obstacle.
    let rel_min = scene.workspace.bounds.min - s;
    let rel_max = scene.workspace.bounds.max - s;
    for dy in -hi..=CENTER {
        for dx in lo..=hi {
            let (x, y) = (dx as f64, dy as f64);
            if x < rel_min.x || x > rel_max.x || y < rel_min.y || y > rel_max.y {
                frame.set_offset(dx, dy, OBSTACLE);
            }
        }
    }
    for poly in &scene.workspace.obstacles {
        let rel = poly.translated(-s);
        let bb = rel.bbox();
        let x0 = (bb.min.x.floor() as i64).max(lo);
        let x1 = (bb.max.x.ceil() as i64).min(hi);
        let y0 = (bb.min.y.floor() as i64).max(-hi);
        let y1 = (bb.max.y.ceil() as i64).min(CENTER);
        for dy in y0..=y1 {
            for dx in x0..=x1 {
                if rel.contains(Vec2::new(dx as f64, dy as f64)) {
                    frame.set_offset(dx, dy, OBSTACLE);
                }
            }
        }
    }

    if !scene.sheep.is_empty() {
        match mode {
            RepresentationMode::Pixel => {
                for p in scene.sheep {
                    let rel = *p - s;
                    match visible_offset(rel) {
                        Some((dx, dy)) => frame.fill_block(dx, dy, SHEEP),
                        None => {
                            let (dx, dy) = marker_offset(rel);
                            frame.set_offset(dx, dy, SHEEP);
                        }
                    }
                }
            }
            RepresentationMode::Circle => draw_group_circle(&mut frame, scene.sheep, s),
        }
    }

    let (gx, gy) = marker_offset(scene.workspace.goal_center - s);
    frame.set_offset(gx, gy, GOAL);

    frame.fill_block(0, 0, SHEPHERD);
    frame
}

fn draw_group_circle(frame: &mut ObservationFrame, sheep: &[Vec2], shepherd: Vec2) {
    let n = sheep.len() as f64;
    let center = sheep.iter().copied().sum::<Vec2>() / n;
    let radius = sheep.iter().map(|p| p.distance(center)).fold(0.0, f64::max);
    let rel = center - shepherd;
    let (cx, cy) = (rel.x.round() as i64, rel.y.round() as i64);
    let r = radius.round() as i64;

    let mut drawn = false;
    if r < 2 {
        // A tight group reads like a single sheep block.
        for oy in -1..=1 {
            for ox in -1..=1 {
                if visible_offset(Vec2::new((cx + ox) as f64, (cy + oy) as f64)).is_some() {
                    frame.set_offset(cx + ox, cy + oy, SHEEP);
                    drawn = true;
                }
            }
        }
    } else {
        let lo = -CENTER;
        let hi = FRAME_SIZE as i64 - CENTER - 1;
        for dy in (cy - r).max(-hi)..=(cy + r).min(CENTER) {
            for dx in (cx - r).max(lo)..=(cx + r).min(hi) {
                if on_ring(dx - cx, dy - cy, r) {
                    frame.set_offset(dx, dy, SHEEP);
                    drawn = true;
                }
            }
        }
    }
    if !drawn {
        let (dx, dy) = marker_offset(rel);
        frame.set_offset(dx, dy, SHEEP);
    }
}

/// The last `depth` frames, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStack {
    frames: VecDeque<Arc<ObservationFrame>>,
    depth: usize,
}

impl ObservationStack {
    /// A stack filled with `depth` copies of the first frame.
    pub fn reset(frame: ObservationFrame, depth: usize) -> Self {
        let first = Arc::new(frame);
        Self {
            frames: std::iter::repeat_n(first, depth).collect(),
            depth,
        }
    }

    pub fn push(&mut self, frame: ObservationFrame) {
        self.frames.pop_front();
        self.frames.push_back(Arc::new(frame));
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn frames(&self) -> impl Iterator<Item = &ObservationFrame> {
        self.frames.iter().map(|f| f.as_ref())
    }

    pub fn newest(&self) -> &ObservationFrame {
        self.frames.back().expect("stack is never empty")
    }

    /// Row-major bytes of every frame, oldest first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.depth * FRAME_PIXELS);
        for f in &self.frames {
            out.extend_from_slice(f.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], depth: usize) -> Result<Self> {
        if bytes.len() != depth * FRAME_PIXELS {
            return Err(Error::Shape {
                expected: depth * FRAME_PIXELS,
                got: bytes.len(),
            });
        }
        let frames = bytes
            .chunks(FRAME_PIXELS)
            .map(|c| Arc::new(ObservationFrame { pixels: c.to_vec() }))
            .collect();
        Ok(Self { frames, depth })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> Workspace {
        Workspace::empty(1000.0, 1000.0, Vec2::new(510.0, 500.0), 30.0, Vec2::new(100.0, 100.0))
    }

    fn scene_frame(ws: &Workspace, sheep: &[Vec2], shepherd: Vec2, mode: RepresentationMode) -> ObservationFrame {
        render_frame(
            &SceneView {
                workspace: ws,
                sheep,
                shepherd,
            },
            mode,
        )
    }

    #[test]
    fn goal_inside_window_is_translated() {
        let ws = world();
        let f = scene_frame(&ws, &[], Vec2::new(500.0, 500.0), RepresentationMode::Circle);
        assert_eq!(f.positions_of(GOAL), vec![(42, 52)]);
    }

    #[test]
    fn goal_far_east_lands_on_right_edge() {
        let mut ws = world();
        ws.goal_center = Vec2::new(1000.0, 500.0);
        let f = scene_frame(&ws, &[], Vec2::new(500.0, 500.0), RepresentationMode::Circle);
        assert_eq!(f.positions_of(GOAL), vec![(42, 83)]);
    }

    #[test]
    fn shepherd_block_at_center() {
        let f = scene_frame(&world(), &[Vec2::new(505.0, 505.0)], Vec2::new(500.0, 500.0), RepresentationMode::Pixel);
        for r in 41..=43 {
            for c in 41..=43 {
                assert_eq!(f.get(r, c), SHEPHERD);
            }
        }
        assert_eq!(f.count(SHEPHERD), 9);
    }

    #[test]
    fn projection_axis_and_diagonal() {
        let c = Vec2::new(10.0, 20.0);
        assert_eq!(project_to_boundary(c, Vec2::new(10.0, 500.0), 41.0).unwrap(), Vec2::new(10.0, 61.0));
        assert_eq!(project_to_boundary(c, Vec2::new(110.0, 120.0), 41.0).unwrap(), Vec2::new(51.0, 61.0));
        assert!(project_to_boundary(c, Vec2::new(11.0, 21.0), 41.0).is_err());
    }

    #[test]
    fn world_edge_reads_as_obstacle() {
        let ws = world();
        let f = scene_frame(&ws, &[], Vec2::new(10.0, 500.0), RepresentationMode::Circle);
        // 10 px from the west wall: columns left of x = 0 are obstacle-coded.
        assert_eq!(f.get(42, 31), OBSTACLE);
        assert_eq!(f.get(42, 32), BACKGROUND);
    }

    #[test]
    fn pixel_mode_draws_blocks_and_projections() {
        let ws = world();
        let sheep = [Vec2::new(510.0, 500.0), Vec2::new(900.0, 500.0)];
        let f = scene_frame(&ws, &sheep, Vec2::new(500.0, 500.0), RepresentationMode::Pixel);
        assert_eq!(f.get(42, 52), GOAL);
        // Block around (42, 52) minus the goal pixel, plus one boundary marker.
        assert_eq!(f.count(SHEEP), 8 + 1);
        assert_eq!(f.get(42, 83), SHEEP);
    }

    #[test]
    fn stack_warmup_and_push() {
        let mut a = ObservationFrame::default();
        a.set(0, 0, 1);
        let mut b = ObservationFrame::default();
        b.set(0, 0, 2);
        let mut st = ObservationStack::reset(a.clone(), 4);
        assert!(st.frames().all(|f| *f == a));
        st.push(b.clone());
        let v: Vec<_> = st.frames().cloned().collect();
        assert_eq!(v, vec![a.clone(), a.clone(), a, b]);
        let back = ObservationStack::from_bytes(&st.to_bytes(), 4).unwrap();
        assert_eq!(back, st);
    }

    #[test]
    fn pgm_roundtrip() {
        let f = scene_frame(&world(), &[Vec2::new(520.0, 480.0)], Vec2::new(500.0, 500.0), RepresentationMode::Pixel);
        assert_eq!(ObservationFrame::from_pgm(&f.to_pgm()).unwrap(), f);
    }
}
