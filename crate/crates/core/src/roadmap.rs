//! Probabilistic roadmap over the free space: one third uniform samples,
//! two thirds retracted onto the medial axis, queried with Dijkstra for
//! geodesic distances and sub-goals.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::rng;
use crate::workspace::{Feature, Workspace};

/// Tolerance (px) on the equidistance of a retracted sample.
pub const MEDIAL_TOLERANCE: f64 = 0.5;
pub const MEDIAL_MAX_ITERS: usize = 64;
/// Roadmap nodes tried, nearest first, when attaching a query endpoint.
pub const ENDPOINT_CANDIDATES: usize = 10;
pub const DEFAULT_SAMPLES: usize = 300;
pub const DEFAULT_NEIGHBORS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roadmap {
    pub nodes: Vec<Vec2>,
    pub edges: Vec<(usize, usize, f64)>,
    /// `(uniform, medial)` node counts; uniform nodes come first.
    pub source_counts: (usize, usize),
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicResult {
    pub length: f64,
    pub waypoints: Vec<Vec2>,
    pub sub_goal: Vec2,
}

impl GeodesicResult {
    fn from_waypoints(waypoints: Vec<Vec2>) -> Self {
        let length = path_length(&waypoints);
        let sub_goal = *waypoints.get(1).unwrap_or(&waypoints[0]);
        Self {
            length,
            waypoints,
            sub_goal,
        }
    }
}

pub fn path_length(waypoints: &[Vec2]) -> f64 {
    waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
}

fn two_nearest(features: &mut [(Feature, f64, Vec2)]) -> ((Feature, f64, Vec2), (Feature, f64, Vec2)) {
    features.sort_by(|a, b| a.1.total_cmp(&b.1));
    (features[0], features[1])
}

/// Pushes a free point away from its nearest feature until it sits on the
/// boundary between that feature's region and another's.
pub fn retract_to_medial_axis(p: Vec2, workspace: &Workspace) -> Result<Vec2> {
    if !workspace.is_free(p) {
        return Err(Error::RetractionFailed(p));
    }
    let mut features = workspace.feature_distances(p);
    let ((f1, d1, c1), (_, d2, _)) = two_nearest(&mut features);
    if d2 - d1 <= MEDIAL_TOLERANCE {
        return Ok(p);
    }
    let dir = (p - c1).normalized();
    if dir == Vec2::ZERO {
        return Err(Error::RetractionFailed(p));
    }
    let nearest_is_f1 = |t: f64| {
        let q = p + dir * t;
        if !workspace.bounds.contains(q) {
            return false;
        }
        let mut fs = workspace.feature_distances(q);
        two_nearest(&mut fs).0 .0 == f1
    };

    let mut iters = 0;
    let mut lo = 0.0;
    let mut step = MEDIAL_TOLERANCE.max(0.5 * d1);
    let mut hi = loop {
        iters += 1;
        if iters > MEDIAL_MAX_ITERS {
            return Err(Error::RetractionFailed(p));
        }
        let t = lo + step;
        if nearest_is_f1(t) {
            lo = t;
            step *= 2.0;
        } else {
            break t;
        }
    };
    while hi - lo > MEDIAL_TOLERANCE {
        iters += 1;
        if iters > MEDIAL_MAX_ITERS {
            return Err(Error::RetractionFailed(p));
        }
        let mid = 0.5 * (lo + hi);
        if nearest_is_f1(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = p + dir * (0.5 * (lo + hi));
    if !workspace.is_free(q) {
        return Err(Error::RetractionFailed(p));
    }
    let mut fs = workspace.feature_distances(q);
    let ((_, e1, _), (_, e2, _)) = two_nearest(&mut fs);
    if e2 - e1 > MEDIAL_TOLERANCE {
        return Err(Error::RetractionFailed(p));
    }
    Ok(q)
}

fn sample_free(workspace: &Workspace, rng: &mut impl Rng) -> Vec2 {
    let b = workspace.bounds;
    Vec2::new(
        rng.random_range(b.min.x..b.max.x),
        rng.random_range(b.min.y..b.max.y),
    )
}

/// Node indices sorted by distance to `p`, nearest first.
fn nearest_nodes(nodes: &[Vec2], p: Vec2, limit: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|&a, &b| p.distance(nodes[a]).total_cmp(&p.distance(nodes[b])).then(a.cmp(&b)));
    idx.truncate(limit);
    idx
}

impl Roadmap {
    pub fn build(workspace: &Workspace, n_samples: usize, k_neighbors: usize, seed: u64) -> Result<Self> {
        if n_samples < 3 {
            return Err(Error::InvalidArgument("a roadmap needs at least 3 samples".into()));
        }
        let mut rng = rng::seeded(seed);
        let n_uniform = n_samples.div_ceil(3);
        let n_medial = n_samples - n_uniform;
        let max_attempts = 2000 * n_samples;

        let mut nodes = Vec::with_capacity(n_samples);
        let mut attempts = 0;
        while nodes.len() < n_uniform {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::NoFreeSpace(format!(
                    "placed {} of {n_uniform} uniform samples",
                    nodes.len()
                )));
            }
            let p = sample_free(workspace, &mut rng);
            if workspace.is_free(p) {
                nodes.push(p);
            }
        }
        attempts = 0;
        while nodes.len() < n_samples {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::NoFreeSpace(format!(
                    "placed {} of {n_medial} medial samples",
                    nodes.len() - n_uniform
                )));
            }
            let p = sample_free(workspace, &mut rng);
            if !workspace.is_free(p) {
                continue;
            }
            if let Ok(q) = retract_to_medial_axis(p, workspace) {
                nodes.push(q);
            }
        }

        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for i in 0..nodes.len() {
            let mut others = nearest_nodes(&nodes, nodes[i], k_neighbors + 1);
            others.retain(|&j| j != i);
            others.truncate(k_neighbors);
            for j in others {
                let key = (i.min(j), i.max(j));
                if seen.contains(&key) || nodes[i] == nodes[j] {
                    continue;
                }
                if workspace.segment_clear(nodes[i], nodes[j]) {
                    seen.insert(key);
                    edges.push((key.0, key.1, nodes[i].distance(nodes[j])));
                }
            }
        }
        bridge_components(workspace, &nodes, &mut edges);
        Ok(Self::from_parts(nodes, edges, (n_uniform, n_medial)))
    }

    pub fn from_parts(nodes: Vec<Vec2>, edges: Vec<(usize, usize, f64)>, source_counts: (usize, usize)) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(i, j, len) in &edges {
            adjacency[i].push((j, len));
            adjacency[j].push((i, len));
        }
        Self {
            nodes,
            edges,
            source_counts,
            adjacency,
        }
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// Number of connected components of the node graph.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        let mut count = 0;
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for &(j, _) in &self.adjacency[i] {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }

    /// Roadmap nodes visible from `p`, among its nearest candidates.
    fn attach(&self, workspace: &Workspace, p: Vec2) -> Result<Vec<(usize, f64)>> {
        let near = nearest_nodes(&self.nodes, p, ENDPOINT_CANDIDATES);
        let links: Vec<_> = near
            .iter()
            .filter(|&&i| workspace.segment_clear(p, self.nodes[i]))
            .map(|&i| (i, p.distance(self.nodes[i])))
            .collect();
        if links.is_empty() {
            let nearest = near.first().map(|&i| self.nodes[i]);
            return Err(Error::Disconnected {
                point: p,
                nearest,
                distance: nearest.map_or(f64::INFINITY, |q| p.distance(q)),
            });
        }
        Ok(links)
    }

    /// Obstacle-respecting path from `from` to `to`.
    pub fn geodesic_path(&self, workspace: &Workspace, from: Vec2, to: Vec2) -> Result<GeodesicResult> {
        if from == to {
            return Ok(GeodesicResult {
                length: 0.0,
                waypoints: vec![from],
                sub_goal: to,
            });
        }
        if workspace.segment_clear(from, to) {
            return Ok(GeodesicResult::from_waypoints(vec![from, to]));
        }
        let source_links = self.attach(workspace, from)?;
        let target_links = self.attach(workspace, to)?;

        // Virtual vertices: n = source, n + 1 = target.
        let n = self.nodes.len();
        let (source, target) = (n, n + 1);
        let mut exit_cost = vec![None; n];
        for &(i, d) in &target_links {
            exit_cost[i] = Some(d);
        }
        let pos = |i: usize| match i {
            i if i == source => from,
            i if i == target => to,
            i => self.nodes[i],
        };
        let mut dist = vec![f64::INFINITY; n + 2];
        let mut prev = vec![usize::MAX; n + 2];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if u == target {
                break;
            }
            // Any-angle relaxation: skip `u` when its parent sees `v`.
            let grand = prev[u];
            let mut relax = |v: usize, w: f64, heap: &mut BinaryHeap<Entry>| {
                let (nd, via) = if grand != usize::MAX && workspace.segment_clear(pos(grand), pos(v)) {
                    (dist[grand] + pos(grand).distance(pos(v)), grand)
                } else {
                    (d + w, u)
                };
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = via;
                    heap.push(Entry(nd, v));
                }
            };
            if u == source {
                for &(v, w) in &source_links {
                    relax(v, w, &mut heap);
                }
            } else {
                for &(v, w) in &self.adjacency[u] {
                    relax(v, w, &mut heap);
                }
                if let Some(w) = exit_cost[u] {
                    relax(target, w, &mut heap);
                }
            }
        }
        if !dist[target].is_finite() {
            return Err(Error::NoPath { from, to });
        }
        let mut waypoints = vec![to];
        let mut u = prev[target];
        while u != source {
            waypoints.push(self.nodes[u]);
            u = prev[u];
        }
        waypoints.push(from);
        waypoints.reverse();
        Ok(GeodesicResult::from_waypoints(tighten(workspace, &waypoints)))
    }

    pub fn to_json(&self, workspace: &Workspace) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            workspace: &'a Workspace,
            roadmap: &'a Roadmap,
        }
        Ok(serde_json::to_string_pretty(&Dump {
            workspace,
            roadmap: self,
        })?)
    }

    pub fn save(&self, workspace: &Workspace, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json(workspace)?)?;
        Ok(())
    }
}

/// Greedy shortcutting: from each kept waypoint jump to the farthest later
/// waypoint it can see.
pub fn shortcut(workspace: &Workspace, waypoints: &[Vec2]) -> Vec<Vec2> {
    if waypoints.len() <= 2 {
        return waypoints.to_vec();
    }
    let mut out = vec![waypoints[0]];
    let mut i = 0;
    while i + 1 < waypoints.len() {
        let mut j = waypoints.len() - 1;
        while j > i + 1 && !workspace.segment_clear(waypoints[i], waypoints[j]) {
            j -= 1;
        }
        out.push(waypoints[j]);
        i = j;
    }
    out
}

/// Joins separate components through their closest mutually visible node
/// pair, until the graph is connected or no visible pair remains.
fn bridge_components(workspace: &Workspace, nodes: &[Vec2], edges: &mut Vec<(usize, usize, f64)>) {
    let n = nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &(i, j, _) in edges.iter() {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        parent[a] = b;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if find(&mut parent, i) != find(&mut parent, j) {
                pairs.push((nodes[i].distance(nodes[j]), i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (d, i, j) in pairs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b && d > 0.0 && workspace.segment_clear(nodes[i], nodes[j]) {
            parent[a] = b;
            edges.push((i, j, d));
        }
    }
}

/// Longest segment kept while relaxing a path.
const TIGHTEN_SPACING: f64 = 8.0;
const TIGHTEN_ROUNDS: usize = 4;
const TIGHTEN_SWEEPS: usize = 12;
const TIGHTEN_BISECTIONS: usize = 16;

/// Pulls a roadmap path taut around obstacle corners. Shortcuts, then
/// repeatedly moves each interior vertex toward the midpoint of its
/// neighbors as far as both adjacent segments stay clear.
pub fn tighten(workspace: &Workspace, waypoints: &[Vec2]) -> Vec<Vec2> {
    let mut path = shortcut(workspace, waypoints);
    for _ in 0..TIGHTEN_ROUNDS {
        if path.len() <= 2 {
            break;
        }
        let before = path_length(&path);
        path = densify(&path, TIGHTEN_SPACING);
        for _ in 0..TIGHTEN_SWEEPS {
            for i in 1..path.len() - 1 {
                let (a, v, b) = (path[i - 1], path[i], path[i + 1]);
                let target = (a + b) * 0.5;
                let clear = |t: f64| {
                    let p = v + (target - v) * t;
                    workspace.segment_clear(a, p) && workspace.segment_clear(p, b)
                };
                if clear(1.0) {
                    path[i] = target;
                    continue;
                }
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..TIGHTEN_BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    if clear(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                path[i] = v + (target - v) * lo;
            }
        }
        path = shortcut(workspace, &path);
        if before - path_length(&path) < 1e-6 {
            break;
        }
    }
    path
}

/// Splits segments longer than `spacing` into equal pieces.
fn densify(path: &[Vec2], spacing: f64) -> Vec<Vec2> {
    let mut out = vec![path[0]];
    for w in path.windows(2) {
        let pieces = (w[0].distance(w[1]) / spacing).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(w[0] + (w[1] - w[0]) * (k as f64 / pieces as f64));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then index for a deterministic order.
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-target shortest-path tree toward a fixed goal, so per-step
/// queries avoid a full graph search.
#[derive(Debug, Clone)]
pub struct GoalField {
    goal: Vec2,
    /// Graph distance from each node to the goal.
    dist: Vec<f64>,
    /// Next node toward the goal; `None` when the node links straight to it.
    next: Vec<Option<usize>>,
}

impl GoalField {
    pub fn new(roadmap: &Roadmap, workspace: &Workspace, goal: Vec2) -> Result<Self> {
        let n = roadmap.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut next = vec![None; n];
        let mut heap = BinaryHeap::new();
        for (i, d) in roadmap.attach(workspace, goal)? {
            dist[i] = d;
            heap.push(Entry(d, i));
        }
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in roadmap.neighbors(u) {
                // Any-angle relaxation: link past `u` when its successor is visible.
                let (nd, via) = match next[u] {
                    Some(g) if workspace.segment_clear(roadmap.nodes[v], roadmap.nodes[g]) => {
                        (dist[g] + roadmap.nodes[v].distance(roadmap.nodes[g]), Some(g))
                    }
                    None if workspace.segment_clear(roadmap.nodes[v], goal) => (roadmap.nodes[v].distance(goal), None),
                    _ => (d + w, Some(u)),
                };
                if nd < dist[v] {
                    dist[v] = nd;
                    next[v] = via;
                    heap.push(Entry(nd, v));
                }
            }
        }
        Ok(Self { goal, dist, next })
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    pub fn query(&self, roadmap: &Roadmap, workspace: &Workspace, from: Vec2) -> Result<GeodesicResult> {
        if from == self.goal {
            return Ok(GeodesicResult {
                length: 0.0,
                waypoints: vec![from],
                sub_goal: from,
            });
        }
        if workspace.segment_clear(from, self.goal) {
            return Ok(GeodesicResult::from_waypoints(vec![from, self.goal]));
        }
        let links = roadmap.attach(workspace, from)?;
        let (first, _) = links
            .iter()
            .map(|&(i, d)| (i, d + self.dist[i]))
            .filter(|(_, total)| total.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .ok_or(Error::NoPath { from, to: self.goal })?;
        let mut waypoints = vec![from];
        let mut u = Some(first);
        while let Some(i) = u {
            waypoints.push(roadmap.nodes[i]);
            u = self.next[i];
        }
        waypoints.push(self.goal);
        Ok(GeodesicResult::from_waypoints(tighten(workspace, &waypoints)))
    }
}
