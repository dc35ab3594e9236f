//! Occupancy grids over the workspace.
//!
//! Cells are classified by their center point against obstacles dilated by
//! the moving body's radius: fixed obstacles first, then movable objects,
//! otherwise free. The grid backs both the blocking analysis (which objects
//! must be moved before a goal becomes reachable) and the distance field
//! that guides local navigation around non-convex obstacles.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{vec2, Vec2};
use crate::map::MapSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Fixed,
    /// Bit `i` set when object `i` covers the cell.
    Object(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin: Vec2,
    pub resolution: f64,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<Cell>,
}

pub type Idx = (usize, usize);

impl Grid {
    pub fn new(origin: Vec2, resolution: f64, nx: usize, ny: usize, fill: Cell) -> Self {
        Self { origin, resolution, nx, ny, cells: vec![fill; nx * ny] }
    }

    /// Rasterizes `map` for a disk of radius `body` with an extra `margin`.
    pub fn rasterize(map: &MapSnapshot, body: f64, margin: f64, resolution: f64) -> Self {
        let (lo, hi) = map.workspace.bounding_box();
        let nx = ((hi.x - lo.x) / resolution).ceil().max(1.0) as usize;
        let ny = ((hi.y - lo.y) / resolution).ceil().max(1.0) as usize;
        let mut g = Self::new(lo, resolution, nx, ny, Cell::Free);
        let reach = body + margin;
        for j in 0..ny {
            for i in 0..nx {
                let c = g.center((i, j));
                let wall_ok = map.workspace.contains(c) && map.workspace.boundary_distance(c) >= reach;
                let cell = if !wall_ok || map.obstacles.iter().any(|o| o.distance(c) < reach) {
                    Cell::Fixed
                } else {
                    let mask = map
                        .objects
                        .iter()
                        .enumerate()
                        .filter_map(|(k, d)| d.map(|d| (k, d)))
                        .filter(|(_, d)| (c - d.center).norm() < d.radius + reach)
                        .fold(0u64, |m, (k, _)| m | (1 << k));
                    if mask == 0 {
                        Cell::Free
                    } else {
                        Cell::Object(mask)
                    }
                };
                g.set((i, j), cell);
            }
        }
        g
    }

    pub fn get(&self, (i, j): Idx) -> Cell {
        self.cells[j * self.nx + i]
    }

    pub fn set(&mut self, (i, j): Idx, c: Cell) {
        self.cells[j * self.nx + i] = c;
    }

    pub fn center(&self, (i, j): Idx) -> Vec2 {
        self.origin + vec2((i as f64 + 0.5) * self.resolution, (j as f64 + 0.5) * self.resolution)
    }

    pub fn index_of(&self, p: Vec2) -> Option<Idx> {
        let d = (p - self.origin) / self.resolution;
        if d.x < 0.0 || d.y < 0.0 {
            return None;
        }
        let (i, j) = (d.x.floor() as usize, d.y.floor() as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn neighbors4(&self, (i, j): Idx) -> impl Iterator<Item = Idx> + '_ {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].into_iter().filter_map(move |(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && b >= 0 && a < nx && b < ny).then_some((a as usize, b as usize))
        })
    }

    fn flat(&self, (i, j): Idx) -> usize {
        j * self.nx + i
    }

    fn unflat(&self, k: usize) -> Idx {
        (k % self.nx, k / self.nx)
    }

    /// 4-connected component labels of the cells accepted by `keep`.
    pub fn components(&self, keep: impl Fn(Cell) -> bool) -> (Vec<Option<usize>>, usize) {
        let mut label = vec![None; self.cells.len()];
        let mut count = 0;
        for start in 0..self.cells.len() {
            if label[start].is_some() || !keep(self.cells[start]) {
                continue;
            }
            label[start] = Some(count);
            let mut queue = VecDeque::from([start]);
            while let Some(k) = queue.pop_front() {
                for n in self.neighbors4(self.unflat(k)) {
                    let f = self.flat(n);
                    if label[f].is_none() && keep(self.cells[f]) {
                        label[f] = Some(count);
                        queue.push_back(f);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    /// Nearest cell (Chebyshev ring search up to `rings`) accepted by `keep`.
    pub fn snap(&self, idx: Idx, rings: usize, keep: impl Fn(Cell) -> bool) -> Option<Idx> {
        if keep(self.get(idx)) {
            return Some(idx);
        }
        let p = self.center(idx);
        for r in 1..=rings as isize {
            let mut best: Option<(f64, Idx)> = None;
            for dj in -r..=r {
                for di in -r..=r {
                    if di.abs() != r && dj.abs() != r {
                        continue;
                    }
                    let (a, b) = (idx.0 as isize + di, idx.1 as isize + dj);
                    if a < 0 || b < 0 || a >= self.nx as isize || b >= self.ny as isize {
                        continue;
                    }
                    let n = (a as usize, b as usize);
                    if keep(self.get(n)) {
                        let d = (self.center(n) - p).norm();
                        if best.is_none_or(|(bd, bn)| (d, n) < (bd, bn)) {
                            best = Some((d, n));
                        }
                    }
                }
            }
            if let Some((_, n)) = best {
                return Some(n);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("start position is in collision")]
    StartInCollision,
    #[error("goal position lies outside the workspace grid")]
    GoalOutsideGrid,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TopologyDiagnostics {
    pub free_components: usize,
    pub object_clusters: usize,
    /// Clusters touching more than two free components, which the
    /// backtracking analysis assumes never happens.
    pub overconnected_clusters: Vec<usize>,
    /// Free cells in the start's component (the enclosing freespace).
    pub start_component_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub is_feasible: bool,
    /// Objects to move away, closest to the start first.
    pub blocking: Vec<usize>,
    /// Cells of the object clusters on the backtracked corridor.
    #[serde(skip)]
    pub corridor_cells: Vec<Idx>,
    pub diagnostics: TopologyDiagnostics,
}

fn mask_objects(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |k| mask & (1 << k) != 0)
}

/// Blocking analysis on a classified grid.
pub fn topology_check_grid(grid: &Grid, start: Idx, goal: Idx) -> TopologyReport {
    let is_free = |c: Cell| c == Cell::Free;
    let is_object = |c: Cell| matches!(c, Cell::Object(_));
    let (free_lbl, n_free) = grid.components(is_free);
    let (obj_lbl, n_obj) = grid.components(is_object);
    let start_f = grid.flat(start);
    let goal_f = grid.flat(goal);

    let mut diagnostics = TopologyDiagnostics { free_components: n_free, object_clusters: n_obj, ..Default::default() };
    if let Some(s) = free_lbl[start_f] {
        diagnostics.start_component_cells = free_lbl.iter().filter(|l| **l == Some(s)).count();
    }

    // Region graph: vertices 0..n_free are free components, n_free.. are
    // object clusters.
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_free + n_obj];
    for k in 0..grid.cells.len() {
        let a = free_lbl[k].or(obj_lbl[k].map(|c| n_free + c));
        let Some(a) = a else { continue };
        for n in grid.neighbors4(grid.unflat(k)) {
            let f = grid.flat(n);
            if let Some(b) = free_lbl[f].or(obj_lbl[f].map(|c| n_free + c)) {
                if a != b {
                    adj[a].insert(b);
                }
            }
        }
    }
    diagnostics.overconnected_clusters =
        (0..n_obj).filter(|c| adj[n_free + c].iter().filter(|&&v| v < n_free).count() > 2).collect();

    let infeasible = |diagnostics| TopologyReport {
        is_feasible: false,
        blocking: Vec::new(),
        corridor_cells: Vec::new(),
        diagnostics,
    };
    let Some(root) = free_lbl[start_f] else { return infeasible(diagnostics) };
    let target = free_lbl[goal_f].or(obj_lbl[goal_f].map(|c| n_free + c));
    let Some(target) = target else { return infeasible(diagnostics) };
    if target == root {
        return TopologyReport { is_feasible: true, blocking: Vec::new(), corridor_cells: Vec::new(), diagnostics };
    }

    let mut parent = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        if v == target {
            break;
        }
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some(v);
                queue.push_back(w);
            }
        }
    }
    if !seen[target] {
        return infeasible(diagnostics);
    }
    let mut chain = vec![target];
    let mut v = target;
    while let Some(p) = parent[v] {
        chain.push(p);
        v = p;
    }
    chain.reverse();
    let clusters: Vec<usize> = chain.into_iter().filter(|&v| v >= n_free).map(|v| v - n_free).collect();

    let mut blocking = Vec::new();
    let mut corridor_cells = Vec::new();
    for &c in &clusters {
        let mut mask = 0u64;
        for (k, l) in obj_lbl.iter().enumerate() {
            if *l == Some(c) {
                corridor_cells.push(grid.unflat(k));
                if let Cell::Object(m) = grid.cells[k] {
                    mask |= m;
                }
            }
        }
        for o in mask_objects(mask) {
            if !blocking.contains(&o) {
                blocking.push(o);
            }
        }
    }
    TopologyReport { is_feasible: true, blocking, corridor_cells, diagnostics }
}

/// Blocking analysis in world coordinates for a disk of radius `body`.
pub fn topology_check(
    start: Vec2,
    goal: Vec2,
    body: f64,
    map: &MapSnapshot,
    resolution: f64,
) -> Result<(TopologyReport, Grid), TopologyError> {
    let grid = Grid::rasterize(map, body, 0.0, resolution);
    let s = grid.index_of(start).ok_or(TopologyError::StartInCollision)?;
    let s = grid.snap(s, 1, |c| c == Cell::Free).ok_or(TopologyError::StartInCollision)?;
    let g = grid.index_of(goal).ok_or(TopologyError::GoalOutsideGrid)?;
    let g = grid.snap(g, 1, |c| c != Cell::Fixed).unwrap_or(g);
    Ok((topology_check_grid(&grid, s, g), grid))
}

/// Geodesic distance to a goal over free cells (8-connected).
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub grid: Grid,
    pub goal: Vec2,
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn new(grid: Grid, goal: Vec2) -> Self {
        let mut dist = vec![f64::INFINITY; grid.cells.len()];
        let free = |c: Cell| c == Cell::Free;
        if let Some(g) = grid.index_of(goal).and_then(|g| grid.snap(g, 4, free)) {
            let mut heap = BinaryHeap::new();
            let gf = grid.flat(g);
            dist[gf] = (grid.center(g) - goal).norm();
            heap.push(Reverse((OrdF64(dist[gf]), gf)));
            while let Some(Reverse((OrdF64(d), k))) = heap.pop() {
                if d > dist[k] {
                    continue;
                }
                let (i, j) = grid.unflat(k);
                for dj in -1isize..=1 {
                    for di in -1isize..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i as isize + di, j as isize + dj);
                        if a < 0 || b < 0 || a >= grid.nx as isize || b >= grid.ny as isize {
                            continue;
                        }
                        let n = (a as usize, b as usize);
                        // no corner cutting
                        if di != 0 && dj != 0 && (!free(grid.get((a as usize, j))) || !free(grid.get((i, b as usize))))
                        {
                            continue;
                        }
                        if !free(grid.get(n)) {
                            continue;
                        }
                        let nd = d + grid.resolution * ((di * di + dj * dj) as f64).sqrt();
                        let f = grid.flat(n);
                        if nd < dist[f] {
                            dist[f] = nd;
                            heap.push(Reverse((OrdF64(nd), f)));
                        }
                    }
                }
            }
        }
        Self { grid, goal, dist }
    }

    /// Distance from the free cell nearest to `p`; infinite if none nearby
    /// or the goal is cut off.
    pub fn distance(&self, p: Vec2) -> f64 {
        self.cell_near(p).map_or(f64::INFINITY, |c| self.dist[self.grid.flat(c)] + (self.grid.center(c) - p).norm())
    }

    fn cell_near(&self, p: Vec2) -> Option<Idx> {
        let idx = self.grid.index_of(p)?;
        let dist = &self.dist;
        let grid = &self.grid;
        let mut best: Option<(f64, Idx)> = None;
        for r in 0..=3isize {
            for dj in -r..=r {
                for di in -r..=r {
                    let (a, b) = (idx.0 as isize + di, idx.1 as isize + dj);
                    if a < 0 || b < 0 || a >= grid.nx as isize || b >= grid.ny as isize {
                        continue;
                    }
                    let n = (a as usize, b as usize);
                    let d = dist[grid.flat(n)];
                    if d.is_finite() {
                        let total = d + (grid.center(n) - p).norm();
                        if best.is_none_or(|(bd, _)| total < bd) {
                            best = Some((total, n));
                        }
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        best.map(|(_, n)| n)
    }

    /// Cells visited by steepest descent from `p`, ending at the goal cell.
    pub fn descent(&self, p: Vec2, max_len: f64) -> Vec<Vec2> {
        let Some(mut cur) = self.cell_near(p) else { return Vec::new() };
        let mut out = vec![self.grid.center(cur)];
        let mut travelled = 0.0;
        loop {
            let (i, j) = cur;
            let mut best = (self.dist[self.grid.flat(cur)], cur);
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a < 0 || b < 0 || a >= self.grid.nx as isize || b >= self.grid.ny as isize {
                        continue;
                    }
                    let n = (a as usize, b as usize);
                    let d = self.dist[self.grid.flat(n)];
                    if d < best.0 {
                        best = (d, n);
                    }
                }
            }
            if best.1 == cur {
                break;
            }
            travelled += (self.grid.center(best.1) - self.grid.center(cur)).norm();
            cur = best.1;
            out.push(self.grid.center(cur));
            if travelled >= max_len {
                break;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
