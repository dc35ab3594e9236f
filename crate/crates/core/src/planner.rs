//! Sampling-based search for information-gathering waypoints.
//!
//! Tree nodes pair a waypoint with the covariance the robot would hold after
//! measuring there. Because the covariance update does not depend on the
//! measured values, the whole search runs offline. A node's cost is the sum
//! of target-object uncertainties along its root path; the search looks for
//! the cheapest path whose final uncertainty falls below the grasp
//! threshold, then appends a contact point next to the object.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{riccati, GaussianBelief, SensorModel};
use crate::geometry::{heading, vec2, Vec2};
use crate::map::MapSnapshot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("node budget exhausted; best uncertainty reached {best_det:.3e}")]
    BudgetExhausted { best_det: f64 },
    #[error("no collision-free grasp point around object {object}")]
    NoFreeGraspPoint { object: usize },
    #[error("object {object} is not in the map")]
    UnknownObject { object: usize },
    #[error("invalid control set: {0}")]
    InvalidControls(String),
}

/// Finite set of waypoint displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    moves: Vec<Vec2>,
}

impl ControlSet {
    pub fn new(moves: Vec<Vec2>) -> Result<Self, PlanError> {
        if moves.is_empty() {
            return Err(PlanError::InvalidControls("empty".into()));
        }
        if moves.iter().any(|m| !m.x.is_finite() || !m.y.is_finite() || m.norm() == 0.0) {
            return Err(PlanError::InvalidControls("zero or non-finite move".into()));
        }
        Ok(Self { moves })
    }

    /// The eight king moves on a lattice of spacing `h`.
    pub fn compass(h: f64) -> Self {
        let mut moves = Vec::with_capacity(8);
        for dx in [-1.0, 0.0, 1.0] {
            for dy in [-1.0, 0.0, 1.0] {
                if dx != 0.0 || dy != 0.0 {
                    moves.push(vec2(dx * h, dy * h));
                }
            }
        }
        Self { moves }
    }

    pub fn moves(&self) -> &[Vec2] {
        &self.moves
    }

    pub fn max_len(&self) -> f64 {
        self.moves.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// Lattice spacing of the control set (m).
    pub step: f64,
    /// Tree node budget.
    pub max_nodes: usize,
    /// Extensions without a cheaper feasible leaf before stopping.
    pub stall: usize,
    /// Grasp threshold on `det Σ_i` (m⁴).
    pub epsilon: f64,
    /// Candidate contact angles around the object.
    pub grasp_candidates: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self { step: 0.5, max_nodes: 20_000, stall: 2_000, epsilon: 1e-3, grasp_candidates: 32 }
    }
}

/// Inputs that stay fixed while a tree grows.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub map: &'a MapSnapshot,
    pub sensor: &'a SensorModel,
    pub robot_radius: f64,
    pub controls: &'a ControlSet,
    /// Estimated object positions used for offline visibility and noise.
    pub means: &'a [Vec2],
}

#[derive(Debug, Clone)]
pub struct PlanNode {
    pub position: Vec2,
    pub cov: DMatrix<f64>,
    pub cost: f64,
    pub target_det: f64,
    pub parent: Option<usize>,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    Added(usize),
    Rejected,
    Pruned,
}

type CellKey = (i64, i64);

#[derive(Debug, Clone)]
pub struct PlanTree {
    nodes: Vec<PlanNode>,
    target: usize,
    origin: Vec2,
    cell: f64,
    epsilon: f64,
    by_cell: BTreeMap<CellKey, Vec<usize>>,
    open_cells: Vec<(CellKey, Vec<usize>)>,
    open_index: BTreeMap<CellKey, usize>,
    best: Option<usize>,
    /// Moves not yet tried from each node; filled on first selection.
    untried: Vec<Option<Vec<usize>>>,
    pub rejected: usize,
    pub pruned: usize,
}

fn target_det(cov: &DMatrix<f64>, i: usize) -> f64 {
    cov.fixed_view::<2, 2>(2 * i, 2 * i).determinant()
}

impl PlanTree {
    pub fn new(x0: Vec2, prior: &GaussianBelief, target: usize, cell: f64, epsilon: f64) -> Self {
        let det = target_det(prior.cov(), target);
        let root =
            PlanNode { position: x0, cov: prior.cov().clone(), cost: det, target_det: det, parent: None, depth: 0 };
        let mut t = Self {
            nodes: Vec::new(),
            target,
            origin: x0,
            cell,
            epsilon,
            by_cell: BTreeMap::new(),
            open_cells: Vec::new(),
            open_index: BTreeMap::new(),
            best: None,
            untried: Vec::new(),
            rejected: 0,
            pruned: 0,
        };
        t.insert(root);
        t
    }

    pub fn nodes(&self) -> &[PlanNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cheapest node meeting the uncertainty threshold so far.
    pub fn best_feasible(&self) -> Option<usize> {
        self.best
    }

    pub fn has_open(&self) -> bool {
        !self.open_cells.is_empty()
    }

    fn key(&self, p: Vec2) -> CellKey {
        let d = (p - self.origin) / self.cell;
        ((d.x + 0.5).floor() as i64, (d.y + 0.5).floor() as i64)
    }

    fn insert(&mut self, node: PlanNode) -> usize {
        let key = self.key(node.position);
        let feasible = node.target_det <= self.epsilon;
        let id = self.nodes.len();
        let cost = node.cost;
        self.nodes.push(node);
        self.untried.push(None);
        self.by_cell.entry(key).or_default().push(id);
        if feasible {
            if self.best.is_none_or(|b| cost < self.nodes[b].cost) {
                self.best = Some(id);
                self.close_costlier_than(cost);
            }
        } else {
            self.open(key, id);
        }
        id
    }

    fn open(&mut self, key: CellKey, id: usize) {
        match self.open_index.get(&key) {
            Some(&slot) => self.open_cells[slot].1.push(id),
            None => {
                self.open_index.insert(key, self.open_cells.len());
                self.open_cells.push((key, vec![id]));
            }
        }
    }

    /// Costs only grow along a path, so open nodes at or above the best
    /// feasible cost cannot lead to a cheaper plan.
    fn close_costlier_than(&mut self, bound: f64) {
        let nodes = &self.nodes;
        for (_, members) in &mut self.open_cells {
            members.retain(|&n| nodes[n].cost < bound);
        }
        self.open_cells.retain(|(_, members)| !members.is_empty());
        self.open_index = self.open_cells.iter().enumerate().map(|(slot, (key, _))| (*key, slot)).collect();
    }

    fn close(&mut self, key: CellKey, id: usize) {
        let Some(&slot) = self.open_index.get(&key) else { return };
        self.open_cells[slot].1.retain(|&n| n != id);
        if self.open_cells[slot].1.is_empty() {
            self.open_cells.swap_remove(slot);
            self.open_index.remove(&key);
            if slot < self.open_cells.len() {
                let moved = self.open_cells[slot].0;
                self.open_index.insert(moved, slot);
            }
        }
    }

    /// One growth attempt: pick a cell, a node in it and one of its untried
    /// moves; add the child unless it collides or an existing node in its
    /// cell is at least as cheap and at least as certain.
    pub fn sample_and_extend<R: Rng>(&mut self, ctx: &PlanContext<'_>, rng: &mut R) -> Extension {
        if self.open_cells.is_empty() {
            return Extension::Rejected;
        }
        let (parent_key, members) = &self.open_cells[rng.random_range(0..self.open_cells.len())];
        let (parent_key, parent) = (*parent_key, members[rng.random_range(0..members.len())]);
        let untried = self.untried[parent].get_or_insert_with(|| (0..ctx.controls.moves().len()).collect());
        let delta = ctx.controls.moves()[untried.swap_remove(rng.random_range(0..untried.len()))];
        if untried.is_empty() {
            self.close(parent_key, parent);
        }
        let from = self.nodes[parent].position;
        let to = from + delta;
        if !ctx.map.disk_free(to, ctx.robot_radius, &[]) || !ctx.map.sweep_free(from, to, ctx.robot_radius, &[]) {
            self.rejected += 1;
            return Extension::Rejected;
        }
        let cov = riccati(&self.nodes[parent].cov, to, ctx.means, ctx.map.occluders(), ctx.sensor);
        let det = target_det(&cov, self.target);
        let cost = self.nodes[parent].cost + det;
        if self.best.is_some_and(|b| cost >= self.nodes[b].cost) {
            self.pruned += 1;
            return Extension::Pruned;
        }
        let key = self.key(to);
        let peers = self.by_cell.get(&key).cloned().unwrap_or_default();
        if peers.iter().any(|&n| self.nodes[n].cost <= cost && self.nodes[n].target_det <= det) {
            self.pruned += 1;
            return Extension::Pruned;
        }
        for n in peers {
            if cost <= self.nodes[n].cost && det <= self.nodes[n].target_det {
                self.close(key, n);
            }
        }
        let depth = self.nodes[parent].depth + 1;
        Extension::Added(self.insert(PlanNode {
            position: to,
            cov,
            cost,
            target_det: det,
            parent: Some(parent),
            depth,
        }))
    }

    /// Root-to-node path of node ids.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// `id,parent,x,y,det,cost` rows for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,parent,x,y,det,cost\n");
        for (id, n) in self.nodes.iter().enumerate() {
            let parent = n.parent.map_or(String::new(), |p| p.to_string());
            let _ = writeln!(out, "{id},{parent},{},{},{:e},{:e}", n.position.x, n.position.y, n.target_det, n.cost);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointStats {
    pub mean: Vec2,
    pub det: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformativePlan {
    pub object: usize,
    /// `w(0) .. w(F)`; `w(0)` is the start position.
    pub waypoints: Vec<Vec2>,
    /// Offline target statistics at each waypoint.
    pub stats: Vec<WaypointStats>,
    pub grasp_target: Vec2,
    /// Sum of offline target uncertainties over `w(1) .. w(F)`.
    pub cost: f64,
    pub tree_size: usize,
}

impl InformativePlan {
    pub fn horizon(&self) -> usize {
        self.waypoints.len() - 1
    }
}

/// Contact point for grasping: the collision-free candidate on the circle
/// of radius `robot_radius + ρ_i` around `center` closest to `near`.
pub fn select_grasp_target(
    object: usize,
    center: Vec2,
    robot_radius: f64,
    object_radius: f64,
    map: &MapSnapshot,
    near: Vec2,
    candidates: usize,
) -> Result<Vec2, PlanError> {
    let reach = robot_radius + object_radius;
    (0..candidates)
        .map(|k| center + heading(std::f64::consts::TAU * k as f64 / candidates as f64) * reach)
        .filter(|p| map.disk_free(*p, robot_radius, &[object]))
        .min_by(|a, b| (a - near).norm().total_cmp(&(b - near).norm()))
        .ok_or(PlanError::NoFreeGraspPoint { object })
}

/// Grows a tree until the cheapest feasible leaf stops improving, then
/// returns its path.
pub fn grow<R: Rng>(
    tree: &mut PlanTree,
    ctx: &PlanContext<'_>,
    params: &PlannerParams,
    rng: &mut R,
) -> Result<usize, PlanError> {
    let max_attempts = params.max_nodes.saturating_mul(20);
    let mut attempts = 0;
    let mut since_improvement = 0;
    while tree.len() < params.max_nodes && attempts < max_attempts && tree.has_open() {
        if tree.best_feasible().is_some() && since_improvement >= params.stall {
            break;
        }
        let before = tree.best_feasible();
        let added = matches!(tree.sample_and_extend(ctx, rng), Extension::Added(_));
        attempts += 1;
        if tree.best_feasible() != before {
            since_improvement = 0;
        } else if added {
            since_improvement += 1;
        }
    }
    tree.best_feasible().ok_or_else(|| PlanError::BudgetExhausted {
        best_det: tree.nodes().iter().map(|n| n.target_det).fold(f64::INFINITY, f64::min),
    })
}

/// Plans informative waypoints for grasping object `object` from `x0`.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    x0: Vec2,
    prior: &GaussianBelief,
    object: usize,
    map: &MapSnapshot,
    sensor: &SensorModel,
    robot_radius: f64,
    params: &PlannerParams,
    seed: u64,
) -> Result<(InformativePlan, PlanTree), PlanError> {
    let disk = map.object(object).ok_or(PlanError::UnknownObject { object })?;
    let controls = ControlSet::compass(params.step);
    let means = prior.means();
    let ctx = PlanContext { map, sensor, robot_radius, controls: &controls, means: &means };
    let mut tree = PlanTree::new(x0, prior, object, params.step, params.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaf = grow(&mut tree, &ctx, params, &mut rng)?;
    let path = tree.path_to(leaf);
    let waypoints: Vec<Vec2> = path.iter().map(|&n| tree.nodes()[n].position).collect();
    let mean = prior.object_mean(object);
    let stats = path.iter().map(|&n| WaypointStats { mean, det: tree.nodes()[n].target_det }).collect();
    let grasp_target = select_grasp_target(
        object,
        mean,
        robot_radius,
        disk.radius,
        map,
        *waypoints.last().unwrap(),
        params.grasp_candidates,
    )?;
    let cost = tree.nodes()[leaf].cost - tree.nodes()[0].cost;
    let plan = InformativePlan { object, waypoints, stats, grasp_target, cost, tree_size: tree.len() };
    Ok((plan, tree))
}
