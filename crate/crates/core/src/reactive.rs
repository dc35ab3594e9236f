//! Reactive execution layer: local navigation, waypoint bookkeeping with
//! online belief updates, replanning triggers and object rearrangement when
//! movable objects block the way.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{kf_update, BeliefError, GaussianBelief, Measurement};
use crate::geometry::{heading, point_segment_distance, wrap_angle, ConvexCell, Shape, Vec2};
use crate::grid::{DistanceField, Grid, TopologyReport};
use crate::map::{Disk, MapSnapshot};
use crate::planner::InformativePlan;
use crate::symbolic::SymbolicAction;
use crate::world::{CombinedBody, Pose, RobotParams, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub k_v: f64,
    pub k_omega: f64,
    /// Arrival radius around a target (m).
    pub arrival_tol: f64,
    /// Time without progress before giving up (s).
    pub stall_time: f64,
    /// Minimum decrease of the remaining path length that counts as
    /// progress (m).
    pub progress_tol: f64,
    /// Consecutive replans tolerated for one action.
    pub replan_max: usize,
    /// Cell size of the occupancy grids (m).
    pub grid_resolution: f64,
    /// Extra inflation of obstacles for path guidance (m).
    pub guide_margin: f64,
    /// How far ahead along the guidance path to aim (m).
    pub lookahead: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            k_v: 2.0,
            k_omega: 3.0,
            arrival_tol: 0.05,
            stall_time: 10.0,
            progress_tol: 0.01,
            replan_max: 10,
            grid_resolution: 0.1,
            guide_margin: 0.03,
            lookahead: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Grasp threshold on `det Σ_i` (m⁴).
    pub epsilon: f64,
    /// Allowed excess of online over offline `det Σ_i` (m⁴).
    pub epsilon_sigma: f64,
    /// Allowed distance between online and offline means (m).
    pub epsilon_mu: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { epsilon: 1e-3, epsilon_sigma: 1e-3, epsilon_mu: 0.3 }
    }
}

/// The body being steered: the robot alone or robot plus gripped object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub center: Vec2,
    pub radius: f64,
    pub combined: Option<CombinedBody>,
}

impl Body {
    pub fn of(world: &World) -> Self {
        match world.combined_body() {
            Some(c) => Body { center: c.center, radius: c.radius, combined: Some(c) },
            None => Body { center: world.pose().position, radius: world.robot.radius, combined: None },
        }
    }
}

/// Largest convex region around `center` whose points keep a disk of
/// `radius` clear of every known obstacle, object and wall, intersected with
/// a 16-gon of radius `extent`.
pub fn local_free_cell(center: Vec2, radius: f64, extent: f64, map: &MapSnapshot, skip: &[usize]) -> ConvexCell {
    let mut cell = ConvexCell::regular(center, extent, 16);
    let reach = extent + radius + 1e-6;
    let mut clip_to = |b: Vec2| {
        let d = center - b;
        let n = d.norm();
        if n > 1e-9 && n < reach {
            cell.clip(d / n, b, radius.min(n));
        }
    };
    for (a, b) in map.workspace.edges() {
        clip_to(crate::geometry::closest_point_on_segment(center, a, b));
    }
    for o in &map.obstacles {
        match o {
            Shape::Disk { .. } => clip_to(o.closest_boundary_point(center)),
            Shape::Polygon(p) => {
                for (a, b) in p.edges() {
                    clip_to(crate::geometry::closest_point_on_segment(center, a, b));
                }
            }
        }
    }
    for (k, d) in map.objects.iter().enumerate() {
        if skip.contains(&k) {
            continue;
        }
        if let Some(d) = d {
            clip_to(Shape::disk(d.center, d.radius).closest_boundary_point(center));
        }
    }
    cell
}

/// Velocity command toward `target`: project the target onto the local
/// free cell and steer there, limiting the step so it stays in the cell.
pub fn compute_velocity(
    pose: Pose,
    body: &Body,
    target: Vec2,
    map: &MapSnapshot,
    robot: &RobotParams,
    extent: f64,
    gains: &ControllerParams,
) -> (f64, f64) {
    let cell = local_free_cell(body.center, body.radius, extent, map, &[]);
    if cell.is_empty() {
        return (0.0, 0.0);
    }
    let goal = cell.project(target);
    let d = goal - body.center;
    let dist = d.norm();
    if dist < 1e-9 {
        return (0.0, 0.0);
    }
    match body.combined {
        None => {
            let bearing = d.y.atan2(d.x);
            let theta = wrap_angle(bearing - pose.heading);
            let omega = (gains.k_omega * theta).clamp(-robot.omega_max, robot.omega_max);
            let e = heading(pose.heading);
            let along = cell.ray_extent(body.center, e);
            let v = (gains.k_v * dist * theta.cos().max(0.0)).min(robot.v_max).min(0.95 * along / robot.dt).max(0.0);
            (v, omega)
        }
        Some(c) => {
            let mut u = d * gains.k_v;
            let cap = robot.v_max.min(0.95 * dist / robot.dt);
            if u.norm() > cap {
                u *= cap / u.norm();
            }
            let (v, omega) = c.inputs_for(u);
            let scale = (v.abs() / robot.v_max).max(omega.abs() / robot.omega_max).max(1.0);
            (v / scale, omega / scale)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NavError {
    #[error("no progress for {stalled:.1} s")]
    LocallyTrapped { stalled: f64 },
    #[error("target lies inside a known obstacle")]
    TargetInvalid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NavStatus {
    Arrived,
    Moving { v: f64, omega: f64, collided: bool },
}

/// Drives the body to one target, using a grid distance field over the
/// known map for global guidance and the local free cell for safety.
#[derive(Debug, Clone)]
pub struct Navigator {
    pub target: Vec2,
    pub tolerance: f64,
    field: Option<(DistanceField, MapSnapshot)>,
    best: f64,
    last_progress: f64,
}

fn map_changed(a: &MapSnapshot, b: &MapSnapshot) -> bool {
    a.obstacles.len() != b.obstacles.len()
        || a.objects.len() != b.objects.len()
        || a.objects.iter().zip(&b.objects).any(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => (x.center - y.center).norm() > 0.02,
            (None, None) => false,
            _ => true,
        })
}

impl Navigator {
    pub fn new(target: Vec2, tolerance: f64, now: f64) -> Self {
        Self { target, tolerance, field: None, best: f64::INFINITY, last_progress: now }
    }

    /// Distance still to go along the guidance field, or straight-line if
    /// there is none.
    pub fn remaining(&self, p: Vec2) -> f64 {
        match &self.field {
            Some((f, _)) => {
                let d = f.distance(p);
                if d.is_finite() {
                    d
                } else {
                    (self.target - p).norm()
                }
            }
            None => (self.target - p).norm(),
        }
    }

    fn carrot(&self, body: &Body, map: &MapSnapshot, params: &ControllerParams) -> Vec2 {
        let direct = (self.target - body.center).norm();
        if direct <= params.lookahead && map.sweep_free(body.center, self.target, body.radius, &[]) {
            return self.target;
        }
        let Some((field, _)) = &self.field else { return self.target };
        if !field.distance(body.center).is_finite() {
            return self.target;
        }
        let path = field.descent(body.center, params.lookahead);
        let mut best = None;
        for p in path.iter().skip(1) {
            if map.sweep_free(body.center, *p, body.radius, &[]) {
                best = Some(*p);
            } else {
                break;
            }
        }
        best.or_else(|| path.get(1).copied()).unwrap_or(self.target)
    }

    /// Advances the world by one control step.
    pub fn step(
        &mut self,
        world: &mut World,
        belief: &GaussianBelief,
        params: &ControllerParams,
    ) -> Result<NavStatus, NavError> {
        let body = Body::of(world);
        if (body.center - self.target).norm() <= self.tolerance {
            return Ok(NavStatus::Arrived);
        }
        let map = world.snapshot(belief);
        let blocked_by_obstacle = map.obstacles.iter().any(|o| o.distance(self.target) < body.radius - 1e-6);
        if blocked_by_obstacle || !map.workspace.contains(self.target) {
            return Err(NavError::TargetInvalid);
        }
        let rebuild = self.field.as_ref().is_none_or(|(_, m)| map_changed(m, &map));
        if rebuild {
            let grid = Grid::rasterize(&map, body.radius, params.guide_margin, params.grid_resolution);
            self.field = Some((DistanceField::new(grid, self.target), map.clone()));
            self.best = f64::INFINITY;
            self.last_progress = world.time();
        }
        let remaining = self.remaining(body.center);
        if remaining < self.best - params.progress_tol {
            self.best = remaining;
            self.last_progress = world.time();
        } else if world.time() - self.last_progress > params.stall_time {
            return Err(NavError::LocallyTrapped { stalled: world.time() - self.last_progress });
        }
        let carrot = self.carrot(&body, &map, params);
        let extent = (world.sensor.range * 0.5).max(body.radius);
        let (v, omega) = compute_velocity(world.pose(), &body, carrot, &map, &world.robot, extent, params);
        let out = world.step(v, omega).expect("commands are saturated");
        world.sense();
        Ok(NavStatus::Moving { v, omega, collided: out.collided })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanKind {
    UncertaintyWorse,
    MeanDeviation,
    WaypointInvalid,
}

/// A violated replanning condition with both sides of the inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplanEvent {
    pub kind: ReplanKind,
    pub waypoint: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Measures at waypoint `k`, updates the online belief and checks, in
/// order: uncertainty above the offline prediction, mean drift, and
/// whether the next waypoint now lies in a known obstacle.
pub fn on_waypoint_arrival<R: Rng>(
    k: usize,
    online: &GaussianBelief,
    plan: &InformativePlan,
    world: &World,
    thresholds: &Thresholds,
    rng: &mut R,
) -> Result<(GaussianBelief, Measurement, Option<ReplanEvent>), BeliefError> {
    let mut meas = world.measure(rng);
    // The filter only knows the estimated positions, so its noise model is
    // built from those rather than from the truth.
    let rows: Vec<Vec2> = meas.observed.iter().map(|&i| online.object_mean(i)).collect();
    meas.noise = world.sensor.expected_noise(&rows);
    let post = kf_update(online, &meas)?;
    let i = plan.object;
    let det = post.uncertainty(i)?;
    let offline = plan.stats[k];
    let event = if det > offline.det + thresholds.epsilon_sigma {
        Some(ReplanEvent {
            kind: ReplanKind::UncertaintyWorse,
            waypoint: k,
            lhs: det,
            rhs: offline.det + thresholds.epsilon_sigma,
        })
    } else if (post.object_mean(i) - offline.mean).norm() > thresholds.epsilon_mu {
        Some(ReplanEvent {
            kind: ReplanKind::MeanDeviation,
            waypoint: k,
            lhs: (post.object_mean(i) - offline.mean).norm(),
            rhs: thresholds.epsilon_mu,
        })
    } else {
        next_waypoint_blocked(k, plan, world)
    };
    Ok((post, meas, event))
}

/// WaypointInvalid check for the waypoint after `k` (the grasp point counts
/// as the last one).
pub fn next_waypoint_blocked(k: usize, plan: &InformativePlan, world: &World) -> Option<ReplanEvent> {
    let next = plan.waypoints.get(k + 1).copied().or((k == plan.horizon()).then_some(plan.grasp_target))?;
    let r = world.robot.radius;
    let gap = world
        .revealed_obstacles()
        .iter()
        .map(|o| if o.contains(next) { -o.boundary_distance(next) } else { o.distance(next) })
        .fold(f64::INFINITY, f64::min);
    (gap < r).then_some(ReplanEvent { kind: ReplanKind::WaypointInvalid, waypoint: k + 1, lhs: gap, rhs: r })
}

/// Everything the planner needs to start over from the current state.
#[derive(Debug, Clone)]
pub struct ReplanRequest {
    pub event: ReplanEvent,
    pub position: Vec2,
    pub prior: GaussianBelief,
    pub map: MapSnapshot,
}

pub fn handle_replan(event: ReplanEvent, online: &GaussianBelief, world: &World) -> ReplanRequest {
    ReplanRequest { event, position: world.pose().position, prior: online.clone(), map: world.snapshot(online) }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixError {
    #[error("no free placement for object {object}")]
    NoPlacementFound { object: usize },
}

/// Inputs to placement selection for rearranging blocking objects.
#[derive(Debug, Clone)]
pub struct FixContext<'a> {
    /// The robot's map, without the gripped object.
    pub map: &'a MapSnapshot,
    pub robot_radius: f64,
    /// Radius of every object.
    pub radii: &'a [f64],
    /// Estimated position of every object (gripped one included).
    pub positions: &'a [Vec2],
    pub gripped: Option<usize>,
    /// Start and goal of the blocked motion, and the radius of the body
    /// that will travel it.
    pub start: Vec2,
    pub goal: Vec2,
    pub travel_radius: f64,
    /// Regions where nothing should be dropped.
    pub keep_out: &'a [crate::geometry::Polygon],
}

const PLACEMENT_MARGIN: f64 = 0.05;

/// Turns a blocking report into rearrangement actions: the gripped object
/// (if any) is set down first, then every blocker in stack order.
pub fn fix_mode(report: &TopologyReport, grid: &Grid, ctx: &FixContext<'_>) -> Result<Vec<SymbolicAction>, FixError> {
    let mut order = Vec::new();
    if let Some(g) = ctx.gripped {
        order.push(g);
    }
    order.extend(report.blocking.iter().copied().filter(|&j| Some(j) != ctx.gripped));
    let corridor: Vec<Vec2> = report.corridor_cells.iter().map(|&c| grid.center(c)).collect();
    // every object in `order` will have left its current spot
    let moving = order.clone();
    let mut placed: Vec<Disk> = Vec::new();
    let mut actions = Vec::new();
    for j in order {
        let p = choose_placement(j, grid, &corridor, &placed, &moving, ctx)?;
        placed.push(Disk { center: p, radius: ctx.radii[j] });
        actions.push(SymbolicAction::disassemble(j, p));
    }
    Ok(actions)
}

fn choose_placement(
    j: usize,
    grid: &Grid,
    corridor: &[Vec2],
    placed: &[Disk],
    skip: &[usize],
    ctx: &FixContext<'_>,
) -> Result<Vec2, FixError> {
    let rho = ctx.radii[j];
    let r = ctx.robot_radius;
    let need = rho + 2.0 * r + PLACEMENT_MARGIN;
    let lane = ctx.travel_radius + rho + PLACEMENT_MARGIN;
    let from = ctx.positions[j];
    let mut best: Option<(f64, Vec2)> = None;
    for jj in 0..grid.ny {
        for ii in 0..grid.nx {
            let p = grid.center((ii, jj));
            if ctx.map.clearance(p, skip) < need {
                continue;
            }
            if placed.iter().any(|d| (p - d.center).norm() < d.radius + need) {
                continue;
            }
            if point_segment_distance(p, ctx.start, ctx.goal) < lane {
                continue;
            }
            if corridor.iter().any(|c| (p - c).norm() < rho + ctx.travel_radius) {
                continue;
            }
            if ctx.keep_out.iter().any(|poly| poly.contains(p) || poly.boundary_distance(p) < rho + PLACEMENT_MARGIN) {
                continue;
            }
            let d = (p - from).norm();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
    }
    best.map(|(_, p)| p).ok_or(FixError::NoPlacementFound { object: j })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::SensorModel;
    use crate::geometry::{vec2, Polygon};
    use crate::world::Obstacle;

    fn world_with(obstacles: Vec<Shape>, start: Vec2) -> World {
        World::new(
            RobotParams::default(),
            SensorModel::new(1.5),
            Polygon::rectangle(vec2(0.0, 0.0), vec2(5.0, 5.0)),
            vec![],
            obstacles.into_iter().map(|shape| Obstacle { shape, revealed: true }).collect(),
            vec![],
            Pose { position: start, heading: 0.0 },
        )
    }

    fn drive(world: &mut World, target: Vec2, max_time: f64) -> Result<f64, NavError> {
        let belief = GaussianBelief::isotropic(&[], &[]).unwrap();
        let params = ControllerParams::default();
        let mut nav = Navigator::new(target, params.arrival_tol, world.time());
        while world.time() < max_time {
            match nav.step(world, &belief, &params)? {
                NavStatus::Arrived => return Ok(world.time()),
                NavStatus::Moving { collided, .. } => assert!(!collided),
            }
            assert!(world.clearance() >= 0.0);
        }
        Err(NavError::LocallyTrapped { stalled: max_time })
    }

    #[test]
    fn straight_line_in_empty_world() {
        let mut w = world_with(vec![], vec2(1.0, 1.0));
        let t = drive(&mut w, vec2(4.0, 1.0), 100.0).unwrap();
        assert!(t <= 3.0 * 1.5, "{t}");
    }

    #[test]
    fn around_a_convex_obstacle() {
        let mut w = world_with(vec![Shape::disk(vec2(2.5, 2.5), 0.6)], vec2(1.0, 2.5));
        drive(&mut w, vec2(4.0, 2.5), 60.0).unwrap();
    }

    #[test]
    fn around_a_wall() {
        let wall = Shape::Polygon(Polygon::rectangle(vec2(2.4, 0.8), vec2(2.6, 4.2)));
        let mut w = world_with(vec![wall], vec2(1.0, 2.5));
        drive(&mut w, vec2(4.0, 2.5), 60.0).unwrap();
    }

    #[test]
    fn target_in_obstacle_is_invalid() {
        let mut w = world_with(vec![Shape::disk(vec2(3.0, 3.0), 0.5)], vec2(1.0, 1.0));
        assert_eq!(drive(&mut w, vec2(3.0, 3.0), 10.0), Err(NavError::TargetInvalid));
    }

    #[test]
    fn combined_inputs_round_trip() {
        let c = CombinedBody { center: vec2(0.0, 0.0), radius: 0.3, offset: 0.1, heading: 0.7 };
        let u = vec2(0.3, -0.2);
        let (v, w) = c.inputs_for(u);
        let back = c.jacobian() * nalgebra::Vector2::new(v, w);
        assert!((back - u).norm() < 1e-12);
    }
}
