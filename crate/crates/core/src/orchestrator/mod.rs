//! Scenario execution: the symbolic controller picks actions, the
//! informative planner and reactive layer carry them out in the simulated
//! world, and everything is written to a trace.

mod config;
mod plot;
mod trace;

pub use config::{ConfigError, DiskConfig, ObjectConfig, ObstacleConfig, PriorConfig, RobotConfig, ScenarioConfig};
pub use plot::render_svg;
pub use trace::{ActionSource, MarginalRecord, ObjectRecord, ObstacleRecord, Record, TraceLog, Verdict};

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::belief::{kf_update, GaussianBelief};
use crate::geometry::Vec2;
use crate::grid::{topology_check, TopologyDiagnostics, TopologyReport};
use crate::ltl::{translate, StateId, Symbol};
use crate::planner::{plan, select_grasp_target, InformativePlan};
use crate::reactive::{
    fix_mode, next_waypoint_blocked, on_waypoint_arrival, FixContext, NavError, NavStatus, Navigator, ReplanEvent,
    ReplanKind,
};
use crate::symbolic::{mission_graph, AutomatonGraph, Command, MissionState, Outcome, SymbolicAction, SymbolicError};
use crate::world::{World, WorldError, SIGMA_KNOWN};
use trace::pt;

/// Arrival tolerance at the contact point; tighter than the grip tolerance.
const GRASP_TOLERANCE: f64 = 0.02;
const APPROACH_ATTEMPTS: usize = 4;
const RELEASE_ROUNDS: usize = 4;

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub verdict: Verdict,
    pub trace: TraceLog,
    pub world: World,
    pub belief: GaussianBelief,
    pub steps: usize,
}

enum Failure {
    Infeasible(String),
    Timeout,
}

type Exec<T = ()> = Result<T, Failure>;

fn infeasible<T>(msg: impl Into<String>) -> Exec<T> {
    Err(Failure::Infeasible(msg.into()))
}

/// When a run counts as done.
#[derive(Debug, Clone, Copy)]
enum Goal {
    /// Recurrent missions: this many accepting-edge traversals.
    Cycles(usize),
    /// Missions without `G`: standing in a node whose accepting self-loop
    /// needs no action, so idling forever satisfies the formula.
    IdleAccepting,
}

/// Nodes with an accepting self-loop under the empty symbol.
fn idle_accepting_nodes(g: &AutomatonGraph) -> BTreeSet<StateId> {
    g.edges
        .iter()
        .filter(|((from, to), opts)| from == to && opts.iter().any(|o| o.accepting && o.symbol.is_empty()))
        .map(|((from, _), _)| *from)
        .collect()
}

enum DriveEnd {
    Arrived,
    TargetInvalid,
}

enum FollowEnd {
    Done,
    Replan(ReplanEvent, Option<Vec2>),
}

enum GripEnd {
    Gripped,
    Uncertain,
}

struct Runner<'c> {
    cfg: &'c ScenarioConfig,
    world: World,
    belief: GaussianBelief,
    rng: ChaCha8Rng,
    trace: TraceLog,
    steps: usize,
    plans: u64,
    revealed: Vec<bool>,
}

/// Runs a scenario to a verdict. Deterministic for a given config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult, ConfigError> {
    cfg.validate()?;
    let world = cfg.build_world()?;
    let belief = cfg.prior_belief()?;
    let formula = cfg.formula()?;
    let revealed = world.obstacles.iter().map(|o| o.revealed).collect();
    let mut r = Runner {
        cfg,
        world,
        belief,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        trace: TraceLog::default(),
        steps: 0,
        plans: 0,
        revealed,
    };
    r.header();
    r.world.sense();
    r.log_reveals();
    r.trace.push(Record::belief(0.0, &r.belief));

    let goal = if formula.has_always() { Goal::Cycles(cfg.n_cycles) } else { Goal::IdleAccepting };
    let verdict = match mission_graph(&translate(&formula), &Symbol::empty()) {
        Err(e) => Verdict::MissionUnrealizable { reason: e.to_string() },
        Ok(g) if g.distance(g.aux).is_none() => {
            Verdict::MissionUnrealizable { reason: "no accepting edge is reachable".into() }
        }
        Ok(g) => r.execute(&g, goal),
    };
    r.trace.push(Record::Verdict { t: r.world.time(), steps: r.steps, verdict: verdict.clone() });
    Ok(RunResult { verdict, trace: r.trace, world: r.world, belief: r.belief, steps: r.steps })
}

impl Runner<'_> {
    fn header(&mut self) {
        let cfg = self.cfg;
        let obstacles =
            self.world.obstacles.iter().map(|o| ObstacleRecord { shape: o.shape.clone(), known: o.revealed }).collect();
        let objects = cfg.objects.iter().map(|o| ObjectRecord { position: o.position, radius: o.radius }).collect();
        self.trace.push(Record::Header {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            formula: cfg.formula.clone(),
            workspace: cfg.workspace.clone(),
            regions: cfg.regions.clone(),
            obstacles,
            objects,
            robot_radius: cfg.robot.radius,
            sensing_range: cfg.sensor.range,
            epsilon: cfg.thresholds.epsilon,
        });
    }

    fn t(&self) -> f64 {
        self.world.time()
    }

    fn log_reveals(&mut self) {
        for k in 0..self.revealed.len() {
            if self.world.obstacles[k].revealed && !self.revealed[k] {
                self.revealed[k] = true;
                self.trace.push(Record::Reveal { t: self.t(), obstacle: k });
            }
        }
    }

    fn log_belief(&mut self) {
        self.trace.push(Record::belief(self.t(), &self.belief));
    }

    fn execute(&mut self, g: &AutomatonGraph, goal: Goal) -> Verdict {
        let mut mission = MissionState::new(g);
        let idle_accepting = idle_accepting_nodes(g);
        let mut idle_run = 0;
        loop {
            let cycles = mission.accepting_history().len();
            let done = match goal {
                Goal::Cycles(n) => cycles >= n,
                Goal::IdleAccepting if idle_accepting.is_empty() => cycles >= 1,
                Goal::IdleAccepting => idle_accepting.contains(&mission.current()),
            };
            if done {
                return Verdict::AcceptingCycleReached { cycles };
            }
            let step = match mission.next_action(g) {
                Ok(s) => s,
                Err(e) => return Verdict::MissionUnrealizable { reason: e.to_string() },
            };
            self.trace.push(Record::Symbolic {
                t: self.t(),
                from: step.from,
                to: step.next,
                symbol: step.symbol.to_string(),
                accepting: step.accepting,
                action: step.action(),
            });
            let result = match &step.command {
                Command::Idle => {
                    idle_run += 1;
                    if idle_run > 2 * g.nodes.len() {
                        return Verdict::MissionUnrealizable {
                            reason: "the mission only cycles through idle edges".into(),
                        };
                    }
                    Ok(())
                }
                Command::Act(_) => {
                    idle_run = 0;
                    let action = step.action().expect("act carries an action");
                    self.trace.push(Record::Action {
                        t: self.t(),
                        source: ActionSource::Symbolic,
                        action: action.clone(),
                    });
                    self.perform(&action)
                }
            };
            let (outcome, reason) = match result {
                Ok(()) => (Outcome::Satisfied, None),
                Err(Failure::Infeasible(why)) => (Outcome::Infeasible, Some(why)),
                Err(Failure::Timeout) => return Verdict::Timeout { max_steps: self.steps },
            };
            self.trace.push(Record::Outcome {
                t: self.t(),
                from: step.from,
                to: step.next,
                satisfied: outcome == Outcome::Satisfied,
                reason: reason.clone(),
            });
            match mission.report_outcome(g, outcome) {
                Ok(()) => {}
                Err(SymbolicError::MissionUnrealizable) => {
                    return Verdict::MissionUnrealizable {
                        reason: reason.unwrap_or_else(|| "every remaining edge failed".into()),
                    }
                }
                Err(e) => return Verdict::MissionUnrealizable { reason: e.to_string() },
            }
        }
    }

    fn perform(&mut self, action: &SymbolicAction) -> Exec {
        match *action {
            SymbolicAction::Grasp { object } => self.grasp(object),
            SymbolicAction::Release { object, region } => self.release(object, region),
            SymbolicAction::Disassemble { object, target } => self.disassemble(object, Vec2::new(target[0], target[1])),
        }
    }

    /// Steps the world towards `target` until arrival. With `grasp`, the
    /// target follows the contact point of that object as its estimate is
    /// refined.
    fn drive(&mut self, target: Vec2, tol: f64, grasp: Option<usize>) -> Exec<DriveEnd> {
        let mut nav = Navigator::new(target, tol, self.t());
        loop {
            if let Some(i) = grasp {
                if self.refine(i) {
                    match self.contact_point(i) {
                        Ok(p) => nav = Navigator::new(p, tol, self.t()),
                        Err(why) => return infeasible(why),
                    }
                }
            }
            if self.steps >= self.cfg.max_steps {
                return Err(Failure::Timeout);
            }
            match nav.step(&mut self.world, &self.belief, &self.cfg.controller) {
                Ok(NavStatus::Arrived) => return Ok(DriveEnd::Arrived),
                Ok(NavStatus::Moving { v, omega, collided }) => {
                    self.steps += 1;
                    let pose = self.world.pose();
                    self.trace.push(Record::Step {
                        t: self.t(),
                        x: pose.position.x,
                        y: pose.position.y,
                        psi: pose.heading,
                        v,
                        omega,
                        clearance: self.world.clearance(),
                        collided,
                        gripped: self.world.gripped(),
                    });
                    self.log_reveals();
                }
                Err(NavError::TargetInvalid) => return Ok(DriveEnd::TargetInvalid),
                Err(NavError::LocallyTrapped { stalled }) => {
                    return infeasible(format!("locally trapped for {stalled:.1} s"))
                }
            }
        }
    }

    /// Pins object `i` to its true position once the estimate is confident
    /// and the object is in view. Returns whether the estimate moved.
    fn refine(&mut self, i: usize) -> bool {
        let det = self.belief.uncertainty(i).unwrap_or(f64::INFINITY);
        if det > self.cfg.thresholds.epsilon {
            return false;
        }
        let Some(p) = self.world.localize(i) else { return false };
        let moved = (p - self.belief.object_mean(i)).norm() > 1e-9 || det > SIGMA_KNOWN.powi(4) * 1.5;
        if moved {
            self.belief.set_known(i, p, SIGMA_KNOWN).expect("index checked");
            self.log_belief();
        }
        moved
    }

    fn contact_point(&self, i: usize) -> Result<Vec2, String> {
        let map = self.world.snapshot(&self.belief);
        select_grasp_target(
            i,
            self.belief.object_mean(i),
            self.world.robot.radius,
            self.world.objects()[i].radius,
            &map,
            self.world.pose().position,
            self.cfg.planner.grasp_candidates,
        )
        .map_err(|e| e.to_string())
    }

    /// Measures from the current pose and folds the result into the belief.
    fn measure_update(&mut self) {
        let mut meas = self.world.measure(&mut self.rng);
        let rows: Vec<Vec2> = meas.observed.iter().map(|&i| self.belief.object_mean(i)).collect();
        meas.noise = self.world.sensor.expected_noise(&rows);
        if let Ok(post) = kf_update(&self.belief, &meas) {
            self.belief = post;
        }
        self.log_measurement(&meas.observed);
    }

    fn log_measurement(&mut self, observed: &[usize]) {
        self.trace.push(Record::Measurement {
            t: self.t(),
            position: pt(self.world.pose().position),
            observed: observed.to_vec(),
        });
        self.log_belief();
    }

    fn make_plan(&mut self, i: usize) -> Exec<(u64, InformativePlan)> {
        self.plans += 1;
        let seed = self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(self.plans);
        let map = self.world.snapshot(&self.belief);
        let x0 = self.world.pose().position;
        let result =
            plan(x0, &self.belief, i, &map, &self.world.sensor, self.world.robot.radius, &self.cfg.planner, seed);
        let (p, _) = result.map_err(|e| Failure::Infeasible(format!("planning for object {}: {e}", i + 1)))?;
        self.trace.push(Record::Plan {
            t: self.t(),
            plan_id: self.plans,
            object: i,
            waypoints: p.waypoints.iter().map(|&w| pt(w)).collect(),
            dets: p.stats.iter().map(|s| s.det).collect(),
            grasp_target: pt(p.grasp_target),
            cost: p.cost,
            tree_size: p.tree_size,
        });
        Ok((self.plans, p))
    }

    fn follow(&mut self, p: &InformativePlan) -> Exec<FollowEnd> {
        let tol = self.cfg.controller.arrival_tol;
        for k in 1..=p.horizon() {
            if let DriveEnd::TargetInvalid = self.drive(p.waypoints[k], tol, None)? {
                let ev = next_waypoint_blocked(k - 1, p, &self.world).unwrap_or(ReplanEvent {
                    kind: ReplanKind::WaypointInvalid,
                    waypoint: k,
                    lhs: 0.0,
                    rhs: self.world.robot.radius,
                });
                return Ok(FollowEnd::Replan(ev, Some(p.waypoints[k])));
            }
            let (post, meas, ev) =
                on_waypoint_arrival(k, &self.belief, p, &self.world, &self.cfg.thresholds, &mut self.rng)
                    .map_err(|e| Failure::Infeasible(e.to_string()))?;
            self.belief = post;
            self.log_measurement(&meas.observed);
            if let Some(ev) = ev {
                let point = (ev.kind == ReplanKind::WaypointInvalid)
                    .then(|| p.waypoints.get(ev.waypoint).copied().unwrap_or(p.grasp_target));
                return Ok(FollowEnd::Replan(ev, point));
            }
        }
        Ok(FollowEnd::Done)
    }

    fn approach_and_grip(&mut self, i: usize) -> Exec<GripEnd> {
        let eps = self.cfg.thresholds.epsilon;
        for _ in 0..APPROACH_ATTEMPTS {
            let det = self.belief.uncertainty(i).unwrap_or(f64::INFINITY);
            if det > eps {
                self.trace.push(Record::Grip {
                    t: self.t(),
                    object: i,
                    det,
                    success: false,
                    reason: Some("estimate not confident enough".into()),
                });
                return Ok(GripEnd::Uncertain);
            }
            self.refine(i);
            let target = self.contact_point(i).map_err(Failure::Infeasible)?;
            if let DriveEnd::TargetInvalid = self.drive(target, GRASP_TOLERANCE, Some(i))? {
                continue;
            }
            self.measure_update();
            self.refine(i);
            match self.world.try_grip(&mut self.belief, i, eps) {
                Ok(()) => {
                    self.trace.push(Record::Grip { t: self.t(), object: i, det, success: true, reason: None });
                    self.log_belief();
                    return Ok(GripEnd::Gripped);
                }
                Err(e) => {
                    self.trace.push(Record::Grip {
                        t: self.t(),
                        object: i,
                        det,
                        success: false,
                        reason: Some(e.to_string()),
                    });
                    match e {
                        WorldError::GripRefusedUncertain { .. } => return Ok(GripEnd::Uncertain),
                        WorldError::GripRefusedFar { .. } => continue,
                        other => return infeasible(other.to_string()),
                    }
                }
            }
        }
        infeasible(format!("could not reach a contact point on object {}", i + 1))
    }

    /// Informative approach and grip, replanning as the reactive layer
    /// demands.
    fn grasp(&mut self, i: usize) -> Exec {
        match self.world.gripped() {
            Some(g) if g == i => return Ok(()),
            Some(_) => self.set_aside()?,
            None => {}
        }
        let mut replans = 0;
        loop {
            let (id, p) = self.make_plan(i)?;
            match self.follow(&p)? {
                FollowEnd::Done => match self.approach_and_grip(i)? {
                    GripEnd::Gripped => return Ok(()),
                    GripEnd::Uncertain => {}
                },
                FollowEnd::Replan(ev, point) => {
                    self.trace.push(Record::Replan {
                        t: self.t(),
                        plan_id: id,
                        kind: ev.kind,
                        waypoint: ev.waypoint,
                        lhs: ev.lhs,
                        rhs: ev.rhs,
                        point: point.map(pt),
                    });
                }
            }
            replans += 1;
            if replans > self.cfg.controller.replan_max {
                return infeasible(format!("replanning limit reached for object {}", i + 1));
            }
        }
    }

    fn fix_context_actions(
        &self,
        report: &TopologyReport,
        grid: &crate::grid::Grid,
        goal: Vec2,
    ) -> Exec<Vec<SymbolicAction>> {
        let map = self.world.snapshot(&self.belief);
        let radii: Vec<f64> = self.world.objects().iter().map(|o| o.radius).collect();
        let mut positions = self.belief.means();
        if let Some(g) = self.world.gripped() {
            positions[g] = self.world.objects()[g].center;
        }
        let body = crate::reactive::Body::of(&self.world);
        let ctx = FixContext {
            map: &map,
            robot_radius: self.world.robot.radius,
            radii: &radii,
            positions: &positions,
            gripped: self.world.gripped(),
            start: body.center,
            goal,
            travel_radius: body.radius,
            keep_out: &self.world.regions,
        };
        fix_mode(report, grid, &ctx).map_err(|e| Failure::Infeasible(e.to_string()))
    }

    /// Puts the gripped object down nearby so the gripper is free.
    fn set_aside(&mut self) -> Exec {
        let here = self.world.pose().position;
        let map = self.world.snapshot(&self.belief);
        let grid =
            crate::grid::Grid::rasterize(&map, self.world.robot.radius, 0.0, self.cfg.controller.grid_resolution);
        let report = TopologyReport {
            is_feasible: true,
            blocking: Vec::new(),
            corridor_cells: Vec::new(),
            diagnostics: TopologyDiagnostics::default(),
        };
        for action in self.fix_context_actions(&report, &grid, here)? {
            self.trace.push(Record::Action { t: self.t(), source: ActionSource::FixMode, action: action.clone() });
            self.perform(&action)?;
        }
        Ok(())
    }

    /// Moves object `j` to `target` and lets go.
    fn disassemble(&mut self, j: usize, target: Vec2) -> Exec {
        if self.world.gripped() != Some(j) {
            self.grasp(j)?;
        }
        if let DriveEnd::TargetInvalid = self.drive(target, self.cfg.controller.arrival_tol, None)? {
            return infeasible(format!("placement for object {} is blocked", j + 1));
        }
        self.let_go(None);
        Ok(())
    }

    fn let_go(&mut self, region: Option<usize>) -> bool {
        let Ok(i) = self.world.release(&mut self.belief) else { return false };
        let in_region = region.is_some_and(|j| self.world.object_in_region(i, j));
        self.trace.push(Record::Release {
            t: self.t(),
            object: i,
            position: pt(self.world.objects()[i].center),
            region,
            in_region,
        });
        self.log_belief();
        in_region
    }

    /// Carries object `i` into region `j`, clearing blockers first.
    fn release(&mut self, i: usize, j: usize) -> Exec {
        if self.world.gripped() != Some(i) {
            return infeasible(format!("object {} is not held", i + 1));
        }
        let goal = self.world.regions[j].centroid();
        for _ in 0..RELEASE_ROUNDS {
            let body = crate::reactive::Body::of(&self.world);
            let map = self.world.snapshot(&self.belief);
            let (report, grid) =
                topology_check(body.center, goal, body.radius, &map, self.cfg.controller.grid_resolution)
                    .map_err(|e| Failure::Infeasible(e.to_string()))?;
            self.trace.push(Record::Topology {
                t: self.t(),
                object: i,
                region: j,
                feasible: report.is_feasible,
                blocking: report.blocking.clone(),
            });
            if !report.is_feasible {
                return infeasible(format!("region {} is cut off by fixed obstacles", j + 1));
            }
            if !report.blocking.is_empty() {
                for action in self.fix_context_actions(&report, &grid, goal)? {
                    self.trace.push(Record::Action {
                        t: self.t(),
                        source: ActionSource::FixMode,
                        action: action.clone(),
                    });
                    self.perform(&action)?;
                }
                self.grasp(i)?;
                continue;
            }
            if let DriveEnd::TargetInvalid = self.drive(goal, self.cfg.controller.arrival_tol, None)? {
                return infeasible(format!("region {} centre is blocked", j + 1));
            }
            return if self.let_go(Some(j)) {
                Ok(())
            } else {
                infeasible(format!("object {} came to rest outside region {}", i + 1, j + 1))
            };
        }
        infeasible(format!("region {} stays blocked", j + 1))
    }
}
