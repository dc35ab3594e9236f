//! Ground-truth 2-D world: a unicycle robot with a gripper, movable disk
//! objects, fixed obstacles that are revealed on first sight, and target
//! regions.

use nalgebra::{DVector, Matrix2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{visible_objects, GaussianBelief, Measurement, SensorModel};
use crate::geometry::{heading, vec2, Polygon, Shape, Vec2};
use crate::map::{Disk, MapSnapshot};

/// Spread of a belief marginal once the object's position is known exactly.
pub const SIGMA_KNOWN: f64 = 1e-4;
/// Contact tolerance for gripping (m).
const CONTACT_TOLERANCE: f64 = 1e-9;
pub const GRIP_TOLERANCE: f64 = 0.05;
/// Boundary sampling step used when checking obstacle sightings (m).
const REVEAL_SPACING: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("command ({v}, {omega}) exceeds the velocity limits")]
    CommandOutOfBounds { v: f64, omega: f64 },
    #[error("grip refused: uncertainty {det:.3e} above threshold")]
    GripRefusedUncertain { det: f64 },
    #[error("grip refused: object is {distance:.3} m away")]
    GripRefusedFar { distance: f64 },
    #[error("the gripper already holds object {object}")]
    AlreadyGripping { object: usize },
    #[error("nothing is gripped")]
    NothingGripped,
    #[error("object index {0} out of range")]
    NoSuchObject(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    pub radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub dt: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self { radius: 0.2, v_max: 1.0, omega_max: 2.0, dt: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub shape: Shape,
    pub revealed: bool,
}

/// Robot and gripped object treated as one disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedBody {
    pub center: Vec2,
    pub radius: f64,
    /// Distance from the robot center to the combined center (the object
    /// radius).
    pub offset: f64,
    pub heading: f64,
}

impl CombinedBody {
    /// Maps unicycle inputs `(v, ω)` to the velocity of the combined center.
    pub fn jacobian(&self) -> Matrix2<f64> {
        let (s, c) = self.heading.sin_cos();
        Matrix2::new(c, -self.offset * s, s, self.offset * c)
    }

    /// Unicycle inputs that move the combined center with velocity `u`.
    pub fn inputs_for(&self, u: Vec2) -> (f64, f64) {
        let e = heading(self.heading);
        let n = vec2(-e.y, e.x);
        (e.dot(&u), n.dot(&u) / self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub collided: bool,
}

#[derive(Debug, Clone)]
pub struct World {
    pub robot: RobotParams,
    pub sensor: SensorModel,
    pub workspace: Polygon,
    pub regions: Vec<Polygon>,
    pub obstacles: Vec<Obstacle>,
    objects: Vec<Disk>,
    pose: Pose,
    grip: Option<usize>,
    time: f64,
    /// Skip measurement noise (tests).
    pub noise_free: bool,
}

impl World {
    pub fn new(
        robot: RobotParams,
        sensor: SensorModel,
        workspace: Polygon,
        regions: Vec<Polygon>,
        obstacles: Vec<Obstacle>,
        objects: Vec<Disk>,
        pose: Pose,
    ) -> Self {
        Self { robot, sensor, workspace, regions, obstacles, objects, pose, grip: None, time: 0.0, noise_free: false }
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn gripped(&self) -> Option<usize> {
        self.grip
    }

    pub fn objects(&self) -> &[Disk] {
        &self.objects
    }

    pub fn object_positions(&self) -> Vec<Vec2> {
        self.objects.iter().map(|o| o.center).collect()
    }

    pub fn combined_body(&self) -> Option<CombinedBody> {
        self.grip.map(|i| {
            let rho = self.objects[i].radius;
            CombinedBody {
                center: self.pose.position + heading(self.pose.heading) * rho,
                radius: self.robot.radius + rho,
                offset: rho,
                heading: self.pose.heading,
            }
        })
    }

    pub fn revealed_obstacles(&self) -> Vec<Shape> {
        self.obstacles.iter().filter(|o| o.revealed).map(|o| o.shape.clone()).collect()
    }

    fn all_obstacle_shapes(&self) -> Vec<Shape> {
        self.obstacles.iter().map(|o| o.shape.clone()).collect()
    }

    /// The robot's view: revealed obstacles and objects at their believed
    /// positions. The gripped object is left out.
    pub fn snapshot(&self, belief: &GaussianBelief) -> MapSnapshot {
        let objects = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (Some(i) != self.grip).then(|| Disk { center: belief.object_mean(i), radius: o.radius }))
            .collect();
        MapSnapshot { workspace: self.workspace.clone(), obstacles: self.revealed_obstacles(), objects }
    }

    /// Ground truth with every obstacle, for collision checks.
    pub fn truth(&self) -> MapSnapshot {
        let objects = self.objects.iter().enumerate().map(|(i, o)| (Some(i) != self.grip).then_some(*o)).collect();
        MapSnapshot { workspace: self.workspace.clone(), obstacles: self.all_obstacle_shapes(), objects }
    }

    /// Smallest gap between the robot (and gripped object) and anything
    /// else, in the true world.
    pub fn clearance(&self) -> f64 {
        let truth = self.truth();
        let mut c = truth.clearance(self.pose.position, &[]) - self.robot.radius;
        if let Some(i) = self.grip {
            let o = self.gripped_center(self.pose);
            c = c.min(truth.clearance(o, &[]) - self.objects[i].radius);
        }
        c
    }

    fn gripped_center(&self, pose: Pose) -> Vec2 {
        let i = self.grip.expect("gripping");
        pose.position + heading(pose.heading) * (self.robot.radius + self.objects[i].radius)
    }

    /// Integrates one unicycle step. A step that would bring the robot or
    /// the gripped object into contact with anything is rejected and the
    /// pose is kept.
    pub fn step(&mut self, v: f64, omega: f64) -> Result<StepOutcome, WorldError> {
        let tol = 1e-9;
        if v.abs() > self.robot.v_max + tol
            || omega.abs() > self.robot.omega_max + tol
            || !v.is_finite()
            || !omega.is_finite()
        {
            return Err(WorldError::CommandOutOfBounds { v, omega });
        }
        let dt = self.robot.dt;
        self.time += dt;
        let old = self.pose;
        let new = Pose {
            position: old.position + heading(old.heading) * (v * dt),
            heading: crate::geometry::wrap_angle(old.heading + omega * dt),
        };
        let truth = self.truth();
        // contact is allowed; only penetration counts
        let r = self.robot.radius - CONTACT_TOLERANCE;
        let mut ok = truth.disk_free(new.position, r, &[]) && truth.sweep_free(old.position, new.position, r, &[]);
        if ok {
            if let Some(i) = self.grip {
                let rho = self.objects[i].radius - CONTACT_TOLERANCE;
                let a = self.gripped_center(old);
                let b = self.gripped_center(new);
                ok = truth.disk_free(b, rho, &[]) && truth.sweep_free(a, b, rho, &[]);
            }
        }
        if !ok {
            return Ok(StepOutcome { collided: true });
        }
        self.pose = new;
        if let Some(i) = self.grip {
            self.objects[i].center = self.gripped_center(new);
        }
        Ok(StepOutcome { collided: false })
    }

    /// Marks obstacles as revealed when any part of their boundary is within
    /// sensing range and in line of sight. Returns newly revealed indices.
    pub fn sense(&mut self) -> Vec<usize> {
        let x = self.pose.position;
        let range = self.sensor.range;
        let shapes = self.all_obstacle_shapes();
        let mut newly = Vec::new();
        for (k, ob) in self.obstacles.iter().enumerate() {
            if ob.revealed {
                continue;
            }
            let near = ob.shape.closest_boundary_point(x);
            if ob.shape.contains(x) || (near - x).norm() > range {
                continue;
            }
            let mut samples = vec![near];
            samples.extend(ob.shape.boundary_samples(REVEAL_SPACING));
            let seen = samples.iter().any(|p| {
                (p - x).norm() <= range
                    && !shapes.iter().enumerate().any(|(j, s)| j != k && s.segment_hits_interior(x, *p))
                    && !ob.shape.segment_hits_interior(x, *p)
            });
            if seen {
                newly.push(k);
            }
        }
        for &k in &newly {
            self.obstacles[k].revealed = true;
        }
        newly
    }

    /// Objects visible from the current pose (gripped object excluded).
    pub fn visible(&self) -> Vec<usize> {
        // only fixed obstacles block the view; objects are small
        let occluders = self.all_obstacle_shapes();
        visible_objects(self.pose.position, &self.object_positions(), &occluders, self.sensor.range)
            .into_iter()
            .filter(|&i| Some(i) != self.grip)
            .collect()
    }

    /// Noisy position measurement of every visible object.
    pub fn measure<R: Rng>(&self, rng: &mut R) -> Measurement {
        let observed = self.visible();
        let truth: Vec<Vec2> = observed.iter().map(|&i| self.objects[i].center).collect();
        let noise = self.sensor.expected_noise(&truth);
        let mut y = DVector::from_iterator(2 * truth.len(), truth.iter().flat_map(|p| [p.x, p.y]));
        if !self.noise_free {
            for k in 0..y.len() {
                let z: f64 = StandardNormal.sample(rng);
                y[k] += noise[k].sqrt() * z;
            }
        }
        Measurement { observed, y, noise }
    }

    /// True position of object `i` if it is currently visible.
    pub fn localize(&self, i: usize) -> Option<Vec2> {
        self.visible().contains(&i).then(|| self.objects[i].center)
    }

    /// Closes the gripper on object `i`. Requires a confident estimate and
    /// contact within tolerance; the robot turns to face the object and the
    /// object snaps to the contact point.
    pub fn try_grip(&mut self, belief: &mut GaussianBelief, i: usize, epsilon: f64) -> Result<(), WorldError> {
        if let Some(g) = self.grip {
            return Err(WorldError::AlreadyGripping { object: g });
        }
        let obj = *self.objects.get(i).ok_or(WorldError::NoSuchObject(i))?;
        let det = belief.uncertainty(i).map_err(|_| WorldError::NoSuchObject(i))?;
        if det > epsilon {
            return Err(WorldError::GripRefusedUncertain { det });
        }
        let x = self.pose.position;
        let distance = (obj.center - x).norm();
        if distance > self.robot.radius + obj.radius + GRIP_TOLERANCE {
            return Err(WorldError::GripRefusedFar { distance });
        }
        let psi = (obj.center.y - x.y).atan2(obj.center.x - x.x);
        let contact = x + heading(psi) * (self.robot.radius + obj.radius);
        if !self.truth().disk_free(contact, obj.radius, &[i]) {
            return Err(WorldError::GripRefusedFar { distance });
        }
        self.pose.heading = psi;
        self.objects[i].center = contact;
        self.grip = Some(i);
        belief.set_known(i, contact, SIGMA_KNOWN).map_err(|_| WorldError::NoSuchObject(i))?;
        Ok(())
    }

    /// Opens the gripper. The object stays where it is and the belief
    /// remembers that spot.
    pub fn release(&mut self, belief: &mut GaussianBelief) -> Result<usize, WorldError> {
        let i = self.grip.take().ok_or(WorldError::NothingGripped)?;
        belief.set_known(i, self.objects[i].center, SIGMA_KNOWN).map_err(|_| WorldError::NoSuchObject(i))?;
        Ok(i)
    }

    pub fn object_in_region(&self, i: usize, region: usize) -> bool {
        self.regions.get(region).is_some_and(|r| r.contains(self.objects[i].center))
    }
}
