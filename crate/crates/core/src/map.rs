//! What the robot knows about its surroundings at a given moment: the
//! workspace, obstacles revealed so far, and objects at their estimated
//! positions.

use serde::{Deserialize, Serialize};

use crate::geometry::{Polygon, Shape, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSnapshot {
    pub workspace: Polygon,
    pub obstacles: Vec<Shape>,
    /// Indexed by object; `None` for an object that is not an obstacle right
    /// now (the one in the gripper).
    pub objects: Vec<Option<Disk>>,
}

impl MapSnapshot {
    pub fn occluders(&self) -> &[Shape] {
        &self.obstacles
    }

    pub fn object(&self, i: usize) -> Option<Disk> {
        self.objects.get(i).copied().flatten()
    }

    pub fn without_object(&self, i: usize) -> Self {
        let mut m = self.clone();
        if let Some(slot) = m.objects.get_mut(i) {
            *slot = None;
        }
        m
    }

    fn object_disks<'a>(&'a self, skip: &'a [usize]) -> impl Iterator<Item = Disk> + 'a {
        self.objects.iter().enumerate().filter(move |(i, _)| !skip.contains(i)).filter_map(|(_, d)| *d)
    }

    /// Distance from `p` to the nearest obstacle, object surface or
    /// workspace wall; negative when `p` is outside the workspace or inside
    /// an object.
    pub fn clearance(&self, p: Vec2, skip: &[usize]) -> f64 {
        let wall = if self.workspace.contains(p) {
            self.workspace.boundary_distance(p)
        } else {
            -self.workspace.boundary_distance(p)
        };
        let obs = self.obstacles.iter().map(|o| if o.contains(p) { -o.boundary_distance(p) } else { o.distance(p) });
        let objs = self.object_disks(skip).map(|d| (p - d.center).norm() - d.radius);
        obs.chain(objs).fold(wall, f64::min)
    }

    /// True iff a disk of `radius` at `p` stays clear of everything.
    pub fn disk_free(&self, p: Vec2, radius: f64, skip: &[usize]) -> bool {
        self.clearance(p, skip) >= radius
    }

    /// Whether a disk of `radius` can slide from `a` to `b`. Anything the
    /// disk already overlaps at `a` is ignored, so a robot resting against
    /// an uncertain object estimate can still move away.
    pub fn sweep_free(&self, a: Vec2, b: Vec2, radius: f64, skip: &[usize]) -> bool {
        let wall_ok = self.workspace.boundary_distance(a) < radius
            || self.workspace.edges().all(|(c, d)| crate::geometry::segment_segment_distance(a, b, c, d) >= radius);
        if !wall_ok || !self.workspace.contains(b) {
            return false;
        }
        let obstacles_ok = self.obstacles.iter().all(|o| o.distance(a) < radius || o.segment_distance(a, b) >= radius);
        let objects_ok = self.object_disks(skip).all(|d| {
            let start = (a - d.center).norm() - d.radius;
            start < radius || crate::geometry::point_segment_distance(d.center, a, b) - d.radius >= radius
        });
        obstacles_ok && objects_ok
    }

    /// Index of a revealed obstacle overlapping a disk of `radius` at `p`.
    pub fn obstacle_hit(&self, p: Vec2, radius: f64) -> Option<usize> {
        self.obstacles.iter().position(|o| o.distance(p) < radius)
    }
}
