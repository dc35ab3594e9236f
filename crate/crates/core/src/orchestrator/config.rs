use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{GaussianBelief, SensorModel};
use crate::geometry::{vec2, Polygon, Shape, Vec2};
use crate::ltl::{parse_formula, FormulaError, LtlFormula};
use crate::map::Disk;
use crate::planner::{ControlSet, PlannerParams};
use crate::reactive::{ControllerParams, Thresholds};
use crate::world::{Obstacle, Pose, RobotParams, World};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("formula: {0}")]
    Formula(#[from] FormulaError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub position: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk: Option<DiskConfig>,
    /// Known from the start (part of the initial map).
    #[serde(default)]
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Vec<[f64; 2]>,
    /// Per-object isotropic standard deviation (m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    /// Full joint covariance, row-major (m²). Overrides `sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

fn default_radius() -> f64 {
    RobotParams::default().radius
}

fn default_v_max() -> f64 {
    RobotParams::default().v_max
}

fn default_omega_max() -> f64 {
    RobotParams::default().omega_max
}

fn default_dt() -> f64 {
    RobotParams::default().dt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub start: [f64; 2],
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl RobotConfig {
    pub fn params(&self) -> RobotParams {
        RobotParams { radius: self.radius, v_max: self.v_max, omega_max: self.omega_max, dt: self.dt }
    }
}

fn default_cycles() -> usize {
    2
}

fn default_max_steps() -> usize {
    40_000
}

/// A complete scenario: world, prior, mission and tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub formula: String,
    pub workspace: Vec<[f64; 2]>,
    #[serde(default)]
    pub regions: Vec<Vec<[f64; 2]>>,
    pub objects: Vec<ObjectConfig>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleConfig>,
    pub prior: PriorConfig,
    pub robot: RobotConfig,
    pub sensor: SensorModel,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub controller: ControllerParams,
    /// Accepting-edge traversals required for recurrent missions.
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    /// Simulation step limit before declaring a timeout.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn to_vec(p: [f64; 2]) -> Vec2 {
    vec2(p[0], p[1])
}

fn polygon(points: &[[f64; 2]], what: &str) -> Result<Polygon, ConfigError> {
    Polygon::from_points(points).ok_or_else(|| ConfigError::Invalid(format!("{what}: degenerate polygon")))
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn formula(&self) -> Result<LtlFormula, ConfigError> {
        Ok(parse_formula(&self.formula)?)
    }

    pub fn workspace_polygon(&self) -> Result<Polygon, ConfigError> {
        polygon(&self.workspace, "workspace")
    }

    pub fn region_polygons(&self) -> Result<Vec<Polygon>, ConfigError> {
        self.regions.iter().enumerate().map(|(j, r)| polygon(r, &format!("region {}", j + 1))).collect()
    }

    pub fn obstacle_shapes(&self) -> Result<Vec<(Shape, bool)>, ConfigError> {
        self.obstacles
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let shape = match (&o.polygon, &o.disk) {
                    (Some(p), None) => Shape::Polygon(polygon(p, &format!("obstacle {k}"))?),
                    (None, Some(d)) if d.radius > 0.0 => Shape::disk(to_vec(d.center), d.radius),
                    _ => return invalid(format!("obstacle {k}: give exactly one of `polygon` or a positive `disk`")),
                };
                Ok((shape, o.known))
            })
            .collect()
    }

    pub fn prior_belief(&self) -> Result<GaussianBelief, ConfigError> {
        let means: Vec<Vec2> = self.prior.mean.iter().map(|&p| to_vec(p)).collect();
        let n = means.len();
        let belief = match (&self.prior.covariance, &self.prior.sigma) {
            (Some(rows), _) => {
                if rows.len() != 2 * n || rows.iter().any(|r| r.len() != 2 * n) {
                    return invalid("prior covariance must be 2N x 2N");
                }
                let cov = DMatrix::from_fn(2 * n, 2 * n, |i, j| rows[i][j]);
                let mean = DVector::from_iterator(2 * n, means.iter().flat_map(|m| [m.x, m.y]));
                GaussianBelief::new(mean, cov)
            }
            (None, Some(s)) => GaussianBelief::isotropic(&means, s),
            (None, None) => return invalid("prior needs `sigma` or `covariance`"),
        };
        belief.map_err(|e| ConfigError::Invalid(format!("prior: {e}")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.formula()?;
        let ws = self.workspace_polygon()?;
        if !ws.is_convex() {
            return invalid("workspace must be convex");
        }
        let regions = self.region_polygons()?;
        self.obstacle_shapes()?;
        let t = &self.thresholds;
        if !(t.epsilon > 0.0 && t.epsilon_sigma > 0.0 && t.epsilon_mu > 0.0) {
            return invalid("thresholds must be positive");
        }
        if self.sensor.range <= 0.0 || self.sensor.noise_scale < 0.0 || self.sensor.noise_floor <= 0.0 {
            return invalid("sensor range and noise floor must be positive");
        }
        let r = &self.robot;
        if !(r.radius > 0.0 && r.v_max > 0.0 && r.omega_max > 0.0 && r.dt > 0.0) {
            return invalid("robot parameters must be positive");
        }
        if self.prior.mean.len() != self.objects.len() {
            return invalid("prior mean needs one entry per object");
        }
        if self.objects.len() > 64 {
            return invalid("at most 64 objects are supported");
        }
        for (k, o) in self.objects.iter().enumerate() {
            if o.radius <= 0.0 || !ws.contains(to_vec(o.position)) {
                return invalid(format!("object {}: bad radius or outside workspace", k + 1));
            }
        }
        self.prior_belief()?;
        let formula = self.formula()?;
        for p in formula.predicates() {
            if p.object_index() >= self.objects.len() {
                return invalid(format!("formula mentions {p} but there are {} objects", self.objects.len()));
            }
            if let Some(j) = p.region_index() {
                if j >= regions.len() {
                    return invalid(format!("formula mentions {p} but there are {} regions", regions.len()));
                }
            }
        }
        if self.planner.step <= 0.0 || self.planner.max_nodes == 0 || self.planner.grasp_candidates == 0 {
            return invalid("planner step, budget and grasp candidates must be positive");
        }
        if ControlSet::compass(self.planner.step).max_len() > self.sensor.range {
            return invalid("planner moves must not exceed the sensing range");
        }
        if self.n_cycles == 0 {
            return invalid("n_cycles must be positive");
        }
        let world = self.build_world()?;
        if world.clearance() < 0.0 {
            return invalid("robot starts in collision");
        }
        Ok(())
    }

    pub fn build_world(&self) -> Result<World, ConfigError> {
        let obstacles =
            self.obstacle_shapes()?.into_iter().map(|(shape, known)| Obstacle { shape, revealed: known }).collect();
        let objects = self.objects.iter().map(|o| Disk { center: to_vec(o.position), radius: o.radius }).collect();
        let pose = Pose { position: to_vec(self.robot.start), heading: self.robot.heading };
        Ok(World::new(
            self.robot.params(),
            self.sensor,
            self.workspace_polygon()?,
            self.region_polygons()?,
            obstacles,
            objects,
            pose,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "name": "minimal",
        "formula": "F grasp(1)",
        "workspace": [[0,0],[3,0],[3,3],[0,3]],
        "objects": [{"position": [2, 2], "radius": 0.1}],
        "prior": {"mean": [[2, 2]], "sigma": [0.3]},
        "robot": {"start": [0.5, 0.5]},
        "sensor": {"range": 1.0}
    }"#;

    #[test]
    fn minimal_config_loads_with_defaults() {
        let c = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.thresholds, Thresholds::default());
        assert_eq!(c.n_cycles, 2);
        assert_eq!(c.sensor.noise_scale, 0.05);
        let w = c.build_world().unwrap();
        assert_eq!(w.objects().len(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad_formula = MINIMAL.replace("F grasp(1)", "F !grasp(1)");
        assert!(matches!(ScenarioConfig::from_json(&bad_formula), Err(ConfigError::Formula(_))));
        let unknown_object = MINIMAL.replace("F grasp(1)", "F grasp(2)");
        assert!(matches!(ScenarioConfig::from_json(&unknown_object), Err(ConfigError::Invalid(_))));
        let bad_threshold = MINIMAL.replace("\"sensor\"", "\"thresholds\": {\"epsilon\": 0}, \"sensor\"");
        assert!(matches!(ScenarioConfig::from_json(&bad_threshold), Err(ConfigError::Invalid(_))));
        let typo = MINIMAL.replace("\"seed\"", "\"sed\"").replace("\"name\"", "\"nmae\"");
        assert!(matches!(ScenarioConfig::from_json(&typo), Err(ConfigError::Json(_))));
        let long_steps = MINIMAL.replace("\"sensor\": {\"range\": 1.0}", "\"sensor\": {\"range\": 0.5}");
        assert!(matches!(ScenarioConfig::from_json(&long_steps), Err(ConfigError::Invalid(_))));
    }
}
