use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::belief::GaussianBelief;
use crate::geometry::{Shape, Vec2};
use crate::reactive::ReplanKind;
use crate::symbolic::SymbolicAction;

pub fn pt(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Symbolic,
    FixMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRecord {
    pub shape: Shape,
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub position: [f64; 2],
    pub radius: f64,
}

/// Marginal of one object: mean, covariance `[xx, xy, yy]` and determinant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRecord {
    pub mean: [f64; 2],
    pub cov: [f64; 3],
    pub det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    AcceptingCycleReached { cycles: usize },
    MissionUnrealizable { reason: String },
    Timeout { max_steps: usize },
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::AcceptingCycleReached { .. } => 0,
            Verdict::MissionUnrealizable { .. } => 2,
            Verdict::Timeout { .. } => 3,
        }
    }
}

/// One line of the execution trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header {
        scenario: String,
        seed: u64,
        formula: String,
        workspace: Vec<[f64; 2]>,
        regions: Vec<Vec<[f64; 2]>>,
        obstacles: Vec<ObstacleRecord>,
        objects: Vec<ObjectRecord>,
        robot_radius: f64,
        sensing_range: f64,
        epsilon: f64,
    },
    Step {
        t: f64,
        x: f64,
        y: f64,
        psi: f64,
        v: f64,
        omega: f64,
        clearance: f64,
        collided: bool,
        gripped: Option<usize>,
    },
    Reveal {
        t: f64,
        obstacle: usize,
    },
    Measurement {
        t: f64,
        position: [f64; 2],
        observed: Vec<usize>,
    },
    Belief {
        t: f64,
        objects: Vec<MarginalRecord>,
    },
    Symbolic {
        t: f64,
        from: usize,
        to: usize,
        symbol: String,
        accepting: bool,
        action: Option<SymbolicAction>,
    },
    Outcome {
        t: f64,
        from: usize,
        to: usize,
        satisfied: bool,
        reason: Option<String>,
    },
    Action {
        t: f64,
        source: ActionSource,
        action: SymbolicAction,
    },
    Plan {
        t: f64,
        plan_id: u64,
        object: usize,
        waypoints: Vec<[f64; 2]>,
        dets: Vec<f64>,
        grasp_target: [f64; 2],
        cost: f64,
        tree_size: usize,
    },
    Replan {
        t: f64,
        plan_id: u64,
        kind: ReplanKind,
        waypoint: usize,
        lhs: f64,
        rhs: f64,
        point: Option<[f64; 2]>,
    },
    Topology {
        t: f64,
        object: usize,
        region: usize,
        feasible: bool,
        blocking: Vec<usize>,
    },
    Grip {
        t: f64,
        object: usize,
        /// Filter uncertainty when the approach was committed to, before
        /// the object was pinned by close-range localization.
        det: f64,
        success: bool,
        reason: Option<String>,
    },
    Release {
        t: f64,
        object: usize,
        position: [f64; 2],
        region: Option<usize>,
        in_region: bool,
    },
    Verdict {
        t: f64,
        steps: usize,
        #[serde(flatten)]
        verdict: Verdict,
    },
}

impl Record {
    pub fn belief(t: f64, b: &GaussianBelief) -> Self {
        let objects = (0..b.num_objects())
            .map(|i| {
                let (m, c) = b.marginal(i).expect("index in range");
                MarginalRecord { mean: pt(m), cov: [c[(0, 0)], c[(0, 1)], c[(1, 1)]], det: c.determinant() }
            })
            .collect();
        Record::Belief { t, objects }
    }
}

/// In-memory trace; serialized as JSON lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub records: Vec<Record>,
}

impl TraceLog {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.records.iter().rev().find_map(|r| match r {
            Record::Verdict { verdict, .. } => Some(verdict),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records =
            text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
        Ok(Self { records })
    }
}
