//! Mobile manipulation under uncertainty: temporal-logic task sequencing,
//! information-gathering grasp planning and reactive execution.
//!
//! The crate is organized bottom-up:
//!
//! * [`ltl`] parses task formulas and builds Büchi automata.
//! * [`symbolic`] prunes the automaton, builds the mission graph and picks
//!   the next manipulation action.
//! * [`belief`] holds the Gaussian belief over object positions.
//! * [`planner`] grows a sampling-based tree that reduces uncertainty about
//!   a target object before it is grasped.
//! * [`world`] is the 2-D simulator of robot, objects and obstacles.
//! * [`reactive`] tracks waypoints, triggers replanning and resolves
//!   blocking objects.
//! * [`orchestrator`] wires everything into a scenario run with traces and
//!   plots.

pub mod belief;
pub mod geometry;
pub mod grid;
pub mod ltl;
pub mod map;
pub mod orchestrator;
pub mod planner;
pub mod reactive;
pub mod symbolic;
pub mod world;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/formulas.md")]
    mod formulas {}
    #[doc = include_str!("../../../book/src/mission-graph.md")]
    mod mission_graph {}
    #[doc = include_str!("../../../book/src/belief.md")]
    mod belief {}
    #[doc = include_str!("../../../book/src/planner.md")]
    mod planner {}
    #[doc = include_str!("../../../book/src/execution.md")]
    mod execution {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
