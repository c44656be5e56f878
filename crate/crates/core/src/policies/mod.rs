//! The policy interface and the scripted baselines.
//!
//! A policy sees one [`DecisionContext`] per tick and answers with one
//! [`Action`]. Macros it emits (`Walk`, `PickMacro`) are expanded by the
//! episode loop on the agent's own belief map.

use alloc::boxed::Box;
use alloc::string::String;

use crate::agents::{Action, AgentState};
use crate::grid::Point;
use crate::mapping::{BeliefMap, SceneGraph};
use crate::params::{AgentParams, EpisodeParams};
use crate::sensing::{angle_diff, Observation, Pose};
use crate::tasks::Task;
use crate::world::World;

mod frontier;
mod oracle;
mod querying;
mod random;

pub use frontier::FrontierPolicy;
pub use oracle::OraclePolicy;
pub use querying::QueryingPolicy;
pub use random::RandomPolicy;

/// Everything a policy may look at when deciding.
pub struct DecisionContext<'a> {
    pub agent: usize,
    pub obs: &'a Observation,
    pub belief: &'a BeliefMap,
    pub graph: &'a SceneGraph,
    pub task: &'a Task,
    pub state: &'a AgentState,
    pub params: &'a EpisodeParams,
    /// Ground truth, only for policies that declare themselves privileged.
    pub world: Option<&'a World>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    /// The policy answered, but not with a legal action; the agent stops.
    #[error("malformed action: {0}")]
    Malformed(String),
    /// The policy could not answer at all; the episode fails.
    #[error("policy unavailable: {0}")]
    Unavailable(String),
}

pub trait Policy {
    fn name(&self) -> &str;

    /// Called once per episode before the first decision.
    fn reset(&mut self, task: &Task, agent: usize, seed: u64);

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, PolicyError>;

    /// Whether the policy is granted the ground-truth world.
    fn privileged(&self) -> bool {
        false
    }

    /// Cell the policy is currently heading for, shared with peers.
    fn current_goal(&self) -> Option<crate::grid::Cell> {
        None
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN: [&str; 4] = ["random", "frontier", "oracle", "querying"];

pub fn builtin(name: &str) -> Option<Box<dyn Policy>> {
    Some(match name {
        "random" => Box::new(RandomPolicy::default()),
        "frontier" => Box::new(FrontierPolicy::default()),
        "oracle" => Box::new(OraclePolicy::default()),
        "querying" => Box::new(QueryingPolicy::default()),
        _ => return None,
    })
}

/// Turn that brings `target` closer to straight ahead, or `None` when it is
/// already within half a turn increment of the heading.
pub fn turn_toward(pose: &Pose, target: Point, params: &AgentParams) -> Option<Action> {
    let here = pose.point();
    if here.dist(target) < 1e-9 {
        return None;
    }
    let diff = angle_diff(here.bearing_to(target), pose.heading);
    if libm::fabs(diff) <= params.turn_rad() / 2.0 + 1e-9 {
        None
    } else if diff > 0.0 {
        Some(Action::TurnLeft)
    } else {
        Some(Action::TurnRight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_resolve() {
        for n in BUILTIN {
            assert_eq!(builtin(n).unwrap().name(), n);
        }
        assert!(builtin("gpt").is_none());
    }

    #[test]
    fn turn_toward_picks_the_short_side() {
        let p = AgentParams::default();
        let pose = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(
            turn_toward(&pose, Point::new(1.0, 1.0), &p),
            Some(Action::TurnLeft)
        );
        assert_eq!(
            turn_toward(&pose, Point::new(1.0, -1.0), &p),
            Some(Action::TurnRight)
        );
        assert_eq!(turn_toward(&pose, Point::new(1.0, 0.2), &p), None);
    }
}
