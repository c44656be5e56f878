//! Tunable parameter blocks shared by the episode loop and the policies.
//!
//! Every default here is also written out by `gridbench` when it emits a
//! config template, so changing one changes the documented default.

use serde::{Deserialize, Serialize};

use crate::interaction::CommConfig;
use crate::sensing::SensorConfig;
use crate::tasks::{Benchmark, TaskParams};

/// Agent kinematics and adhesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub step_m: f64,
    pub turn_deg: f64,
    pub adhesion_range_m: f64,
    /// Maximum distance from the cell ahead at which a carried object may be dropped.
    pub place_search_m: f64,
    /// Agents occupy their cell and block each other.
    pub agents_block: bool,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            step_m: 0.25,
            turn_deg: 30.0,
            adhesion_range_m: 1.5,
            place_search_m: 1.0,
            agents_block: true,
        }
    }
}

impl AgentParams {
    pub fn turn_rad(&self) -> f64 {
        self.turn_deg.to_radians()
    }

    pub fn headings(&self) -> u32 {
        libm::round(360.0 / self.turn_deg) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningParams {
    /// Cells around every obstacle that planners treat as blocked.
    pub inflation_cells: u32,
    /// Frontier clusters smaller than this are ignored.
    pub frontier_min_cluster: usize,
    /// Ground-truth path ends at the path follower's fallback goal rather
    /// than the object cell itself.
    pub gt_path_to_fallback: bool,
}

impl Default for PlanningParams {
    fn default() -> Self {
        PlanningParams {
            inflation_cells: 1,
            frontier_min_cluster: 3,
            gt_path_to_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingParams {
    pub fusion_radius_m: f64,
}

impl Default for MappingParams {
    fn default() -> Self {
        MappingParams {
            fusion_radius_m: 0.5,
        }
    }
}

/// Where the success distance is measured to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceTarget {
    Center,
    Footprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub success_distance_m: f64,
    pub success_fov_deg: f64,
    pub require_line_of_sight: bool,
    pub distance_to: DistanceTarget,
    pub place_radius_m: f64,
    pub match_radius_m: f64,
    /// End a navigation episode as soon as the success predicate holds,
    /// without waiting for an explicit Stop.
    pub auto_success: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            success_distance_m: 2.0,
            success_fov_deg: 60.0,
            require_line_of_sight: true,
            distance_to: DistanceTarget::Center,
            place_radius_m: 1.0,
            match_radius_m: 2.0,
            auto_success: false,
        }
    }
}

/// Primitive-action budgets per benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub b1: u32,
    pub b2: u32,
    pub b3: u32,
    pub b4: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            b1: 500,
            b2: 500,
            b3: 200,
            b4: 50,
        }
    }
}

impl Budgets {
    pub fn for_benchmark(&self, b: Benchmark) -> u32 {
        match b {
            Benchmark::B1 => self.b1,
            Benchmark::B2 => self.b2,
            Benchmark::B3 => self.b3,
            Benchmark::B4Hierarchical | Benchmark::B4Horizontal => self.b4,
        }
    }
}

/// Everything an episode needs besides the scene, the task and the policies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeParams {
    pub sensor: SensorConfig,
    pub agent: AgentParams,
    pub planning: PlanningParams,
    pub mapping: MappingParams,
    pub comm: CommConfig,
    pub eval: EvalParams,
    pub budgets: Budgets,
    pub tasks: TaskParams,
}
