//! Templated tasks, ground-truth path lengths and success adjudication.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agents::AgentState;
use crate::grid::{cell_of_point, Cell, Point};
use crate::params::EpisodeParams;
use crate::planning::{dstar_lite_plan, nearest_passable, PlanGrid, UnknownPolicy};
use crate::sensing::{success_visibility, Pose};
use crate::world::{ObjectInstance, SceneSpec, World};
use crate::{rng_from_seed, Error};

pub const EXPLORE_INSTRUCTION: &str = "Please explore the entire scene as quickly as possible";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    #[serde(rename = "b1")]
    B1,
    #[serde(rename = "b2")]
    B2,
    #[serde(rename = "b3")]
    B3,
    #[serde(rename = "b4-hierarchical", alias = "b4h")]
    B4Hierarchical,
    #[serde(rename = "b4-horizontal", alias = "b4z")]
    B4Horizontal,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::B1,
        Benchmark::B2,
        Benchmark::B3,
        Benchmark::B4Hierarchical,
        Benchmark::B4Horizontal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::B1 => "b1",
            Benchmark::B2 => "b2",
            Benchmark::B3 => "b3",
            Benchmark::B4Hierarchical => "b4-hierarchical",
            Benchmark::B4Horizontal => "b4-horizontal",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "b1" => Ok(Benchmark::B1),
            "b2" => Ok(Benchmark::B2),
            "b3" => Ok(Benchmark::B3),
            "b4-hierarchical" | "b4h" => Ok(Benchmark::B4Hierarchical),
            "b4-horizontal" | "b4z" => Ok(Benchmark::B4Horizontal),
            _ => Err(Error::Invalid(format!("unknown benchmark {s:?}"))),
        }
    }

    pub fn is_b4(self) -> bool {
        matches!(self, Benchmark::B4Hierarchical | Benchmark::B4Horizontal)
    }

    /// Pick-and-place benchmarks.
    pub fn is_transport(self) -> bool {
        self == Benchmark::B2 || self.is_b4()
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Structured goal behind an instruction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Goal {
    pub target_class: Option<String>,
    pub target_room: Option<String>,
    pub dest_class: Option<String>,
    pub dest_room: Option<String>,
    /// Zero-based index of the agent the task is addressed to.
    pub assigned_agent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub scene_id: String,
    pub benchmark: Benchmark,
    pub instruction: String,
    pub goal: Goal,
    /// One start pose per agent.
    pub start: Vec<Pose>,
    pub shortest_path_m: f64,
    pub solvable: bool,
    pub seed: u64,
}

impl Task {
    /// Agent whose actions and path are scored.
    pub fn scored_agent(&self) -> usize {
        self.goal.assigned_agent.unwrap_or(0)
    }
}

/// Task-generation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParams {
    /// Upper bound on the two-leg ground-truth path of social-manipulation
    /// tasks, so they fit the short action budget.
    pub b4_max_path_m: f64,
    pub max_attempts: u32,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            b4_max_path_m: 5.0,
            max_attempts: 400,
        }
    }
}

/// Renders the instruction for `goal`.
pub fn instruction_for(benchmark: Benchmark, goal: &Goal) -> Result<String, Error> {
    let need = |v: &Option<String>, what: &str| {
        v.clone()
            .ok_or_else(|| Error::Invalid(format!("goal is missing {what}")))
    };
    Ok(match benchmark {
        Benchmark::B1 => format!(
            "Find an {} in {}.",
            need(&goal.target_class, "target_class")?,
            need(&goal.target_room, "target_room")?
        ),
        Benchmark::B3 => EXPLORE_INSTRUCTION.to_string(),
        Benchmark::B2 | Benchmark::B4Hierarchical | Benchmark::B4Horizontal => {
            let body = format!(
                "take the {} in {} to {} in {}.",
                need(&goal.target_class, "target_class")?,
                need(&goal.target_room, "target_room")?,
                need(&goal.dest_class, "dest_class")?,
                need(&goal.dest_room, "dest_room")?
            );
            if benchmark.is_b4() {
                let n = goal
                    .assigned_agent
                    .ok_or_else(|| Error::Invalid("goal is missing assigned_agent".into()))?;
                format!("robot {}, please {}", n + 1, body)
            } else {
                body
            }
        }
    })
}

fn split_in(s: &str) -> Result<(String, String), Error> {
    let (a, b) = s
        .split_once(" in ")
        .ok_or_else(|| Error::Invalid(format!("expected '<object> in <room>', got {s:?}")))?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid(format!("empty slot in {s:?}")));
    }
    Ok((a.into(), b.into()))
}

/// Inverse of [`instruction_for`].
pub fn parse_instruction(benchmark: Benchmark, text: &str) -> Result<Goal, Error> {
    let bad = || {
        Error::Invalid(format!(
            "instruction does not match the {benchmark} template: {text:?}"
        ))
    };
    match benchmark {
        Benchmark::B3 => {
            if text == EXPLORE_INSTRUCTION {
                Ok(Goal::default())
            } else {
                Err(bad())
            }
        }
        Benchmark::B1 => {
            let body = text
                .strip_prefix("Find an ")
                .and_then(|t| t.strip_suffix('.'))
                .ok_or_else(bad)?;
            let (o, r) = split_in(body)?;
            Ok(Goal {
                target_class: Some(o),
                target_room: Some(r),
                ..Goal::default()
            })
        }
        _ => {
            let (assigned, rest) = if benchmark.is_b4() {
                let rest = text.strip_prefix("robot ").ok_or_else(bad)?;
                let (n, rest) = rest.split_once(", please ").ok_or_else(bad)?;
                let n: usize = n.parse().map_err(|_| bad())?;
                if n == 0 {
                    return Err(bad());
                }
                (Some(n - 1), rest)
            } else {
                (None, text)
            };
            let body = rest
                .strip_prefix("take the ")
                .and_then(|t| t.strip_suffix('.'))
                .ok_or_else(bad)?;
            let (src, dst) = body.split_once(" to ").ok_or_else(bad)?;
            let (o1, r1) = split_in(src)?;
            let (o2, r2) = split_in(dst)?;
            Ok(Goal {
                target_class: Some(o1),
                target_room: Some(r1),
                dest_class: Some(o2),
                dest_room: Some(r2),
                assigned_agent: assigned,
            })
        }
    }
}

/// Instances of `class`, optionally restricted to rooms labelled `room`.
pub fn matching<'a>(
    scene: &'a SceneSpec,
    class: Option<&str>,
    room: Option<&str>,
) -> Vec<&'a ObjectInstance> {
    scene
        .objects
        .iter()
        .filter(|o| class.is_none_or(|c| o.class_label == c))
        .filter(|o| room.is_none_or(|r| scene.room_label(&o.room_id) == Some(r)))
        .collect()
}

/// Ground-truth planning mask (unknown blocked, inflated).
pub fn truth_plan_grid(scene: &SceneSpec, params: &EpisodeParams) -> PlanGrid {
    PlanGrid::from_occupancy(
        &scene.grid,
        UnknownPolicy::Blocked,
        params.planning.inflation_cells,
        &[],
    )
}

struct Leg {
    length_m: f64,
    end: Cell,
}

/// Shortest ground-truth leg from `from` to the path follower's goal for
/// `target`.
fn leg(plan: &PlanGrid, from: Cell, target: Point, params: &EpisodeParams) -> Option<Leg> {
    let mut p = plan.clone();
    p.set_passable(from, true);
    let goal = nearest_passable(&p, cell_of_point(target, p.resolution())).ok()?;
    let path = dstar_lite_plan(&p, from, goal).ok()?;
    let extra = if params.planning.gt_path_to_fallback {
        0.0
    } else {
        p.center_of(goal).dist(target)
    };
    Some(Leg {
        length_m: path.length_m + extra,
        end: goal,
    })
}

fn best_leg<'a>(
    plan: &PlanGrid,
    from: Cell,
    targets: &[&'a ObjectInstance],
    params: &EpisodeParams,
) -> Option<(Leg, &'a ObjectInstance)> {
    targets
        .iter()
        .filter_map(|o| leg(plan, from, o.center, params).map(|l| (l, *o)))
        .min_by(|a, b| {
            a.0.length_m
                .total_cmp(&b.0.length_m)
                .then(a.1.id.cmp(&b.1.id))
        })
}

fn transport_length(
    plan: &PlanGrid,
    from: Cell,
    sources: &[&ObjectInstance],
    dests: &[&ObjectInstance],
    params: &EpisodeParams,
) -> Option<f64> {
    best_transport(plan, from, sources, dests, params).map(|(l, _, _)| l)
}

/// Instance of `targets` with the shortest ground-truth leg from `from`,
/// with that length. Ties go to the smaller id.
pub fn best_target<'a>(
    plan: &PlanGrid,
    from: Cell,
    targets: &[&'a ObjectInstance],
    params: &EpisodeParams,
) -> Option<(f64, &'a ObjectInstance)> {
    best_leg(plan, from, targets, params).map(|(l, o)| (l.length_m, o))
}

/// Source and destination instances minimizing the two-leg ground-truth
/// path, with its length.
pub fn best_transport<'a>(
    plan: &PlanGrid,
    from: Cell,
    sources: &[&'a ObjectInstance],
    dests: &[&'a ObjectInstance],
    params: &EpisodeParams,
) -> Option<(f64, &'a ObjectInstance, &'a ObjectInstance)> {
    sources
        .iter()
        .filter_map(|s| {
            let first = leg(plan, from, s.center, params)?;
            let others: Vec<&ObjectInstance> =
                dests.iter().copied().filter(|d| d.id != s.id).collect();
            let (second, d) = best_leg(plan, first.end, &others, params)?;
            Some((first.length_m + second.length_m, *s, d))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
}

/// Ground-truth path length `l` for SPL, or a generation error when the
/// task cannot be solved.
pub fn ground_truth_path(
    scene: &SceneSpec,
    task: &Task,
    params: &EpisodeParams,
) -> Result<f64, Error> {
    if task.benchmark == Benchmark::B3 {
        return Ok(0.0);
    }
    let plan = truth_plan_grid(scene, params);
    let start = task
        .start
        .get(task.scored_agent())
        .ok_or_else(|| Error::Invalid("task has no start pose for its agent".into()))?;
    let from = start.cell(scene.resolution);
    let g = &task.goal;
    let targets = matching(scene, g.target_class.as_deref(), g.target_room.as_deref());
    let unsolvable = || Error::TaskGeneration(format!("task {} is not solvable", task.id));
    if task.benchmark == Benchmark::B1 {
        return best_leg(&plan, from, &targets, params)
            .map(|(l, _)| l.length_m)
            .ok_or_else(unsolvable);
    }
    let sources: Vec<&ObjectInstance> = targets.into_iter().filter(|o| o.pickable).collect();
    let dests = matching(scene, g.dest_class.as_deref(), g.dest_room.as_deref());
    transport_length(&plan, from, &sources, &dests, params).ok_or_else(unsolvable)
}

fn task_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn random_starts(
    rng: &mut crate::Rng,
    cells: &[Cell],
    agents: usize,
    res: f64,
    turn_steps: u32,
    fixed: Option<(usize, Cell)>,
) -> Option<Vec<Pose>> {
    if cells.len() < agents {
        return None;
    }
    let mut chosen: Vec<Cell> = Vec::with_capacity(agents);
    let mut poses = Vec::with_capacity(agents);
    for a in 0..agents {
        let c = match fixed {
            Some((fa, fc)) if fa == a => fc,
            _ => loop {
                let c = cells[rng.random_range(0..cells.len())];
                if !chosen.contains(&c) && fixed.is_none_or(|(_, fc)| fc != c) {
                    break c;
                }
            },
        };
        chosen.push(c);
        let k = rng.random_range(0..turn_steps.max(1));
        let heading = core::f64::consts::TAU * k as f64 / turn_steps.max(1) as f64;
        poses.push(Pose::at_cell(c, res, heading));
    }
    Some(poses)
}

/// Generates `count` solvable tasks for `benchmark` on `scene`.
///
/// Identical arguments give identical task lists. Every agent starts on a
/// traversable cell of the inflated ground-truth grid with a lattice heading.
pub fn generate_tasks(
    scene: &SceneSpec,
    benchmark: Benchmark,
    count: usize,
    seed: u64,
    agents: usize,
    params: &EpisodeParams,
) -> Result<Vec<Task>, Error> {
    if agents == 0 {
        return Err(Error::Invalid("at least one agent is required".into()));
    }
    if benchmark.is_b4() && agents < 2 {
        return Err(Error::Invalid(
            "social manipulation needs at least two agents".into(),
        ));
    }
    let plan = truth_plan_grid(scene, params);
    let free: Vec<Cell> = (0..plan.len())
        .filter(|&i| plan.mask()[i])
        .map(|i| plan.cell_at(i))
        .collect();
    if free.len() < agents {
        return Err(Error::TaskGeneration(
            "not enough traversable cells for the agents".into(),
        ));
    }
    let pickable: Vec<&ObjectInstance> = scene.objects.iter().filter(|o| o.pickable).collect();
    if benchmark == Benchmark::B1 && scene.objects.is_empty() {
        return Err(Error::TaskGeneration("scene has no objects".into()));
    }
    if benchmark.is_transport() && pickable.is_empty() {
        return Err(Error::TaskGeneration(
            "scene has no pickable objects".into(),
        ));
    }
    let headings = params.agent.headings();
    let res = scene.resolution;
    let mut tasks = Vec::with_capacity(count);
    for i in 0..count {
        let tseed = task_seed(seed, i);
        let mut rng = rng_from_seed(tseed);
        let id = format!("{}-{}-{:03}", scene.id, benchmark, i);
        let mut made = None;
        for _ in 0..params.tasks.max_attempts {
            if let Some(t) = try_task(
                scene, benchmark, &plan, &free, &pickable, agents, headings, res, &mut rng, params,
            ) {
                made = Some(t);
                break;
            }
        }
        let (goal, start, l) = made.ok_or_else(|| {
            Error::TaskGeneration(format!(
                "could not build a solvable {benchmark} task on {} after {} attempts",
                scene.id, params.tasks.max_attempts
            ))
        })?;
        tasks.push(Task {
            id,
            scene_id: scene.id.clone(),
            benchmark,
            instruction: instruction_for(benchmark, &goal)?,
            goal,
            start,
            shortest_path_m: l,
            solvable: true,
            seed: tseed,
        });
    }
    Ok(tasks)
}

#[allow(clippy::too_many_arguments)]
fn try_task(
    scene: &SceneSpec,
    benchmark: Benchmark,
    plan: &PlanGrid,
    free: &[Cell],
    pickable: &[&ObjectInstance],
    agents: usize,
    headings: u32,
    res: f64,
    rng: &mut crate::Rng,
    params: &EpisodeParams,
) -> Option<(Goal, Vec<Pose>, f64)> {
    let label = |o: &ObjectInstance| scene.room_label(&o.room_id).map(String::from);
    match benchmark {
        Benchmark::B3 => {
            let start = random_starts(rng, free, agents, res, headings, None)?;
            Some((Goal::default(), start, 0.0))
        }
        Benchmark::B1 => {
            let target = &scene.objects[rng.random_range(0..scene.objects.len())];
            let goal = Goal {
                target_class: Some(target.class_label.clone()),
                target_room: label(target),
                ..Goal::default()
            };
            let start = random_starts(rng, free, agents, res, headings, None)?;
            let targets = matching(
                scene,
                goal.target_class.as_deref(),
                goal.target_room.as_deref(),
            );
            let (l, _) = best_leg(plan, start[0].cell(res), &targets, params)?;
            Some((goal, start, l.length_m))
        }
        _ => {
            let src = pickable[rng.random_range(0..pickable.len())];
            let reach = if benchmark.is_b4() {
                params.tasks.b4_max_path_m
            } else {
                f64::INFINITY
            };
            let dsts: Vec<&ObjectInstance> = scene
                .objects
                .iter()
                .filter(|d| d.class_label != src.class_label && d.center.dist(src.center) <= reach)
                .collect();
            if dsts.is_empty() {
                return None;
            }
            let dst = dsts[rng.random_range(0..dsts.len())];
            let assigned = benchmark.is_b4().then(|| rng.random_range(0..agents));
            let goal = Goal {
                target_class: Some(src.class_label.clone()),
                target_room: label(src),
                dest_class: Some(dst.class_label.clone()),
                dest_room: label(dst),
                assigned_agent: assigned,
            };
            let sources: Vec<&ObjectInstance> = matching(
                scene,
                goal.target_class.as_deref(),
                goal.target_room.as_deref(),
            )
            .into_iter()
            .filter(|o| o.pickable)
            .collect();
            let dests = matching(scene, goal.dest_class.as_deref(), goal.dest_room.as_deref());
            let near = sources.iter().any(|s| {
                dests
                    .iter()
                    .any(|d| d.id != s.id && s.center.dist(d.center) <= params.eval.place_radius_m)
            });
            if near {
                return None;
            }
            let start = if let Some(a) = assigned {
                let budget = params.tasks.b4_max_path_m;
                let second = sources
                    .iter()
                    .filter_map(|s| {
                        let end = nearest_passable(plan, cell_of_point(s.center, res)).ok()?;
                        let others: Vec<&ObjectInstance> =
                            dests.iter().copied().filter(|d| d.id != s.id).collect();
                        best_leg(plan, end, &others, params).map(|(l, _)| l.length_m)
                    })
                    .min_by(|a, b| a.total_cmp(b))?;
                if second > budget {
                    return None;
                }
                let reach = budget - second;
                let near_cells: Vec<Cell> = free
                    .iter()
                    .copied()
                    .filter(|c| {
                        let p = crate::grid::cell_center(*c, res);
                        p.dist(src.center) <= reach
                    })
                    .collect();
                if near_cells.is_empty() {
                    return None;
                }
                let c = near_cells[rng.random_range(0..near_cells.len())];
                random_starts(rng, free, agents, res, headings, Some((a, c)))?
            } else {
                random_starts(rng, free, agents, res, headings, None)?
            };
            let from = start[assigned.unwrap_or(0)].cell(res);
            let l = transport_length(plan, from, &sources, &dests, params)?;
            if benchmark.is_b4() && l > params.tasks.b4_max_path_m {
                return None;
            }
            Some((goal, start, l))
        }
    }
}

/// Outcome of an episode, the input of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub id: String,
    pub final_pose: Pose,
    pub steps_taken: u32,
    pub path_m: f64,
    pub carried: Option<String>,
}

impl From<&AgentState> for AgentSummary {
    fn from(s: &AgentState) -> Self {
        AgentSummary {
            id: s.id.clone(),
            final_pose: s.pose,
            steps_taken: s.steps_taken,
            path_m: s.path_m,
            carried: s.carried.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task: Task,
    pub policy: String,
    pub success: bool,
    /// Diagnostic when the episode was aborted (e.g. a bridge failure).
    pub failure: Option<String>,
    pub shortest_path_m: f64,
    pub executed_path_m: f64,
    pub executed_actions: u32,
    pub budget: u32,
    pub final_distance_m: Option<f64>,
    pub ser: Option<f64>,
    pub mrmse_m: Option<f64>,
    pub ticks: u32,
    pub agents: Vec<AgentSummary>,
}

/// Success predicate at termination. Exploration has no boolean success.
pub fn check_success(
    initial: &SceneSpec,
    world: &World,
    agents: &[AgentState],
    task: &Task,
    params: &EpisodeParams,
) -> bool {
    let g = &task.goal;
    match task.benchmark {
        Benchmark::B3 => false,
        Benchmark::B1 => {
            let Some(agent) = agents.get(task.scored_agent()) else {
                return false;
            };
            matching(initial, g.target_class.as_deref(), g.target_room.as_deref())
                .iter()
                .filter_map(|o| world.scene().object(&o.id))
                .any(|o| success_visibility(&agent.pose, o, world, &params.eval))
        }
        _ => transport_distance(initial, world, agents, task, true)
            .is_some_and(|d| d <= params.eval.place_radius_m),
    }
}

/// Distance from each moved, released source instance to its nearest
/// destination instance; the minimum over sources.
fn transport_distance(
    initial: &SceneSpec,
    world: &World,
    agents: &[AgentState],
    task: &Task,
    moved_only: bool,
) -> Option<f64> {
    let g = &task.goal;
    let dests = matching(initial, g.dest_class.as_deref(), g.dest_room.as_deref());
    matching(initial, g.target_class.as_deref(), g.target_room.as_deref())
        .iter()
        .filter(|s0| s0.pickable)
        .filter_map(|s0| {
            let now = world.scene().object(&s0.id)?;
            let carried = agents
                .iter()
                .any(|a| a.carried.as_deref() == Some(s0.id.as_str()));
            if moved_only && (carried || now.footprint == s0.footprint) {
                return None;
            }
            dests
                .iter()
                .filter(|d| d.id != s0.id)
                .filter_map(|d| world.scene().object(&d.id))
                .map(|d| now.center.dist(d.center))
                .min_by(|a, b| a.total_cmp(b))
        })
        .min_by(|a, b| a.total_cmp(b))
}

/// Navigation error: distance to the nearest matching target at the end.
pub fn final_distance(
    initial: &SceneSpec,
    world: &World,
    agents: &[AgentState],
    task: &Task,
) -> Option<f64> {
    let g = &task.goal;
    match task.benchmark {
        Benchmark::B3 => None,
        Benchmark::B1 => {
            let agent = agents.get(task.scored_agent())?;
            matching(initial, g.target_class.as_deref(), g.target_room.as_deref())
                .iter()
                .filter_map(|o| world.scene().object(&o.id))
                .map(|o| agent.pose.point().dist(o.center))
                .min_by(|a, b| a.total_cmp(b))
        }
        _ => transport_distance(initial, world, agents, task, false),
    }
}
