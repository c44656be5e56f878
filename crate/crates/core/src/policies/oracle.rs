use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{turn_toward, DecisionContext, Policy, PolicyError};
use crate::agents::{walk_macro, Action, WalkTarget};
use crate::grid::cell_of_point;
use crate::mapping::{BeliefMap, SceneGraph};
use crate::planning::{PlanGrid, UnknownPolicy};
use crate::sensing::{line_of_sight, success_visibility};
use crate::tasks::{best_target, best_transport, matching, Benchmark, Task};
use crate::world::{ObjectInstance, World};

const MAX_TURNS: u32 = 12;
const MAX_WALKS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum Phase {
    #[default]
    Start,
    ToTarget,
    Picking,
    ToDest,
    Done,
}

/// Privileged instruction follower: plans on the ground truth, walks to the
/// best target instance and finishes the task with the action interface.
#[derive(Debug, Clone, Default)]
pub struct OraclePolicy {
    phase: Phase,
    queue: VecDeque<Action>,
    target: Option<String>,
    dest: Option<String>,
    turns: u32,
    walks: u32,
}

impl OraclePolicy {
    fn truth_plan(ctx: &DecisionContext<'_>, world: &World) -> PlanGrid {
        let own = ctx.state.cell(world.resolution());
        PlanGrid::from_occupancy(
            world.grid(),
            UnknownPolicy::Blocked,
            ctx.params.planning.inflation_cells,
            &[own],
        )
    }

    /// Queues the walk toward `obj`; false when no walk is possible.
    fn walk_to(&mut self, ctx: &DecisionContext<'_>, world: &World, obj: &ObjectInstance) -> bool {
        if self.walks >= MAX_WALKS {
            return false;
        }
        self.walks += 1;
        let truth = BeliefMap::known(&world.scene().id, &ctx.state.id, world.grid());
        let graph = SceneGraph::empty(&world.scene().id, &ctx.state.id);
        let target = WalkTarget::Cell {
            cell: cell_of_point(obj.center, world.resolution()),
        };
        match walk_macro(ctx.state, &target, &truth, &graph, ctx.params) {
            Ok(actions) => {
                self.queue = actions.into();
                true
            }
            Err(_) => false,
        }
    }

    fn object<'w>(world: &'w World, id: &Option<String>) -> Option<&'w ObjectInstance> {
        id.as_deref().and_then(|id| world.scene().object(id))
    }

    fn find(&mut self, ctx: &DecisionContext<'_>, world: &World) -> Action {
        let g = &ctx.task.goal;
        let targets = matching(
            world.scene(),
            g.target_class.as_deref(),
            g.target_room.as_deref(),
        );
        if targets
            .iter()
            .any(|o| success_visibility(&ctx.state.pose, o, world, &ctx.params.eval))
        {
            return Action::Stop;
        }
        if self.phase == Phase::Start {
            let plan = Self::truth_plan(ctx, world);
            let own = ctx.state.cell(world.resolution());
            let Some((_, obj)) = best_target(&plan, own, &targets, ctx.params) else {
                return Action::Stop;
            };
            self.target = Some(obj.id.clone());
            self.phase = Phase::ToTarget;
            if !self.walk_to(ctx, world, obj) {
                return Action::Stop;
            }
        }
        if let Some(a) = self.queue.pop_front() {
            return a;
        }
        let Some(obj) = Self::object(world, &self.target) else {
            return Action::Stop;
        };
        let d = ctx.state.pose.point().dist(obj.center);
        if d < ctx.params.eval.success_distance_m {
            if let Some(t) = turn_toward(&ctx.state.pose, obj.center, &ctx.params.agent) {
                if self.turns < MAX_TURNS {
                    self.turns += 1;
                    return t;
                }
            }
            return Action::Stop;
        }
        let obj = obj.clone();
        if self.walk_to(ctx, world, &obj) {
            if let Some(a) = self.queue.pop_front() {
                return a;
            }
        }
        Action::Stop
    }

    fn transport(&mut self, ctx: &DecisionContext<'_>, world: &World) -> Action {
        if ctx.agent != ctx.task.scored_agent() {
            return Action::Stop;
        }
        if self.phase == Phase::Start {
            let g = &ctx.task.goal;
            let sources: Vec<&ObjectInstance> = matching(
                world.scene(),
                g.target_class.as_deref(),
                g.target_room.as_deref(),
            )
            .into_iter()
            .filter(|o| o.pickable)
            .collect();
            let dests = matching(
                world.scene(),
                g.dest_class.as_deref(),
                g.dest_room.as_deref(),
            );
            let plan = Self::truth_plan(ctx, world);
            let own = ctx.state.cell(world.resolution());
            let Some((_, s, d)) = best_transport(&plan, own, &sources, &dests, ctx.params) else {
                return Action::Stop;
            };
            self.target = Some(s.id.clone());
            self.dest = Some(d.id.clone());
            self.phase = Phase::ToTarget;
            let s = s.clone();
            if !self.walk_to(ctx, world, &s) {
                return Action::Stop;
            }
        }
        if let Some(a) = self.queue.pop_front() {
            return a;
        }
        match self.phase {
            Phase::ToTarget | Phase::Picking => {
                if ctx.state.carried.is_some() {
                    self.phase = Phase::ToDest;
                    self.walks = 0;
                    self.turns = 0;
                    let Some(dest) = Self::object(world, &self.dest).cloned() else {
                        return Action::Stop;
                    };
                    if !self.walk_to(ctx, world, &dest) {
                        return Action::Stop;
                    }
                    return self.queue.pop_front().unwrap_or(Action::Place);
                }
                let Some(src) = Self::object(world, &self.target).cloned() else {
                    return Action::Stop;
                };
                let here = ctx.state.pose.point();
                let reachable = here.dist(src.center) <= ctx.params.agent.adhesion_range_m
                    && line_of_sight(world, here, &src);
                if reachable && self.phase == Phase::ToTarget {
                    self.phase = Phase::Picking;
                    return Action::Pick { object: src.id };
                }
                self.phase = Phase::ToTarget;
                if self.walk_to(ctx, world, &src) {
                    if let Some(a) = self.queue.pop_front() {
                        return a;
                    }
                    return Action::Pick { object: src.id };
                }
                Action::Stop
            }
            Phase::ToDest => {
                let Some(dest) = Self::object(world, &self.dest) else {
                    return Action::Stop;
                };
                if let Some(t) = turn_toward(&ctx.state.pose, dest.center, &ctx.params.agent) {
                    if self.turns < MAX_TURNS {
                        self.turns += 1;
                        return t;
                    }
                }
                self.phase = Phase::Done;
                Action::Place
            }
            Phase::Start | Phase::Done => Action::Stop,
        }
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn reset(&mut self, _task: &Task, _agent: usize, _seed: u64) {
        *self = OraclePolicy::default();
    }

    fn privileged(&self) -> bool {
        true
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, PolicyError> {
        let world = ctx.world.ok_or_else(|| {
            PolicyError::Unavailable(format!("{} needs the ground-truth world", self.name()))
        })?;
        Ok(match ctx.task.benchmark {
            Benchmark::B1 => self.find(ctx, world),
            Benchmark::B3 => Action::Stop,
            _ => self.transport(ctx, world),
        })
    }
}
