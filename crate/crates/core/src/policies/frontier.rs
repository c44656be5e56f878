use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{turn_toward, DecisionContext, Policy, PolicyError};
use crate::agents::{belief_plan_grid, segment_clear, steer, Action, Steer};
use crate::grid::{cell_center, cell_of_point, Cell, Occupancy, Point, NEIGHBORS8};
use crate::interaction::Message;
use crate::planning::frontier::is_frontier;
use crate::planning::{fmm_field_until, nearest_passable, select_frontier_where, PlanGrid};
use crate::tasks::{Benchmark, Task};

/// Cells of FMM descent handed to the steering controller each tick.
const DESCENT_CELLS: usize = 12;
const MAX_LOOK_TURNS: u32 = 12;
const MAX_STUCK: u32 = 3;

pub(crate) enum Nav {
    Act(Action),
    Arrived,
    Unreachable,
    Stuck,
}

/// One local-planning step toward `goal`: fast marching from the goal to
/// the agent, steepest descent, then pure pursuit along the descent.
pub(crate) fn fmm_step(ctx: &DecisionContext<'_>, plan: &PlanGrid, goal: Cell) -> Nav {
    let res = plan.resolution();
    let own = ctx.state.cell(res);
    let Ok(target) = nearest_passable(plan, goal) else {
        return Nav::Unreachable;
    };
    let field = fmm_field_until(plan, target, Some(own));
    if !field.get(own).is_finite() {
        return Nav::Unreachable;
    }
    let path = field.descend(own, DESCENT_CELLS);
    let grid = &ctx.belief.grid;
    let clear = |a: Point, b: Point| segment_clear(grid, a, b, |_, s| s == Occupancy::Free);
    let mut progress = 0;
    match steer(
        &ctx.state.pose,
        &path,
        &mut progress,
        plan,
        &clear,
        &ctx.params.agent,
    ) {
        Steer::Act(a) => Nav::Act(a),
        Steer::Arrived if *path.last().expect("descent starts at the agent") == target => {
            Nav::Arrived
        }
        Steer::Arrived | Steer::Stuck => Nav::Stuck,
    }
}

/// Frontier-based exploration with fast-marching local planning.
///
/// On benchmarks with a findable target the policy also watches its scene
/// graph and, once a matching node shows up, walks to it, faces it and stops.
#[derive(Debug, Clone, Default)]
pub struct FrontierPolicy {
    goal: Option<Cell>,
    blacklist: Vec<Cell>,
    claims: BTreeMap<String, Cell>,
    stuck: u32,
    look_turns: u32,
    seek: Option<(String, Option<String>)>,
    seek_turns: u32,
}

impl FrontierPolicy {
    fn plan(ctx: &DecisionContext<'_>) -> PlanGrid {
        let own = ctx.state.cell(ctx.belief.grid.resolution());
        belief_plan_grid(&ctx.belief.grid, own, ctx.params.planning.inflation_cells)
    }

    fn read_claims(&mut self, ctx: &DecisionContext<'_>) {
        for m in &ctx.obs.messages_in {
            if let Message::Status { agent, goal, .. } = m {
                if *agent == ctx.state.id {
                    continue;
                }
                match goal {
                    Some(g) => {
                        self.claims.insert(agent.clone(), *g);
                    }
                    None => {
                        self.claims.remove(agent);
                    }
                }
            }
        }
    }

    fn select(&self, ctx: &DecisionContext<'_>) -> Option<Cell> {
        let grid = &ctx.belief.grid;
        let from = ctx.state.pose.point();
        let min = ctx.params.planning.frontier_min_cluster;
        for (size, respect_claims) in [(min, true), (min, false), (1, true), (1, false)] {
            let found = select_frontier_where(grid, from, size, |c| {
                !self.blacklist.iter().any(|&b| c.contains(b))
                    && !(respect_claims && self.claims.values().any(|&g| c.contains(g)))
            });
            if let Some(c) = found {
                return Some(c.representative);
            }
        }
        None
    }

    /// Point the agent should face to reveal the unknown side of `g`.
    fn look_point(ctx: &DecisionContext<'_>, g: Cell) -> Point {
        let grid = &ctx.belief.grid;
        let res = grid.resolution();
        let unknown: Vec<Point> = NEIGHBORS8
            .iter()
            .map(|&(dx, dy)| g.offset(dx, dy))
            .filter(|&n| grid.in_bounds(n) && grid.get(n) == Occupancy::Unknown)
            .map(|n| cell_center(n, res))
            .collect();
        if unknown.is_empty() {
            return cell_center(g, res);
        }
        let k = unknown.len() as f64;
        Point::new(
            unknown.iter().map(|p| p.x).sum::<f64>() / k,
            unknown.iter().map(|p| p.y).sum::<f64>() / k,
        )
    }

    fn drop_goal(&mut self, blacklist: bool) {
        if let Some(g) = self.goal.take() {
            if blacklist {
                self.blacklist.push(g);
            }
        }
        self.stuck = 0;
        self.look_turns = 0;
    }

    /// One exploration decision; `Stop` once no frontier is left.
    pub(crate) fn explore(&mut self, ctx: &DecisionContext<'_>) -> Action {
        self.read_claims(ctx);
        let plan = Self::plan(ctx);
        for _ in 0..16 {
            let g = match self.goal {
                Some(g) => g,
                None => match self.select(ctx) {
                    Some(g) => {
                        self.goal = Some(g);
                        g
                    }
                    None => return Action::Stop,
                },
            };
            if !is_frontier(&ctx.belief.grid, g) {
                self.drop_goal(false);
                continue;
            }
            match fmm_step(ctx, &plan, g) {
                Nav::Act(a) => {
                    if a == Action::MoveForward {
                        self.stuck = 0;
                    }
                    return a;
                }
                Nav::Arrived => {
                    let look = Self::look_point(ctx, g);
                    match turn_toward(&ctx.state.pose, look, &ctx.params.agent) {
                        Some(t) if self.look_turns < MAX_LOOK_TURNS => {
                            self.look_turns += 1;
                            return t;
                        }
                        _ => self.drop_goal(true),
                    }
                }
                Nav::Unreachable => self.drop_goal(true),
                Nav::Stuck => {
                    self.stuck += 1;
                    if self.stuck > MAX_STUCK {
                        self.drop_goal(true);
                    } else {
                        return Action::TurnLeft;
                    }
                }
            }
        }
        Action::Stop
    }

    /// Navigation toward a known target node, if the graph has one.
    fn seek(&mut self, ctx: &DecisionContext<'_>) -> Option<Action> {
        let (class, room) = self.seek.as_ref()?;
        let here = ctx.state.pose.point();
        let node = ctx
            .graph
            .objects
            .iter()
            .filter(|n| n.class_label == *class)
            .filter(|n| {
                room.is_none()
                    || n.room_id.as_deref().and_then(|r| ctx.graph.room_label(r)) == room.as_deref()
            })
            .min_by(|a, b| {
                here.dist(a.center)
                    .total_cmp(&here.dist(b.center))
                    .then(a.id.cmp(&b.id))
            })?;
        let eval = &ctx.params.eval;
        let d = here.dist(node.center);
        let in_view = ctx.obs.visible_objects.iter().any(|v| {
            v.class_label == *class
                && v.center.dist(node.center) <= ctx.params.mapping.fusion_radius_m
        });
        let facing = turn_toward(&ctx.state.pose, node.center, &ctx.params.agent).is_none();
        if in_view && facing && d < eval.success_distance_m {
            return Some(Action::Stop);
        }
        if d < eval.success_distance_m - ctx.params.agent.step_m {
            if let Some(t) = turn_toward(&ctx.state.pose, node.center, &ctx.params.agent) {
                self.seek_turns += 1;
                if self.seek_turns > MAX_LOOK_TURNS {
                    return Some(Action::Stop);
                }
                return Some(t);
            }
        }
        let plan = Self::plan(ctx);
        let goal = cell_of_point(node.center, plan.resolution());
        match fmm_step(ctx, &plan, goal) {
            Nav::Act(a) => Some(a),
            Nav::Arrived | Nav::Stuck => {
                match turn_toward(&ctx.state.pose, node.center, &ctx.params.agent) {
                    Some(t) if self.seek_turns <= MAX_LOOK_TURNS => {
                        self.seek_turns += 1;
                        Some(t)
                    }
                    _ => Some(Action::Stop),
                }
            }
            Nav::Unreachable => None,
        }
    }
}

impl Policy for FrontierPolicy {
    fn name(&self) -> &str {
        "frontier"
    }

    fn reset(&mut self, task: &Task, _agent: usize, _seed: u64) {
        *self = FrontierPolicy::default();
        if task.benchmark == Benchmark::B1 {
            self.seek = task
                .goal
                .target_class
                .clone()
                .map(|c| (c, task.goal.target_room.clone()));
        }
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, PolicyError> {
        if let Some(a) = self.seek(ctx) {
            return Ok(a);
        }
        Ok(self.explore(ctx))
    }

    fn current_goal(&self) -> Option<Cell> {
        self.goal
    }
}
