use alloc::vec::Vec;

use super::frontier::FrontierPolicy;
use super::{turn_toward, DecisionContext, Policy, PolicyError};
use crate::agents::{Action, StepOutcome, WalkTarget};
use crate::grid::{cell_of_point, Cell, Point};
use crate::interaction::{Message, Query};
use crate::mapping::SceneGraph;
use crate::tasks::{Benchmark, Task};

const MAX_TURNS: u32 = 12;
/// Distance at which a remembered location counts as reached.
const NEAR_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum Mode {
    #[default]
    Task,
    /// Exploring for the rest of the episode.
    Fallback,
}

/// Pick-and-place agent that asks the administrator where things are.
///
/// With an administrator it asks for the source and the destination, walks
/// to the answers and finishes with pick and place; an empty answer,
/// refusal or failed walk turns it into a frontier explorer for the rest of
/// the episode. Without an administrator it explores until its own scene
/// graph (fed by peer exchange) holds both objects. Agents the instruction
/// is not addressed to only explore.
#[derive(Debug, Clone, Default)]
pub struct QueryingPolicy {
    mode: Mode,
    explorer: FrontierPolicy,
    source: Option<Query>,
    dest: Option<Query>,
    asked_source: bool,
    asked_dest: bool,
    source_hints: Option<Vec<Point>>,
    dest_hints: Option<Vec<Point>>,
    walked: Option<Point>,
    abandoned: Vec<Point>,
    turns: u32,
    pick_tries: u32,
    placed: bool,
}

fn graph_hints(graph: &SceneGraph, q: &Query) -> Vec<Point> {
    graph
        .objects
        .iter()
        .filter(|n| n.class_label == q.class_label)
        .filter(|n| {
            q.room_label.is_none()
                || n.room_id.as_deref().and_then(|r| graph.room_label(r)) == q.room_label.as_deref()
        })
        .map(|n| n.center)
        .collect()
}

fn nearest(from: Point, pts: &[Point]) -> Option<Point> {
    pts.iter()
        .copied()
        .min_by(|a, b| from.dist(*a).total_cmp(&from.dist(*b)))
}

impl QueryingPolicy {
    fn read_replies(&mut self, ctx: &DecisionContext<'_>) {
        for m in &ctx.obs.messages_in {
            let (query, centers) = match m {
                Message::Reply { to, query, entries } if *to == ctx.state.id => {
                    (query, entries.iter().map(|e| e.center).collect::<Vec<_>>())
                }
                Message::Refusal { to, query, .. } if *to == ctx.state.id => (query, Vec::new()),
                _ => continue,
            };
            if Some(query) == self.source.as_ref() {
                self.source_hints = Some(centers);
            } else if Some(query) == self.dest.as_ref() {
                self.dest_hints = Some(centers);
            }
        }
    }

    fn hierarchical(ctx: &DecisionContext<'_>) -> bool {
        ctx.task.benchmark == Benchmark::B4Hierarchical
            && ctx.params.comm.mode != crate::interaction::CommMode::None
    }

    /// Moves toward `p` and faces it; `None` once there and facing.
    fn approach(&mut self, ctx: &DecisionContext<'_>, p: Point) -> Option<Action> {
        let here = ctx.state.pose.point();
        if here.dist(p) > NEAR_M && self.walked != Some(p) {
            self.walked = Some(p);
            self.turns = 0;
            return Some(Action::Walk {
                target: WalkTarget::Cell {
                    cell: cell_of_point(p, ctx.belief.grid.resolution()),
                },
            });
        }
        match turn_toward(&ctx.state.pose, p, &ctx.params.agent) {
            Some(t) if self.turns < MAX_TURNS => {
                self.turns += 1;
                Some(t)
            }
            _ => None,
        }
    }

    fn task_step(&mut self, ctx: &DecisionContext<'_>) -> Option<Action> {
        let hier = Self::hierarchical(ctx);
        let (src_q, dst_q) = (self.source.clone()?, self.dest.clone()?);
        if hier && !self.asked_source {
            self.asked_source = true;
            return Some(Action::Ask { query: src_q });
        }
        if hier && !self.asked_dest {
            self.asked_dest = true;
            return Some(Action::Ask { query: dst_q });
        }
        if matches!(ctx.obs.last_outcome, Some(StepOutcome::Failed { .. })) {
            if let Some(w) = self.walked.take() {
                self.abandoned.push(w);
                return None;
            }
        }
        if let Some(StepOutcome::Placed { .. }) = ctx.obs.last_outcome {
            self.placed = true;
        }
        if self.placed {
            return Some(Action::Stop);
        }
        let here = ctx.state.pose.point();
        let keep = |v: Vec<Point>| -> Vec<Point> {
            v.into_iter()
                .filter(|p| !self.abandoned.contains(p))
                .collect()
        };
        let pick_hints = if hier {
            self.source_hints.clone()
        } else {
            Some(graph_hints(ctx.graph, &src_q))
        }
        .map(keep);
        let place_hints = if hier {
            self.dest_hints.clone()
        } else {
            Some(graph_hints(ctx.graph, &dst_q))
        }
        .map(keep);
        if ctx.state.carried.is_none() {
            let hints = pick_hints?;
            let target = nearest(here, &hints)?;
            let seen = ctx
                .obs
                .visible_objects
                .iter()
                .filter(|v| v.class_label == src_q.class_label && v.center.dist(target) <= NEAR_M)
                .min_by(|a, b| here.dist(a.center).total_cmp(&here.dist(b.center)));
            if let Some(v) = seen {
                if self.pick_tries >= 2 {
                    return None;
                }
                self.pick_tries += 1;
                return Some(
                    if here.dist(v.center) <= ctx.params.agent.adhesion_range_m {
                        Action::Pick {
                            object: v.id.clone(),
                        }
                    } else {
                        Action::PickMacro {
                            object: v.id.clone(),
                        }
                    },
                );
            }
            return self.approach(ctx, target);
        }
        let hints = place_hints?;
        let target = nearest(here, &hints)?;
        if self.walked.is_some_and(|w| hints.iter().all(|h| *h != w)) {
            self.walked = None;
        }
        match self.approach(ctx, target) {
            Some(a) => Some(a),
            None => Some(Action::Place),
        }
    }
}

impl Policy for QueryingPolicy {
    fn name(&self) -> &str {
        "querying"
    }

    fn reset(&mut self, task: &Task, agent: usize, seed: u64) {
        *self = QueryingPolicy::default();
        self.explorer.reset(task, agent, seed);
        let g = &task.goal;
        if task.benchmark.is_transport() && agent == task.scored_agent() {
            self.source = g.target_class.clone().map(|c| Query {
                class_label: c,
                room_label: g.target_room.clone(),
            });
            self.dest = g.dest_class.clone().map(|c| Query {
                class_label: c,
                room_label: g.dest_room.clone(),
            });
        }
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Action, PolicyError> {
        self.read_replies(ctx);
        if self.mode == Mode::Task && self.source.is_some() {
            let hier = Self::hierarchical(ctx);
            match self.task_step(ctx) {
                Some(a) => return Ok(a),
                None => {
                    let waiting = hier
                        && (self.source_hints.is_none()
                            || (ctx.state.carried.is_some() && self.dest_hints.is_none()));
                    if hier && !waiting {
                        self.mode = Mode::Fallback;
                    }
                    if waiting {
                        return Ok(Action::TurnLeft);
                    }
                }
            }
        }
        Ok(self.explorer.explore(ctx))
    }

    fn current_goal(&self) -> Option<Cell> {
        self.explorer.current_goal()
    }
}
