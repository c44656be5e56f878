//! Agent kinematics, the action space, adhesion pick and place, and the
//! `<walk>` / `<pick>` macros.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{traverse_segment, Cell, Occupancy, OccupancyGrid, Point};
use crate::interaction::Query;
use crate::mapping::{BeliefMap, SceneGraph};
use crate::params::{AgentParams, EpisodeParams};
use crate::planning::{
    fmm_field_until, nearest_passable, DStarLite, DistanceField, PlanError, PlanGrid, UnknownPolicy,
};
use crate::sensing::{angle_diff, line_of_sight, normalize_angle, Pose};
use crate::world::World;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkTarget {
    /// An object node of the walking agent's scene graph.
    Node {
        id: String,
    },
    Cell {
        cell: Cell,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Pick { object: String },
    Place,
    Ask { query: Query },
    Walk { target: WalkTarget },
    PickMacro { object: String },
    Stop,
}

impl Action {
    /// Primitives are executed directly and counted against the budget.
    pub fn is_primitive(&self) -> bool {
        !matches!(
            self,
            Action::Walk { .. } | Action::PickMacro { .. } | Action::Stop
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepOutcome {
    Moved,
    Turned,
    Blocked,
    Picked {
        object: String,
    },
    Placed {
        object: String,
        footprint: Vec<Cell>,
    },
    Asked,
    Stopped,
    /// A macro turned into this many queued primitives.
    Expanded {
        actions: u32,
    },
    Failed {
        reason: String,
    },
}

impl StepOutcome {
    pub fn failed(reason: &str) -> Self {
        StepOutcome::Failed {
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: String,
    pub pose: Pose,
    pub carried: Option<String>,
    /// Footprint size `[w, h]` of the carried object.
    pub carried_size: Option<[u32; 2]>,
    pub steps_taken: u32,
    pub action_log: Vec<Action>,
    /// Distance actually travelled, meters.
    pub path_m: f64,
    pub stopped: bool,
}

impl AgentState {
    pub fn new(id: &str, pose: Pose) -> Self {
        AgentState {
            id: id.into(),
            pose,
            carried: None,
            carried_size: None,
            steps_taken: 0,
            action_log: Vec::new(),
            path_m: 0.0,
            stopped: false,
        }
    }

    pub fn cell(&self, resolution: f64) -> Cell {
        self.pose.cell(resolution)
    }
}

fn heading_index(heading: f64, turn: f64) -> i64 {
    libm::round(heading / turn) as i64
}

fn heading_of(k: i64, turn: f64) -> f64 {
    normalize_angle(k as f64 * turn)
}

/// Pose after a turn of `dir` increments, snapped to the heading lattice.
pub fn turned(pose: &Pose, dir: i64, params: &AgentParams) -> Pose {
    let turn = params.turn_rad();
    let n = params.headings() as i64;
    let k = (heading_index(pose.heading, turn) + dir).rem_euclid(n);
    Pose {
        heading: heading_of(k, turn),
        ..*pose
    }
}

/// Position one step ahead of `pose`.
pub fn ahead(pose: &Pose, step_m: f64) -> Point {
    Point::new(
        pose.x + step_m * libm::cos(pose.heading),
        pose.y + step_m * libm::sin(pose.heading),
    )
}

/// True when every cell swept by `from -> to` is in bounds and accepted.
pub fn segment_clear(
    grid: &OccupancyGrid,
    from: Point,
    to: Point,
    ok: impl Fn(Cell, Occupancy) -> bool,
) -> bool {
    traverse_segment(from, to, grid.resolution(), |c| {
        grid.in_bounds(c) && ok(c, grid.get(c))
    })
}

/// Executes one action against the world.
///
/// `occupied` holds the cells of the other agents. Every primitive counts
/// one step, including ones whose effect fails; macros must be expanded by
/// the caller and are rejected here without cost.
pub fn step(
    world: &mut World,
    state: &mut AgentState,
    action: &Action,
    occupied: &[Cell],
    params: &AgentParams,
) -> StepOutcome {
    if !action.is_primitive() {
        return match action {
            Action::Stop => {
                state.stopped = true;
                StepOutcome::Stopped
            }
            _ => StepOutcome::failed("macro actions must be expanded before stepping"),
        };
    }
    state.steps_taken += 1;
    state.action_log.push(action.clone());
    match action {
        Action::MoveForward => {
            let from = state.pose.point();
            let to = ahead(&state.pose, params.step_m);
            let res = world.resolution();
            let dest = crate::grid::cell_of_point(to, res);
            let free = segment_clear(world.grid(), from, to, |_, s| s == Occupancy::Free);
            if !free || (params.agents_block && occupied.contains(&dest)) {
                return StepOutcome::Blocked;
            }
            state.pose = Pose {
                x: to.x,
                y: to.y,
                heading: state.pose.heading,
            };
            state.path_m += params.step_m;
            if let Some(obj) = state
                .carried
                .as_deref()
                .and_then(|id| world.object_index(id))
            {
                world.carry_to(obj, to);
            }
            StepOutcome::Moved
        }
        Action::TurnLeft | Action::TurnRight => {
            let dir = if *action == Action::TurnLeft { 1 } else { -1 };
            state.pose = turned(&state.pose, dir, params);
            StepOutcome::Turned
        }
        Action::Pick { object } => pick(world, state, object, params),
        Action::Place => place(world, state, occupied, params),
        Action::Ask { .. } => StepOutcome::Asked,
        Action::Walk { .. } | Action::PickMacro { .. } | Action::Stop => unreachable!(),
    }
}

/// Adhesion pick: in range, in sight and pickable.
pub fn pick(
    world: &mut World,
    state: &mut AgentState,
    object: &str,
    params: &AgentParams,
) -> StepOutcome {
    if state.carried.is_some() {
        return StepOutcome::failed("already carrying an object");
    }
    let Some(oi) = world.object_index(object) else {
        return StepOutcome::failed("unknown object");
    };
    let obj = &world.objects()[oi];
    if !obj.pickable {
        return StepOutcome::failed("object is not pickable");
    }
    let here = state.pose.point();
    if here.dist(obj.center) > params.adhesion_range_m {
        return StepOutcome::failed("object out of adhesion range");
    }
    if !line_of_sight(world, here, obj) {
        return StepOutcome::failed("object not in line of sight");
    }
    let size = obj
        .bbox()
        .map(|(lo, hi)| [(hi.x - lo.x + 1) as u32, (hi.y - lo.y + 1) as u32])
        .unwrap_or([1, 1]);
    world.lift(oi, here);
    state.carried = Some(object.into());
    state.carried_size = Some(size);
    StepOutcome::Picked {
        object: object.into(),
    }
}

/// Footprint of size `size` anchored so that `c` is its center cell.
pub fn footprint_at(c: Cell, size: [u32; 2]) -> Vec<Cell> {
    let (w, h) = (size[0] as i32, size[1] as i32);
    let (x0, y0) = (c.x - (w - 1) / 2, c.y - (h - 1) / 2);
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            out.push(Cell::new(x, y));
        }
    }
    out
}

/// Drops the carried object at the nearest fitting free cell around the cell
/// one step ahead.
pub fn place(
    world: &mut World,
    state: &mut AgentState,
    occupied: &[Cell],
    params: &AgentParams,
) -> StepOutcome {
    let Some(id) = state.carried.clone() else {
        return StepOutcome::failed("nothing carried");
    };
    let Some(oi) = world.object_index(&id) else {
        return StepOutcome::failed("carried object missing from scene");
    };
    let res = world.resolution();
    let size = state.carried_size.unwrap_or([1, 1]);
    let me = state.cell(res);
    let target = crate::grid::cell_of_point(ahead(&state.pose, params.step_m), res);
    let r = libm::ceil(params.place_search_m / res) as i32;
    let max_d2 = (params.place_search_m / res) * (params.place_search_m / res) + 1e-9;
    let mut candidates: Vec<Cell> = Vec::new();
    for y in target.y - r..=target.y + r {
        for x in target.x - r..=target.x + r {
            let c = Cell::new(x, y);
            if (target.dist2(c) as f64) <= max_d2 {
                candidates.push(c);
            }
        }
    }
    candidates.sort_by_key(|c| (target.dist2(*c), c.row_major()));
    let grid = world.grid();
    let fits = |fp: &[Cell]| {
        let room = world.room_index_at(fp[0]);
        room.is_some()
            && fp.iter().all(|&c| {
                grid.in_bounds(c)
                    && grid.get(c) == Occupancy::Free
                    && c != me
                    && !occupied.contains(&c)
                    && world.room_index_at(c) == room
            })
    };
    let Some(fp) = candidates
        .into_iter()
        .map(|c| footprint_at(c, size))
        .find(|fp| fits(fp))
    else {
        return StepOutcome::failed("no free cell to place the object");
    };
    world.drop_at(oi, fp.clone());
    state.carried = None;
    state.carried_size = None;
    StepOutcome::Placed {
        object: id,
        footprint: fp,
    }
}

/// Result of one steering decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Steer {
    Act(Action),
    Arrived,
    Stuck,
}

const LOOKAHEAD_M: f64 = 1.0;

/// Pure-pursuit steering along a cell path on the heading lattice.
///
/// The pursuit target is the farthest path cell within the lookahead
/// distance that is visible over traversable cells of `plan`. The agent
/// moves forward when its heading is the best lattice heading that makes
/// progress with a clear step, and turns toward that heading otherwise.
pub fn steer(
    pose: &Pose,
    path: &[Cell],
    progress: &mut usize,
    plan: &PlanGrid,
    clear: &dyn Fn(Point, Point) -> bool,
    params: &AgentParams,
) -> Steer {
    let Some(&last) = path.last() else {
        return Steer::Arrived;
    };
    let res = plan.resolution();
    let here = pose.point();
    let goal = plan.center_of(last);
    let d_goal = here.dist(goal);
    if d_goal <= params.step_m / 2.0 {
        return Steer::Arrived;
    }
    let window = (libm::ceil(LOOKAHEAD_M / res) as usize).max(2);
    let hi = (*progress + window).min(path.len() - 1);
    if let Some((j, _)) = (*progress..=hi)
        .map(|j| (j, here.dist(plan.center_of(path[j]))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
    {
        *progress = j;
    }
    let own = pose.cell(res);
    let mut target = path[(*progress + 1).min(path.len() - 1)];
    let far = (*progress + window).min(path.len() - 1);
    for j in (*progress + 1..=far).rev() {
        let p = plan.center_of(path[j]);
        if p.dist(here) > LOOKAHEAD_M + 1e-9 {
            continue;
        }
        if traverse_segment(here, p, res, |c| c == own || plan.passable(c)) {
            target = path[j];
            break;
        }
    }
    let turn = params.turn_rad();
    let n = params.headings() as i64;
    let current = heading_index(pose.heading, turn).rem_euclid(n);
    // Fall back to hidden path cells when the visible target is too close
    // for any step to approach it.
    let mut targets = alloc::vec![target];
    targets.extend(
        (*progress + 1..=far)
            .rev()
            .map(|j| path[j])
            .filter(|&c| c != target && plan.center_of(c).dist(here) <= LOOKAHEAD_M + 1e-9),
    );
    for target in targets {
        let t = plan.center_of(target);
        let d_t = here.dist(t);
        let bearing = here.bearing_to(t);
        let mut order: Vec<(f64, i64)> = (0..n)
            .map(|k| (libm::fabs(angle_diff(heading_of(k, turn), bearing)), k))
            .filter(|(d, _)| *d < core::f64::consts::FRAC_PI_2)
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, k) in order {
            let h = heading_of(k, turn);
            let next = Point::new(
                here.x + params.step_m * libm::cos(h),
                here.y + params.step_m * libm::sin(h),
            );
            if next.dist(t) >= d_t || !clear(here, next) {
                continue;
            }
            if k == current {
                return Steer::Act(Action::MoveForward);
            }
            let diff = angle_diff(h, pose.heading);
            return Steer::Act(if diff > 0.0 {
                Action::TurnLeft
            } else {
                Action::TurnRight
            });
        }
    }
    let final_approach = target == last;
    if final_approach && d_goal < params.step_m {
        Steer::Arrived
    } else {
        Steer::Stuck
    }
}

/// One move of greedy descent on a cost-to-go field.
///
/// Among the lattice headings whose step is clear and lands on a passable
/// cell with a lower field value, the lowest landing value wins (ties go to
/// fewer turns). The agent moves when that heading is its own and turns
/// toward it otherwise.
pub fn field_step(
    pose: &Pose,
    field: &DistanceField,
    plan: &PlanGrid,
    clear: &dyn Fn(Point, Point) -> bool,
    params: &AgentParams,
) -> Steer {
    let res = plan.resolution();
    let here = pose.point();
    let d_goal = here.dist(plan.center_of(field.source));
    if d_goal <= params.step_m / 2.0 {
        return Steer::Arrived;
    }
    let v = field.get(pose.cell(res));
    let turn = params.turn_rad();
    let n = params.headings() as i64;
    let current = heading_index(pose.heading, turn).rem_euclid(n);
    let mut best: Option<(f64, i64, i64)> = None;
    for k in 0..n {
        let h = heading_of(k, turn);
        let next = Point::new(
            here.x + params.step_m * libm::cos(h),
            here.y + params.step_m * libm::sin(h),
        );
        let c = crate::grid::cell_of_point(next, res);
        let nv = field.get(c);
        if !(nv < v) || !plan.passable(c) || !clear(here, next) {
            continue;
        }
        let turns = (k - current).rem_euclid(n).min((current - k).rem_euclid(n));
        if best.is_none_or(|(bv, bt, _)| nv < bv || (nv == bv && turns < bt)) {
            best = Some((nv, turns, k));
        }
    }
    match best {
        Some((_, _, k)) if k == current => Steer::Act(Action::MoveForward),
        Some((_, _, k)) => {
            let diff = angle_diff(heading_of(k, turn), pose.heading);
            Steer::Act(if diff > 0.0 {
                Action::TurnLeft
            } else {
                Action::TurnRight
            })
        }
        None if d_goal < params.step_m => Steer::Arrived,
        None => Steer::Stuck,
    }
}

/// Incremental path follower: D* Lite keeps the path to the goal current on
/// a changing planning grid, and [`field_step`] descends the fast-marching
/// field seeded at the goal.
#[derive(Debug, Clone)]
pub struct Navigator {
    goal: Cell,
    dstar: Option<DStarLite>,
    path: Vec<Cell>,
    field: Option<DistanceField>,
}

impl Navigator {
    pub fn new(goal: Cell) -> Self {
        Navigator {
            goal,
            dstar: None,
            path: Vec::new(),
            field: None,
        }
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn path(&self) -> &[Cell] {
        &self.path
    }

    fn replan(&mut self, start: Cell, plan: &PlanGrid) -> Result<(), PlanError> {
        match &mut self.dstar {
            Some(d) => {
                if d.start() != start {
                    d.move_start(start)?;
                }
                d.update_grid(plan);
            }
            None => self.dstar = Some(DStarLite::new(plan.clone(), start, self.goal)?),
        }
        let d = self.dstar.as_mut().expect("planner initialised above");
        self.path = d.plan()?.cells;
        self.field = Some(fmm_field_until(plan, self.goal, Some(start)));
        Ok(())
    }

    /// Next steering decision from `pose` on `plan`.
    pub fn next(
        &mut self,
        pose: &Pose,
        plan: &PlanGrid,
        clear: &dyn Fn(Point, Point) -> bool,
        params: &AgentParams,
    ) -> Result<Steer, PlanError> {
        let start = pose.cell(plan.resolution());
        let mut own = plan.clone();
        own.set_passable(start, true);
        let plan = &own;
        let changed = self.dstar.as_ref().is_none_or(|d| d.grid() != plan);
        if changed || self.field.is_none() {
            self.replan(start, plan)?;
        }
        let field = self.field.as_ref().expect("field computed on replan");
        let s = field_step(pose, field, plan, clear, params);
        if s != Steer::Stuck || !field.get(start).is_finite() {
            return Ok(s);
        }
        self.replan(start, plan)?;
        let field = self.field.as_ref().expect("field computed on replan");
        Ok(field_step(pose, field, plan, clear, params))
    }
}

/// Planning grid over a belief map with unknown cells blocked.
pub fn belief_plan_grid(grid: &OccupancyGrid, start: Cell, inflation: u32) -> PlanGrid {
    PlanGrid::from_occupancy(grid, UnknownPolicy::Blocked, inflation, &[start])
}

/// Goal cell a walk toward `target` ends on.
pub fn resolve_walk_goal(
    target: &WalkTarget,
    belief: &BeliefMap,
    graph: &SceneGraph,
    plan: &PlanGrid,
) -> Result<Cell, Error> {
    let cell = match target {
        WalkTarget::Node { id } => {
            let node = graph
                .node(id)
                .ok_or_else(|| Error::Macro(format!("target {id} is not in the scene graph")))?;
            crate::grid::cell_of_point(node.center, belief.grid.resolution())
        }
        WalkTarget::Cell { cell } => {
            if !belief.grid.in_bounds(*cell) || !belief.grid.get(*cell).is_known() {
                return Err(Error::Macro(format!(
                    "target cell {cell} is unknown to the belief map"
                )));
            }
            *cell
        }
    };
    nearest_passable(plan, cell)
        .map_err(|e| Error::Macro(format!("no reachable goal near {cell}: {e}")))
}

/// Expands `<walk>` into primitives by following the D* Lite path on the
/// belief map (unknown blocked). The expansion is simulated against the
/// belief alone.
pub fn walk_macro(
    state: &AgentState,
    target: &WalkTarget,
    belief: &BeliefMap,
    graph: &SceneGraph,
    params: &EpisodeParams,
) -> Result<Vec<Action>, Error> {
    let res = belief.grid.resolution();
    let start = state.cell(res);
    let plan = belief_plan_grid(&belief.grid, start, params.planning.inflation_cells);
    let goal = resolve_walk_goal(target, belief, graph, &plan)?;
    let clear = |a: Point, b: Point| segment_clear(&belief.grid, a, b, |_, s| s == Occupancy::Free);
    let mut nav = Navigator::new(goal);
    let mut pose = state.pose;
    let mut out = Vec::new();
    let cap = 64 + 4 * (belief.grid.width() + belief.grid.height()) as usize;
    loop {
        if out.len() > cap {
            return Err(Error::Macro("walk did not converge".into()));
        }
        let s = nav
            .next(&pose, &plan, &clear, &params.agent)
            .map_err(|e| Error::Macro(format!("no path to target: {e}")))?;
        match s {
            Steer::Arrived => return Ok(out),
            Steer::Stuck => return Err(Error::Macro("walk is stuck".into())),
            Steer::Act(a) => {
                pose = match a {
                    Action::MoveForward => {
                        let p = ahead(&pose, params.agent.step_m);
                        Pose {
                            x: p.x,
                            y: p.y,
                            heading: pose.heading,
                        }
                    }
                    Action::TurnLeft => turned(&pose, 1, &params.agent),
                    Action::TurnRight => turned(&pose, -1, &params.agent),
                    _ => pose,
                };
                out.push(a);
            }
        }
    }
}

/// Expands `<pick>`: walk toward where the object was seen, then `Pick`.
pub fn pick_macro(
    state: &AgentState,
    object: &str,
    target: &WalkTarget,
    belief: &BeliefMap,
    graph: &SceneGraph,
    params: &EpisodeParams,
) -> Result<Vec<Action>, Error> {
    let mut actions = walk_macro(state, target, belief, graph, params)?;
    actions.push(Action::Pick {
        object: object.into(),
    });
    Ok(actions)
}

/// Whether a world position can host an agent.
pub fn pose_valid(world: &World, pose: &Pose) -> bool {
    world
        .grid()
        .cell_of(pose.point())
        .is_some_and(|c| world.grid().get(c) == Occupancy::Free)
}
