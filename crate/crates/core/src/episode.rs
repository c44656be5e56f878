//! The episode loop, its log, and deterministic replay.
//!
//! Each tick every active agent senses, integrates the observation into its
//! belief, asks its policy for an action (or pops the next primitive of an
//! expanded macro) and steps the world, in agent order. Communication
//! happens at the end of the tick; messages are read on the next one.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::{
    pick_macro, pose_valid, step, walk_macro, Action, AgentState, StepOutcome, WalkTarget,
};
use crate::grid::{cell_of_point, Cell, Point};
use crate::interaction::{
    admin_answer, exchange_if_in_range, Administrator, CommMode, Message, Peer,
};
use crate::mapping::{integrate, merge, BeliefMap, SceneGraph};
use crate::metrics::compute_ser_mrmse;
use crate::params::EpisodeParams;
use crate::policies::{DecisionContext, Policy, PolicyError};
use crate::sensing::{apply_noise, raycast_sense, Observation, Pose};
use crate::tasks::{check_success, final_distance, AgentSummary, Benchmark, EpisodeResult, Task};
use crate::world::{SceneSpec, World};
use crate::{rng_from_seed, Error, Rng};

/// Version of the JSONL episode log layout.
pub const LOG_FORMAT_VERSION: u32 = 1;

/// One agent's turn within a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTick {
    pub agent: usize,
    /// Pose before the action.
    pub pose: Pose,
    pub action: Action,
    /// The action was popped from an expanded macro.
    pub from_macro: bool,
    pub outcome: StepOutcome,
    /// Messages handed to the policy with this decision.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u32,
    pub agents: Vec<AgentTick>,
    /// Agent pairs that merged maps at the end of the tick.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    /// Digest of the run configuration, filled in by the harness.
    pub config_hash: Option<String>,
    pub scene_id: String,
    pub task: Task,
    pub seed: u64,
    pub policies: Vec<String>,
    pub budget: u32,
    pub params: EpisodeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub ticks: Vec<TickRecord>,
    pub footer: EpisodeResult,
}

/// One line of the JSONL form of an [`EpisodeLog`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Tick(TickRecord),
    Footer(EpisodeResult),
}

impl EpisodeLog {
    pub fn lines(&self) -> Vec<LogLine> {
        let mut out = Vec::with_capacity(self.ticks.len() + 2);
        out.push(LogLine::Header(self.header.clone()));
        out.extend(self.ticks.iter().cloned().map(LogLine::Tick));
        out.push(LogLine::Footer(self.footer.clone()));
        out
    }

    /// Reassembles a log; the header must come first and the footer last.
    pub fn from_lines(lines: Vec<LogLine>) -> Result<Self, Error> {
        let mut it = lines.into_iter();
        let Some(LogLine::Header(header)) = it.next() else {
            return Err(Error::Invalid("log does not start with a header".into()));
        };
        let mut ticks = Vec::new();
        let mut footer = None;
        for line in it {
            if footer.is_some() {
                return Err(Error::Invalid("records after the footer".into()));
            }
            match line {
                LogLine::Tick(t) => ticks.push(t),
                LogLine::Footer(f) => footer = Some(f),
                LogLine::Header(_) => return Err(Error::Invalid("second header".into())),
            }
        }
        let footer = footer.ok_or_else(|| Error::Invalid("log has no footer".into()))?;
        Ok(EpisodeLog {
            header,
            ticks,
            footer,
        })
    }
}

pub struct EpisodeSetup<'a> {
    pub scene: &'a SceneSpec,
    pub task: &'a Task,
    pub params: &'a EpisodeParams,
    pub seed: u64,
    pub admin: Option<Administrator>,
}

pub struct EpisodeOutput {
    pub result: EpisodeResult,
    pub log: EpisodeLog,
    pub world: World,
    pub agents: Vec<AgentState>,
    pub beliefs: Vec<BeliefMap>,
    pub graphs: Vec<SceneGraph>,
}

/// Seed handed to agent `i`'s policy.
pub fn agent_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn noise_rng(seed: u64) -> Rng {
    rng_from_seed(agent_seed(seed, usize::MAX - 1))
}

/// Administrator that knows the whole scene.
pub fn ground_truth_admin(scene: &SceneSpec, params: &EpisodeParams) -> Administrator {
    Administrator::new(
        SceneGraph::ground_truth(scene, "admin"),
        Some(BeliefMap::known(&scene.id, "admin", &scene.grid)),
        params.comm.query_budget,
    )
}

/// Folds every agent's map and graph into one, keeping the first owner.
pub fn merge_all(
    beliefs: &[BeliefMap],
    graphs: &[SceneGraph],
    fusion_radius_m: f64,
) -> Result<(BeliefMap, SceneGraph), Error> {
    let (Some(m0), Some(g0)) = (beliefs.first(), graphs.first()) else {
        return Err(Error::EmptyInput("no agent maps to merge"));
    };
    let mut acc = (m0.clone(), g0.clone());
    for (m, g) in beliefs.iter().zip(graphs).skip(1) {
        acc = merge((&acc.0, &acc.1), (m, g), fusion_radius_m)?.0;
    }
    Ok(acc)
}

/// Administrator built from what a team mapped during an exploration run.
pub fn exploration_admin(
    setup: EpisodeSetup<'_>,
    policies: &mut [Box<dyn Policy>],
) -> Result<Administrator, Error> {
    let params = setup.params;
    let out = run_episode(setup, policies)?;
    let (mut map, mut graph) =
        merge_all(&out.beliefs, &out.graphs, params.mapping.fusion_radius_m)?;
    map.owner = "admin".into();
    graph.owner = "admin".into();
    Ok(Administrator::new(
        graph,
        Some(map),
        params.comm.query_budget,
    ))
}

struct Team {
    states: Vec<AgentState>,
    beliefs: Vec<BeliefMap>,
    graphs: Vec<SceneGraph>,
    queues: Vec<VecDeque<Action>>,
    sightings: Vec<BTreeMap<String, Point>>,
    inbox: Vec<Vec<Message>>,
    pending: Vec<Vec<Message>>,
    last: Vec<Option<StepOutcome>>,
}

fn deliver(inbox: &mut Vec<Message>, m: Message) {
    if let Message::Status { agent, .. } = &m {
        inbox.retain(|old| !matches!(old, Message::Status { agent: a, .. } if a == agent));
    }
    inbox.push(m);
}

impl Team {
    fn sense(
        &mut self,
        i: usize,
        tick: u32,
        world: &World,
        params: &EpisodeParams,
        rng: &mut Rng,
    ) -> Observation {
        let pose = self.states[i].pose;
        let mut frame = raycast_sense(world, &pose, &params.sensor);
        apply_noise(&mut frame, params.sensor.noise_sigma_m, rng);
        let mut obs = Observation::from_frame(tick, pose, frame);
        integrate(
            &mut self.beliefs[i],
            &mut self.graphs[i],
            &obs,
            world,
            params.mapping.fusion_radius_m,
        );
        for v in &obs.visible_objects {
            self.sightings[i].insert(v.id.clone(), v.center);
        }
        obs.carried_object = self.states[i].carried.clone();
        obs.last_outcome = self.last[i].clone();
        obs
    }

    fn occupied(&self, i: usize, res: f64) -> Vec<Cell> {
        self.states
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, s)| s.cell(res))
            .collect()
    }

    fn expand(
        &self,
        i: usize,
        action: &Action,
        params: &EpisodeParams,
    ) -> Result<Vec<Action>, Error> {
        let (state, belief, graph) = (&self.states[i], &self.beliefs[i], &self.graphs[i]);
        match action {
            Action::Walk { target } => walk_macro(state, target, belief, graph, params),
            Action::PickMacro { object } => {
                let seen = self.sightings[i]
                    .get(object)
                    .ok_or_else(|| Error::Macro(format!("object {object} has not been seen")))?;
                let target = WalkTarget::Cell {
                    cell: cell_of_point(*seen, belief.grid.resolution()),
                };
                pick_macro(state, object, &target, belief, graph, params)
            }
            _ => Ok(Vec::new()),
        }
    }
}

fn policy_label(policies: &[Box<dyn Policy>]) -> String {
    let mut names: Vec<&str> = policies.iter().map(|p| p.name()).collect();
    names.dedup();
    names.join("+")
}

/// Runs one episode to termination.
///
/// `policies` holds one policy per start pose. Termination comes when the
/// scored agents (every agent for exploration, the addressed agent
/// otherwise) have stopped or spent the budget, when a policy becomes
/// unavailable, or after twice the budget in ticks.
pub fn run_episode(
    setup: EpisodeSetup<'_>,
    policies: &mut [Box<dyn Policy>],
) -> Result<EpisodeOutput, Error> {
    let EpisodeSetup {
        scene,
        task,
        params,
        seed,
        mut admin,
    } = setup;
    params.sensor.validate()?;
    params.comm.validate()?;
    if task.scene_id != scene.id {
        return Err(Error::SceneMismatch {
            left: task.scene_id.clone(),
            right: scene.id.clone(),
        });
    }
    let n = task.start.len();
    if n == 0 || policies.len() != n {
        return Err(Error::Invalid(format!(
            "task has {n} start poses but {} policies were given",
            policies.len()
        )));
    }
    let bench = task.benchmark;
    let comm_on = params.comm.mode != CommMode::None;
    let hierarchical = bench == Benchmark::B4Hierarchical && comm_on;
    if hierarchical && admin.is_none() {
        return Err(Error::Invalid(
            "hierarchical communication needs an administrator".into(),
        ));
    }
    let mut world = World::new(scene.clone());
    let res = world.resolution();
    let mut team = Team {
        states: Vec::with_capacity(n),
        beliefs: Vec::with_capacity(n),
        graphs: Vec::with_capacity(n),
        queues: (0..n).map(|_| VecDeque::new()).collect(),
        sightings: (0..n).map(|_| BTreeMap::new()).collect(),
        inbox: (0..n).map(|_| Vec::new()).collect(),
        pending: (0..n).map(|_| Vec::new()).collect(),
        last: (0..n).map(|_| None).collect(),
    };
    for (i, pose) in task.start.iter().enumerate() {
        if !pose_valid(&world, pose) {
            return Err(Error::Invalid(format!(
                "start pose {i} is not on a free cell"
            )));
        }
        let id = format!("a{i}");
        let mut belief = BeliefMap::empty(&scene.id, &id, world.grid());
        if hierarchical {
            if let Some(map) = admin.as_ref().and_then(|a| a.map.as_ref()) {
                belief.grid = map.grid.clone();
                belief.stamps = map.stamps.clone();
            }
        }
        team.states.push(AgentState::new(&id, *pose));
        team.beliefs.push(belief);
        team.graphs.push(SceneGraph::empty(&scene.id, &id));
        policies[i].reset(task, i, agent_seed(seed, i));
    }
    let budget = params.budgets.for_benchmark(bench);
    let terminal: Vec<usize> = if bench == Benchmark::B3 {
        (0..n).collect()
    } else {
        alloc::vec![task.scored_agent().min(n - 1)]
    };
    let exchange_range = match bench {
        Benchmark::B3 if !params.comm.exploration_range_limited => f64::INFINITY,
        Benchmark::B3 | Benchmark::B4Horizontal => params.comm.comm_range_m,
        _ => -1.0,
    };
    let max_ticks = 2 * budget + 16;
    let mut rng = noise_rng(seed);
    let mut ticks = Vec::new();
    let mut failure = None;
    let mut tick = 0u32;

    'run: while tick < max_ticks {
        let done = |s: &AgentState| s.stopped || s.steps_taken >= budget;
        if terminal.iter().all(|&i| done(&team.states[i])) {
            break;
        }
        for i in 0..n {
            for m in core::mem::take(&mut team.pending[i]) {
                deliver(&mut team.inbox[i], m);
            }
        }
        let mut record = TickRecord {
            tick,
            agents: Vec::new(),
            exchanges: Vec::new(),
        };
        for i in 0..n {
            if done(&team.states[i]) {
                continue;
            }
            let mut obs = team.sense(i, tick, &world, params, &mut rng);
            let pose = team.states[i].pose;
            let mut messages = Vec::new();
            let (mut action, from_macro) = match team.queues[i].pop_front() {
                Some(a) => (a, true),
                None => {
                    obs.messages_in = core::mem::take(&mut team.inbox[i]);
                    let ctx = DecisionContext {
                        agent: i,
                        obs: &obs,
                        belief: &team.beliefs[i],
                        graph: &team.graphs[i],
                        task,
                        state: &team.states[i],
                        params,
                        world: policies[i].privileged().then_some(&world),
                    };
                    let decided = policies[i].decide(&ctx);
                    messages = core::mem::take(&mut obs.messages_in);
                    match decided {
                        Ok(a) => (a, false),
                        Err(PolicyError::Malformed(m)) => {
                            let outcome = StepOutcome::Failed {
                                reason: format!("malformed action: {m}"),
                            };
                            team.states[i].stopped = true;
                            team.last[i] = Some(outcome.clone());
                            record.agents.push(AgentTick {
                                agent: i,
                                pose,
                                action: Action::Stop,
                                from_macro: false,
                                outcome,
                                messages,
                            });
                            continue;
                        }
                        Err(e @ PolicyError::Unavailable(_)) => {
                            failure = Some(format!("agent {i}: {e}"));
                            ticks.push(record);
                            break 'run;
                        }
                    }
                }
            };
            if matches!(action, Action::Walk { .. } | Action::PickMacro { .. }) {
                let outcome = match team.expand(i, &action, params) {
                    Ok(actions) => {
                        let k = actions.len() as u32;
                        team.queues[i] = actions.into();
                        StepOutcome::Expanded { actions: k }
                    }
                    Err(e) => StepOutcome::Failed {
                        reason: e.to_string(),
                    },
                };
                record.agents.push(AgentTick {
                    agent: i,
                    pose,
                    action: action.clone(),
                    from_macro: false,
                    outcome: outcome.clone(),
                    messages: core::mem::take(&mut messages),
                });
                match team.queues[i].pop_front() {
                    Some(a) => action = a,
                    None => {
                        team.last[i] = Some(outcome);
                        continue;
                    }
                }
                let outcome = execute(
                    &mut world,
                    &mut team,
                    i,
                    &action,
                    params,
                    admin.as_mut(),
                    comm_on,
                    res,
                );
                record.agents.push(AgentTick {
                    agent: i,
                    pose,
                    action,
                    from_macro: true,
                    outcome,
                    messages: Vec::new(),
                });
                continue;
            }
            let outcome = execute(
                &mut world,
                &mut team,
                i,
                &action,
                params,
                admin.as_mut(),
                comm_on,
                res,
            );
            record.agents.push(AgentTick {
                agent: i,
                pose,
                action,
                from_macro,
                outcome,
                messages,
            });
        }
        if comm_on && exchange_range >= 0.0 {
            communicate(
                &mut team,
                &policies[..],
                exchange_range,
                params,
                &mut record,
            )?;
        }
        ticks.push(record);
        tick += 1;
        if bench == Benchmark::B1
            && params.eval.auto_success
            && check_success(scene, &world, &team.states, task, params)
        {
            break;
        }
    }

    for i in 0..n {
        team.sense(i, tick, &world, params, &mut rng);
    }
    let scored = task.scored_agent().min(n - 1);
    let (ser, mrmse_m) = if bench == Benchmark::B3 {
        let (_, graph) = merge_all(&team.beliefs, &team.graphs, params.mapping.fusion_radius_m)?;
        let (ser, mrmse) = compute_ser_mrmse(&graph, scene, params.eval.match_radius_m)?;
        (Some(ser), mrmse)
    } else {
        (None, None)
    };
    let executed_actions = if bench == Benchmark::B3 {
        team.states.iter().map(|s| s.steps_taken).max().unwrap_or(0)
    } else {
        team.states[scored].steps_taken
    };
    let result = EpisodeResult {
        task: task.clone(),
        policy: policy_label(policies),
        success: failure.is_none()
            && (bench != Benchmark::B1 || params.eval.auto_success || team.states[scored].stopped)
            && check_success(scene, &world, &team.states, task, params),
        failure,
        shortest_path_m: task.shortest_path_m,
        executed_path_m: team.states[scored].path_m,
        executed_actions,
        budget,
        final_distance_m: final_distance(scene, &world, &team.states, task),
        ser,
        mrmse_m,
        ticks: tick,
        agents: team.states.iter().map(AgentSummary::from).collect(),
    };
    let log = EpisodeLog {
        header: LogHeader {
            format_version: LOG_FORMAT_VERSION,
            config_hash: None,
            scene_id: scene.id.clone(),
            task: task.clone(),
            seed,
            policies: policies.iter().map(|p| p.name().to_string()).collect(),
            budget,
            params: params.clone(),
        },
        ticks,
        footer: result.clone(),
    };
    Ok(EpisodeOutput {
        result,
        log,
        world,
        agents: team.states,
        beliefs: team.beliefs,
        graphs: team.graphs,
    })
}

#[allow(clippy::too_many_arguments)]
fn execute(
    world: &mut World,
    team: &mut Team,
    i: usize,
    action: &Action,
    params: &EpisodeParams,
    admin: Option<&mut Administrator>,
    comm_on: bool,
    res: f64,
) -> StepOutcome {
    let occupied = team.occupied(i, res);
    let outcome = step(world, &mut team.states[i], action, &occupied, &params.agent);
    if let Action::Ask { query } = action {
        let id = team.states[i].id.clone();
        let answer = match admin {
            Some(admin) if comm_on => admin_answer(admin, &id, query),
            _ => Message::Refusal {
                to: id,
                query: query.clone(),
                reason: "no administrator".into(),
            },
        };
        team.pending[i].push(answer);
    }
    if matches!(outcome, StepOutcome::Blocked | StepOutcome::Failed { .. }) {
        team.queues[i].clear();
    }
    team.last[i] = Some(outcome.clone());
    outcome
}

fn communicate(
    team: &mut Team,
    policies: &[Box<dyn Policy>],
    range: f64,
    params: &EpisodeParams,
    record: &mut TickRecord,
) -> Result<(), Error> {
    let n = team.states.len();
    for i in 0..n {
        for j in i + 1..n {
            let (lo, hi) = team.beliefs.split_at_mut(j);
            let (glo, ghi) = team.graphs.split_at_mut(j);
            let a = Peer {
                pose: team.states[i].pose,
                map: &mut lo[i],
                graph: &mut glo[i],
            };
            let b = Peer {
                pose: team.states[j].pose,
                map: &mut hi[0],
                graph: &mut ghi[0],
            };
            if exchange_if_in_range(a, b, range, params.mapping.fusion_radius_m)?.is_some() {
                record.exchanges.push([i, j]);
            }
        }
    }
    for i in 0..n {
        let status = Message::Status {
            agent: team.states[i].id.clone(),
            pose: team.states[i].pose,
            goal: policies[i].current_goal(),
        };
        for j in 0..n {
            if j != i
                && team.states[i]
                    .pose
                    .point()
                    .dist(team.states[j].pose.point())
                    <= range
            {
                team.pending[j].push(status.clone());
            }
        }
    }
    Ok(())
}

/// Re-executes the logged primitives against `scene` and checks that every
/// outcome and the final poses match the log.
pub fn replay_log(scene: &SceneSpec, log: &EpisodeLog) -> Result<(World, Vec<AgentState>), Error> {
    if log.header.scene_id != scene.id {
        return Err(Error::SceneMismatch {
            left: log.header.scene_id.clone(),
            right: scene.id.clone(),
        });
    }
    let params = &log.header.params;
    let mut world = World::new(scene.clone());
    let res = world.resolution();
    let mut states: Vec<AgentState> = log
        .header
        .task
        .start
        .iter()
        .enumerate()
        .map(|(i, p)| AgentState::new(&format!("a{i}"), *p))
        .collect();
    for t in &log.ticks {
        for rec in &t.agents {
            let i = rec.agent;
            if i >= states.len() {
                return Err(Error::Invalid(format!(
                    "tick {}: unknown agent {i}",
                    t.tick
                )));
            }
            if states[i].pose != rec.pose {
                return Err(Error::Invalid(format!(
                    "tick {} agent {i}: pose diverged from the log",
                    t.tick
                )));
            }
            if matches!(rec.outcome, StepOutcome::Expanded { .. }) {
                continue;
            }
            if matches!(rec.action, Action::Walk { .. } | Action::PickMacro { .. }) {
                continue;
            }
            if rec.action == Action::Stop {
                states[i].stopped = true;
                continue;
            }
            let occupied: Vec<Cell> = states
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, s)| s.cell(res))
                .collect();
            let outcome = step(
                &mut world,
                &mut states[i],
                &rec.action,
                &occupied,
                &params.agent,
            );
            if outcome != rec.outcome {
                return Err(Error::Invalid(format!(
                    "tick {} agent {i}: logged {:?}, replayed {:?}",
                    t.tick, rec.outcome, outcome
                )));
            }
        }
    }
    for (s, f) in states.iter().zip(&log.footer.agents) {
        if s.pose != f.final_pose || s.steps_taken != f.steps_taken {
            return Err(Error::Invalid(format!(
                "agent {} final state diverged from the log",
                s.id
            )));
        }
    }
    Ok((world, states))
}
