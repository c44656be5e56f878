//! Protocol conformance cases run against an external client.

use gridbench_core::agents::AgentState;
use gridbench_core::mapping::{integrate, BeliefMap, SceneGraph};
use gridbench_core::params::EpisodeParams;
use gridbench_core::sensing::{raycast_sense, Observation};
use gridbench_core::tasks::{generate_tasks, Benchmark, Task};
use gridbench_core::world::{generate_scene, SceneGenConfig, World};

use super::{
    action_name, BeliefSummary, BridgeFault, BridgeSession, ClientMessage, DecideRequest,
    ServerMessage, PROTOCOL_VERSION,
};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Fixture {
    task: Task,
    params: EpisodeParams,
    request: DecideRequest,
}

fn fixture() -> Result<Fixture> {
    let params = EpisodeParams::default();
    let scene = generate_scene(&SceneGenConfig::single_room(), 7)?;
    let task = generate_tasks(&scene, Benchmark::B2, 1, 7, 1, &params)?.remove(0);
    let world = World::new(scene.clone());
    let pose = task.start[0];
    let frame = raycast_sense(&world, &pose, &params.sensor);
    let obs = Observation::from_frame(0, pose, frame);
    let mut belief = BeliefMap::empty(&scene.id, "a0", world.grid());
    let mut graph = SceneGraph::empty(&scene.id, "a0");
    integrate(
        &mut belief,
        &mut graph,
        &obs,
        &world,
        params.mapping.fusion_radius_m,
    );
    let state = AgentState::new("a0", pose);
    let request = DecideRequest {
        tick: 0,
        agent: 0,
        task_id: task.id.clone(),
        observation: obs,
        belief: BeliefSummary {
            known_cells: belief.known_count(),
            grid: belief.grid,
        },
        graph,
        legal_actions: super::legal_actions(&state, &params),
        state,
        messages: Vec::new(),
    };
    Ok(Fixture {
        task,
        params,
        request,
    })
}

fn describe(r: &std::result::Result<ClientMessage, BridgeFault>) -> String {
    match r {
        Ok(m) => serde_json::to_string(m).unwrap_or_default(),
        Err(e) => e.to_string(),
    }
}

fn action_case(session: &mut BridgeSession, name: &'static str, req: DecideRequest) -> CheckCase {
    let tick = req.tick;
    let legal = req.legal_actions.clone();
    let reply = session.request(&ServerMessage::Decide(Box::new(req)));
    let detail = describe(&reply);
    let passed = match reply {
        Ok(r) => match super::parse_reply(r, tick, &legal) {
            Ok((a, _)) => legal.iter().any(|l| l == action_name(&a)),
            Err(_) => false,
        },
        Err(_) => false,
    };
    CheckCase {
        name,
        passed,
        detail,
    }
}

/// Runs every conformance case in order on `session`. Cases after a
/// failure still run; the client is reconnected where a case needs a
/// fresh connection.
pub fn bridge_check(session: &mut BridgeSession) -> Result<Vec<CheckCase>> {
    let f = fixture()?;
    let mut cases = Vec::new();

    let start = ServerMessage::EpisodeStart {
        protocol_version: PROTOCOL_VERSION,
        task: f.task.clone(),
        agent: 0,
        seed: 7,
        params: f.params.clone(),
    };
    let reply = session.request(&start);
    cases.push(CheckCase {
        name: "handshake",
        passed: matches!(&reply, Ok(ClientMessage::Ready { protocol_version, .. }) if *protocol_version == PROTOCOL_VERSION),
        detail: describe(&reply),
    });

    cases.push(action_case(session, "action_reply", f.request.clone()));

    let mut later = f.request.clone();
    later.tick = 5;
    cases.push(action_case(session, "tick_echo", later));

    let mut only_stop = f.request.clone();
    only_stop.tick = 6;
    only_stop.legal_actions = vec!["stop".into()];
    cases.push(action_case(session, "legal_actions_respected", only_stop));

    let notice = session.notify(&ServerMessage::Rejected {
        tick: 6,
        reason: "conformance check".into(),
    });
    let mut after = f.request.clone();
    after.tick = 7;
    let mut case = action_case(session, "rejection_not_answered", after);
    if let Err(e) = notice {
        case.passed = false;
        case.detail = e.to_string();
    }
    cases.push(case);

    let reply = session.request(&ServerMessage::EpisodeEnd {
        task_id: f.task.id.clone(),
        success: false,
        failure: None,
    });
    cases.push(CheckCase {
        name: "episode_end_acknowledged",
        passed: matches!(reply, Ok(ClientMessage::Ack)),
        detail: describe(&reply),
    });

    let sent = session.send_line("{\"type\":\"decide\",\"tick\":");
    let reply = sent.and_then(|_| session.recv_line());
    let (passed, detail) = match reply {
        Ok(line) => match serde_json::from_str::<ClientMessage>(&line) {
            Ok(ClientMessage::Error { message }) => (true, message),
            _ => (false, line),
        },
        Err(BridgeFault::Disconnected(d)) => (true, format!("client closed the connection: {d}")),
        Err(e) => (false, e.to_string()),
    };
    cases.push(CheckCase {
        name: "malformed_message_diagnosed",
        passed,
        detail,
    });

    session.disconnect();
    let reply = session.request(&ServerMessage::EpisodeStart {
        protocol_version: PROTOCOL_VERSION + 1000,
        task: f.task,
        agent: 0,
        seed: 7,
        params: f.params,
    });
    cases.push(CheckCase {
        name: "version_mismatch_refused",
        passed: matches!(
            reply,
            Ok(ClientMessage::Error { .. }) | Err(BridgeFault::Disconnected(_))
        ),
        detail: describe(&reply),
    });
    session.disconnect();
    Ok(cases)
}
