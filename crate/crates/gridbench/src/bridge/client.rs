//! Reference bridge client running a built-in policy on the client side.

use std::io::{BufRead, Write};

use gridbench_core::agents::Action;
use gridbench_core::mapping::BeliefMap;
use gridbench_core::params::EpisodeParams;
use gridbench_core::policies::{builtin, DecisionContext, Policy};
use gridbench_core::tasks::Task;

use super::{action_name, ClientMessage, DecideRequest, ServerMessage, PROTOCOL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("unknown or privileged policy {0:?}")]
    Policy(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

struct Episode {
    task: Task,
    params: EpisodeParams,
    policy: Box<dyn Policy>,
}

fn reply(w: &mut impl Write, msg: &ClientMessage) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, msg)?;
    w.write_all(b"\n")?;
    w.flush()
}

fn decide(ep: &mut Episode, req: DecideRequest) -> ClientMessage {
    let DecideRequest {
        tick,
        agent,
        mut observation,
        belief,
        graph,
        state,
        legal_actions,
        messages,
        ..
    } = req;
    observation.messages_in = messages;
    let stamps = (0..belief.grid.len())
        .map(|i| u32::from(belief.grid.get(belief.grid.cell_at(i)).is_known()))
        .collect();
    let belief = BeliefMap {
        scene_id: ep.task.scene_id.clone(),
        owner: state.id.clone(),
        grid: belief.grid,
        stamps,
    };
    let ctx = DecisionContext {
        agent,
        obs: &observation,
        belief: &belief,
        graph: &graph,
        task: &ep.task,
        state: &state,
        params: &ep.params,
        world: None,
    };
    let mut action = ep.policy.decide(&ctx).unwrap_or(Action::Stop);
    if !legal_actions.iter().any(|l| l == action_name(&action)) {
        action = Action::Stop;
    }
    ClientMessage::Action {
        tick,
        action: serde_json::to_value(&action).expect("actions serialize"),
        goal: ep.policy.current_goal(),
    }
}

/// Serves episodes until the stream ends. Returns the number of episodes
/// completed. An unreadable message or a protocol version mismatch is
/// answered with an error message and ends the loop with an error.
pub fn serve_client<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    policy: &str,
) -> Result<usize, ClientError> {
    match builtin(policy) {
        Some(p) if !p.privileged() => {}
        _ => return Err(ClientError::Policy(policy.into())),
    }
    let mut episode: Option<Episode> = None;
    let mut done = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg: ServerMessage = match serde_json::from_str(&line) {
            Ok(m) => m,
            Err(e) => {
                let message = format!("unreadable message: {e}");
                reply(
                    &mut writer,
                    &ClientMessage::Error {
                        message: message.clone(),
                    },
                )?;
                return Err(ClientError::Protocol(message));
            }
        };
        match msg {
            ServerMessage::EpisodeStart {
                protocol_version,
                task,
                agent,
                seed,
                params,
            } => {
                if protocol_version != PROTOCOL_VERSION {
                    let message =
                        format!("protocol version {protocol_version}, expected {PROTOCOL_VERSION}");
                    reply(
                        &mut writer,
                        &ClientMessage::Error {
                            message: message.clone(),
                        },
                    )?;
                    return Err(ClientError::Protocol(message));
                }
                let mut p = builtin(policy).expect("checked above");
                p.reset(&task, agent, seed);
                episode = Some(Episode {
                    task,
                    params,
                    policy: p,
                });
                reply(
                    &mut writer,
                    &ClientMessage::Ready {
                        protocol_version: PROTOCOL_VERSION,
                        name: policy.into(),
                    },
                )?;
            }
            ServerMessage::Decide(req) => {
                let Some(ep) = episode.as_mut() else {
                    let message = "decide before episode_start".to_string();
                    reply(
                        &mut writer,
                        &ClientMessage::Error {
                            message: message.clone(),
                        },
                    )?;
                    return Err(ClientError::Protocol(message));
                };
                reply(&mut writer, &decide(ep, *req))?;
            }
            ServerMessage::Rejected { tick, reason } => {
                eprintln!("action at tick {tick} rejected: {reason}");
            }
            ServerMessage::EpisodeEnd { .. } => {
                episode = None;
                done += 1;
                reply(&mut writer, &ClientMessage::Ack)?;
            }
        }
    }
    Ok(done)
}
