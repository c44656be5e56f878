//! External policy bridge.
//!
//! The harness and an external client exchange newline-delimited JSON over
//! the client's standard streams or a local TCP socket. Every request gets
//! exactly one reply, except `rejected` notices, which get none.
//!
//! ```text
//! harness -> {"type":"episode_start","protocol_version":1,"task":..,"agent":0,"seed":..,"params":..}
//! client  -> {"type":"ready","protocol_version":1,"name":"frontier"}
//! harness -> {"type":"decide","tick":0,"agent":0,"task_id":..,"observation":..,"belief":..,
//!             "graph":..,"state":..,"legal_actions":[..],"messages":[..]}
//! client  -> {"type":"action","tick":0,"action":{"type":"turn_left"},"goal":null}
//! harness -> {"type":"rejected","tick":3,"reason":".."}
//! harness -> {"type":"episode_end","task_id":..,"success":false,"failure":null}
//! client  -> {"type":"ack"}
//! ```
//!
//! A client that cannot read a message answers `{"type":"error","message":..}`.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use gridbench_core::agents::Action;
use gridbench_core::interaction::{CommMode, Message};
use gridbench_core::mapping::SceneGraph;
use gridbench_core::params::EpisodeParams;
use gridbench_core::policies::{DecisionContext, Policy, PolicyError};
use gridbench_core::sensing::Observation;
use gridbench_core::tasks::{EpisodeResult, Task};
use gridbench_core::{agents::AgentState, Cell, OccupancyGrid};
use serde::{Deserialize, Serialize};

use crate::config::BridgeConfig;
use crate::{HarnessError, Result};

mod check;
mod client;

pub use check::{bridge_check, CheckCase};
pub use client::{serve_client, ClientError};

pub const PROTOCOL_VERSION: u32 = 1;

/// Wire names of every action variant.
pub const ACTION_NAMES: [&str; 9] = [
    "move_forward",
    "turn_left",
    "turn_right",
    "pick",
    "place",
    "ask",
    "walk",
    "pick_macro",
    "stop",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    EpisodeStart {
        protocol_version: u32,
        task: Task,
        agent: usize,
        seed: u64,
        params: EpisodeParams,
    },
    Decide(Box<DecideRequest>),
    /// The previous action was not accepted; the agent stopped.
    Rejected {
        tick: u32,
        reason: String,
    },
    EpisodeEnd {
        task_id: String,
        success: bool,
        failure: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecideRequest {
    pub tick: u32,
    pub agent: usize,
    pub task_id: String,
    /// The current observation; its `messages_in` is moved to `messages`.
    pub observation: Observation,
    pub belief: BeliefSummary,
    pub graph: SceneGraph,
    pub state: AgentState,
    pub legal_actions: Vec<String>,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub known_cells: usize,
    pub grid: OccupancyGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Ready {
        protocol_version: u32,
        name: String,
    },
    Action {
        tick: u32,
        action: serde_json::Value,
        /// Cell the client is heading for, relayed to teammates.
        #[serde(default)]
        goal: Option<Cell>,
    },
    Ack,
    Error {
        message: String,
    },
}

/// Wire name of an action.
pub fn action_name(a: &Action) -> &'static str {
    match a {
        Action::MoveForward => "move_forward",
        Action::TurnLeft => "turn_left",
        Action::TurnRight => "turn_right",
        Action::Pick { .. } => "pick",
        Action::Place => "place",
        Action::Ask { .. } => "ask",
        Action::Walk { .. } => "walk",
        Action::PickMacro { .. } => "pick_macro",
        Action::Stop => "stop",
    }
}

/// Action kinds that make sense for the agent right now.
pub fn legal_actions(state: &AgentState, params: &EpisodeParams) -> Vec<String> {
    let carrying = state.carried.is_some();
    ACTION_NAMES
        .iter()
        .filter(|n| match **n {
            "pick" | "pick_macro" => !carrying,
            "place" => carrying,
            "ask" => params.comm.mode != CommMode::None,
            _ => true,
        })
        .map(|n| n.to_string())
        .collect()
}

pub fn decide_request(ctx: &DecisionContext<'_>) -> DecideRequest {
    let mut observation = ctx.obs.clone();
    let messages = std::mem::take(&mut observation.messages_in);
    DecideRequest {
        tick: ctx.obs.step,
        agent: ctx.agent,
        task_id: ctx.task.id.clone(),
        observation,
        belief: BeliefSummary {
            known_cells: ctx.belief.known_count(),
            grid: ctx.belief.grid.clone(),
        },
        graph: ctx.graph.clone(),
        state: ctx.state.clone(),
        legal_actions: legal_actions(ctx.state, ctx.params),
        messages,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Spawn this command and talk over its standard streams.
    Command(Vec<String>),
    /// Accept a client on this local address.
    Listen(String),
}

impl Endpoint {
    pub fn from_config(cfg: &BridgeConfig) -> Option<Self> {
        if !cfg.command.is_empty() {
            Some(Endpoint::Command(cfg.command.clone()))
        } else {
            cfg.listen.clone().map(Endpoint::Listen)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BridgeFault {
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("client disconnected: {0}")]
    Disconnected(String),
    #[error("unreadable reply: {0}")]
    Protocol(String),
}

struct Conn {
    writer: Box<dyn Write + Send>,
    lines: Receiver<String>,
    child: Option<Child>,
    socket: Option<TcpStream>,
}

impl Drop for Conn {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
        if let Some(s) = &self.socket {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
    }
}

fn reader_thread(r: impl std::io::Read + Send + 'static) -> Receiver<String> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(r).lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    rx
}

/// One client connection, reopened on demand after a failure.
pub struct BridgeSession {
    endpoint: Endpoint,
    listener: Option<TcpListener>,
    conn: Option<Conn>,
    timeout: Duration,
}

impl BridgeSession {
    /// Binds the listening socket right away so clients can connect.
    pub fn open(endpoint: Endpoint, timeout: Duration) -> Result<Self> {
        let listener = match &endpoint {
            Endpoint::Listen(addr) => Some(
                TcpListener::bind(addr)
                    .map_err(|e| HarnessError::Bridge(format!("cannot listen on {addr}: {e}")))?,
            ),
            Endpoint::Command(c) if c.is_empty() => {
                return Err(HarnessError::Bridge("empty client command".into()))
            }
            Endpoint::Command(_) => None,
        };
        Ok(BridgeSession {
            endpoint,
            listener,
            conn: None,
            timeout,
        })
    }

    pub fn from_config(cfg: &BridgeConfig) -> Result<Self> {
        let endpoint = Endpoint::from_config(cfg)
            .ok_or_else(|| HarnessError::Bridge("no bridge endpoint configured".into()))?;
        Self::open(endpoint, Duration::from_secs_f64(cfg.timeout_s))
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.listener.as_ref().and_then(|l| l.local_addr().ok())
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Drops the current connection; the next request opens a new one.
    pub fn disconnect(&mut self) {
        self.conn = None;
    }

    fn connect(&mut self) -> std::result::Result<&mut Conn, BridgeFault> {
        if self.conn.is_none() {
            let conn = match &self.endpoint {
                Endpoint::Command(cmd) => {
                    let mut child = Command::new(&cmd[0])
                        .args(&cmd[1..])
                        .stdin(Stdio::piped())
                        .stdout(Stdio::piped())
                        .stderr(Stdio::inherit())
                        .spawn()
                        .map_err(|e| {
                            BridgeFault::Disconnected(format!("cannot start {:?}: {e}", cmd[0]))
                        })?;
                    let stdout = child.stdout.take().expect("piped stdout");
                    let stdin = child.stdin.take().expect("piped stdin");
                    Conn {
                        writer: Box::new(stdin),
                        lines: reader_thread(stdout),
                        child: Some(child),
                        socket: None,
                    }
                }
                Endpoint::Listen(_) => {
                    let stream = self.accept()?;
                    let clone = || {
                        stream
                            .try_clone()
                            .map_err(|e| BridgeFault::Disconnected(e.to_string()))
                    };
                    let (read, socket) = (clone()?, clone()?);
                    Conn {
                        writer: Box::new(stream),
                        lines: reader_thread(read),
                        child: None,
                        socket: Some(socket),
                    }
                }
            };
            self.conn = Some(conn);
        }
        Ok(self.conn.as_mut().expect("connection just opened"))
    }

    fn accept(&self) -> std::result::Result<TcpStream, BridgeFault> {
        let listener = self
            .listener
            .as_ref()
            .expect("listen endpoint has a listener");
        let fault = |e: std::io::Error| BridgeFault::Disconnected(e.to_string());
        listener.set_nonblocking(true).map_err(fault)?;
        let deadline = Instant::now() + self.timeout;
        loop {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false).map_err(fault)?;
                    stream.set_nodelay(true).map_err(fault)?;
                    return Ok(stream);
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(BridgeFault::Timeout(self.timeout));
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(fault(e)),
            }
        }
    }

    /// Writes one raw line.
    pub fn send_line(&mut self, line: &str) -> std::result::Result<(), BridgeFault> {
        let conn = self.connect()?;
        let written = conn
            .writer
            .write_all(line.as_bytes())
            .and_then(|_| conn.writer.write_all(b"\n"))
            .and_then(|_| conn.writer.flush());
        if let Err(e) = written {
            self.conn = None;
            return Err(BridgeFault::Disconnected(e.to_string()));
        }
        Ok(())
    }

    pub fn notify(&mut self, msg: &ServerMessage) -> std::result::Result<(), BridgeFault> {
        let line = serde_json::to_string(msg).expect("server messages serialize");
        self.send_line(&line)
    }

    /// Next line from the client, waiting at most the session timeout.
    pub fn recv_line(&mut self) -> std::result::Result<String, BridgeFault> {
        let timeout = self.timeout;
        let conn = self.connect()?;
        match conn.lines.recv_timeout(timeout) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => {
                self.conn = None;
                Err(BridgeFault::Timeout(timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.conn = None;
                Err(BridgeFault::Disconnected("stream closed".into()))
            }
        }
    }

    pub fn request(
        &mut self,
        msg: &ServerMessage,
    ) -> std::result::Result<ClientMessage, BridgeFault> {
        self.notify(msg)?;
        let line = self.recv_line()?;
        serde_json::from_str(&line)
            .map_err(|e| BridgeFault::Protocol(format!("{e}: {}", truncate(&line))))
    }

    /// Opens an episode and returns the name the client reports.
    pub fn start_episode(
        &mut self,
        task: &Task,
        agent: usize,
        seed: u64,
        params: &EpisodeParams,
    ) -> std::result::Result<String, BridgeFault> {
        let reply = self.request(&ServerMessage::EpisodeStart {
            protocol_version: PROTOCOL_VERSION,
            task: task.clone(),
            agent,
            seed,
            params: params.clone(),
        });
        match reply {
            Ok(ClientMessage::Ready {
                protocol_version: PROTOCOL_VERSION,
                name,
            }) => Ok(name),
            Ok(other) => {
                self.conn = None;
                Err(BridgeFault::Protocol(format!(
                    "expected ready, got {}",
                    truncate(&json(&other))
                )))
            }
            Err(e) => Err(e),
        }
    }

    /// Closes an episode. A missing acknowledgement drops the connection.
    /// Nothing is sent when the connection was already lost.
    pub fn end_episode(&mut self, result: &EpisodeResult) {
        if self.conn.is_none() {
            return;
        }
        let reply = self.request(&ServerMessage::EpisodeEnd {
            task_id: result.task.id.clone(),
            success: result.success,
            failure: result.failure.clone(),
        });
        if !matches!(reply, Ok(ClientMessage::Ack)) {
            self.conn = None;
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn truncate(s: &str) -> String {
    const MAX: usize = 200;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Validates a client reply against the request it answers.
pub fn parse_reply(
    reply: ClientMessage,
    tick: u32,
    legal: &[String],
) -> std::result::Result<(Action, Option<Cell>), String> {
    let ClientMessage::Action {
        tick: t,
        action,
        goal,
    } = reply
    else {
        return Err(format!(
            "expected an action, got {}",
            truncate(&json(&reply))
        ));
    };
    if t != tick {
        return Err(format!("reply for tick {t}, expected {tick}"));
    }
    let action: Action = serde_json::from_value(action.clone())
        .map_err(|e| format!("{e}: {}", truncate(&action.to_string())))?;
    let name = action_name(&action);
    if !legal.iter().any(|l| l == name) {
        return Err(format!("{name} is not legal now"));
    }
    Ok((action, goal))
}

/// A policy answered by an external client.
pub struct BridgePolicy {
    session: Arc<Mutex<BridgeSession>>,
    params: EpisodeParams,
    name: String,
    fault: Option<String>,
    goal: Option<Cell>,
}

impl BridgePolicy {
    /// `params` are forwarded to the client with every episode start.
    pub fn new(session: Arc<Mutex<BridgeSession>>, params: EpisodeParams) -> Self {
        BridgePolicy {
            session,
            params,
            name: "bridge".into(),
            fault: None,
            goal: None,
        }
    }
}

impl Policy for BridgePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self, task: &Task, agent: usize, seed: u64) {
        self.goal = None;
        let mut session = self.session.lock().expect("bridge session lock");
        match session.start_episode(task, agent, seed, &self.params) {
            Ok(name) => {
                self.name = format!("bridge:{name}");
                self.fault = None;
            }
            Err(e) => self.fault = Some(e.to_string()),
        }
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> std::result::Result<Action, PolicyError> {
        if let Some(f) = &self.fault {
            return Err(PolicyError::Unavailable(f.clone()));
        }
        let req = decide_request(ctx);
        let (tick, legal) = (req.tick, req.legal_actions.clone());
        let mut session = self.session.lock().expect("bridge session lock");
        let rejected = match session.request(&ServerMessage::Decide(Box::new(req))) {
            Ok(reply) => match parse_reply(reply, tick, &legal) {
                Ok((action, goal)) => {
                    self.goal = goal;
                    return Ok(action);
                }
                Err(reason) => reason,
            },
            Err(BridgeFault::Protocol(reason)) => reason,
            Err(e) => return Err(PolicyError::Unavailable(e.to_string())),
        };
        let _ = session.notify(&ServerMessage::Rejected {
            tick,
            reason: rejected.clone(),
        });
        Err(PolicyError::Malformed(rejected))
    }

    fn current_goal(&self) -> Option<Cell> {
        self.goal
    }
}
