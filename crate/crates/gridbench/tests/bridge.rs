//! The external policy bridge end to end: scripted clients over TCP and the
//! reference client as a subprocess.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::Command;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use gridbench::bridge::ServerMessage;
use gridbench::config::{RunConfig, BRIDGE_POLICY};
use gridbench::io::{log_files, read_log};
use gridbench::suite::{run_suite, SuiteOutput};
use gridbench_core::agents::StepOutcome;
use gridbench_core::tasks::Benchmark;
use serde_json::json;
use tempfile::TempDir;

enum Step {
    Reply(serde_json::Value),
    Silent,
    Hangup,
}

/// Messages seen on each connection, by type and tick.
type Transcript = Vec<Vec<(String, Option<u32>)>>;

fn free_addr() -> String {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .to_string()
}

fn kind(m: &ServerMessage) -> (String, Option<u32>) {
    match m {
        ServerMessage::EpisodeStart { .. } => ("episode_start".into(), None),
        ServerMessage::Decide(r) => ("decide".into(), Some(r.tick)),
        ServerMessage::Rejected { tick, .. } => ("rejected".into(), Some(*tick)),
        ServerMessage::EpisodeEnd { .. } => ("episode_end".into(), None),
    }
}

/// Connects to `addr` until the harness goes away, answering every message
/// with `script(connection, episode, message)`.
fn scripted(
    addr: String,
    mut script: impl FnMut(usize, usize, &ServerMessage) -> Step + Send + 'static,
) -> JoinHandle<Transcript> {
    thread::spawn(move || {
        let mut transcript = Transcript::new();
        let mut episode = 0;
        let first_deadline = Instant::now() + Duration::from_secs(20);
        loop {
            let stream = loop {
                match TcpStream::connect(&addr) {
                    Ok(s) => break Some(s),
                    Err(_) if transcript.is_empty() && Instant::now() < first_deadline => {
                        thread::sleep(Duration::from_millis(10))
                    }
                    Err(_) => break None,
                }
            };
            let Some(mut stream) = stream else {
                return transcript;
            };
            let conn = transcript.len();
            transcript.push(Vec::new());
            let reader = BufReader::new(stream.try_clone().unwrap());
            for line in reader.lines() {
                let Ok(line) = line else { break };
                let msg: ServerMessage = serde_json::from_str(&line).unwrap();
                transcript[conn].push(kind(&msg));
                let step = script(conn, episode, &msg);
                if matches!(msg, ServerMessage::EpisodeEnd { .. }) {
                    episode += 1;
                }
                match step {
                    Step::Reply(v) => {
                        if writeln!(stream, "{v}").is_err() {
                            break;
                        }
                    }
                    Step::Silent => {}
                    Step::Hangup => {
                        episode += 1;
                        break;
                    }
                }
            }
        }
    })
}

/// Ready, then `stop` for every decision, then ack.
fn polite(msg: &ServerMessage) -> Step {
    match msg {
        ServerMessage::EpisodeStart { .. } => {
            Step::Reply(json!({"type": "ready", "protocol_version": 1, "name": "scripted"}))
        }
        ServerMessage::Decide(r) => {
            Step::Reply(json!({"type": "action", "tick": r.tick, "action": {"type": "stop"}}))
        }
        ServerMessage::Rejected { .. } => Step::Silent,
        ServerMessage::EpisodeEnd { .. } => Step::Reply(json!({"type": "ack"})),
    }
}

/// Turns left until tick 3, then stops.
fn turning(msg: &ServerMessage) -> Step {
    match msg {
        ServerMessage::Decide(r) if r.tick < 3 => {
            Step::Reply(json!({"type": "action", "tick": r.tick, "action": {"type": "turn_left"}}))
        }
        m => polite(m),
    }
}

fn listen_config(out: &Path, addr: &str, tasks: usize, timeout_s: f64) -> RunConfig {
    let mut c = RunConfig {
        benchmark: Benchmark::B1,
        policies: vec![BRIDGE_POLICY.into()],
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    c.scenes.count = 1;
    c.tasks.per_scene = tasks;
    c.bridge.listen = Some(addr.into());
    c.bridge.timeout_s = timeout_s;
    c
}

fn run_with(
    tasks: usize,
    timeout_s: f64,
    script: impl FnMut(usize, usize, &ServerMessage) -> Step + Send + 'static,
) -> (SuiteOutput, Transcript, TempDir) {
    let dir = TempDir::new().unwrap();
    let addr = free_addr();
    let client = scripted(addr.clone(), script);
    let out = run_suite(&listen_config(dir.path(), &addr, tasks, timeout_s)).unwrap();
    (out, client.join().unwrap(), dir)
}

fn names(xs: &[(String, Option<u32>)]) -> Vec<&str> {
    xs.iter().map(|(n, _)| n.as_str()).collect()
}

#[test]
fn stop_ends_the_episode_on_the_first_tick() {
    let (out, transcript, _dir) = run_with(2, 5.0, |_, _, m| polite(m));
    assert!(out.summary.failures.is_empty());
    assert_eq!(out.results.len(), 2);
    for r in &out.results {
        assert_eq!(r.policy, "bridge:scripted");
        assert_eq!(
            (r.ticks, r.executed_actions, r.failure.as_deref()),
            (1, 0, None)
        );
        assert!(!r.success);
    }
    assert_eq!(transcript.len(), 1);
    assert_eq!(
        names(&transcript[0]),
        [
            "episode_start",
            "decide",
            "episode_end",
            "episode_start",
            "decide",
            "episode_end"
        ]
    );
}

#[test]
fn bad_replies_are_rejected_and_stop_the_agent() {
    let (out, transcript, dir) = run_with(2, 5.0, |_, episode, m| match m {
        ServerMessage::Decide(r) if r.tick == 1 => Step::Reply(if episode == 0 {
            json!({"type": "action", "tick": 1, "action": {"type": "fly"}})
        } else {
            json!({"type": "action", "tick": 0, "action": {"type": "turn_left"}})
        }),
        m => turning(m),
    });
    assert!(out.summary.failures.is_empty());
    for r in &out.results {
        assert_eq!(r.failure, None);
        assert_eq!(r.ticks, 2);
        assert_eq!(r.executed_actions, 1);
    }
    assert_eq!(transcript.len(), 1);
    let rejected: Vec<_> = transcript[0]
        .iter()
        .filter(|(n, _)| n == "rejected")
        .collect();
    assert_eq!(rejected, [&("rejected".to_string(), Some(1)); 2]);
    for path in log_files(&dir.path().join("logs")).unwrap() {
        let log = read_log(&path).unwrap();
        let last = &log.ticks.last().unwrap().agents[0];
        assert!(
            matches!(&last.outcome, StepOutcome::Failed { reason } if reason.starts_with("malformed action"))
        );
    }
}

#[test]
fn a_silent_client_fails_only_its_episode() {
    let (out, transcript, _dir) = run_with(2, 0.5, |conn, _, m| match m {
        ServerMessage::Decide(r) if conn == 0 && r.tick == 2 => Step::Silent,
        m => turning(m),
    });
    assert!(out.summary.failures.is_empty());
    let [first, second] = &out.results[..] else {
        panic!("two results")
    };
    let failure = first.failure.as_deref().unwrap();
    assert!(failure.contains("no reply within"), "{failure}");
    assert_eq!(first.ticks, 2);
    assert!(!first.success);
    assert_eq!(
        (
            second.failure.as_deref(),
            second.ticks,
            second.executed_actions
        ),
        (None, 4, 3)
    );
    assert_eq!(transcript.len(), 2);
    assert_eq!(
        names(&transcript[0]),
        ["episode_start", "decide", "decide", "decide"]
    );
    assert_eq!(names(&transcript[1])[..2], ["episode_start", "decide"]);
}

#[test]
fn a_disconnect_fails_only_its_episode() {
    let (out, transcript, _dir) = run_with(2, 5.0, |conn, _, m| match m {
        ServerMessage::Decide(r) if conn == 0 && r.tick == 1 => Step::Hangup,
        m => turning(m),
    });
    let [first, second] = &out.results[..] else {
        panic!("two results")
    };
    assert!(first.failure.is_some());
    // The tick cut short by the fault is not counted.
    assert_eq!(first.ticks, 1);
    assert_eq!((second.failure.as_deref(), second.ticks), (None, 4));
    assert_eq!(transcript.len(), 2);
}

#[test]
fn a_client_on_another_protocol_version_fails_the_episode() {
    let (out, _, _dir) = run_with(1, 5.0, |_, _, m| match m {
        ServerMessage::EpisodeStart { .. } => {
            Step::Reply(json!({"type": "ready", "protocol_version": 99, "name": "future"}))
        }
        m => polite(m),
    });
    assert!(out.results[0]
        .failure
        .as_deref()
        .unwrap()
        .contains("expected ready"));
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gridbench")
}

#[test]
fn reference_client_reproduces_the_builtin_policy() {
    let dir = TempDir::new().unwrap();
    let mut internal = RunConfig {
        benchmark: Benchmark::B3,
        agents: 2,
        policies: vec!["frontier".into()],
        seeds: vec![0, 1, 2],
        output_dir: dir.path().join("internal"),
        ..RunConfig::default()
    };
    internal.scenes.count = 5;
    internal.tasks.per_scene = 1;
    internal.params.budgets.b3 = 120;
    let mut bridged = internal.clone();
    bridged.output_dir = dir.path().join("bridged");
    bridged.policies = vec![BRIDGE_POLICY.into(), "frontier".into()];
    bridged.bridge.command = vec![
        bin().into(),
        "bridge-client".into(),
        "--policy".into(),
        "frontier".into(),
    ];

    let a = run_suite(&internal).unwrap();
    let b = run_suite(&bridged).unwrap();
    assert_eq!(a.results.len(), 15);
    assert_eq!(b.results.len(), 15);
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!(y.failure, None);
        assert_eq!(y.policy, "bridge:frontier+frontier");
        assert_eq!(
            (x.ser, x.mrmse_m, x.executed_actions),
            (y.ser, y.mrmse_m, y.executed_actions),
            "{}",
            x.task.id
        );
    }
    let la = log_files(&dir.path().join("internal/logs")).unwrap();
    let lb = log_files(&dir.path().join("bridged/logs")).unwrap();
    for (x, y) in la.iter().zip(&lb) {
        assert_eq!(
            read_log(x).unwrap().ticks,
            read_log(y).unwrap().ticks,
            "{}",
            x.display()
        );
    }
}

#[test]
fn bridge_check_passes_the_reference_client_and_fails_an_echo() {
    let good = Command::new(bin())
        .args([
            "bridge-check",
            "--timeout-s",
            "10",
            "--",
            bin(),
            "bridge-client",
            "--policy",
            "frontier",
        ])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&good.stdout);
    assert!(good.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS ")).count(), 8);
    assert!(stdout.contains("8/8 cases passed"));

    let bad = Command::new(bin())
        .args(["bridge-check", "--timeout-s", "1", "--", "cat"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(!bad.status.success());
    assert!(stdout.contains("FAIL handshake"), "{stdout}");
}

#[test]
fn bridge_check_over_tcp() {
    let addr = free_addr();
    let mut check = Command::new(bin())
        .args(["bridge-check", "--timeout-s", "10", "--listen", &addr])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    // The last case needs a fresh connection, so clients keep coming until
    // the check is done.
    while check.try_wait().unwrap().is_none() {
        let _ = Command::new(bin())
            .args(["bridge-client", "--connect", &addr])
            .stderr(std::process::Stdio::null())
            .status();
        thread::sleep(Duration::from_millis(20));
    }
    let out = check.wait_with_output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
}
