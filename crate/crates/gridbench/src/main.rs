use std::io::{self, BufReader, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use gridbench::bridge::{bridge_check, serve_client, BridgeSession, Endpoint};
use gridbench::config::RunConfig;
use gridbench::render::{render, write_png, RenderOptions};
use gridbench::suite::{evaluate_logs, metrics_csv, run_suite};
use gridbench::{io as gio, HarnessError};
use gridbench_core::episode::replay_log;
use gridbench_core::params::EpisodeParams;
use gridbench_core::tasks::{generate_tasks, Benchmark};
use gridbench_core::world::{generate_scene, SceneGenConfig};

#[derive(Parser)]
#[command(
    name = "gridbench",
    version,
    about = "Semantic gridworld benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one scene.
    GenScene {
        #[arg(long)]
        seed: u64,
        /// Generator settings as TOML; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the single-room preset instead of the default generator.
        #[arg(long, conflicts_with = "config")]
        single_room: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Generate tasks for a scene.
    GenTasks {
        #[arg(long)]
        scene: PathBuf,
        /// b1, b2, b3, b4-hierarchical or b4-horizontal.
        #[arg(long, value_parser = parse_benchmark)]
        benchmark: Benchmark,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        agents: usize,
        /// Run config whose `params` block applies.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a suite described by a config file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Recompute metrics from episode logs.
    Eval {
        /// Log files or directories searched for `.jsonl` logs.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Replay a log against its scene and render the trajectories.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Pixels per cell.
        #[arg(long, default_value_t = 4)]
        scale: u32,
    },
    /// Run the protocol conformance cases against an external client.
    BridgeCheck {
        /// Wait for the client on this address instead of starting it.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long, default_value_t = 30.0)]
        timeout_s: f64,
        /// Client command and its arguments.
        #[arg(last = true)]
        command: Vec<String>,
    },
    /// Reference bridge client driven by a built-in policy.
    BridgeClient {
        #[arg(long, default_value = "frontier")]
        policy: String,
        /// Connect to a listening harness instead of using standard streams.
        #[arg(long)]
        connect: Option<String>,
    },
    /// Print a config with every default.
    PrintConfig,
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    Benchmark::parse(s).map_err(|e| e.to_string())
}

fn params_from(config: Option<&PathBuf>) -> Result<EpisodeParams, HarnessError> {
    Ok(match config {
        Some(p) => RunConfig::load(p)?.params,
        None => EpisodeParams::default(),
    })
}

fn run(cmd: Cmd) -> Result<ExitCode, HarnessError> {
    match cmd {
        Cmd::GenScene {
            seed,
            config,
            single_room,
            out,
        } => {
            let gen = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|source| HarnessError::Io {
                        path: p.clone(),
                        source,
                    })?;
                    toml::from_str(&text)
                        .map_err(|source| HarnessError::Toml { path: p, source })?
                }
                None if single_room => SceneGenConfig::single_room(),
                None => SceneGenConfig::default(),
            };
            let scene = generate_scene(&gen, seed)?;
            gio::write_scene(&out, &scene)?;
            println!(
                "{} ({}x{} cells, {} objects)",
                scene.id,
                scene.grid.width(),
                scene.grid.height(),
                scene.objects.len()
            );
        }
        Cmd::GenTasks {
            scene,
            benchmark,
            count,
            seed,
            agents,
            config,
            out,
        } => {
            let scene = gio::read_scene(&scene)?;
            let params = params_from(config.as_ref())?;
            let tasks = generate_tasks(&scene, benchmark, count, seed, agents, &params)?;
            gio::write_tasks(&out, &tasks)?;
            println!("{} tasks", tasks.len());
        }
        Cmd::Run {
            config,
            out,
            threads,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let out = run_suite(&cfg)?;
            print!("{}", metrics_csv(&out.summary.reports)?);
            for f in &out.summary.failures {
                eprintln!(
                    "failed: {} {:?} seed {:?}: {}",
                    f.scene_id, f.task_id, f.seed, f.error
                );
            }
            eprintln!(
                "{} episodes, {} failures, output in {}",
                out.summary.episodes,
                out.summary.failures.len(),
                out.output_dir.display()
            );
        }
        Cmd::Eval { logs, json } => {
            let reports = evaluate_logs(&logs)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&reports).expect("reports serialize")
                );
            } else {
                print!("{}", metrics_csv(&reports)?);
            }
        }
        Cmd::Replay {
            log,
            scene,
            out,
            scale,
        } => {
            let scene = gio::read_scene(&scene)?;
            let log = gio::read_log(&log)?;
            let (_, agents) = replay_log(&scene, &log)?;
            let img = render(&scene, Some(&log), RenderOptions { scale })?;
            write_png(&img, &out)?;
            println!(
                "replayed {} ticks, {} agents reproduced; wrote {}",
                log.ticks.len(),
                agents.len(),
                out.display()
            );
        }
        Cmd::BridgeCheck {
            listen,
            timeout_s,
            command,
        } => {
            let endpoint = match (listen, command.is_empty()) {
                (Some(addr), true) => Endpoint::Listen(addr),
                (None, false) => Endpoint::Command(command),
                _ => {
                    return Err(HarnessError::Config(
                        "give either --listen or a client command after --".into(),
                    ))
                }
            };
            let mut session = BridgeSession::open(endpoint, Duration::from_secs_f64(timeout_s))?;
            if let Some(addr) = session.local_addr() {
                eprintln!("waiting for a client on {addr}");
            }
            let cases = bridge_check(&mut session)?;
            let mut ok = true;
            for c in &cases {
                ok &= c.passed;
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            println!(
                "{}/{} cases passed",
                cases.iter().filter(|c| c.passed).count(),
                cases.len()
            );
            return Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            });
        }
        Cmd::BridgeClient { policy, connect } => {
            let served = match connect {
                Some(addr) => {
                    let stream = TcpStream::connect(&addr)
                        .map_err(|e| HarnessError::Bridge(format!("{addr}: {e}")))?;
                    let read = stream
                        .try_clone()
                        .map_err(|e| HarnessError::Bridge(e.to_string()))?;
                    serve_client(BufReader::new(read), stream, &policy)
                }
                None => serve_client(io::stdin().lock(), io::stdout().lock(), &policy),
            };
            match served {
                Ok(n) => eprintln!("{n} episodes served"),
                Err(e) => {
                    eprintln!("bridge client: {e}");
                    return Ok(ExitCode::FAILURE);
                }
            }
        }
        Cmd::PrintConfig => {
            io::stdout()
                .write_all(RunConfig::default().to_toml().as_bytes())
                .map_err(|source| HarnessError::Io {
                    path: "<stdout>".into(),
                    source,
                })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
