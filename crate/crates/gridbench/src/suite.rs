//! Suites: every task of every scene, once per episode seed.
//!
//! Output directory layout:
//!
//! ```text
//! scenes/<scene id>.json   generated scenes
//! tasks.jsonl              every task of the suite
//! logs/<task id>-s<seed>.jsonl
//! metrics.csv              one row per policy
//! summary.json             reports, per-episode outcomes and failures
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use gridbench_core::episode::{exploration_admin, ground_truth_admin, run_episode, EpisodeSetup};
use gridbench_core::interaction::{Administrator, CommMode};
use gridbench_core::metrics::{aggregate, MetricsReport};
use gridbench_core::policies::{builtin, Policy};
use gridbench_core::tasks::{generate_tasks, Benchmark, EpisodeResult, Task};
use gridbench_core::world::{generate_scene, SceneSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{BridgePolicy, BridgeSession};
use crate::config::{AdminSource, RunConfig, BRIDGE_POLICY};
use crate::{io, io_err, HarnessError, Result};

/// Column order of `metrics.csv`.
pub const CSV_COLUMNS: [&str; 10] = [
    "policy",
    "benchmark",
    "n_episodes",
    "sr",
    "spl",
    "ne_m",
    "ser",
    "mrmse_m",
    "mpl",
    "lpl",
];

/// Something that kept a scene, task or episode from producing a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub scene_id: String,
    pub task_id: Option<String>,
    pub seed: Option<u64>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub task_id: String,
    pub seed: u64,
    pub policy: String,
    pub log: String,
    pub success: bool,
    pub failure: Option<String>,
    pub executed_actions: u32,
    pub executed_path_m: f64,
    pub ser: Option<f64>,
    pub mrmse_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub benchmark: Benchmark,
    pub scenes: usize,
    pub tasks: usize,
    pub episodes: usize,
    pub reports: Vec<MetricsReport>,
    pub failures: Vec<RunFailure>,
    pub results: Vec<EpisodeRow>,
}

pub struct SuiteOutput {
    pub summary: Summary,
    /// Results in (scene, task, seed) order.
    pub results: Vec<EpisodeResult>,
    pub output_dir: PathBuf,
}

/// Groups results by policy label and aggregates each group. Results are
/// put in a canonical order first, so the input order does not matter.
pub fn reports_for(benchmark: Benchmark, results: &[EpisodeResult]) -> Result<Vec<MetricsReport>> {
    let mut groups: BTreeMap<&str, Vec<(String, String, &EpisodeResult)>> = BTreeMap::new();
    for r in results {
        let json = serde_json::to_string(r).expect("results serialize");
        groups
            .entry(r.policy.as_str())
            .or_default()
            .push((r.task.id.clone(), json, r));
    }
    groups
        .into_iter()
        .map(|(p, mut rs)| {
            rs.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
            let rs: Vec<EpisodeResult> = rs.into_iter().map(|(_, _, r)| r.clone()).collect();
            Ok(aggregate(p, benchmark, &rs)?)
        })
        .collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    policy: &'a str,
    benchmark: &'a str,
    n_episodes: usize,
    sr: Option<f64>,
    spl: Option<f64>,
    ne_m: Option<f64>,
    ser: Option<f64>,
    mrmse_m: Option<f64>,
    mpl: u32,
    lpl: u32,
}

/// CSV text with a header row; absent metrics are empty fields.
pub fn metrics_csv(reports: &[MetricsReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(CsvRow {
            policy: &r.policy,
            benchmark: r.benchmark.name(),
            n_episodes: r.n_episodes,
            sr: r.sr,
            spl: r.spl,
            ne_m: r.ne_m,
            ser: r.ser,
            mrmse_m: r.mrmse_m,
            mpl: r.mpl,
            lpl: r.lpl,
        })?;
    }
    if reports.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn load_scenes(cfg: &RunConfig, failures: &mut Vec<RunFailure>) -> Result<Vec<SceneSpec>> {
    if !cfg.scenes.files.is_empty() {
        return cfg.scenes.files.iter().map(|p| io::read_scene(p)).collect();
    }
    let generated: Vec<_> = (0..cfg.scenes.count as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.scenes.first_seed + k;
            generate_scene(&cfg.scenes.generator, seed).map_err(|e| (seed, e))
        })
        .collect();
    let mut scenes = Vec::new();
    for g in generated {
        match g {
            Ok(s) => scenes.push(s),
            Err((seed, e)) => failures.push(RunFailure {
                scene_id: format!("{}-{seed}", cfg.scenes.generator.name),
                task_id: None,
                seed: None,
                error: e.to_string(),
            }),
        }
    }
    Ok(scenes)
}

/// Tasks per scene, in scene order.
fn load_tasks(
    cfg: &RunConfig,
    scenes: &[SceneSpec],
    failures: &mut Vec<RunFailure>,
) -> Result<Vec<Vec<Task>>> {
    if let Some(file) = &cfg.tasks.file {
        let mut per_scene: Vec<Vec<Task>> = vec![Vec::new(); scenes.len()];
        for t in io::read_tasks(file)? {
            let problem = if t.benchmark != cfg.benchmark {
                Some(format!(
                    "task is {} but the suite runs {}",
                    t.benchmark, cfg.benchmark
                ))
            } else if t.start.len() != cfg.agents {
                Some(format!(
                    "task has {} agents, config {}",
                    t.start.len(),
                    cfg.agents
                ))
            } else {
                None
            };
            match (problem, scenes.iter().position(|s| s.id == t.scene_id)) {
                (None, Some(k)) => per_scene[k].push(t),
                (problem, k) => failures.push(RunFailure {
                    scene_id: t.scene_id.clone(),
                    task_id: Some(t.id.clone()),
                    seed: None,
                    error: problem.unwrap_or_else(|| {
                        debug_assert!(k.is_none());
                        "scene not in the suite".into()
                    }),
                }),
            }
        }
        return Ok(per_scene);
    }
    let generated: Vec<_> = scenes
        .par_iter()
        .map(|s| {
            generate_tasks(
                s,
                cfg.benchmark,
                cfg.tasks.per_scene,
                cfg.tasks.seed.wrapping_add(s.seed),
                cfg.agents,
                &cfg.params,
            )
        })
        .collect();
    Ok(generated
        .into_iter()
        .zip(scenes)
        .map(|(g, s)| {
            g.unwrap_or_else(|e| {
                failures.push(RunFailure {
                    scene_id: s.id.clone(),
                    task_id: None,
                    seed: None,
                    error: e.to_string(),
                });
                Vec::new()
            })
        })
        .collect())
}

fn team(names: &[String]) -> Vec<Box<dyn Policy>> {
    names
        .iter()
        .map(|n| builtin(n).unwrap_or_else(|| panic!("policy {n:?} was validated")))
        .collect()
}

/// Administrator per scene, for the hierarchical benchmark only.
fn admins(cfg: &RunConfig, scenes: &[SceneSpec]) -> Vec<Option<Result<Administrator, String>>> {
    if cfg.benchmark != Benchmark::B4Hierarchical || cfg.params.comm.mode == CommMode::None {
        return scenes.iter().map(|_| None).collect();
    }
    scenes
        .par_iter()
        .map(|s| {
            Some(match cfg.admin.source {
                AdminSource::GroundTruth => Ok(ground_truth_admin(s, &cfg.params)),
                AdminSource::Exploration => {
                    let seed = cfg.admin.seed.wrapping_add(s.seed);
                    generate_tasks(s, Benchmark::B3, 1, seed, cfg.admin.agents, &cfg.params)
                        .and_then(|mut ts| {
                            let task = ts.remove(0);
                            let names = vec![cfg.admin.policy.clone(); cfg.admin.agents];
                            exploration_admin(
                                EpisodeSetup {
                                    scene: s,
                                    task: &task,
                                    params: &cfg.params,
                                    seed,
                                    admin: None,
                                },
                                &mut team(&names),
                            )
                        })
                        .map_err(|e| format!("administrator exploration failed: {e}"))
                }
            })
        })
        .collect()
}

struct Job<'a> {
    scene: &'a SceneSpec,
    task: &'a Task,
    seed: u64,
    admin: Option<&'a Administrator>,
}

type Sessions = Vec<Option<Arc<Mutex<BridgeSession>>>>;

fn log_name(task: &Task, seed: u64) -> String {
    format!("{}-s{seed}.jsonl", task.id)
}

fn run_job(
    cfg: &RunConfig,
    hash: &str,
    logs: &Path,
    sessions: &Sessions,
    job: &Job<'_>,
) -> Result<EpisodeResult, String> {
    let mut policies: Vec<Box<dyn Policy>> = (0..cfg.agents)
        .map(|i| match &sessions[i] {
            Some(s) => {
                Box::new(BridgePolicy::new(s.clone(), cfg.params.clone())) as Box<dyn Policy>
            }
            None => builtin(cfg.policy_for(i)).expect("validated policy name"),
        })
        .collect();
    let out = run_episode(
        EpisodeSetup {
            scene: job.scene,
            task: job.task,
            params: &cfg.params,
            seed: job.seed,
            admin: job.admin.cloned(),
        },
        &mut policies,
    );
    for s in sessions.iter().flatten() {
        if let Ok(out) = &out {
            s.lock()
                .expect("bridge session lock")
                .end_episode(&out.result);
        }
    }
    let mut out = out.map_err(|e| e.to_string())?;
    out.log.header.config_hash = Some(hash.to_string());
    io::write_log(&logs.join(log_name(job.task, job.seed)), &out.log).map_err(|e| e.to_string())?;
    Ok(out.result)
}

pub fn run_suite(cfg: &RunConfig) -> Result<SuiteOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out_dir = cfg.output_dir.clone();
    let logs = out_dir.join("logs");
    fs::create_dir_all(&logs).map_err(io_err(&logs))?;
    let mut failures = Vec::new();

    let scenes = load_scenes(cfg, &mut failures)?;
    if cfg.scenes.files.is_empty() {
        for s in &scenes {
            io::write_scene(&out_dir.join("scenes").join(format!("{}.json", s.id)), s)?;
        }
    }
    let tasks = load_tasks(cfg, &scenes, &mut failures)?;
    let all_tasks: Vec<Task> = tasks.iter().flatten().cloned().collect();
    io::write_tasks(&out_dir.join("tasks.jsonl"), &all_tasks)?;
    let admins = admins(cfg, &scenes);

    let mut jobs = Vec::new();
    for ((scene, ts), admin) in scenes.iter().zip(&tasks).zip(&admins) {
        let admin = match admin {
            Some(Err(e)) => {
                failures.push(RunFailure {
                    scene_id: scene.id.clone(),
                    task_id: None,
                    seed: None,
                    error: e.clone(),
                });
                continue;
            }
            Some(Ok(a)) => Some(a),
            None => None,
        };
        for task in ts {
            for &seed in &cfg.seeds {
                jobs.push(Job {
                    scene,
                    task,
                    seed,
                    admin,
                });
            }
        }
    }

    let outcomes: Vec<Result<EpisodeResult, String>> = if cfg.uses_bridge() {
        let mut sessions: Sessions = Vec::new();
        for i in 0..cfg.agents {
            sessions.push(if cfg.policy_for(i) == BRIDGE_POLICY {
                Some(Arc::new(Mutex::new(BridgeSession::from_config(
                    &cfg.bridge,
                )?)))
            } else {
                None
            });
        }
        jobs.iter()
            .map(|j| run_job(cfg, &hash, &logs, &sessions, j))
            .collect()
    } else {
        let sessions: Sessions = vec![None; cfg.agents];
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        pool.install(|| {
            jobs.par_iter()
                .map(|j| run_job(cfg, &hash, &logs, &sessions, j))
                .collect()
        })
    };

    let mut results = Vec::new();
    let mut rows = Vec::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => {
                rows.push(EpisodeRow {
                    task_id: job.task.id.clone(),
                    seed: job.seed,
                    policy: r.policy.clone(),
                    log: format!("logs/{}", log_name(job.task, job.seed)),
                    success: r.success,
                    failure: r.failure.clone(),
                    executed_actions: r.executed_actions,
                    executed_path_m: r.executed_path_m,
                    ser: r.ser,
                    mrmse_m: r.mrmse_m,
                });
                results.push(r);
            }
            Err(error) => failures.push(RunFailure {
                scene_id: job.scene.id.clone(),
                task_id: Some(job.task.id.clone()),
                seed: Some(job.seed),
                error,
            }),
        }
    }
    let reports = reports_for(cfg.benchmark, &results)?;
    write_text(&out_dir.join("metrics.csv"), &metrics_csv(&reports)?)?;
    let summary = Summary {
        config_hash: hash,
        benchmark: cfg.benchmark,
        scenes: scenes.len(),
        tasks: all_tasks.len(),
        episodes: results.len(),
        reports,
        failures,
        results: rows,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&out_dir.join("summary.json"), &(json + "\n"))?;
    Ok(SuiteOutput {
        summary,
        results,
        output_dir: out_dir,
    })
}

/// Reports recomputed from the footers of saved logs, one per
/// (benchmark, policy) pair.
pub fn evaluate_logs(paths: &[PathBuf]) -> Result<Vec<MetricsReport>> {
    let mut by_bench: BTreeMap<Benchmark, Vec<EpisodeResult>> = BTreeMap::new();
    for root in paths {
        for file in io::log_files(root)? {
            let log = io::read_log(&file)?;
            by_bench
                .entry(log.footer.task.benchmark)
                .or_default()
                .push(log.footer);
        }
    }
    let mut out = Vec::new();
    for (b, results) in by_bench {
        out.extend(reports_for(b, &results)?);
    }
    Ok(out)
}
