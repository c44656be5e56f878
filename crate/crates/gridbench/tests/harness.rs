//! Suites, artifacts and the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gridbench::config::RunConfig;
use gridbench::io::{log_files, read_log, read_scene, write_tasks};
use gridbench::suite::{evaluate_logs, metrics_csv, run_suite, CSV_COLUMNS};
use gridbench_core::tasks::Benchmark;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn small(benchmark: Benchmark, policy: &str, out: &Path) -> RunConfig {
    let mut c = RunConfig {
        benchmark,
        policies: vec![policy.into()],
        seeds: vec![0, 1, 2],
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    };
    c.scenes.count = 2;
    c.tasks.per_scene = 5;
    c
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn default_config_file_lists_every_default() {
    let text = fs::read_to_string(configs().join("default.toml")).unwrap();
    let file: toml::Value = toml::from_str(&text).unwrap();
    let defaults = toml::Value::try_from(RunConfig::default()).unwrap();
    assert_eq!(file, defaults);
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn suite_writes_one_log_per_episode_and_one_row_per_policy() {
    let dir = TempDir::new().unwrap();
    let out = run_suite(&small(Benchmark::B1, "oracle", dir.path())).unwrap();
    assert_eq!(out.summary.episodes, 30);
    assert!(out.summary.failures.is_empty());
    assert_eq!(log_files(&dir.path().join("logs")).unwrap().len(), 30);
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_COLUMNS.join(","));
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("oracle,b1,30,"));
    assert_eq!(fs::read_dir(dir.path().join("scenes")).unwrap().count(), 2);
}

#[test]
fn reruns_are_byte_identical_whatever_the_thread_count() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut ca = small(Benchmark::B3, "frontier", a.path());
    ca.agents = 2;
    ca.params.budgets.b3 = 60;
    ca.threads = 1;
    let mut cb = ca.clone();
    cb.output_dir = b.path().to_path_buf();
    cb.threads = 4;
    run_suite(&ca).unwrap();
    run_suite(&cb).unwrap();
    let la = log_files(&a.path().join("logs")).unwrap();
    let lb = log_files(&b.path().join("logs")).unwrap();
    assert_eq!(la.len(), 30);
    for (x, y) in la.iter().zip(&lb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(digest(x), digest(y), "{}", x.display());
    }
    for f in ["metrics.csv", "summary.json", "tasks.jsonl"] {
        assert_eq!(digest(&a.path().join(f)), digest(&b.path().join(f)), "{f}");
    }
}

#[test]
fn eval_recomputes_the_suite_metrics() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small(Benchmark::B2, "random", dir.path());
    cfg.params.budgets.b2 = 80;
    let out = run_suite(&cfg).unwrap();
    let reports = evaluate_logs(&[dir.path().join("logs")]).unwrap();
    assert_eq!(reports, out.summary.reports);
    assert_eq!(
        metrics_csv(&reports).unwrap(),
        fs::read_to_string(dir.path().join("metrics.csv")).unwrap()
    );
    let header = read_log(&log_files(&dir.path().join("logs")).unwrap()[0])
        .unwrap()
        .header;
    assert_eq!(header.config_hash.as_deref(), Some(cfg.hash().as_str()));
}

#[test]
fn oracle_beats_random_on_navigation() {
    let dir = TempDir::new().unwrap();
    let sr = |policy: &str| {
        let mut c = small(Benchmark::B1, policy, &dir.path().join(policy));
        c.seeds = vec![0];
        run_suite(&c).unwrap().summary.reports[0].sr.unwrap()
    };
    let (oracle, random) = (sr("oracle"), sr("random"));
    assert!(oracle > random, "oracle {oracle} vs random {random}");
}

#[test]
fn zero_budget_ends_immediately_without_success() {
    let dir = TempDir::new().unwrap();
    let mut c = small(Benchmark::B1, "oracle", dir.path());
    c.params.budgets.b1 = 0;
    let out = run_suite(&c).unwrap();
    assert!(out
        .results
        .iter()
        .all(|r| r.ticks == 0 && r.executed_actions == 0 && !r.success));
    assert_eq!(out.summary.reports[0].sr, Some(0.0));
}

#[test]
fn bad_tasks_are_recorded_and_the_rest_still_run() {
    let dir = TempDir::new().unwrap();
    let gen = small(Benchmark::B1, "oracle", &dir.path().join("gen"));
    let first = run_suite(&gen).unwrap();
    let scenes: Vec<PathBuf> = fs::read_dir(dir.path().join("gen/scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let mut tasks = gridbench::io::read_tasks(&dir.path().join("gen/tasks.jsonl")).unwrap();
    assert_eq!(tasks.len(), 10);
    let extra = tasks[3].start[0];
    tasks[3].start.push(extra);
    tasks[4].scene_id = "missing".into();
    let file = dir.path().join("tasks.jsonl");
    write_tasks(&file, &tasks).unwrap();

    let mut cfg = gen.clone();
    cfg.output_dir = dir.path().join("again");
    cfg.scenes.files = scenes;
    cfg.tasks.file = Some(file);
    let out = run_suite(&cfg).unwrap();
    assert_eq!(out.summary.failures.len(), 2);
    assert_eq!(out.summary.episodes, 8 * 3);
    let kept: Vec<_> = first
        .results
        .iter()
        .filter(|r| r.task.id != tasks[3].id && r.task.id != tasks[4].id)
        .collect();
    assert_eq!(kept.len(), out.results.len());
}

#[test]
fn exploration_admin_suite_runs() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::load(&configs().join("b4_exploration_admin.toml")).unwrap();
    cfg.output_dir = dir.path().to_path_buf();
    cfg.scenes.count = 2;
    let out = run_suite(&cfg).unwrap();
    assert!(
        out.summary.failures.is_empty(),
        "{:?}",
        out.summary.failures
    );
    assert_eq!(out.summary.episodes, 4);
    assert!(out.summary.reports[0].lpl <= 50);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridbench"))
}

#[test]
fn command_line_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let ok = |c: &mut Command| {
        let out = c.output().unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    ok(bin()
        .args(["gen-scene", "--seed", "4", "--single-room", "--out"])
        .arg(d.join("s.json")));
    let scene = read_scene(&d.join("s.json")).unwrap();
    ok(bin()
        .args(["gen-tasks", "--benchmark", "b2", "--count", "2", "--scene"])
        .arg(d.join("s.json"))
        .arg("--out")
        .arg(d.join("t.jsonl")));
    let cfg = "benchmark = \"b2\"\npolicies = [\"oracle\"]\noutput_dir = \"out\"\n[scenes]\nfiles = [\"s.json\"]\n[tasks]\nfile = \"t.jsonl\"\n";
    fs::write(d.join("run.toml"), cfg).unwrap();
    let csv = ok(bin().arg("run").arg(d.join("run.toml")));
    assert!(csv.starts_with(&CSV_COLUMNS.join(",")));
    let eval = ok(bin().arg("eval").arg(d.join("out/logs")));
    assert_eq!(csv, eval);
    let log = log_files(&d.join("out/logs")).unwrap().remove(0);
    let said = ok(bin()
        .arg("replay")
        .arg("--log")
        .arg(&log)
        .arg("--scene")
        .arg(d.join("s.json"))
        .arg("--out")
        .arg(d.join("r.png")));
    assert!(said.contains("reproduced"));
    let img = image::open(d.join("r.png")).unwrap();
    assert_eq!(img.width(), scene.grid.width() * 4);

    let printed = ok(bin().arg("print-config"));
    assert_eq!(
        RunConfig::from_toml(&printed).unwrap(),
        RunConfig::default()
    );

    let other = d.join("other.json");
    ok(bin()
        .args(["gen-scene", "--seed", "5", "--out"])
        .arg(&other));
    let out = bin()
        .arg("replay")
        .arg("--log")
        .arg(&log)
        .arg("--scene")
        .arg(&other)
        .arg("--out")
        .arg(d.join("x.png"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args(["run"])
        .arg(d.join("missing.toml"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}
