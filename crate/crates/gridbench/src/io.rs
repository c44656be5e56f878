//! File formats: scene JSON, task JSONL and episode-log JSONL.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gridbench_core::episode::{EpisodeLog, LogLine};
use gridbench_core::tasks::Task;
use gridbench_core::world::SceneSpec;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{io_err, HarnessError, Result};

fn json_err(path: &Path, line: usize) -> impl FnOnce(serde_json::Error) -> HarnessError + '_ {
    move |source| HarnessError::Json {
        path: path.to_path_buf(),
        line,
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

pub fn read_scene(path: &Path) -> Result<SceneSpec> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let scene: SceneSpec = serde_json::from_str(&text).map_err(json_err(path, 1))?;
    scene.validate()?;
    Ok(scene)
}

pub fn write_scene(path: &Path, scene: &SceneSpec) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, scene).map_err(json_err(path, 1))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(json_err(path, i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for (i, item) in items.iter().enumerate() {
        serde_json::to_writer(&mut w, item).map_err(json_err(path, i + 1))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_tasks(path: &Path) -> Result<Vec<Task>> {
    read_jsonl(path)
}

pub fn write_tasks(path: &Path, tasks: &[Task]) -> Result<()> {
    write_jsonl(path, tasks)
}

pub fn read_log(path: &Path) -> Result<EpisodeLog> {
    Ok(EpisodeLog::from_lines(read_jsonl::<LogLine>(path)?)?)
}

pub fn write_log(path: &Path, log: &EpisodeLog) -> Result<()> {
    write_jsonl(path, &log.lines())
}

/// `.jsonl` files under `path` (or `path` itself), sorted by path.
pub fn log_files(path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        let p = entry.path();
        if entry.file_type().is_file() && p.extension().is_some_and(|e| e == "jsonl") {
            out.push(p.to_path_buf());
        }
    }
    Ok(out)
}
