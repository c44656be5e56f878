//! Run configuration, read from a single TOML file.
//!
//! Every field has a default, so a config only needs the keys it changes.
//! `configs/default.toml` lists all of them.

use std::fs;
use std::path::{Path, PathBuf};

use gridbench_core::params::EpisodeParams;
use gridbench_core::policies::BUILTIN;
use gridbench_core::tasks::Benchmark;
use gridbench_core::world::SceneGenConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{io_err, HarnessError, Result};

/// Policy binding that routes an agent through the external bridge.
pub const BRIDGE_POLICY: &str = "bridge";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub agents: usize,
    /// One binding per agent, or a single binding shared by every agent.
    /// A binding is a built-in policy name or `"bridge"`.
    pub policies: Vec<String>,
    /// Every task runs once per episode seed.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub scenes: SceneSource,
    pub tasks: TaskSource,
    pub admin: AdminConfig,
    pub bridge: BridgeConfig,
    pub params: EpisodeParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: Benchmark::B1,
            agents: 1,
            policies: vec!["oracle".into()],
            seeds: vec![0],
            output_dir: PathBuf::from("runs/latest"),
            threads: 0,
            scenes: SceneSource::default(),
            tasks: TaskSource::default(),
            admin: AdminConfig::default(),
            bridge: BridgeConfig::default(),
            params: EpisodeParams::default(),
        }
    }
}

/// Scene files, or procedurally generated scenes when `files` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSource {
    pub files: Vec<PathBuf>,
    pub count: usize,
    pub first_seed: u64,
    pub generator: SceneGenConfig,
}

impl Default for SceneSource {
    fn default() -> Self {
        SceneSource {
            files: Vec::new(),
            count: 10,
            first_seed: 0,
            generator: SceneGenConfig::default(),
        }
    }
}

/// A task file, or `per_scene` generated tasks for every scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSource {
    pub file: Option<PathBuf>,
    pub per_scene: usize,
    pub seed: u64,
}

impl Default for TaskSource {
    fn default() -> Self {
        TaskSource {
            file: None,
            per_scene: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminSource {
    GroundTruth,
    /// Built from what a team mapped in one exploration episode per scene.
    Exploration,
}

/// Administrator used by the hierarchical social-manipulation benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdminConfig {
    pub source: AdminSource,
    /// Policy and team size of the exploration run.
    pub policy: String,
    pub agents: usize,
    pub seed: u64,
}

impl Default for AdminConfig {
    fn default() -> Self {
        AdminConfig {
            source: AdminSource::GroundTruth,
            policy: "random".into(),
            agents: 2,
            seed: 0,
        }
    }
}

/// External policy endpoint. `command` starts a client that talks over its
/// standard streams; `listen` waits for a client on a local TCP socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    pub command: Vec<String>,
    pub listen: Option<String>,
    /// Per-decision timeout, seconds.
    pub timeout_s: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            command: Vec::new(),
            listen: None,
            timeout_s: 30.0,
        }
    }
}

impl BridgeConfig {
    pub fn is_set(&self) -> bool {
        !self.command.is_empty() || self.listen.is_some()
    }
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads and validates a config. Relative paths inside it are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text).map_err(|source| HarnessError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.scenes.files.iter_mut().for_each(rebase);
        if let Some(f) = cfg.tasks.file.as_mut() {
            rebase(f);
        }
        rebase(&mut cfg.output_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(bad("agents must be at least 1"));
        }
        if self.benchmark.is_b4() && self.agents < 2 {
            return Err(bad(format!("{} needs at least two agents", self.benchmark)));
        }
        if self.policies.len() != 1 && self.policies.len() != self.agents {
            return Err(bad(format!(
                "{} policy bindings for {} agents; give one or one per agent",
                self.policies.len(),
                self.agents
            )));
        }
        for p in &self.policies {
            if p == BRIDGE_POLICY {
                if !self.bridge.is_set() {
                    return Err(bad(
                        "a bridge binding needs bridge.command or bridge.listen",
                    ));
                }
            } else if !BUILTIN.contains(&p.as_str()) {
                return Err(bad(format!(
                    "unknown policy {p:?}; known: {BUILTIN:?} and \"bridge\""
                )));
            }
        }
        if self.bridge.listen.is_some()
            && (0..self.agents)
                .filter(|&i| self.policy_for(i) == BRIDGE_POLICY)
                .count()
                > 1
        {
            return Err(bad(
                "a listening bridge serves one agent; use bridge.command for more",
            ));
        }
        if !self.bridge.command.is_empty() && self.bridge.listen.is_some() {
            return Err(bad("bridge.command and bridge.listen are exclusive"));
        }
        if !(self.bridge.timeout_s > 0.0) {
            return Err(bad("bridge.timeout_s must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds is empty"));
        }
        if self.scenes.files.is_empty() && self.scenes.count == 0 {
            return Err(bad("no scene files and scenes.count is 0"));
        }
        if self.tasks.file.is_none() && self.tasks.per_scene == 0 {
            return Err(bad("no task file and tasks.per_scene is 0"));
        }
        if self.benchmark == Benchmark::B4Hierarchical
            && self.admin.source == AdminSource::Exploration
        {
            if !BUILTIN.contains(&self.admin.policy.as_str()) {
                return Err(bad(format!("unknown admin policy {:?}", self.admin.policy)));
            }
            if self.admin.agents == 0 {
                return Err(bad("admin.agents must be at least 1"));
            }
        }
        self.params.sensor.validate()?;
        self.params.comm.validate()?;
        Ok(())
    }

    /// Binding of agent `i`.
    pub fn policy_for(&self, i: usize) -> &str {
        if self.policies.len() == 1 {
            &self.policies[0]
        } else {
            &self.policies[i]
        }
    }

    pub fn uses_bridge(&self) -> bool {
        self.policies.iter().any(|p| p == BRIDGE_POLICY)
    }

    /// SHA-256 of everything that can influence results. The output
    /// directory and thread count are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.threads = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes to JSON");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let c = RunConfig::from_toml("benchmark = \"b3\"\nagents = 2\npolicies = [\"frontier\"]\n")
            .unwrap();
        assert_eq!(c.benchmark, Benchmark::B3);
        assert_eq!(c.params, EpisodeParams::default());
        assert_eq!(c.policy_for(1), "frontier");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("benchmarks = \"b1\"").is_err());
        assert!(RunConfig::from_toml("[params.sensor]\nfov = 90.0").is_err());
    }

    #[test]
    fn validation_catches_bad_bindings() {
        let mut c = RunConfig {
            benchmark: Benchmark::B4Horizontal,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        c.agents = 2;
        c.policies = vec!["querying".into()];
        c.validate().unwrap();
        c.policies = vec!["querying".into(), "gpt".into()];
        assert!(c.validate().is_err());
        c.policies = vec!["querying".into(), BRIDGE_POLICY.into()];
        assert!(c.validate().is_err());
        c.bridge.command = vec!["client".into()];
        c.validate().unwrap();
        c.policies = vec!["random".into(); 3];
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_execution_settings() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.threads = 3;
        assert_eq!(a.hash(), b.hash());
        b.seeds.push(1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
