//! Experiment configuration: one TOML document covering replay generation, mining, the
//! hierarchy, the curriculum and evaluation. Every field has a default, so an empty file is valid.
//!
//! Environment variables prefixed with `MACROHRL_` override fields after the file is read. The
//! rest of the name is the field path in lower case with `__` between levels, and the value is
//! read as a TOML literal (falling back to a plain string):
//!
//! ```text
//! MACROHRL_SEED=7
//! MACROHRL_WORKERS=4
//! MACROHRL_HIERARCHY__TOPOLOGY=three-layer
//! MACROHRL_MINING__TOP_K=40
//! MACROHRL_EVAL__LEVELS=[1,5,10]
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{self, Schedule};
use crate::engine::EngineConfig;
use crate::hrl::{HierarchyConfig, TopologyKind};
use crate::mining::MiningConfig;
use crate::rewards::RewardKind;

pub const ENV_PREFIX: &str = "MACROHRL_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("environment override {var}: {msg}")]
    Env { var: String, msg: String },
    #[error("config: {0}")]
    Invalid(String),
}

/// Expert games used as mining input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub games: usize,
    /// Scripted opponent level faced by the expert.
    pub opponent: u8,
    pub max_ticks: u32,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            games: 30,
            opponent: 1,
            max_ticks: 3200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub games: usize,
    pub levels: Vec<u8>,
    pub max_ticks: u32,
    pub map: String,
    /// Take the most likely action instead of sampling.
    pub greedy: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            games: 100,
            levels: (1..=10).collect(),
            max_ticks: 4800,
            map: "default".into(),
            greedy: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Parallel episode workers; 0 uses every available core.
    pub workers: usize,
    pub out: PathBuf,
    /// Simulator settings for replay generation.
    pub engine: EngineConfig,
    pub replays: ReplayConfig,
    pub mining: MiningConfig,
    pub hierarchy: HierarchyConfig,
    /// Named curriculum preset, used when `schedule` is absent.
    pub curriculum: String,
    /// Explicit schedule (`[[schedule.stage]]` tables).
    pub schedule: Option<Schedule>,
    /// Replaces every stage's PPO preset when set.
    pub ppo_preset: Option<String>,
    /// Replaces every stage's reward when set.
    pub reward_preset: Option<RewardKind>,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 0,
            out: PathBuf::from("runs/default"),
            engine: EngineConfig::default(),
            replays: ReplayConfig::default(),
            mining: MiningConfig::default(),
            hierarchy: HierarchyConfig::default(),
            curriculum: "noncheat".into(),
            schedule: None,
            ppo_preset: None,
            reward_preset: None,
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Parse `text` and apply `MACROHRL_*` overrides from `vars`.
    pub fn from_toml_with_env<I>(text: &str, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (var, raw) in vars {
            let path: Vec<String> = var[ENV_PREFIX.len()..].to_lowercase().split("__").map(str::to_string).collect();
            set_path(&mut doc, &path, parse_literal(&raw)).map_err(|msg| ConfigError::Env { var: var.clone(), msg })?;
        }
        let cfg: ExperimentConfig = doc.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    /// The schedule to train: the explicit one, else the named preset, with overrides applied.
    pub fn resolved_schedule(&self) -> Result<(TopologyKind, Schedule), ConfigError> {
        let (topology, mut schedule) = match &self.schedule {
            Some(s) => (self.hierarchy.topology, s.clone()),
            None => {
                let p = curriculum::preset(&self.curriculum).ok_or_else(|| {
                    ConfigError::Invalid(format!(
                        "unknown curriculum `{}` (expected one of {:?})",
                        self.curriculum,
                        curriculum::PRESETS
                    ))
                })?;
                (p.topology, p.schedule)
            }
        };
        for st in &mut schedule.stages {
            if let Some(p) = &self.ppo_preset {
                st.ppo = p.clone();
            }
            if let Some(r) = self.reward_preset {
                st.reward = r;
            }
        }
        schedule.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok((topology, schedule))
    }

    /// Hierarchy settings for training: the schedule's topology with its default trunk sharing
    /// unless the config names a topology explicitly.
    pub fn resolved_hierarchy(&self) -> Result<HierarchyConfig, ConfigError> {
        let (topology, _) = self.resolved_schedule()?;
        let mut h = self.hierarchy.clone();
        if self.schedule.is_none() && topology != h.topology {
            h.topology = topology;
            h.shared_trunk = HierarchyConfig::for_topology(topology).shared_trunk;
        }
        h.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.engine.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.replays.games == 0 || self.eval.games == 0 {
            return Err(ConfigError::Invalid("game counts must be >= 1".into()));
        }
        if !(1..=10).contains(&self.replays.opponent) || self.eval.levels.iter().any(|l| !(1..=10).contains(l)) {
            return Err(ConfigError::Invalid("difficulty levels must lie in 1..=10".into()));
        }
        if curriculum::map_config(&self.eval.map).is_none() {
            return Err(ConfigError::Invalid(format!("unknown map `{}`", self.eval.map)));
        }
        self.resolved_hierarchy()?;
        Ok(())
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    // Wrap in a one-key document so scalars, arrays and inline tables all parse.
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(doc: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty field path")?;
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| format!("`{p}` is not a table"))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}
