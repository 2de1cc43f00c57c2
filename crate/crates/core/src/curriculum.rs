//! Curriculum schedules: stages run in order, each starting from scratch, from a checkpoint, or
//! from the previous stage's best model. With an output directory a schedule writes its learning
//! curve and checkpoints as it goes and can be resumed after an interruption.
//!
//! Output layout:
//!
//! ```text
//! <out>/curve.csv                       one row per iteration of every stage
//! <out>/stages/<i>-<name>/last/         hierarchy after the latest iteration
//! <out>/stages/<i>-<name>/best/         best hierarchy of the stage
//! <out>/stages/<i>-<name>/progress.toml next iteration and best win rate so far
//! <out>/stages/<i>-<name>/done          present once the stage has finished
//! ```

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::AdamState;
use crate::engine::EngineConfig;
use crate::hrl::{
    build_topology, load_hierarchy, mix_seed, save_hierarchy, train, write_curve_header, write_curve_row, EnvConfig,
    Hierarchy, HierarchyConfig, HrlError, IterationRecord, TopologyKind, TrainConfig, TrainableMask, UpdateMode,
    CURVE_SCHEMA,
};
use crate::mining::MacroAction;
use crate::rewards::{ExpertStats, RewardKind, RewardSpec};
use crate::rl::PpoConfig;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error(transparent)]
    Hrl(#[from] HrlError),
    #[error("schedule: {0}")]
    Config(String),
    #[error("stage `{stage}` iteration {iteration}: {source}")]
    Stage {
        stage: String,
        iteration: usize,
        #[source]
        source: Box<CurriculumError>,
    },
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

fn file_err(path: &Path, e: impl std::fmt::Display) -> CurriculumError {
    CurriculumError::File {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// Where a stage's parameters come from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageInit {
    FromScratch,
    FromCheckpoint(PathBuf),
    /// The previous stage's best model (from scratch for the first stage).
    #[default]
    Previous,
}

/// Map presets. Features are counts and normalized coordinates, so checkpoints move between maps.
pub fn map_config(id: &str) -> Option<EngineConfig> {
    let side = match id {
        "default" => 32,
        "small" => 24,
        "large" => 40,
        _ => return None,
    };
    Some(EngineConfig {
        width: side,
        height: side,
        ..EngineConfig::default()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumStage {
    pub name: String,
    pub difficulty: u8,
    pub map: String,
    pub init: StageInit,
    pub mode: UpdateMode,
    pub reward: RewardKind,
    pub ppo: String,
    pub iterations: usize,
    pub episodes_per_iter: usize,
    pub max_ticks: u32,
    /// Nodes kept fixed during this stage.
    pub frozen: BTreeSet<String>,
    /// Also freeze every node whose parameters were loaded.
    pub freeze_loaded: bool,
    /// End the stage early once an iteration reaches this win rate.
    pub stop_at_win_rate: Option<f64>,
}

impl Default for CurriculumStage {
    fn default() -> Self {
        CurriculumStage {
            name: "stage".into(),
            difficulty: 1,
            map: "default".into(),
            init: StageInit::Previous,
            mode: UpdateMode::Simultaneous,
            reward: RewardKind::Designed,
            ppo: "paper-2layer".into(),
            iterations: 50,
            episodes_per_iter: 100,
            max_ticks: 4800,
            frozen: BTreeSet::new(),
            freeze_loaded: false,
            stop_at_win_rate: None,
        }
    }
}

impl CurriculumStage {
    pub fn env(&self) -> Result<EnvConfig, CurriculumError> {
        let engine = map_config(&self.map).ok_or_else(|| CurriculumError::Config(format!("unknown map `{}`", self.map)))?;
        Ok(EnvConfig {
            engine,
            difficulty: self.difficulty,
            max_ticks: self.max_ticks,
        })
    }

    pub fn ppo_config(&self) -> Result<PpoConfig, CurriculumError> {
        PpoConfig::preset(&self.ppo).ok_or_else(|| CurriculumError::Config(format!("unknown ppo preset `{}`", self.ppo)))
    }

    pub fn reward_spec(&self, stats: Option<&ExpertStats>) -> Result<RewardSpec, CurriculumError> {
        Ok(match self.reward {
            RewardKind::WinLoss => RewardSpec::win_loss(),
            RewardKind::Score => RewardSpec::score(),
            RewardKind::Designed => RewardSpec::designed(stats.cloned().ok_or_else(|| {
                CurriculumError::Config(format!("stage `{}` uses the designed reward but no expert stats were given", self.name))
            })?),
        })
    }

    fn validate(&self) -> Result<(), CurriculumError> {
        if self.name.is_empty() || self.name.contains(['/', '\\', ',']) {
            return Err(CurriculumError::Config(format!("bad stage name `{}`", self.name)));
        }
        if !(1..=10).contains(&self.difficulty) {
            return Err(CurriculumError::Config(format!("stage `{}`: difficulty must be 1..=10", self.name)));
        }
        if self.iterations == 0 || self.episodes_per_iter == 0 {
            return Err(CurriculumError::Config(format!(
                "stage `{}`: iterations and episodes_per_iter must be >= 1",
                self.name
            )));
        }
        self.env()?;
        self.ppo_config()?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(rename = "stage")]
    pub stages: Vec<CurriculumStage>,
}

impl Schedule {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if self.stages.is_empty() {
            return Err(CurriculumError::Config("schedule has no stages".into()));
        }
        let mut names = BTreeSet::new();
        for s in &self.stages {
            s.validate()?;
            if !names.insert(&s.name) {
                return Err(CurriculumError::Config(format!("duplicate stage name `{}`", s.name)));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, CurriculumError> {
        let s: Schedule = toml::from_str(text).map_err(|e| CurriculumError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schedule serializes")
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

/// A named curriculum together with the topology it is meant for.
#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumPreset {
    pub topology: TopologyKind,
    pub schedule: Schedule,
}

/// `noncheat`: levels 1, 2, 5, 7 with the designed reward, each stage starting from the previous
/// one and alternating updates between nodes. `cheat`: levels 8, 9, 10, each trained from scratch
/// on the win/loss reward with the final three-layer topology.
pub fn preset(name: &str) -> Option<CurriculumPreset> {
    match name {
        "noncheat" => Some(CurriculumPreset {
            topology: TopologyKind::TwoLayer,
            schedule: Schedule {
                stages: [1u8, 2, 5, 7]
                    .into_iter()
                    .map(|d| CurriculumStage {
                        name: format!("L{d}"),
                        difficulty: d,
                        mode: UpdateMode::Alternate(vec![]),
                        ..Default::default()
                    })
                    .collect(),
            },
        }),
        "cheat" => Some(CurriculumPreset {
            topology: TopologyKind::FinalThreeLayer,
            schedule: Schedule {
                stages: [8u8, 9, 10]
                    .into_iter()
                    .map(|d| CurriculumStage {
                        name: format!("L{d}"),
                        difficulty: d,
                        init: StageInit::FromScratch,
                        reward: RewardKind::WinLoss,
                        ppo: "paper-final3".into(),
                        ..Default::default()
                    })
                    .collect(),
            },
        }),
        "smoke" => Some(CurriculumPreset {
            topology: TopologyKind::TwoLayer,
            schedule: Schedule {
                stages: vec![CurriculumStage {
                    name: "L1".into(),
                    map: "small".into(),
                    ppo: "default".into(),
                    iterations: 3,
                    episodes_per_iter: 10,
                    max_ticks: 2400,
                    ..Default::default()
                }],
            },
        }),
        _ => None,
    }
}

pub const PRESETS: [&str; 3] = ["noncheat", "cheat", "smoke"];

/// Result of moving parameters from a trained hierarchy onto a (possibly different) topology.
#[derive(Clone, Debug)]
pub struct Transfer {
    pub hierarchy: Hierarchy,
    pub loaded: Vec<String>,
    pub fresh: Vec<String>,
    pub mask: TrainableMask,
}

/// Build `target` and copy parameters from every source node with the same name and the same
/// role (leaf or internal). Optimizer state starts fresh. A matched node with a different network
/// shape is an error.
pub fn transfer_init(
    source: &Hierarchy,
    target: &HierarchyConfig,
    macros: &[MacroAction],
    freeze_loaded: bool,
) -> Result<Transfer, CurriculumError> {
    let mut h = build_topology(target, macros)?;
    let mut loaded = Vec::new();
    let mut fresh = Vec::new();
    for node in &mut h.nodes {
        match source.node(&node.name).filter(|s| s.is_leaf() == node.is_leaf()) {
            Some(src) => {
                if src.net.spec != node.net.spec {
                    return Err(HrlError::Checkpoint(format!(
                        "node `{}`: checkpoint shape {:?} does not fit {:?}",
                        node.name, src.net.spec, node.net.spec
                    ))
                    .into());
                }
                node.net = src.net.clone();
                node.adam = AdamState::new(node.net.param_count());
                loaded.push(node.name.clone());
            }
            None => fresh.push(node.name.clone()),
        }
    }
    let mask = if freeze_loaded {
        TrainableMask::freeze(loaded.clone())
    } else {
        TrainableMask::all()
    };
    Ok(Transfer {
        hierarchy: h,
        loaded,
        fresh,
        mask,
    })
}

/// Fixed inputs of a schedule run.
#[derive(Clone, Debug)]
pub struct ScheduleRun<'a> {
    pub hierarchy: HierarchyConfig,
    pub macros: &'a [MacroAction],
    pub expert_stats: Option<&'a ExpertStats>,
    pub workers: usize,
    pub seed: u64,
    /// Write curves and checkpoints here, resuming whatever is already there.
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct StageResult {
    pub name: String,
    /// Iterations run in this invocation (earlier ones are on disk when resuming).
    pub records: Vec<IterationRecord>,
    pub best: Hierarchy,
    pub best_win_rate: f64,
    pub loaded: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Progress {
    next_iteration: usize,
    best_win_rate: Option<f64>,
    loaded: Vec<String>,
}

/// Checkpoint directory of stage `i` under a schedule output directory.
pub fn stage_dir(out: &Path, i: usize, name: &str) -> PathBuf {
    out.join("stages").join(format!("{i}-{name}"))
}

fn write_progress(dir: &Path, p: &Progress) -> Result<(), CurriculumError> {
    let path = dir.join("progress.toml");
    let tmp = dir.join("progress.tmp");
    fs::write(&tmp, toml::to_string(p).expect("progress serializes")).map_err(|e| file_err(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| file_err(&path, e))
}

fn read_progress(dir: &Path) -> Result<Option<Progress>, CurriculumError> {
    let path = dir.join("progress.toml");
    match fs::read_to_string(&path) {
        Ok(t) => toml::from_str(&t).map(Some).map_err(|e| file_err(&path, e)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(file_err(&path, e)),
    }
}

/// Curve file with header; rows of `stage` at or beyond `keep_from` are dropped (they belong to an
/// iteration whose checkpoint was never written).
fn prepare_curve(path: &Path, header: &str, stage: &str, keep_from: usize) -> Result<(), CurriculumError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(file_err(path, e)),
    };
    if text.is_empty() {
        return fs::write(path, header).map_err(|e| file_err(path, e));
    }
    if !text.starts_with(header) {
        return Err(file_err(path, format!("existing curve does not match schema `{CURVE_SCHEMA}` and node set")));
    }
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut f = line.splitn(3, ',');
        let stale = f.next() == Some(stage) && f.next().and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| i >= keep_from);
        if !stale {
            out.push_str(line);
            out.push('\n');
        }
    }
    if out != text {
        fs::write(path, out).map_err(|e| file_err(path, e))?;
    }
    Ok(())
}

fn append_row(path: &Path, row: &str) -> Result<(), CurriculumError> {
    let mut f = OpenOptions::new().append(true).open(path).map_err(|e| file_err(path, e))?;
    f.write_all(row.as_bytes()).map_err(|e| file_err(path, e))?;
    f.sync_data().map_err(|e| file_err(path, e))
}

/// Initial hierarchy of stage `i`.
fn init_stage(
    i: usize,
    stage: &CurriculumStage,
    run: &ScheduleRun<'_>,
    previous: Option<&Hierarchy>,
) -> Result<Transfer, CurriculumError> {
    let scratch_cfg = HierarchyConfig {
        init_seed: mix_seed(run.seed, i as u64 + 1),
        ..run.hierarchy.clone()
    };
    let source = match (&stage.init, previous) {
        (StageInit::FromCheckpoint(p), _) => Some(load_hierarchy(p)?),
        (StageInit::Previous, Some(prev)) => Some(prev.clone()),
        _ => None,
    };
    match source {
        Some(src) => transfer_init(&src, &scratch_cfg, run.macros, stage.freeze_loaded),
        None => Ok(Transfer {
            fresh: Vec::new(),
            loaded: Vec::new(),
            mask: TrainableMask::all(),
            hierarchy: build_topology(&scratch_cfg, run.macros)?,
        }),
    }
}

/// Run the stages in order. `observer` sees every iteration record with its stage index.
pub fn run_schedule(
    schedule: &Schedule,
    run: &ScheduleRun<'_>,
    observer: &mut dyn FnMut(usize, &IterationRecord) -> Result<(), CurriculumError>,
) -> Result<Vec<StageResult>, CurriculumError> {
    schedule.validate()?;
    let mut results: Vec<StageResult> = Vec::new();
    let node_names = build_topology(&run.hierarchy, run.macros)?.node_names();
    let header = write_curve_header(&node_names);
    let curve = run.out_dir.as_ref().map(|o| o.join("curve.csv"));
    if let Some(out) = &run.out_dir {
        fs::create_dir_all(out).map_err(|e| file_err(out, e))?;
    }
    for (i, stage) in schedule.stages.iter().enumerate() {
        let dir = run.out_dir.as_ref().map(|o| stage_dir(o, i, &stage.name));
        // A finished stage is taken from disk.
        if let Some(d) = dir.as_ref().filter(|d| d.join("done").exists()) {
            let progress = read_progress(d)?.unwrap_or_default();
            results.push(StageResult {
                name: stage.name.clone(),
                records: Vec::new(),
                best: load_hierarchy(&d.join("best"))?,
                best_win_rate: progress.best_win_rate.unwrap_or(0.0),
                loaded: progress.loaded,
            });
            continue;
        }
        let progress = match &dir {
            Some(d) => read_progress(d)?,
            None => None,
        };
        let (mut h, loaded, mask, mut best, start) = match (&progress, &dir) {
            (Some(p), Some(d)) if p.next_iteration > 0 => {
                let h = load_hierarchy(&d.join("last"))?;
                let best = load_hierarchy(&d.join("best"))?;
                let mask = if stage.freeze_loaded {
                    TrainableMask::freeze(p.loaded.clone())
                } else {
                    TrainableMask::all()
                };
                (h, p.loaded.clone(), mask, Some(best), p.next_iteration)
            }
            _ => {
                let t = init_stage(i, stage, run, results.last().map(|r| &r.best))?;
                (t.hierarchy, t.loaded, t.mask, None, 0)
            }
        };
        let mut mask = mask;
        mask.frozen.extend(stage.frozen.iter().cloned());
        if let (Some(c), Some(d)) = (&curve, &dir) {
            prepare_curve(c, &header, &stage.name, start)?;
            fs::create_dir_all(d).map_err(|e| file_err(d, e))?;
        }
        let remaining = stage.iterations.saturating_sub(start);
        let mut best_rate = progress.as_ref().and_then(|p| p.best_win_rate);
        let stopped = best_rate.zip(stage.stop_at_win_rate).is_some_and(|(b, t)| b >= t);
        let mut records = Vec::new();
        if remaining > 0 && !stopped {
            let cfg = TrainConfig {
                env: stage.env()?,
                reward: stage.reward_spec(run.expert_stats)?,
                ppo: stage.ppo_config()?,
                iterations: remaining,
                episodes_per_iter: stage.episodes_per_iter,
                mode: stage.mode.clone(),
                mask,
                seed: mix_seed(run.seed ^ 0x5747_0000, i as u64 + 1),
                workers: run.workers,
                start_iteration: start,
                stop_at_win_rate: stage.stop_at_win_rate,
                best_win_rate: best_rate,
            };
            let mut observe = |r: &IterationRecord, cur: &Hierarchy, new_best: Option<&Hierarchy>| -> Result<(), HrlError> {
                if let Some(b) = new_best {
                    best = Some(b.clone());
                    best_rate = Some(r.win_rate());
                }
                if let (Some(c), Some(d)) = (&curve, &dir) {
                    let wrap = |e: CurriculumError| HrlError::Checkpoint(e.to_string());
                    append_row(c, &write_curve_row(&stage.name, r)).map_err(wrap)?;
                    if let Some(b) = new_best {
                        save_hierarchy(&d.join("best"), b)?;
                    }
                    save_hierarchy(&d.join("last"), cur)?;
                    write_progress(
                        d,
                        &Progress {
                            next_iteration: r.iteration + 1,
                            best_win_rate: best_rate,
                            loaded: loaded.clone(),
                        },
                    )
                    .map_err(wrap)?;
                }
                observer(i, r).map_err(|e| HrlError::Checkpoint(e.to_string()))?;
                records.push(r.clone());
                Ok(())
            };
            train(&mut h, &cfg, &mut observe).map_err(|e| CurriculumError::Stage {
                stage: stage.name.clone(),
                iteration: start + records.len(),
                source: Box::new(e.into()),
            })?;
        }
        let best = best.ok_or_else(|| CurriculumError::Config(format!("stage `{}` produced no model", stage.name)))?;
        if let Some(d) = &dir {
            fs::write(d.join("done"), "").map_err(|e| file_err(d, e))?;
        }
        results.push(StageResult {
            name: stage.name.clone(),
            records,
            best,
            best_win_rate: best_rate.unwrap_or(0.0),
            loaded,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests;
