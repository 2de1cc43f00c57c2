//! The iteration loop: clear buffers, collect episodes in parallel from a parameter snapshot,
//! then update node parameters from their own buffers.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix_seed, run_episode, EnvConfig, EpisodeResult, Hierarchy, HrlError};
use crate::engine::Outcome;
use crate::rewards::RewardSpec;
use crate::rl::{ppo_update, rollout_targets, LossStats, PpoConfig, Transition};

/// Which nodes are updated each iteration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    Simultaneous,
    /// One node per iteration, cycling through the named nodes (all nodes in order when empty).
    Alternate(Vec<String>),
}

/// Per-node trainable flags, by node name. Unlisted nodes are trainable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainableMask {
    pub frozen: BTreeSet<String>,
}

impl TrainableMask {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn freeze<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        TrainableMask {
            frozen: names.into_iter().map(Into::into).collect(),
        }
    }

    /// Everything except `names` is frozen.
    pub fn only(h: &Hierarchy, names: &[&str]) -> Self {
        Self::freeze(h.nodes.iter().map(|n| n.name.clone()).filter(|n| !names.contains(&n.as_str())))
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        !self.frozen.contains(name)
    }

    pub fn validate(&self, h: &Hierarchy) -> Result<(), HrlError> {
        if let Some(unknown) = self.frozen.iter().find(|n| h.node(n).is_none()) {
            return Err(HrlError::Config(format!("mask names unknown node `{unknown}`")));
        }
        if h.nodes.iter().all(|n| !self.is_trainable(&n.name)) {
            return Err(HrlError::Config("at least one node must be trainable".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub reward: RewardSpec,
    pub ppo: PpoConfig,
    pub iterations: usize,
    /// Episodes collected per iteration; overrides `ppo.episodes_per_update`.
    pub episodes_per_iter: usize,
    pub mode: UpdateMode,
    pub mask: TrainableMask,
    pub seed: u64,
    /// Collection threads; 0 uses the global pool, 1 runs strictly sequentially.
    pub workers: usize,
    /// Number of the first iteration (non-zero when resuming).
    pub start_iteration: usize,
    /// Stop once an iteration reaches this win rate.
    pub stop_at_win_rate: Option<f64>,
    /// Best win rate seen before `start_iteration`.
    pub best_win_rate: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvConfig::default(),
            reward: RewardSpec::win_loss(),
            ppo: PpoConfig::default(),
            iterations: 10,
            episodes_per_iter: 8,
            mode: UpdateMode::Simultaneous,
            mask: TrainableMask::all(),
            seed: 0,
            workers: 0,
            start_iteration: 0,
            stop_at_win_rate: None,
            best_win_rate: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, h: &Hierarchy) -> Result<(), HrlError> {
        if self.iterations == 0 {
            return Err(HrlError::Config("iterations must be >= 1".into()));
        }
        if self.episodes_per_iter == 0 {
            return Err(HrlError::Config("an iteration needs at least one episode".into()));
        }
        self.ppo.validate()?;
        self.reward.validate()?;
        self.mask.validate(h)?;
        if let UpdateMode::Alternate(order) = &self.mode {
            if let Some(unknown) = order.iter().find(|n| h.node(n).is_none()) {
                return Err(HrlError::Config(format!("rotation names unknown node `{unknown}`")));
            }
        }
        Ok(())
    }

    /// Deterministic seed of episode `e` in iteration `it`.
    pub fn episode_seed(&self, it: usize, e: usize) -> u64 {
        mix_seed(mix_seed(self.seed, it as u64 + 1), e as u64 + 1)
    }
}

/// Loss diagnostics of one node's update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeUpdate {
    pub samples: usize,
    pub loss: LossStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub episodes: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    /// Mean episode length in engine ticks.
    pub mean_length: f64,
    /// Per node, in node order; `None` when the node was not updated.
    pub updates: Vec<Option<NodeUpdate>>,
    /// This iteration set a new best win rate.
    pub new_best: bool,
}

impl IterationRecord {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.episodes as f64
    }

    pub fn tie_rate(&self) -> f64 {
        self.ties as f64 / self.episodes as f64
    }

    pub fn loss_rate(&self) -> f64 {
        self.losses as f64 / self.episodes as f64
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub records: Vec<IterationRecord>,
    pub best: Option<Hierarchy>,
    pub best_win_rate: Option<f64>,
}

pub const CURVE_SCHEMA: &str = "# schema macrohrl-curve v1";

pub fn write_curve_header(node_names: &[String]) -> String {
    let mut s = format!("{CURVE_SCHEMA}\nstage,iteration,episodes,win_rate,tie_rate,loss_rate,mean_length");
    for n in node_names {
        let _ = write!(s, ",{n}_policy_loss,{n}_value_loss,{n}_entropy");
    }
    s.push('\n');
    s
}

/// One CSV line; nodes that were not updated leave their columns empty.
pub fn write_curve_row(stage: &str, r: &IterationRecord) -> String {
    let mut s = format!(
        "{stage},{},{},{},{},{},{}",
        r.iteration,
        r.episodes,
        r.win_rate(),
        r.tie_rate(),
        r.loss_rate(),
        r.mean_length
    );
    for u in &r.updates {
        match u {
            Some(u) => {
                let _ = write!(s, ",{},{},{}", u.loss.policy_loss, u.loss.value_loss, u.loss.entropy);
            }
            None => s.push_str(",,,"),
        }
    }
    s.push('\n');
    s
}

fn collect(h: &Hierarchy, cfg: &TrainConfig, it: usize) -> Result<Vec<EpisodeResult>, HrlError> {
    let run = |e: usize| run_episode(h, &cfg.env, &cfg.reward, cfg.episode_seed(it, e), false);
    match cfg.workers {
        1 => (0..cfg.episodes_per_iter).map(run).collect(),
        0 => (0..cfg.episodes_per_iter).into_par_iter().map(run).collect(),
        w => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| HrlError::Config(e.to_string()))?
            .install(|| (0..cfg.episodes_per_iter).into_par_iter().map(run).collect()),
    }
}

/// Nodes updated in iteration `it`.
fn scheduled(h: &Hierarchy, cfg: &TrainConfig, it: usize) -> Vec<usize> {
    let trainable = |i: &usize| cfg.mask.is_trainable(&h.nodes[*i].name);
    match &cfg.mode {
        UpdateMode::Simultaneous => (0..h.nodes.len()).filter(trainable).collect(),
        UpdateMode::Alternate(order) => {
            let order: Vec<usize> = if order.is_empty() {
                (0..h.nodes.len()).collect()
            } else {
                order.iter().filter_map(|n| h.node_index(n)).collect()
            };
            let pick = order[it % order.len()];
            if trainable(&pick) {
                vec![pick]
            } else {
                vec![]
            }
        }
    }
}

/// Run `cfg.iterations` iterations. `observer` sees every record together with the current
/// hierarchy after that iteration's update, and the best hierarchy so far when it changed.
pub fn train(
    h: &mut Hierarchy,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&IterationRecord, &Hierarchy, Option<&Hierarchy>) -> Result<(), HrlError>,
) -> Result<TrainReport, HrlError> {
    cfg.validate(h)?;
    let mut report = TrainReport {
        records: Vec::with_capacity(cfg.iterations),
        best: None,
        best_win_rate: cfg.best_win_rate,
    };
    for it in cfg.start_iteration..cfg.start_iteration + cfg.iterations {
        // Fresh buffers every iteration.
        let mut buffers: Vec<(Vec<Transition>, Vec<f64>, Vec<f64>)> = vec![Default::default(); h.nodes.len()];
        let episodes = collect(h, cfg, it)?;
        if episodes.is_empty() {
            return Err(HrlError::Config(format!("iteration {it} completed no episodes")));
        }
        for ep in &episodes {
            for (ni, traj) in ep.trajectories.iter().enumerate() {
                if traj.transitions.is_empty() {
                    continue;
                }
                let (adv, ret) = rollout_targets(&traj.transitions, 0.0, cfg.ppo.gamma, cfg.ppo.lambda);
                let b = &mut buffers[ni];
                b.0.extend(traj.transitions.iter().cloned());
                b.1.extend(adv);
                b.2.extend(ret);
            }
        }
        let wins = episodes.iter().filter(|e| e.outcome == Outcome::Win).count();
        let losses = episodes.iter().filter(|e| e.outcome == Outcome::Loss).count();
        let n = episodes.len();
        let rate = wins as f64 / n as f64;
        let new_best = report.best_win_rate.is_none_or(|b| rate > b);
        if new_best {
            // The best model is the one that played this iteration's games, before its update.
            report.best_win_rate = Some(rate);
            report.best = Some(h.clone());
        }
        let to_update = scheduled(h, cfg, it);
        let ppo = &cfg.ppo;
        let results: Vec<(usize, Option<NodeUpdate>)> = h
            .nodes
            .par_iter_mut()
            .enumerate()
            .map(|(ni, node)| {
                let (rollout, adv, ret) = &buffers[ni];
                if !to_update.contains(&ni) || rollout.is_empty() {
                    return Ok((ni, None));
                }
                let seed = mix_seed(mix_seed(cfg.seed ^ 0x0ddc_0ffe, it as u64), ni as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let stats = ppo_update(&mut node.net, &mut node.adam, rollout, adv, ret, ppo, &mut rng)?;
                Ok((
                    ni,
                    Some(NodeUpdate {
                        samples: rollout.len(),
                        loss: stats.loss,
                    }),
                ))
            })
            .collect::<Result<_, HrlError>>()?;
        let mut updates = vec![None; h.nodes.len()];
        for (ni, u) in results {
            updates[ni] = u;
        }
        report.records.push(IterationRecord {
            iteration: it,
            episodes: n,
            wins,
            ties: n - wins - losses,
            losses,
            mean_length: episodes.iter().map(|e| e.ticks as f64).sum::<f64>() / n as f64,
            updates,
            new_best,
        });
        let record = report.records.last().expect("pushed");
        observer(record, h, if new_best { report.best.as_ref() } else { None })?;
        if cfg.stop_at_win_rate.is_some_and(|t| rate >= t) {
            break;
        }
    }
    Ok(report)
}
