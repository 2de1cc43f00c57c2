//! Reward regimes: terminal win/loss, score deltas, and the unit-count reward shaped by expert statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EntityKind, GameState, Outcome, PlayerId, ReplayLog, ScoreTracker};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("expert statistics need at least one replay log")]
    NoLogs,
    #[error("replay log {0} has no end record")]
    MissingEnd(usize),
    #[error("invalid reward spec: {0}")]
    Spec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardKind {
    WinLoss,
    Score,
    Designed,
}

/// Mean end-of-game count per ownable kind over expert games.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertStats {
    pub mean_counts: BTreeMap<EntityKind, f64>,
}

impl ExpertStats {
    pub fn get(&self, kind: EntityKind) -> f64 {
        self.mean_counts.get(&kind).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub expert_stats: Option<ExpertStats>,
    /// Per-minute time penalty.
    pub alpha: f64,
    /// Outcome weight.
    pub beta: f64,
    /// Unit-kill normalizer.
    pub omega: f64,
    /// Structure-kill normalizer.
    pub rho: f64,
    /// Extra reward per newly counted entity of a kind.
    pub bonus: BTreeMap<EntityKind, f64>,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            kind: RewardKind::WinLoss,
            expert_stats: None,
            alpha: 10.0,
            beta: 50.0,
            omega: 100.0,
            rho: 50.0,
            bonus: BTreeMap::new(),
        }
    }
}

impl RewardSpec {
    pub fn win_loss() -> Self {
        Self::default()
    }

    pub fn score() -> Self {
        RewardSpec {
            kind: RewardKind::Score,
            ..Self::default()
        }
    }

    pub fn designed(stats: ExpertStats) -> Self {
        RewardSpec {
            kind: RewardKind::Designed,
            expert_stats: Some(stats),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(RewardError::Spec("alpha and beta must be >= 0".into()));
        }
        if !(self.omega > 0.0 && self.rho > 0.0) {
            return Err(RewardError::Spec("omega and rho must be > 0".into()));
        }
        if (self.kind == RewardKind::Designed) != self.expert_stats.is_some() {
            return Err(RewardError::Spec(
                "expert statistics are required exactly for the designed reward".into(),
            ));
        }
        Ok(())
    }
}

pub fn collect_expert_stats(logs: &[ReplayLog]) -> Result<ExpertStats, RewardError> {
    if logs.is_empty() {
        return Err(RewardError::NoLogs);
    }
    let mut sums: BTreeMap<EntityKind, f64> = EntityKind::OWNABLE.iter().map(|k| (*k, 0.0)).collect();
    for (i, log) in logs.iter().enumerate() {
        let (_, counts) = log.end().ok_or(RewardError::MissingEnd(i))?;
        for (kind, n) in counts {
            *sums.entry(*kind).or_default() += *n as f64;
        }
    }
    let n = logs.len() as f64;
    Ok(ExpertStats {
        mean_counts: sums.into_iter().map(|(k, s)| (k, s / n)).collect(),
    })
}

/// Count-change reward: each kind's change is added while the new count is below the
/// expert mean and subtracted otherwise.
pub fn designed_step_reward(prev: &[usize; 8], cur: &[usize; 8], stats: &ExpertStats) -> f64 {
    EntityKind::OWNABLE
        .iter()
        .map(|&k| {
            let i = k.index();
            let d = cur[i] as f64 - prev[i] as f64;
            let sign = if (cur[i] as f64) < stats.get(k) { 1.0 } else { -1.0 };
            sign * d
        })
        .sum()
}

/// `beta * outcome - alpha * minutes`.
pub fn terminal_reward(outcome: Outcome, match_minutes: f64, alpha: f64, beta: f64) -> f64 {
    beta * outcome.value() - alpha * match_minutes
}

/// Ternary outcome at the terminal step, 0 otherwise.
pub fn winloss_reward(outcome: Outcome) -> f64 {
    outcome.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Base,
    Battle,
}

/// A player's cumulative score plus the current value of its units and structures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScoreSnapshot {
    pub tracker: ScoreTracker,
    pub unit_value: i64,
    pub struct_value: i64,
}

impl ScoreSnapshot {
    pub fn capture(state: &GameState, player: PlayerId) -> Self {
        let mut s = ScoreSnapshot {
            tracker: state.players[player].score,
            ..Default::default()
        };
        for e in state.owned(player) {
            let cost = e.kind.stats().cost;
            if e.kind.is_structure() {
                s.struct_value += cost;
            } else {
                s.unit_value += cost;
            }
        }
        s
    }
}

/// Idle ticks are divided by this before entering the base-role reward.
pub const IDLE_NORM: f64 = 100.0;

/// Score-delta reward. Battle: killed value. Base: growth of owned value minus new idle time.
pub fn score_reward(prev: &ScoreSnapshot, cur: &ScoreSnapshot, role: Role, omega: f64, rho: f64) -> f64 {
    match role {
        Role::Battle => {
            (cur.tracker.kill_unit_value - prev.tracker.kill_unit_value) as f64 / omega
                + (cur.tracker.kill_struct_value - prev.tracker.kill_struct_value) as f64 / rho
        }
        Role::Base => {
            let idle = (cur.tracker.worker_idle_ticks - prev.tracker.worker_idle_ticks)
                + (cur.tracker.production_idle_ticks - prev.tracker.production_idle_ticks);
            (cur.unit_value - prev.unit_value) as f64 / omega + (cur.struct_value - prev.struct_value) as f64 / rho
                - idle as f64 / IDLE_NORM
        }
    }
}

/// Everything a reward function needs about one side at one decision boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardSnapshot {
    pub counts: [usize; 8],
    pub score: ScoreSnapshot,
}

impl RewardSnapshot {
    pub fn capture(state: &GameState, player: PlayerId) -> Self {
        RewardSnapshot {
            counts: state.counts(player),
            score: ScoreSnapshot::capture(state, player),
        }
    }
}

impl RewardSpec {
    /// Per-decision reward between two snapshots; `terminal` is the outcome if the game ended.
    pub fn step_reward(
        &self,
        prev: &RewardSnapshot,
        cur: &RewardSnapshot,
        role: Role,
        terminal: Option<(Outcome, f64)>,
    ) -> f64 {
        let mut r = match self.kind {
            RewardKind::WinLoss => 0.0,
            RewardKind::Score => score_reward(&prev.score, &cur.score, role, self.omega, self.rho),
            RewardKind::Designed => designed_step_reward(
                &prev.counts,
                &cur.counts,
                self.expert_stats.as_ref().expect("designed reward without expert stats"),
            ),
        };
        for (kind, bonus) in &self.bonus {
            let i = kind.index();
            r += bonus * (cur.counts[i] as f64 - prev.counts[i] as f64).max(0.0);
        }
        if let Some((outcome, minutes)) = terminal {
            r += match self.kind {
                RewardKind::WinLoss => winloss_reward(outcome),
                RewardKind::Designed => terminal_reward(outcome, minutes, self.alpha, self.beta),
                RewardKind::Score => self.beta * outcome.value() / self.rho,
            };
        }
        r
    }
}
