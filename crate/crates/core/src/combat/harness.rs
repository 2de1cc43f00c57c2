//! Games in which an economy-only scripted expert runs the base and a battle model commands the army.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{battle_turn, CombatError, CombatModel, CombatRule};
use crate::approx::AdamState;
use crate::engine::{
    Command, DifficultyConfig, EngineConfig, GameState, Outcome, Pos, PrimitiveAction, ScriptedExpert,
};
use crate::rewards::{score_reward, Role, ScoreSnapshot};
use crate::rl::{ppo_update, rollout_targets, PpoConfig, Transition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombatEpisodeConfig {
    pub engine: EngineConfig,
    pub difficulty: u8,
    pub max_ticks: u32,
    /// Engine decisions between battle turns.
    pub interval: u32,
    pub omega: f64,
    pub rho: f64,
    /// Weight of the terminal outcome added to the last battle transition.
    pub outcome_weight: f64,
}

impl Default for CombatEpisodeConfig {
    fn default() -> Self {
        CombatEpisodeConfig {
            engine: EngineConfig::default(),
            difficulty: 1,
            max_ticks: 4800,
            interval: 4,
            omega: 100.0,
            rho: 50.0,
            outcome_weight: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombatEpisode {
    pub outcome: Outcome,
    pub ticks: u32,
    pub transitions: Vec<Transition>,
    /// A tie in which the agent destroyed more structure value than it lost.
    pub near_win: bool,
    /// Attack and move targets in issue order.
    pub targets: Vec<Pos>,
    /// Waypoint index of the rule at each of its turns.
    pub rule_indices: Vec<usize>,
}

pub fn run_combat_episode(
    model: &CombatModel,
    seed: u64,
    cfg: &CombatEpisodeConfig,
    greedy: bool,
) -> Result<CombatEpisode, CombatError> {
    let difficulty = DifficultyConfig::level(cfg.difficulty)?;
    let mut state = GameState::new(cfg.engine.clone(), seed, None, &difficulty, cfg.max_ticks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee_0000_0001);
    let mut expert = ScriptedExpert::economy_only();
    let mut rule = CombatRule::for_player(&state, 0);
    let mut pending: VecDeque<PrimitiveAction> = VecDeque::new();
    let mut since = cfg.interval;
    let mut transitions: Vec<Transition> = Vec::new();
    let mut targets = Vec::new();
    let mut rule_indices = Vec::new();
    let mut last_snapshot = ScoreSnapshot::capture(&state, 0);
    while !state.is_terminal() {
        if pending.is_empty() && expert.pending() == 0 && since >= cfg.interval {
            since = 0;
            let turn = battle_turn(model, &state, 0, &mut rule, greedy, &mut rng)?;
            if matches!(model, CombatModel::Rule) {
                rule_indices.push(rule.index);
            }
            let snap = ScoreSnapshot::capture(&state, 0);
            if let Some(prev) = transitions.last_mut() {
                prev.reward += score_reward(&last_snapshot, &snap, Role::Battle, cfg.omega, cfg.rho);
            }
            last_snapshot = snap;
            if let (Some(obs), Some(d)) = (turn.features, turn.decision) {
                transitions.push(Transition {
                    obs,
                    action: d.action,
                    log_prob: d.log_prob,
                    value: d.value,
                    reward: 0.0,
                    done: false,
                });
            }
            for s in &turn.steps {
                if let PrimitiveAction::Command(Command::AttackPos { pos, .. } | Command::MovePos(pos)) = s {
                    targets.push(*pos);
                }
            }
            pending.extend(turn.steps);
        }
        let action = match pending.pop_front() {
            Some(a) => a,
            None => expert.act(&state, 0),
        };
        state.step(action)?;
        since += 1;
    }
    if let Some(last) = transitions.last_mut() {
        let snap = ScoreSnapshot::capture(&state, 0);
        last.reward += score_reward(&last_snapshot, &snap, Role::Battle, cfg.omega, cfg.rho);
        last.reward += cfg.outcome_weight * state.outcome.value();
        last.done = true;
    }
    let score = state.players[0].score;
    Ok(CombatEpisode {
        outcome: state.outcome,
        ticks: state.tick,
        transitions,
        near_win: state.outcome == Outcome::Tie && score.kill_struct_value > score.lost_struct_value,
        targets,
        rule_indices,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CombatEval {
    pub games: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub near_wins: usize,
    pub mean_ticks: f64,
}

impl CombatEval {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.games.max(1) as f64
    }

    pub fn tie_rate(&self) -> f64 {
        self.ties as f64 / self.games.max(1) as f64
    }

    pub fn win_or_near_win_rate(&self) -> f64 {
        (self.wins + self.near_wins) as f64 / self.games.max(1) as f64
    }
}

/// Seeds `seed0 .. seed0 + games`, run in parallel; results do not depend on thread count.
pub fn evaluate_combat(
    model: &CombatModel,
    cfg: &CombatEpisodeConfig,
    games: usize,
    seed0: u64,
    greedy: bool,
) -> Result<CombatEval, CombatError> {
    let episodes: Vec<CombatEpisode> = (0..games as u64)
        .into_par_iter()
        .map(|i| run_combat_episode(model, seed0 + i, cfg, greedy))
        .collect::<Result<_, _>>()?;
    let mut ev = CombatEval {
        games,
        ..Default::default()
    };
    for e in &episodes {
        match e.outcome {
            Outcome::Win => ev.wins += 1,
            Outcome::Loss => ev.losses += 1,
            _ => {
                ev.ties += 1;
                ev.near_wins += e.near_win as usize;
            }
        }
        ev.mean_ticks += e.ticks as f64 / games.max(1) as f64;
    }
    Ok(ev)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombatTrainConfig {
    pub episode: CombatEpisodeConfig,
    pub ppo: PpoConfig,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for CombatTrainConfig {
    fn default() -> Self {
        CombatTrainConfig {
            episode: CombatEpisodeConfig::default(),
            ppo: PpoConfig {
                episodes_per_update: 16,
                ..PpoConfig::default()
            },
            iterations: 20,
            seed: 0,
        }
    }
}

/// PPO on a network or mixture model; returns the per-iteration training win rates.
pub fn train_combat_network(model: &mut CombatModel, cfg: &CombatTrainConfig) -> Result<Vec<f64>, CombatError> {
    let mut adam = AdamState::new(model.network().map(|n| n.param_count()).unwrap_or(0));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let m = cfg.ppo.episodes_per_update;
    for it in 0..cfg.iterations {
        let base = cfg.seed.wrapping_mul(1_000_003).wrapping_add((it * m) as u64 + 1);
        let snapshot = model.clone();
        let episodes: Vec<CombatEpisode> = (0..m as u64)
            .into_par_iter()
            .map(|i| run_combat_episode(&snapshot, base + i, &cfg.episode, false))
            .collect::<Result<_, _>>()?;
        curve.push(episodes.iter().filter(|e| e.outcome == Outcome::Win).count() as f64 / m as f64);
        let mut rollout = Vec::new();
        let mut adv = Vec::new();
        let mut ret = Vec::new();
        for e in &episodes {
            let (a, r) = rollout_targets(&e.transitions, 0.0, cfg.ppo.gamma, cfg.ppo.lambda);
            rollout.extend(e.transitions.iter().cloned());
            adv.extend(a);
            ret.extend(r);
        }
        if let Some(net) = model.network_mut() {
            if !rollout.is_empty() {
                ppo_update(net, &mut adam, &rollout, &adv, &ret, &cfg.ppo, &mut rng)?;
            }
        }
    }
    Ok(curve)
}
