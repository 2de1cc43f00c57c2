//! Evaluation batteries and the uniformly random baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mix_seed, run_episode, uniform, EnvConfig, Hierarchy, HrlError};
use crate::engine::{Command, EntityKind, GameState, Outcome, Pos, PrimitiveAction, SelectTarget};
use crate::mining::{execute_macro, DefaultResolver, MacroAction};
use crate::rewards::RewardSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub games: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    /// Mean game length in engine ticks.
    pub mean_length: f64,
}

impl EvalSummary {
    fn from_games(results: &[(Outcome, u32)]) -> Self {
        let mut s = EvalSummary {
            games: results.len(),
            ..Default::default()
        };
        for (o, ticks) in results {
            match o {
                Outcome::Win => s.wins += 1,
                Outcome::Loss => s.losses += 1,
                _ => s.ties += 1,
            }
            s.mean_length += *ticks as f64;
        }
        s.mean_length /= results.len().max(1) as f64;
        s
    }

    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.games.max(1) as f64
    }

    pub fn tie_rate(&self) -> f64 {
        self.ties as f64 / self.games.max(1) as f64
    }

    pub fn loss_rate(&self) -> f64 {
        self.losses as f64 / self.games.max(1) as f64
    }
}

fn check_games(games: usize) -> Result<(), HrlError> {
    if games == 0 {
        return Err(HrlError::Config("games must be >= 1".into()));
    }
    Ok(())
}

/// Games on seeds `seed0 ..`; results do not depend on the thread count.
pub fn evaluate(
    h: &Hierarchy,
    env: &EnvConfig,
    games: usize,
    seed0: u64,
    greedy: bool,
) -> Result<EvalSummary, HrlError> {
    check_games(games)?;
    let reward = RewardSpec::win_loss();
    let results: Vec<(Outcome, u32)> = (0..games as u64)
        .into_par_iter()
        .map(|i| run_episode(h, env, &reward, seed0 + i, greedy).map(|e| (e.outcome, e.ticks)))
        .collect::<Result<_, _>>()?;
    Ok(EvalSummary::from_games(&results))
}

/// Uniformly random macro-action every decision.
pub fn random_macro_baseline(
    macros: &[MacroAction],
    env: &EnvConfig,
    games: usize,
    seed0: u64,
) -> Result<EvalSummary, HrlError> {
    check_games(games)?;
    if macros.is_empty() {
        return Err(HrlError::Config("macro set is empty".into()));
    }
    let results: Vec<(Outcome, u32)> = (0..games as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed0 + i;
            let mut state = env.new_game(seed)?;
            let mut resolver = DefaultResolver::new(&state, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x4a4d));
            while !state.is_terminal() {
                let m = &macros[uniform(&mut rng, macros.len())];
                execute_macro(&mut state, m, &mut resolver)?;
            }
            Ok((state.outcome, state.tick))
        })
        .collect::<Result<_, HrlError>>()?;
    Ok(EvalSummary::from_games(&results))
}

/// A uniformly random primitive action: half selections, half commands with uniform arguments.
pub fn random_primitive_action<R: Rng>(state: &GameState, rng: &mut R) -> PrimitiveAction {
    let pos = |rng: &mut R| Pos::new(rng.gen_range(0..state.config.width), rng.gen_range(0..state.config.height));
    if rng.gen_bool(0.5) {
        let i = uniform(rng, EntityKind::OWNABLE.len() + 1);
        let target = match EntityKind::OWNABLE.get(i) {
            Some(&k) => SelectTarget::Kind(k),
            None => SelectTarget::Army,
        };
        return PrimitiveAction::Select(target);
    }
    let structures: Vec<EntityKind> = EntityKind::OWNABLE.into_iter().filter(|k| k.is_structure()).collect();
    let units: Vec<EntityKind> = EntityKind::OWNABLE.into_iter().filter(|k| k.is_unit()).collect();
    let cmd = match uniform(rng, 6) {
        0 => {
            let k = structures[uniform(rng, structures.len())];
            Command::BuildStructure(k, pos(rng))
        }
        1 => Command::TrainUnit(units[uniform(rng, units.len())]),
        2 => Command::AttackPos {
            pos: pos(rng),
            queued: rng.gen_bool(0.5),
        },
        3 => Command::MovePos(pos(rng)),
        4 => match state.nearest_mineral(pos(rng)) {
            Some(m) => Command::Gather(m),
            None => Command::NoOp,
        },
        _ => Command::NoOp,
    };
    PrimitiveAction::Command(cmd)
}

/// Uniformly random primitive actions every decision.
pub fn random_primitive_baseline(env: &EnvConfig, games: usize, seed0: u64) -> Result<EvalSummary, HrlError> {
    check_games(games)?;
    let results: Vec<(Outcome, u32)> = (0..games as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed0 + i;
            let mut state = env.new_game(seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x9e1d));
            while !state.is_terminal() {
                let a = random_primitive_action(&state, &mut rng);
                state.step(a)?;
            }
            Ok((state.outcome, state.tick))
        })
        .collect::<Result<_, HrlError>>()?;
    Ok(EvalSummary::from_games(&results))
}
