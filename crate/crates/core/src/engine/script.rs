//! Scripted players: the difficulty-parameterized opponent and the replay expert.

use std::collections::VecDeque;

use rand::Rng;

use super::{Command, DifficultyConfig, EntityId, EntityKind, GameState, PlayerId, Pos, PrimitiveAction, SelectTarget};
use crate::placement::{sample_build_location, Window};

fn selection_for(state: &GameState, player: PlayerId, target: SelectTarget) -> Vec<EntityId> {
    state
        .owned(player)
        .filter(|e| match target {
            SelectTarget::Entity(id) => e.id == id,
            SelectTarget::Kind(k) => e.kind == k,
            SelectTarget::Army => e.kind.is_combat(),
        })
        .map(|e| e.id)
        .collect()
}

/// Emit the command if `target` is already selected, otherwise the selection.
fn select_then(state: &GameState, player: PlayerId, target: SelectTarget, cmd: Command) -> PrimitiveAction {
    if state.players[player].selection == selection_for(state, player, target) {
        PrimitiveAction::Command(cmd)
    } else {
        PrimitiveAction::Select(target)
    }
}

fn build_spot(state: &GameState, player: PlayerId, kind: EntityKind, salt: u64) -> Option<Pos> {
    let window = Window::centered(&state.config, state.home(player), state.config.width / 2);
    let mut rng = state.decision_rng(salt);
    sample_build_location(state, player, kind, window, &mut rng)
}

fn food_free(state: &GameState, player: PlayerId) -> i64 {
    let ps = &state.players[player];
    ps.food_cap - ps.food_used
}

/// Nearest enemy structure this player knows about, else the enemy spawn.
fn attack_target(state: &GameState, player: PlayerId) -> Pos {
    let home = state.home(player);
    state
        .structures(1 - player)
        .filter(|e| state.has_scouted(player, e.pos))
        .min_by_key(|e| (e.pos.dist2(home), e.id))
        .map(|e| e.pos)
        .unwrap_or(state.players[1 - player].spawn)
}

fn threat_near_home(state: &GameState, player: PlayerId) -> Option<Pos> {
    let home = state.home(player);
    state
        .army(1 - player)
        .filter(|e| e.pos.chebyshev(home) <= 8 && state.sees(player, e.pos))
        .min_by_key(|e| (e.pos.dist2(home), e.id))
        .map(|e| e.pos)
}

/// One decision of the built-in opponent for `player`.
///
/// Stateless: the intended (selection, command) pair is recomputed from the state
/// every decision, and the selection is emitted first when it is not already active.
/// Placement randomness comes from [`GameState::decision_rng`], so play is
/// deterministic for a given game seed.
pub fn scripted_opponent(state: &GameState, player: PlayerId, cfg: &DifficultyConfig) -> PrimitiveAction {
    if state.is_terminal() {
        return PrimitiveAction::NOOP;
    }
    let ps = &state.players[player];
    let counts = state.counts(player);
    let army = counts[EntityKind::Melee.index()] + counts[EntityKind::Ranged.index()];
    let army_units: Vec<_> = state.army(player).collect();
    let salt = 17 + player as u64;

    // Defend the base against visible raiders.
    if let Some(threat) = threat_near_home(state, player) {
        if army > 0 {
            return select_then(
                state,
                player,
                SelectTarget::Army,
                Command::AttackPos {
                    pos: threat,
                    queued: false,
                },
            );
        }
    }

    // Attack waves.
    let wave_active = army_units
        .iter()
        .any(|e| e.orders.iter().any(|o| matches!(o, super::Order::AttackMove(_))));
    let launch = state.tick >= cfg.attack_tick && army as u32 >= cfg.army_target;
    let has_idle = army_units.iter().any(|e| e.is_idle());
    if state.tick >= cfg.attack_tick && has_idle && (launch || wave_active) {
        return select_then(
            state,
            player,
            SelectTarget::Army,
            Command::AttackPos {
                pos: attack_target(state, player),
                queued: false,
            },
        );
    }

    // Send workers home to mine once the base has a rally.
    let base = state.main_base(player);
    if let Some(b) = base {
        if b.rally.is_none() && b.is_complete() {
            if let Some(m) = state.nearest_mineral(b.pos) {
                return select_then(state, player, SelectTarget::Kind(EntityKind::Base), Command::Gather(m));
            }
        }
    }

    let supply_building = state.under_construction(player, EntityKind::Supply) > 0;
    if food_free(state, player) <= 3 && !supply_building && ps.food_cap < super::MAX_FOOD && ps.minerals >= 100 {
        if let Some(p) = build_spot(state, player, EntityKind::Supply, salt) {
            return select_then(
                state,
                player,
                SelectTarget::Kind(EntityKind::Worker),
                Command::BuildStructure(EntityKind::Supply, p),
            );
        }
    }

    let workers = counts[EntityKind::Worker.index()] + state.in_training(player, EntityKind::Worker);
    if let Some(b) = base {
        if (workers as u32) < cfg.worker_target && b.queue.is_empty() && ps.minerals >= 50 && food_free(state, player) >= 1 {
            return select_then(
                state,
                player,
                SelectTarget::Kind(EntityKind::Base),
                Command::TrainUnit(EntityKind::Worker),
            );
        }
    }

    let productions = counts[EntityKind::Production.index()];
    let may_build = |kind: EntityKind, target: u32| {
        cfg.rebuild || state.players[player].built_ever[kind.index()] < target
    };
    if (productions as u32) < cfg.production_target
        && may_build(EntityKind::Production, cfg.production_target)
        && ps.minerals >= EntityKind::Production.stats().cost
    {
        if let Some(p) = build_spot(state, player, EntityKind::Production, salt) {
            return select_then(
                state,
                player,
                SelectTarget::Kind(EntityKind::Worker),
                Command::BuildStructure(EntityKind::Production, p),
            );
        }
    }

    if cfg.ranged_share > 0.0
        && counts[EntityKind::Tech.index()] == 0
        && productions > 0
        && may_build(EntityKind::Tech, 1)
        && ps.minerals >= EntityKind::Tech.stats().cost
    {
        if let Some(p) = build_spot(state, player, EntityKind::Tech, salt) {
            return select_then(
                state,
                player,
                SelectTarget::Kind(EntityKind::Worker),
                Command::BuildStructure(EntityKind::Tech, p),
            );
        }
    }

    let army_cap = (2 * cfg.army_target) as usize;
    let idle_production = state
        .owned(player)
        .any(|e| e.kind == EntityKind::Production && e.is_complete() && e.queue.is_empty());
    if idle_production && army + state.in_training(player, EntityKind::Melee) < army_cap {
        let tech_ready = state
            .owned(player)
            .any(|e| e.kind == EntityKind::Tech && e.is_complete());
        let ranged = counts[EntityKind::Ranged.index()] as f64;
        let kind = if tech_ready && ranged < cfg.ranged_share * (army as f64 + 1.0) {
            EntityKind::Ranged
        } else {
            EntityKind::Melee
        };
        let st = kind.stats();
        if ps.minerals >= st.cost && food_free(state, player) >= st.food {
            return select_then(
                state,
                player,
                SelectTarget::Kind(EntityKind::Production),
                Command::TrainUnit(kind),
            );
        }
    }

    if let Some(w) = state.owned(player).find(|e| e.kind == EntityKind::Worker && e.is_idle()) {
        if let Some(m) = state.nearest_mineral(state.home(player)) {
            return select_then(state, player, SelectTarget::Entity(w.id), Command::Gather(m));
        }
    }

    PrimitiveAction::NOOP
}

/// Hand-written competent policy used to produce replay logs for macro mining.
///
/// Plans short select-then-command sequences (worker saturation, supply,
/// production, army, attack) and emits them one primitive per decision.
#[derive(Clone, Debug)]
pub struct ScriptedExpert {
    pending: VecDeque<PrimitiveAction>,
    /// When false the expert never commands its army (defence and attacks are left to someone else).
    army_control: bool,
}

impl Default for ScriptedExpert {
    fn default() -> Self {
        ScriptedExpert {
            pending: VecDeque::new(),
            army_control: true,
        }
    }
}

impl ScriptedExpert {
    pub const WORKER_TARGET: usize = 12;
    pub const ATTACK_AT: usize = 6;

    pub fn new() -> Self {
        Self::default()
    }

    /// Economy and production only; the army is never selected.
    pub fn economy_only() -> Self {
        ScriptedExpert {
            army_control: false,
            ..Self::default()
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Next primitive for `player`.
    pub fn act(&mut self, state: &GameState, player: PlayerId) -> PrimitiveAction {
        if state.is_terminal() {
            return PrimitiveAction::NOOP;
        }
        if self.pending.is_empty() {
            self.plan(state, player);
        }
        self.pending.pop_front().unwrap_or(PrimitiveAction::NOOP)
    }

    fn push(&mut self, seq: impl IntoIterator<Item = PrimitiveAction>) {
        self.pending.extend(seq);
    }

    fn plan(&mut self, state: &GameState, player: PlayerId) {
        use PrimitiveAction::{Command as C, Select as S};
        let ps = &state.players[player];
        let counts = state.counts(player);
        let mut rng = state.decision_rng(101 + player as u64);
        let home = state.home(player);
        let mineral = state.nearest_mineral(home);
        let army = counts[EntityKind::Melee.index()] + counts[EntityKind::Ranged.index()];
        let workers = counts[EntityKind::Worker.index()] + state.in_training(player, EntityKind::Worker);
        let builder = state
            .owned(player)
            .filter(|e| e.kind == EntityKind::Worker)
            .min_by_key(|e| (e.pos.dist2(home), e.id))
            .map(|e| e.id);
        let front = Pos::new(
            (home.x + state.config.width / 2) / 2,
            (home.y + state.config.height / 2) / 2,
        );

        if self.army_control && threat_near_home(state, player).is_some() && army > 0 {
            let t = threat_near_home(state, player).unwrap();
            self.push([
                S(SelectTarget::Army),
                C(Command::AttackPos { pos: t, queued: false }),
                C(Command::AttackPos {
                    pos: home,
                    queued: true,
                }),
            ]);
            return;
        }

        let food_free = food_free(state, player);
        let supply_building = state.under_construction(player, EntityKind::Supply) > 0;
        if food_free <= 4 && !supply_building && ps.food_cap < super::MAX_FOOD && ps.minerals >= 100 {
            if let (Some(w), Some(p)) = (builder, build_spot(state, player, EntityKind::Supply, 7)) {
                let mut seq = vec![S(SelectTarget::Entity(w)), C(Command::BuildStructure(EntityKind::Supply, p))];
                let productions = counts[EntityKind::Production.index()];
                if productions < 2 && ps.minerals >= 250 && rng.gen_bool(0.5) {
                    if let Some(p2) = build_spot(state, player, EntityKind::Production, 8) {
                        seq.push(C(Command::BuildStructure(EntityKind::Production, p2)));
                    }
                }
                if let Some(m) = mineral {
                    seq.push(C(Command::Gather(m)));
                }
                self.push(seq);
                return;
            }
        }

        let base_idle = state
            .main_base(player)
            .map(|b| b.is_complete() && b.queue.is_empty())
            .unwrap_or(false);
        if workers < Self::WORKER_TARGET && base_idle && ps.minerals >= 50 && food_free >= 1 {
            let mut seq = vec![
                S(SelectTarget::Kind(EntityKind::Base)),
                C(Command::TrainUnit(EntityKind::Worker)),
            ];
            if let Some(m) = mineral {
                seq.push(C(Command::Gather(m)));
            }
            self.push(seq);
            return;
        }

        let productions = counts[EntityKind::Production.index()];
        if productions < 2 && ps.minerals >= 150 {
            if let (Some(w), Some(p)) = (builder, build_spot(state, player, EntityKind::Production, 9)) {
                let mut seq = vec![S(SelectTarget::Entity(w)), C(Command::BuildStructure(EntityKind::Production, p))];
                if let Some(m) = mineral {
                    seq.push(C(Command::Gather(m)));
                }
                self.push(seq);
                return;
            }
        }

        if productions >= 2 && counts[EntityKind::Tech.index()] == 0 && ps.minerals >= 150 && army >= 4 {
            if let (Some(w), Some(p)) = (builder, build_spot(state, player, EntityKind::Tech, 10)) {
                let mut seq = vec![S(SelectTarget::Entity(w)), C(Command::BuildStructure(EntityKind::Tech, p))];
                if let Some(m) = mineral {
                    seq.push(C(Command::Gather(m)));
                }
                self.push(seq);
                return;
            }
        }

        let idle_production = state
            .owned(player)
            .any(|e| e.kind == EntityKind::Production && e.is_complete() && e.queue.len() < 2);
        if idle_production && ps.minerals >= 100 && food_free >= 2 {
            let tech_ready = state
                .owned(player)
                .any(|e| e.kind == EntityKind::Tech && e.is_complete());
            let mut seq = vec![
                S(SelectTarget::Kind(EntityKind::Production)),
                C(Command::TrainUnit(EntityKind::Melee)),
            ];
            if tech_ready && ps.minerals >= 225 && rng.gen_bool(0.5) {
                seq.push(C(Command::TrainUnit(EntityKind::Ranged)));
            }
            seq.push(C(Command::MovePos(front)));
            self.push(seq);
            return;
        }

        let idle_army = state.army(player).filter(|e| e.is_idle()).count();
        if self.army_control && army >= Self::ATTACK_AT && idle_army > 0 {
            let target = attack_target(state, player);
            let enemy_spawn = state.players[1 - player].spawn;
            let mut seq = vec![
                S(SelectTarget::Army),
                C(Command::AttackPos {
                    pos: target,
                    queued: false,
                }),
            ];
            if target != enemy_spawn {
                seq.push(C(Command::AttackPos {
                    pos: enemy_spawn,
                    queued: true,
                }));
            } else if rng.gen_bool(0.5) {
                seq.insert(1, C(Command::MovePos(front)));
            }
            self.push(seq);
            return;
        }

        if let Some(w) = state.owned(player).find(|e| e.kind == EntityKind::Worker && e.is_idle()) {
            if let Some(m) = mineral {
                self.push([S(SelectTarget::Entity(w.id)), C(Command::Gather(m))]);
                return;
            }
        }
        self.push([PrimitiveAction::NOOP]);
    }
}
