//! Deterministic, seeded micro-RTS simulator.
//!
//! Two players each start with a base and four workers in opposite corners of a
//! square map. Agents act through [`PrimitiveAction`]s: a selection followed by a
//! command that applies to the current selection. Every call to
//! [`GameState::step`] applies one decision for each player and then advances
//! the world by `ticks_per_decision` simulator ticks.

mod observe;
mod replay;
mod script;
mod types;


pub use observe::{
    observe_scalar, observe_spatial, scalar_slot_names, SpatialObs, CONTROLLER_SLOTS, SCALAR_DIM,
    SPATIAL_CHANNELS,
};
pub use replay::{
    record_expert_game, to_text, ReplayHeader, ReplayLog, ReplayParseError, ReplayRecord, ReplayWriter,
    REPLAY_FORMAT_VERSION,
};
pub use script::{scripted_opponent, ScriptedExpert};
pub use types::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid difficulty level {0} (expected 1..=10)")]
    InvalidDifficulty(u8),
    #[error("step called on a terminal game")]
    Terminal,
    #[error("invalid player index {0}")]
    InvalidPlayer(usize),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

/// Simulator-wide constants that may be tuned per experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub width: i32,
    pub height: i32,
    /// Simulator ticks advanced per decision.
    pub ticks_per_decision: u32,
    /// Chebyshev radius of the power aura projected by supply structures and bases.
    pub aura_radius: i32,
    pub starting_minerals: i64,
    pub starting_workers: u32,
    /// Coarse-grid cell size (in map cells) for spatial observations.
    pub coarse_cell: i32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            width: 32,
            height: 32,
            ticks_per_decision: 8,
            aura_radius: 4,
            starting_minerals: 50,
            starting_workers: 4,
            coarse_cell: 4,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.width < 16 || self.height < 16 {
            return Err(EngineError::Config("map must be at least 16x16".into()));
        }
        if self.ticks_per_decision == 0 {
            return Err(EngineError::Config("ticks_per_decision must be positive".into()));
        }
        if self.coarse_cell <= 0 || self.width % self.coarse_cell != 0 || self.height % self.coarse_cell != 0 {
            return Err(EngineError::Config("coarse_cell must divide the map size".into()));
        }
        Ok(())
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    pub fn cell_index(&self, p: Pos) -> usize {
        (p.y * self.width + p.x) as usize
    }

    pub fn cells(&self) -> usize {
        (self.width * self.height) as usize
    }
}

/// Ticks per simulated "minute" (8 ticks per decision, 60 decisions).
pub const TICKS_PER_MINUTE: u32 = 480;
/// Minerals removed from a patch per gathering trip.
pub const TRIP_YIELD: i64 = 8;
pub const MINING_TICKS: u32 = 16;
pub const PATCH_MINERALS: i64 = 1500;
pub const ACQUIRE_RANGE: i32 = 6;
pub const MAX_QUEUE: usize = 5;
pub const MAX_FOOD: i64 = 100;
/// Longest order queue a unit keeps; further queued orders are dropped.
pub const MAX_ORDERS: usize = 8;

/// Cumulative per-player statistics, the simulator's stand-in for the Blizzard score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScoreTracker {
    pub kill_unit_value: i64,
    pub kill_struct_value: i64,
    pub lost_unit_value: i64,
    pub lost_struct_value: i64,
    pub worker_idle_ticks: i64,
    pub production_idle_ticks: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlayerState {
    pub minerals: i64,
    pub food_used: i64,
    pub food_cap: i64,
    pub income_multiplier: Ratio,
    pub vision_cheat: bool,
    pub selection: Vec<EntityId>,
    /// Cells this player has ever seen.
    pub scouted: Vec<bool>,
    /// Cells visible at the last decision boundary.
    pub visible: Vec<bool>,
    pub score: ScoreTracker,
    pub initial_minerals: i64,
    pub gathered_total: i64,
    pub spent_total: i64,
    /// Structures and units ever started, per kind index.
    pub built_ever: [u32; 8],
    /// Difficulty level of this side when it is scripted.
    pub difficulty: Option<u8>,
    pub spawn: Pos,
}

impl PlayerState {
    fn new(cells: usize, minerals: i64, cfg: Option<&DifficultyConfig>, spawn: Pos) -> Self {
        PlayerState {
            minerals,
            food_used: 0,
            food_cap: 0,
            income_multiplier: cfg.map(|c| c.income_multiplier).unwrap_or(Ratio::ONE),
            vision_cheat: cfg.map(|c| c.vision_cheat).unwrap_or(false),
            selection: Vec::new(),
            scouted: vec![false; cells],
            visible: vec![false; cells],
            score: ScoreTracker::default(),
            initial_minerals: minerals,
            gathered_total: 0,
            spent_total: 0,
            built_ever: [0; 8],
            difficulty: cfg.map(|c| c.level),
            spawn,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    pub config: EngineConfig,
    pub seed: u64,
    pub tick: u32,
    pub max_ticks: u32,
    /// Sorted by id; ids are assigned monotonically and never reused.
    pub entities: Vec<Entity>,
    pub next_id: EntityId,
    pub players: [PlayerState; 2],
    pub rng: ChaCha8Rng,
    /// Scripted controller for player 1 when driven through [`GameState::step`].
    pub opponent: Option<DifficultyConfig>,
    /// Result from player 0's point of view.
    pub outcome: Outcome,
    /// Candidate base sites (both spawns and the two neutral expansions).
    pub sites: Vec<Pos>,
    pub decisions: u32,
}

/// Create a game between the learning agent (player 0) and a scripted opponent.
pub fn new_game(seed: u64, difficulty: &DifficultyConfig, max_ticks: u32) -> Result<GameState, EngineError> {
    GameState::new(EngineConfig::default(), seed, None, difficulty, max_ticks)
}

impl GameState {
    /// `p0` gives player 0's cheat parameters when it is scripted; `p1` is the opponent.
    pub fn new(
        config: EngineConfig,
        seed: u64,
        p0: Option<&DifficultyConfig>,
        p1: &DifficultyConfig,
        max_ticks: u32,
    ) -> Result<GameState, EngineError> {
        config.validate()?;
        for cfg in p0.into_iter().chain(std::iter::once(p1)) {
            DifficultyConfig::level(cfg.level)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (config.width, config.height);
        let top_left = Pos::new(4, 4);
        let bottom_right = Pos::new(w - 5, h - 5);
        let (s0, s1) = if rng.gen_bool(0.5) {
            (top_left, bottom_right)
        } else {
            (bottom_right, top_left)
        };
        let sites = vec![s0, Pos::new(4, h - 5), Pos::new(w - 5, 4), s1];
        let cells = config.cells();
        let players = [
            PlayerState::new(cells, config.starting_minerals, p0, s0),
            PlayerState::new(cells, config.starting_minerals, Some(p1), s1),
        ];
        let mut state = GameState {
            config,
            seed,
            tick: 0,
            max_ticks,
            entities: Vec::new(),
            next_id: 1,
            players,
            rng,
            opponent: Some(p1.clone()),
            outcome: Outcome::Ongoing,
            sites: sites.clone(),
            decisions: 0,
        };
        for site in &sites {
            state.spawn_minerals(*site);
        }
        for p in 0..2 {
            let spawn = state.players[p].spawn;
            let base = state.spawn_entity(Some(p), EntityKind::Base, spawn);
            state.players[p].built_ever[EntityKind::Base.index()] += 1;
            let _ = base;
            for i in 0..state.config.starting_workers {
                let dir = if spawn.x < w / 2 { 1 } else { -1 };
                let pos = Pos::new(spawn.x + 2 * dir, spawn.y - 1 + i as i32 % 3);
                let wid = state.spawn_entity(Some(p), EntityKind::Worker, pos);
                state.players[p].built_ever[EntityKind::Worker.index()] += 1;
                state.players[p].food_used += 1;
                if let Some(m) = state.nearest_mineral(pos) {
                    state.entity_mut(wid).unwrap().orders = vec![Order::Gather {
                        mineral: m,
                        phase: GatherPhase::ToMineral,
                    }];
                }
            }
        }
        state.recompute_food_cap();
        state.update_vision();
        if state.tick >= state.max_ticks {
            state.outcome = Outcome::Tie;
        }
        Ok(state)
    }

    /// Head-to-head game between two scripted sides; drive with [`GameState::step_both`].
    pub fn new_match(
        config: EngineConfig,
        seed: u64,
        p0: &DifficultyConfig,
        p1: &DifficultyConfig,
        max_ticks: u32,
    ) -> Result<GameState, EngineError> {
        let mut g = GameState::new(config, seed, Some(p0), p1, max_ticks)?;
        g.opponent = None;
        Ok(g)
    }

    fn spawn_minerals(&mut self, site: Pos) {
        let sx = if site.x < self.config.width / 2 { 1 } else { -1 };
        let sy = if site.y < self.config.height / 2 { 1 } else { -1 };
        for (ox, oy) in [(-3, -1), (-3, 0), (-3, 1), (-1, -3), (0, -3), (1, -3)] {
            let p = Pos::new(site.x + ox * sx, site.y + oy * sy);
            let id = self.spawn_entity(None, EntityKind::Mineral, p);
            self.entity_mut(id).unwrap().minerals_left = PATCH_MINERALS;
        }
    }

    fn spawn_entity(&mut self, owner: Option<PlayerId>, kind: EntityKind, pos: Pos) -> EntityId {
        let id = self.next_id;
        self.next_id += 1;
        let st = kind.stats();
        self.entities.push(Entity {
            id,
            owner,
            kind,
            pos,
            hp: st.max_hp,
            max_hp: st.max_hp,
            selected: false,
            construction_left: 0,
            minerals_left: 0,
            orders: Vec::new(),
            cooldown: 0,
            move_wait: 0,
            carrying: 0,
            queue: Vec::new(),
            rally: None,
        });
        id
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn entity_mut(&mut self, id: EntityId) -> Option<&mut Entity> {
        self.entities
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(move |i| &mut self.entities[i])
    }

    pub fn is_terminal(&self) -> bool {
        self.outcome.is_terminal()
    }

    pub fn opponent_level(&self) -> Option<u8> {
        self.players[1].difficulty
    }

    pub fn owned(&self, player: PlayerId) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(move |e| e.owner == Some(player))
    }

    pub fn count(&self, player: PlayerId, kind: EntityKind) -> usize {
        self.owned(player).filter(|e| e.kind == kind).count()
    }

    pub fn army(&self, player: PlayerId) -> impl Iterator<Item = &Entity> {
        self.owned(player).filter(|e| e.kind.is_combat())
    }

    pub fn structures(&self, player: PlayerId) -> impl Iterator<Item = &Entity> {
        self.owned(player).filter(|e| e.kind.is_structure())
    }

    pub fn main_base(&self, player: PlayerId) -> Option<&Entity> {
        let spawn = self.players[player].spawn;
        self.owned(player)
            .filter(|e| e.kind == EntityKind::Base)
            .min_by_key(|e| (e.pos.dist2(spawn), e.id))
    }

    /// Own base position, falling back to the spawn site once the base is gone.
    pub fn home(&self, player: PlayerId) -> Pos {
        self.main_base(player).map(|b| b.pos).unwrap_or(self.players[player].spawn)
    }

    pub fn nearest_mineral(&self, from: Pos) -> Option<EntityId> {
        self.entities
            .iter()
            .filter(|e| e.kind == EntityKind::Mineral)
            .min_by_key(|e| (e.pos.dist2(from), e.id))
            .map(|e| e.id)
    }

    /// Minerals currently committed in production queues, structures and units is not tracked here;
    /// this is the conservation ledger: initial + gathered - spent.
    pub fn ledger_balance(&self, player: PlayerId) -> i64 {
        let p = &self.players[player];
        p.initial_minerals + p.gathered_total - p.spent_total
    }

    /// Food of combat units alive or queued.
    pub fn food_army(&self, player: PlayerId) -> i64 {
        self.food_of(player, |k| k.is_combat())
    }

    pub fn food_workers(&self, player: PlayerId) -> i64 {
        self.food_of(player, |k| k == EntityKind::Worker)
    }

    fn food_of(&self, player: PlayerId, f: impl Fn(EntityKind) -> bool) -> i64 {
        self.owned(player)
            .map(|e| {
                let alive = if f(e.kind) { e.kind.stats().food } else { 0 };
                let queued: i64 = e.queue.iter().filter(|t| f(t.kind)).map(|t| t.kind.stats().food).sum();
                alive + queued
            })
            .sum()
    }

    pub fn in_training(&self, player: PlayerId, kind: EntityKind) -> usize {
        self.owned(player)
            .flat_map(|e| e.queue.iter())
            .filter(|t| t.kind == kind)
            .count()
    }

    pub fn under_construction(&self, player: PlayerId, kind: EntityKind) -> usize {
        self.owned(player)
            .filter(|e| e.kind == kind && !e.is_complete())
            .count()
    }

    fn recompute_food_cap(&mut self) {
        for p in 0..2 {
            let cap: i64 = self
                .owned(p)
                .filter(|e| e.is_complete())
                .map(|e| e.kind.food_provided())
                .sum();
            self.players[p].food_cap = cap.min(MAX_FOOD);
        }
    }

    /// Cells covered by any entity footprint (units, structures, minerals).
    pub fn occupancy(&self) -> Vec<bool> {
        let mut occ = vec![false; self.config.cells()];
        for e in &self.entities {
            for c in e.footprint() {
                if self.config.in_bounds(c) {
                    occ[self.config.cell_index(c)] = true;
                }
            }
        }
        occ
    }

    /// Cells units cannot walk through (structure and mineral footprints).
    fn blocked_cells(&self) -> Vec<bool> {
        let mut blocked = vec![false; self.config.cells()];
        for e in self.entities.iter().filter(|e| !e.kind.is_unit()) {
            for c in e.footprint() {
                if self.config.in_bounds(c) {
                    blocked[self.config.cell_index(c)] = true;
                }
            }
        }
        blocked
    }

    /// Whether `pos` lies inside the power aura of one of the player's completed supply structures or bases.
    pub fn powered(&self, player: PlayerId, pos: Pos) -> bool {
        let r = self.config.aura_radius;
        self.owned(player)
            .any(|e| e.kind.projects_power() && e.is_complete() && e.pos.chebyshev(pos) <= r)
    }

    /// Placement legality: footprint in bounds, clear of every entity footprint, and powered if required.
    pub fn can_place(&self, player: PlayerId, kind: EntityKind, pos: Pos) -> bool {
        if !kind.is_structure() {
            return false;
        }
        let r = kind.stats().footprint;
        let in_bounds = pos.x - r >= 0
            && pos.y - r >= 0
            && pos.x + r < self.config.width
            && pos.y + r < self.config.height;
        if !in_bounds {
            return false;
        }
        let clear = self.entities.iter().all(|e| {
            let er = e.kind.stats().footprint;
            e.pos.chebyshev(pos) > er + r
        });
        clear && (!kind.requires_power() || self.powered(player, pos))
    }

    /// Apply one decision for each player, then advance the simulation.
    ///
    /// Player 1 is driven by [`scripted_opponent`] when the game was built with
    /// [`new_game`] / [`GameState::new`].
    pub fn step(&mut self, agent_action: PrimitiveAction) -> Result<Outcome, EngineError> {
        if self.is_terminal() {
            return Err(EngineError::Terminal);
        }
        self.apply_action(0, agent_action);
        let opp = match &self.opponent {
            Some(cfg) => scripted_opponent(self, 1, cfg),
            None => PrimitiveAction::NOOP,
        };
        self.apply_action(1, opp);
        self.advance();
        Ok(self.outcome)
    }

    /// Apply explicit decisions for both players, then advance.
    pub fn step_both(&mut self, a0: PrimitiveAction, a1: PrimitiveAction) -> Result<Outcome, EngineError> {
        if self.is_terminal() {
            return Err(EngineError::Terminal);
        }
        self.apply_action(0, a0);
        self.apply_action(1, a1);
        self.advance();
        Ok(self.outcome)
    }

    fn advance(&mut self) {
        for _ in 0..self.config.ticks_per_decision {
            if self.tick >= self.max_ticks || self.is_terminal() {
                break;
            }
            self.tick_once();
        }
        if !self.is_terminal() && self.tick >= self.max_ticks {
            self.outcome = Outcome::Tie;
        }
        self.decisions += 1;
        self.update_vision();
    }

    /// Apply a primitive action for `player`. Returns whether it had any effect.
    pub fn apply_action(&mut self, player: PlayerId, action: PrimitiveAction) -> bool {
        match action {
            PrimitiveAction::Select(target) => {
                self.select(player, target);
                true
            }
            PrimitiveAction::Command(cmd) => self.command(player, cmd),
        }
    }

    fn select(&mut self, player: PlayerId, target: SelectTarget) {
        let ids: Vec<EntityId> = self
            .owned(player)
            .filter(|e| match target {
                SelectTarget::Entity(id) => e.id == id,
                SelectTarget::Kind(k) => e.kind == k,
                SelectTarget::Army => e.kind.is_combat(),
            })
            .map(|e| e.id)
            .collect();
        for e in self.entities.iter_mut().filter(|e| e.owner == Some(player)) {
            e.selected = false;
        }
        for &id in &ids {
            self.entity_mut(id).unwrap().selected = true;
        }
        self.players[player].selection = ids;
    }

    fn selected(&self, player: PlayerId) -> impl Iterator<Item = &Entity> + '_ {
        self.players[player]
            .selection
            .iter()
            .filter_map(move |&id| self.entity(id))
    }

    fn command(&mut self, player: PlayerId, cmd: Command) -> bool {
        match cmd {
            Command::NoOp => false,
            Command::BuildStructure(kind, pos) => {
                let has_worker = self.selected(player).any(|e| e.kind == EntityKind::Worker);
                let cost = kind.stats().cost;
                if !has_worker || self.players[player].minerals < cost || !self.can_place(player, kind, pos) {
                    return false;
                }
                let id = self.spawn_entity(Some(player), kind, pos);
                self.entity_mut(id).unwrap().construction_left = kind.stats().build_ticks;
                let ps = &mut self.players[player];
                ps.minerals -= cost;
                ps.spent_total += cost;
                ps.built_ever[kind.index()] += 1;
                true
            }
            Command::TrainUnit(kind) => self.train(player, kind),
            Command::AttackPos { pos, queued } => {
                let ids: Vec<EntityId> = self
                    .selected(player)
                    .filter(|e| e.kind.is_combat())
                    .map(|e| e.id)
                    .collect();
                let pos = self.clamp(pos);
                for &id in &ids {
                    let e = self.entity_mut(id).unwrap();
                    if !queued {
                        e.orders.clear();
                    }
                    if e.orders.last() != Some(&Order::AttackMove(pos)) && e.orders.len() < MAX_ORDERS {
                        e.orders.push(Order::AttackMove(pos));
                    }
                }
                !ids.is_empty()
            }
            Command::MovePos(pos) => {
                let pos = self.clamp(pos);
                let ids: Vec<(EntityId, EntityKind)> = self.selected(player).map(|e| (e.id, e.kind)).collect();
                let mut any = false;
                for (id, kind) in ids {
                    let e = self.entity_mut(id).unwrap();
                    if kind.is_unit() {
                        e.orders = vec![Order::Move(pos)];
                        any = true;
                    } else if matches!(kind, EntityKind::Base | EntityKind::Production) {
                        e.rally = Some(Rally::Point(pos));
                        any = true;
                    }
                }
                any
            }
            Command::Gather(mineral) => {
                if self.entity(mineral).map(|m| m.kind) != Some(EntityKind::Mineral) {
                    return false;
                }
                let ids: Vec<(EntityId, EntityKind)> = self.selected(player).map(|e| (e.id, e.kind)).collect();
                let mut any = false;
                for (id, kind) in ids {
                    let e = self.entity_mut(id).unwrap();
                    match kind {
                        EntityKind::Worker => {
                            // Retargeting keeps the trip phase (and any carried minerals).
                            match e.orders.first_mut() {
                                Some(Order::Gather { mineral: m, .. }) => {
                                    *m = mineral;
                                    e.orders.truncate(1);
                                }
                                _ => {
                                    e.orders = vec![Order::Gather {
                                        mineral,
                                        phase: GatherPhase::ToMineral,
                                    }]
                                }
                            }
                            any = true;
                        }
                        EntityKind::Base => {
                            e.rally = Some(Rally::Mineral(mineral));
                            any = true;
                        }
                        _ => {}
                    }
                }
                any
            }
        }
    }

    fn can_train(&self, player: PlayerId, structure: &Entity, kind: EntityKind) -> bool {
        structure.is_complete()
            && match (structure.kind, kind) {
                (EntityKind::Base, EntityKind::Worker) => true,
                (EntityKind::Production, EntityKind::Melee) => true,
                (EntityKind::Production, EntityKind::Ranged) => self
                    .owned(player)
                    .any(|e| e.kind == EntityKind::Tech && e.is_complete()),
                _ => false,
            }
    }

    fn train(&mut self, player: PlayerId, kind: EntityKind) -> bool {
        if !kind.is_unit() {
            return false;
        }
        let st = kind.stats();
        let ps = &self.players[player];
        if ps.minerals < st.cost || ps.food_used + st.food > ps.food_cap {
            return false;
        }
        let Some(id) = self
            .selected(player)
            .filter(|e| e.queue.len() < MAX_QUEUE && self.can_train(player, e, kind))
            .min_by_key(|e| (e.queue.len(), e.id))
            .map(|e| e.id)
        else {
            return false;
        };
        self.entity_mut(id).unwrap().queue.push(Training { kind, progress: 0 });
        let ps = &mut self.players[player];
        ps.minerals -= st.cost;
        ps.spent_total += st.cost;
        ps.food_used += st.food;
        ps.built_ever[kind.index()] += 1;
        true
    }

    fn clamp(&self, p: Pos) -> Pos {
        Pos::new(
            p.x.clamp(0, self.config.width - 1),
            p.y.clamp(0, self.config.height - 1),
        )
    }

    fn tick_once(&mut self) {
        self.tick += 1;
        let mut food_changed = false;
        let mut spawns: Vec<(PlayerId, EntityKind, EntityId)> = Vec::new();

        // Construction and production.
        for e in self.entities.iter_mut() {
            if e.construction_left > 0 {
                e.construction_left -= 1;
                if e.construction_left == 0 {
                    food_changed = true;
                }
                continue;
            }
            if let Some(front) = e.queue.first_mut() {
                let need = front.kind.stats().build_ticks;
                if front.progress < need {
                    front.progress += 1;
                }
                if front.progress >= need {
                    spawns.push((e.owner.unwrap(), front.kind, e.id));
                }
            }
        }
        if !spawns.is_empty() {
            let blocked = self.blocked_cells();
            for (player, kind, from) in spawns {
                let src = self.entity(from).unwrap();
                let rally = src.rally;
                let Some(cell) = self.free_adjacent(src, &blocked) else {
                    continue;
                };
                self.entity_mut(from).unwrap().queue.remove(0);
                let id = self.spawn_entity(Some(player), kind, cell);
                let order = match (kind, rally) {
                    (EntityKind::Worker, Some(Rally::Mineral(m))) if self.entity(m).is_some() => Some(Order::Gather {
                        mineral: m,
                        phase: GatherPhase::ToMineral,
                    }),
                    (_, Some(Rally::Point(p))) => Some(Order::Move(p)),
                    _ => None,
                };
                if let Some(o) = order {
                    self.entity_mut(id).unwrap().orders.push(o);
                }
            }
        }
        if food_changed {
            self.recompute_food_cap();
        }

        self.update_units();
        self.account_idle();
        self.check_outcome();
    }

    fn free_adjacent(&self, src: &Entity, blocked: &[bool]) -> Option<Pos> {
        let r = src.kind.stats().footprint + 1;
        let c = src.pos;
        let mut ring = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs().max(dy.abs()) == r {
                    ring.push(Pos::new(c.x + dx, c.y + dy));
                }
            }
        }
        // Prefer cells facing the map centre.
        let centre = Pos::new(self.config.width / 2, self.config.height / 2);
        ring.sort_by_key(|p| (p.dist2(centre), p.y, p.x));
        ring.into_iter()
            .find(|&p| self.config.in_bounds(p) && !blocked[self.config.cell_index(p)])
    }

    fn update_units(&mut self) {
        let blocked = self.blocked_cells();
        // Snapshot of attackable entities: (id, owner, pos, footprint, combat).
        let targets: Vec<(EntityId, PlayerId, Pos, i32, bool)> = self
            .entities
            .iter()
            .filter_map(|e| e.owner.map(|o| (e.id, o, e.pos, e.kind.stats().footprint, e.kind.is_combat())))
            .collect();
        let mut damage: Vec<(EntityId, i32, PlayerId)> = Vec::new();
        let mut mined: Vec<(EntityId, i64)> = Vec::new();
        let mut deposits: Vec<(PlayerId, i64)> = Vec::new();

        let n = self.entities.len();
        for i in 0..n {
            let kind = self.entities[i].kind;
            if !kind.is_unit() {
                continue;
            }
            let owner = self.entities[i].owner.unwrap();
            let st = kind.stats();
            {
                let e = &mut self.entities[i];
                e.cooldown = e.cooldown.saturating_sub(1);
            }
            let order = self.entities[i].orders.first().copied();
            let pos = self.entities[i].pos;

            if kind.is_combat() {
                let engage = matches!(order, None | Some(Order::AttackMove(_)));
                if engage {
                    if let Some((tid, tpos, tfp)) = acquire(&targets, owner, pos) {
                        let dist = (pos.chebyshev(tpos) - tfp).max(0);
                        if dist <= st.range {
                            if self.entities[i].cooldown == 0 {
                                damage.push((tid, st.damage, owner));
                                self.entities[i].cooldown = st.cooldown;
                            }
                        } else {
                            self.move_toward(i, tpos, tfp, &blocked);
                        }
                        continue;
                    }
                }
                match order {
                    Some(Order::AttackMove(p)) | Some(Order::Move(p)) => {
                        if pos.chebyshev(p) <= 1 {
                            self.entities[i].orders.remove(0);
                        } else {
                            self.move_toward(i, p, 0, &blocked);
                        }
                    }
                    _ => {}
                }
                continue;
            }

            // Workers.
            match order {
                Some(Order::Move(p)) | Some(Order::AttackMove(p)) => {
                    if pos.chebyshev(p) <= 1 {
                        self.entities[i].orders.remove(0);
                    } else {
                        self.move_toward(i, p, 0, &blocked);
                    }
                }
                Some(Order::Gather { mineral, phase }) => {
                    let next = match phase {
                        GatherPhase::ToMineral => match self.mineral_target(mineral, pos) {
                            None => None,
                            Some((mid, mpos)) => {
                                if pos.chebyshev(mpos) <= 1 {
                                    Some(Order::Gather {
                                        mineral: mid,
                                        phase: GatherPhase::Mining(MINING_TICKS),
                                    })
                                } else {
                                    self.move_toward(i, mpos, 0, &blocked);
                                    Some(Order::Gather {
                                        mineral: mid,
                                        phase: GatherPhase::ToMineral,
                                    })
                                }
                            }
                        },
                        GatherPhase::Mining(left) => {
                            if left > 1 {
                                Some(Order::Gather {
                                    mineral,
                                    phase: GatherPhase::Mining(left - 1),
                                })
                            } else {
                                let have = self.entity(mineral).map(|m| m.minerals_left).unwrap_or(0)
                                    - mined.iter().filter(|(m, _)| *m == mineral).map(|(_, a)| a).sum::<i64>();
                                let take = have.min(TRIP_YIELD).max(0);
                                if take > 0 {
                                    mined.push((mineral, take));
                                    self.entities[i].carrying = take;
                                    Some(Order::Gather {
                                        mineral,
                                        phase: GatherPhase::Returning,
                                    })
                                } else {
                                    Some(Order::Gather {
                                        mineral,
                                        phase: GatherPhase::ToMineral,
                                    })
                                }
                            }
                        }
                        GatherPhase::Returning => {
                            let base = self
                                .owned(owner)
                                .filter(|e| e.kind == EntityKind::Base && e.is_complete())
                                .min_by_key(|e| (e.pos.dist2(pos), e.id))
                                .map(|e| (e.pos, e.kind.stats().footprint));
                            if let Some((bpos, bfp)) = base {
                                if (pos.chebyshev(bpos) - bfp).max(0) <= 1 {
                                    let carried = std::mem::take(&mut self.entities[i].carrying);
                                    deposits.push((owner, carried));
                                    Some(Order::Gather {
                                        mineral,
                                        phase: GatherPhase::ToMineral,
                                    })
                                } else {
                                    self.move_toward(i, bpos, bfp, &blocked);
                                    Some(Order::Gather {
                                        mineral,
                                        phase: GatherPhase::Returning,
                                    })
                                }
                            } else {
                                Some(Order::Gather {
                                    mineral,
                                    phase: GatherPhase::Returning,
                                })
                            }
                        }
                    };
                    let e = &mut self.entities[i];
                    match next {
                        Some(o) => e.orders[0] = o,
                        None => {
                            e.orders.remove(0);
                        }
                    }
                }
                None => {}
            }
        }

        for (mid, amount) in mined {
            if let Some(m) = self.entity_mut(mid) {
                m.minerals_left -= amount;
            }
        }
        for (player, amount) in deposits {
            let credited = self.players[player].income_multiplier.apply(amount);
            let ps = &mut self.players[player];
            ps.minerals += credited;
            ps.gathered_total += credited;
        }
        for (tid, dmg, _) in &damage {
            if let Some(t) = self.entity_mut(*tid) {
                t.hp = (t.hp - dmg).max(0);
            }
        }
        self.remove_dead();
    }

    /// Current mineral for a gather order, retargeting to a nearby patch when exhausted.
    fn mineral_target(&self, mineral: EntityId, from: Pos) -> Option<(EntityId, Pos)> {
        if let Some(m) = self.entity(mineral) {
            return Some((m.id, m.pos));
        }
        self.entities
            .iter()
            .filter(|e| e.kind == EntityKind::Mineral && e.pos.chebyshev(from) <= 8)
            .min_by_key(|e| (e.pos.dist2(from), e.id))
            .map(|e| (e.id, e.pos))
    }

    fn move_toward(&mut self, i: usize, target: Pos, target_fp: i32, blocked: &[bool]) {
        let e = &mut self.entities[i];
        if e.move_wait > 0 {
            e.move_wait -= 1;
            return;
        }
        let pos = e.pos;
        if (pos.chebyshev(target) - target_fp).max(0) == 0 {
            return;
        }
        let sx = (target.x - pos.x).signum();
        let sy = (target.y - pos.y).signum();
        let candidates = [(sx, sy), (sx, 0), (0, sy)];
        for (dx, dy) in candidates {
            if dx == 0 && dy == 0 {
                continue;
            }
            let np = Pos::new(pos.x + dx, pos.y + dy);
            if self.config.in_bounds(np) && !blocked[self.config.cell_index(np)] {
                let e = &mut self.entities[i];
                e.pos = np;
                e.move_wait = e.kind.stats().move_period.saturating_sub(1);
                return;
            }
        }
    }

    fn remove_dead(&mut self) {
        let mut food_changed = false;
        let mut dead_ids = Vec::new();
        for i in 0..self.entities.len() {
            let e = &self.entities[i];
            let dead = if e.kind == EntityKind::Mineral {
                e.minerals_left <= 0
            } else {
                e.hp == 0
            };
            if !dead {
                continue;
            }
            dead_ids.push(e.id);
            let Some(owner) = e.owner else { continue };
            let killer = 1 - owner;
            let value = e.kind.stats().cost;
            let queued_food: i64 = e.queue.iter().map(|t| t.kind.stats().food).sum();
            let unit_food = if e.kind.is_unit() { e.kind.stats().food } else { 0 };
            let is_unit = e.kind.is_unit();
            if e.kind.is_structure() {
                food_changed = true;
            }
            let k = &mut self.players[killer].score;
            if is_unit {
                k.kill_unit_value += value;
            } else {
                k.kill_struct_value += value;
            }
            let o = &mut self.players[owner];
            if is_unit {
                o.score.lost_unit_value += value;
            } else {
                o.score.lost_struct_value += value;
            }
            o.food_used -= unit_food + queued_food;
        }
        if dead_ids.is_empty() {
            return;
        }
        self.entities.retain(|e| !dead_ids.contains(&e.id));
        for p in &mut self.players {
            p.selection.retain(|id| !dead_ids.contains(id));
        }
        if food_changed {
            self.recompute_food_cap();
        }
    }

    fn account_idle(&mut self) {
        for p in 0..2 {
            let mut workers = 0;
            let mut production = 0;
            for e in self.owned(p) {
                match e.kind {
                    EntityKind::Worker if e.is_idle() => workers += 1,
                    EntityKind::Base | EntityKind::Production if e.is_complete() && e.queue.is_empty() => {
                        production += 1
                    }
                    _ => {}
                }
            }
            self.players[p].score.worker_idle_ticks += workers;
            self.players[p].score.production_idle_ticks += production;
        }
    }

    fn check_outcome(&mut self) {
        let alive = [self.structures(0).count() > 0, self.structures(1).count() > 0];
        self.outcome = match alive {
            [true, true] => {
                if self.tick >= self.max_ticks {
                    Outcome::Tie
                } else {
                    Outcome::Ongoing
                }
            }
            [true, false] => Outcome::Win,
            [false, true] => Outcome::Loss,
            [false, false] => Outcome::Tie,
        };
    }

    fn update_vision(&mut self) {
        let cfg = self.config.clone();
        for p in 0..2 {
            let mut vis = vec![false; cfg.cells()];
            for e in self.entities.iter().filter(|e| e.owner == Some(p)) {
                let r = e.kind.stats().sight + e.kind.stats().footprint;
                for y in (e.pos.y - r).max(0)..=(e.pos.y + r).min(cfg.height - 1) {
                    for x in (e.pos.x - r).max(0)..=(e.pos.x + r).min(cfg.width - 1) {
                        vis[cfg.cell_index(Pos::new(x, y))] = true;
                    }
                }
            }
            let ps = &mut self.players[p];
            for (s, v) in ps.scouted.iter_mut().zip(&vis) {
                *s |= *v;
            }
            ps.visible = vis;
        }
    }

    /// Whether `player` can currently see cell `p` (always true with the vision cheat).
    pub fn sees(&self, player: PlayerId, p: Pos) -> bool {
        let ps = &self.players[player];
        ps.vision_cheat || (self.config.in_bounds(p) && ps.visible[self.config.cell_index(p)])
    }

    pub fn has_scouted(&self, player: PlayerId, p: Pos) -> bool {
        let ps = &self.players[player];
        ps.vision_cheat || (self.config.in_bounds(p) && ps.scouted[self.config.cell_index(p)])
    }

    /// Deterministic per-decision random stream derived from the game seed.
    pub fn decision_rng(&self, salt: u64) -> ChaCha8Rng {
        let mix = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((self.tick as u64) << 20)
            .wrapping_add(salt.wrapping_mul(0xD1B5_4A32_D192_ED03));
        ChaCha8Rng::seed_from_u64(mix)
    }

    /// Per-kind counts of existing entities (structures under construction included).
    pub fn counts(&self, player: PlayerId) -> [usize; 8] {
        let mut c = [0; 8];
        for e in self.owned(player) {
            c[e.kind.index()] += 1;
        }
        c
    }

    pub fn minutes(&self) -> f64 {
        self.tick as f64 / TICKS_PER_MINUTE as f64
    }
}

/// Nearest enemy within acquire range: combat units first, then any other enemy entity.
/// Ties resolve to the lowest entity id.
fn acquire(targets: &[(EntityId, PlayerId, Pos, i32, bool)], owner: PlayerId, pos: Pos) -> Option<(EntityId, Pos, i32)> {
    let mut best: Option<(bool, i32, EntityId, Pos, i32)> = None;
    for &(id, o, p, fp, combat) in targets {
        if o == owner {
            continue;
        }
        let d = (pos.chebyshev(p) - fp).max(0);
        if d > ACQUIRE_RANGE {
            continue;
        }
        let key = (!combat, d, id);
        if best.map_or(true, |b| key < (b.0, b.1, b.2)) {
            best = Some((!combat, d, id, p, fp));
        }
    }
    best.map(|b| (b.2, b.3, b.4))
}
