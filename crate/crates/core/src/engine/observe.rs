//! Feature extraction.
//!
//! Scalar layout (index: meaning, normalizer):
//!
//! | slots  | content                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0      | game loop, `tick / max_ticks`                                  |
//! | 1      | minerals / 500                                                 |
//! | 2..=5  | food cap, food used, food army, food workers (all / 100)       |
//! | 6..=12 | own counts per ownable kind (worker..tech) / 16                |
//! | 13..=15| in training: worker, melee, ranged / 5                         |
//! | 16..=19| under construction: base, supply, production, tech / 4        |
//! | 20..=26| visible enemy counts per ownable kind / 16                     |
//! | 27     | opponent difficulty / 10                                       |
//! | 28, 29 | idle workers / 8, idle production structures / 4               |
//! | 30..=32| kill unit value, kill structure value, lost unit value / 1000  |
//! | 33     | mean army hp fraction                                          |
//! | 34     | army fraction holding an attack order                          |
//! | 35     | visible enemy combat units within 8 of own base / 8            |
//! | 36, 37 | own base x, y (normalized to map size)                         |
//! | 38, 39 | army centroid x, y (normalized; own base when no army)         |
//! | 40     | minerals left at own site / 9000                               |
//! | 41     | constant 1                                                     |
//!
//! The controller sees the global subset [`CONTROLLER_SLOTS`]. All features are
//! counts or normalized coordinates, so the layout does not depend on map size.

use super::{EntityKind, GameState, PlayerId, Pos};

pub const SCALAR_DIM: usize = 42;

/// Global slots used by the top-level controller (14 of 42).
pub const CONTROLLER_SLOTS: [usize; 14] = [0, 1, 2, 3, 4, 5, 7, 8, 21, 22, 27, 30, 31, 35];

const OWN_COUNT: usize = 6;
const IN_TRAINING: usize = 13;
const UNDER_CONSTRUCTION: usize = 16;
const ENEMY_COUNT: usize = 20;

pub fn scalar_slot_names() -> Vec<String> {
    let mut names = vec![
        "game_loop".to_string(),
        "minerals".into(),
        "food_cap".into(),
        "food_used".into(),
        "food_army".into(),
        "food_workers".into(),
    ];
    names.extend(EntityKind::OWNABLE.iter().map(|k| format!("count_{k}")));
    names.extend(["training_worker", "training_melee", "training_ranged"].map(String::from));
    names.extend(["building_base", "building_supply", "building_production", "building_tech"].map(String::from));
    names.extend(EntityKind::OWNABLE.iter().map(|k| format!("enemy_{k}")));
    names.extend(
        [
            "difficulty",
            "idle_workers",
            "idle_production",
            "kill_unit",
            "kill_struct",
            "lost_unit",
            "army_hp",
            "army_attacking",
            "enemy_near_base",
            "base_x",
            "base_y",
            "army_x",
            "army_y",
            "site_minerals",
            "bias",
        ]
        .map(String::from),
    );
    names
}

/// Fixed-length scalar feature vector for `player`.
pub fn observe_scalar(state: &GameState, player: PlayerId) -> Vec<f64> {
    let mut f = vec![0.0; SCALAR_DIM];
    let ps = &state.players[player];
    let enemy = 1 - player;
    f[0] = if state.max_ticks == 0 {
        1.0
    } else {
        state.tick as f64 / state.max_ticks as f64
    };
    f[1] = ps.minerals as f64 / 500.0;
    f[2] = ps.food_cap as f64 / 100.0;
    f[3] = ps.food_used as f64 / 100.0;
    f[4] = state.food_army(player) as f64 / 100.0;
    f[5] = state.food_workers(player) as f64 / 100.0;
    // Completed entities only; construction has its own slots.
    let mut counts = [0usize; 8];
    for e in state.owned(player).filter(|e| e.is_complete()) {
        counts[e.kind.index()] += 1;
    }
    for (i, k) in EntityKind::OWNABLE.iter().enumerate() {
        f[OWN_COUNT + i] = counts[k.index()] as f64 / 16.0;
    }
    for (i, k) in [EntityKind::Worker, EntityKind::Melee, EntityKind::Ranged].iter().enumerate() {
        f[IN_TRAINING + i] = state.in_training(player, *k) as f64 / 5.0;
    }
    for (i, k) in EntityKind::STRUCTURES.iter().enumerate() {
        f[UNDER_CONSTRUCTION + i] = state.under_construction(player, *k) as f64 / 4.0;
    }
    let mut enemy_counts = [0usize; 8];
    for e in state.owned(enemy) {
        if state.sees(player, e.pos) {
            enemy_counts[e.kind.index()] += 1;
        }
    }
    for (i, k) in EntityKind::OWNABLE.iter().enumerate() {
        f[ENEMY_COUNT + i] = enemy_counts[k.index()] as f64 / 16.0;
    }
    f[27] = state.players[enemy].difficulty.unwrap_or(0) as f64 / 10.0;

    let idle_workers = state
        .owned(player)
        .filter(|e| e.kind == EntityKind::Worker && e.is_idle())
        .count();
    let idle_prod = state
        .owned(player)
        .filter(|e| matches!(e.kind, EntityKind::Base | EntityKind::Production) && e.is_complete() && e.queue.is_empty())
        .count();
    f[28] = idle_workers as f64 / 8.0;
    f[29] = idle_prod as f64 / 4.0;
    f[30] = ps.score.kill_unit_value as f64 / 1000.0;
    f[31] = ps.score.kill_struct_value as f64 / 1000.0;
    f[32] = ps.score.lost_unit_value as f64 / 1000.0;

    let home = state.home(player);
    let (mut n, mut hp, mut attacking, mut sx, mut sy) = (0usize, 0.0, 0usize, 0i64, 0i64);
    for e in state.army(player) {
        n += 1;
        hp += e.hp as f64 / e.max_hp as f64;
        if e.orders.iter().any(|o| matches!(o, super::Order::AttackMove(_))) {
            attacking += 1;
        }
        sx += e.pos.x as i64;
        sy += e.pos.y as i64;
    }
    let centroid = if n > 0 {
        Pos::new((sx / n as i64) as i32, (sy / n as i64) as i32)
    } else {
        home
    };
    if n > 0 {
        f[33] = hp / n as f64;
        f[34] = attacking as f64 / n as f64;
    }
    let near_base = state
        .army(enemy)
        .filter(|e| e.pos.chebyshev(home) <= 8 && state.sees(player, e.pos))
        .count();
    f[35] = near_base as f64 / 8.0;
    let (w, h) = ((state.config.width - 1) as f64, (state.config.height - 1) as f64);
    f[36] = home.x as f64 / w;
    f[37] = home.y as f64 / h;
    f[38] = centroid.x as f64 / w;
    f[39] = centroid.y as f64 / h;
    let site = state.players[player].spawn;
    let left: i64 = state
        .entities
        .iter()
        .filter(|e| e.kind == EntityKind::Mineral && e.pos.chebyshev(site) <= 4)
        .map(|e| e.minerals_left)
        .sum();
    f[40] = left as f64 / 9000.0;
    f[41] = 1.0;
    f
}

pub const SPATIAL_CHANNELS: usize = 5;

/// Channel-major coarse grid: `data[(c * rows + row) * cols + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialObs {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SpatialObs {
    pub const OWN: usize = 0;
    pub const ENEMY: usize = 1;
    pub const RESOURCES: usize = 2;
    pub const BUILDABLE: usize = 3;
    pub const SELECTED: usize = 4;

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.rows + row) * self.cols + col]
    }

    fn add(&mut self, channel: usize, row: usize, col: usize, v: f64) {
        self.data[(channel * self.rows + row) * self.cols + col] += v;
    }
}

/// Coarse spatial channels: own density, enemy density (visibility-masked unless the
/// player cheats), resources, buildable fraction and selection. Values lie in `[0, 1]`.
pub fn observe_spatial(state: &GameState, player: PlayerId) -> SpatialObs {
    let cell = state.config.coarse_cell;
    let rows = (state.config.height / cell) as usize;
    let cols = (state.config.width / cell) as usize;
    let area = (cell * cell) as f64;
    let mut obs = SpatialObs {
        channels: SPATIAL_CHANNELS,
        rows,
        cols,
        data: vec![0.0; SPATIAL_CHANNELS * rows * cols],
    };
    let coarse = |p: Pos| ((p.y / cell) as usize, (p.x / cell) as usize);
    let occ = state.occupancy();
    for e in &state.entities {
        let (r, c) = coarse(e.pos);
        match e.owner {
            Some(o) if o == player => {
                obs.add(SpatialObs::OWN, r, c, 1.0 / 4.0);
                if e.selected {
                    obs.data[(SpatialObs::SELECTED * rows + r) * cols + c] = 1.0;
                }
            }
            Some(_) => {
                if state.sees(player, e.pos) {
                    obs.add(SpatialObs::ENEMY, r, c, 1.0 / 4.0);
                }
            }
            None => obs.add(SpatialObs::RESOURCES, r, c, 1.0 / 6.0),
        }
    }
    for y in 0..state.config.height {
        for x in 0..state.config.width {
            let p = Pos::new(x, y);
            if !occ[state.config.cell_index(p)] {
                let (r, c) = coarse(p);
                obs.add(SpatialObs::BUILDABLE, r, c, 1.0 / area);
            }
        }
    }
    for v in obs.data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    obs
}
