use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EngineError;

pub type EntityId = u32;
pub type PlayerId = usize;

/// Integer grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn dist2(self, other: Pos) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    Worker,
    Melee,
    Ranged,
    Base,
    Supply,
    Production,
    Tech,
    Mineral,
}

/// Static per-kind unit statistics.
#[derive(Clone, Copy, Debug)]
pub struct KindStats {
    pub cost: i64,
    pub food: i64,
    pub max_hp: i32,
    pub build_ticks: u32,
    pub damage: i32,
    pub range: i32,
    pub cooldown: u32,
    pub move_period: u32,
    pub sight: i32,
    pub footprint: i32,
}

impl EntityKind {
    pub const ALL: [EntityKind; 8] = [
        EntityKind::Worker,
        EntityKind::Melee,
        EntityKind::Ranged,
        EntityKind::Base,
        EntityKind::Supply,
        EntityKind::Production,
        EntityKind::Tech,
        EntityKind::Mineral,
    ];

    /// Kinds a player can own (everything except mineral patches).
    pub const OWNABLE: [EntityKind; 7] = [
        EntityKind::Worker,
        EntityKind::Melee,
        EntityKind::Ranged,
        EntityKind::Base,
        EntityKind::Supply,
        EntityKind::Production,
        EntityKind::Tech,
    ];

    pub const STRUCTURES: [EntityKind; 4] = [
        EntityKind::Base,
        EntityKind::Supply,
        EntityKind::Production,
        EntityKind::Tech,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_structure(self) -> bool {
        matches!(
            self,
            EntityKind::Base | EntityKind::Supply | EntityKind::Production | EntityKind::Tech
        )
    }

    pub fn is_unit(self) -> bool {
        matches!(self, EntityKind::Worker | EntityKind::Melee | EntityKind::Ranged)
    }

    pub fn is_combat(self) -> bool {
        matches!(self, EntityKind::Melee | EntityKind::Ranged)
    }

    /// Structures that need to sit inside a supply/base aura.
    pub fn requires_power(self) -> bool {
        matches!(self, EntityKind::Production | EntityKind::Tech)
    }

    pub fn projects_power(self) -> bool {
        matches!(self, EntityKind::Supply | EntityKind::Base)
    }

    pub fn food_provided(self) -> i64 {
        match self {
            EntityKind::Base => 10,
            EntityKind::Supply => 8,
            _ => 0,
        }
    }

    pub fn stats(self) -> KindStats {
        use EntityKind::*;
        let s = |cost, food, max_hp, build_ticks, footprint| KindStats {
            cost,
            food,
            max_hp,
            build_ticks,
            damage: 0,
            range: 0,
            cooldown: 0,
            move_period: 0,
            sight: 6,
            footprint,
        };
        match self {
            Worker => KindStats {
                move_period: 3,
                sight: 5,
                ..s(50, 1, 40, 96, 0)
            },
            Melee => KindStats {
                damage: 10,
                range: 1,
                cooldown: 8,
                move_period: 3,
                sight: 5,
                ..s(100, 2, 100, 160, 0)
            },
            Ranged => KindStats {
                damage: 12,
                range: 4,
                cooldown: 10,
                move_period: 3,
                sight: 6,
                ..s(125, 2, 80, 200, 0)
            },
            Base => s(400, 0, 1200, 800, 1),
            Supply => s(100, 0, 300, 160, 0),
            Production => s(150, 0, 600, 320, 1),
            Tech => s(150, 0, 500, 320, 1),
            Mineral => KindStats {
                sight: 0,
                ..s(0, 0, 1, 0, 0)
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Worker => "worker",
            EntityKind::Melee => "melee",
            EntityKind::Ranged => "ranged",
            EntityKind::Base => "base",
            EntityKind::Supply => "supply",
            EntityKind::Production => "production",
            EntityKind::Tech => "tech",
            EntityKind::Mineral => "mineral",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown entity kind `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    pub id: EntityId,
    /// `None` for neutral mineral patches.
    pub owner: Option<PlayerId>,
    pub kind: EntityKind,
    pub pos: Pos,
    pub hp: i32,
    pub max_hp: i32,
    pub selected: bool,
    /// Ticks of construction remaining (structures only); 0 once complete.
    pub construction_left: u32,
    /// Remaining minerals for mineral patches.
    pub minerals_left: i64,
    pub orders: Vec<Order>,
    pub cooldown: u32,
    pub move_wait: u32,
    pub carrying: i64,
    /// Production queue (base / production structures).
    pub queue: Vec<Training>,
    pub rally: Option<Rally>,
}

impl Entity {
    pub fn is_complete(&self) -> bool {
        self.construction_left == 0
    }

    /// Cells occupied by this entity's footprint.
    pub fn footprint(&self) -> impl Iterator<Item = Pos> + '_ {
        let r = self.kind.stats().footprint;
        let c = self.pos;
        (-r..=r).flat_map(move |dy| (-r..=r).map(move |dx| Pos::new(c.x + dx, c.y + dy)))
    }

    /// Chebyshev distance from `p` to the nearest footprint cell.
    pub fn distance_to(&self, p: Pos) -> i32 {
        (self.pos.chebyshev(p) - self.kind.stats().footprint).max(0)
    }

    pub fn is_idle(&self) -> bool {
        self.orders.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Training {
    pub kind: EntityKind,
    pub progress: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rally {
    Point(Pos),
    Mineral(EntityId),
}

/// Per-unit standing orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Move(Pos),
    AttackMove(Pos),
    Gather { mineral: EntityId, phase: GatherPhase },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GatherPhase {
    ToMineral,
    Mining(u32),
    Returning,
}

/// Selection target for a select primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SelectTarget {
    Entity(EntityId),
    Kind(EntityKind),
    Army,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    BuildStructure(EntityKind, Pos),
    TrainUnit(EntityKind),
    AttackPos { pos: Pos, queued: bool },
    MovePos(Pos),
    Gather(EntityId),
    NoOp,
}

/// One decision's worth of agent input: either a selection or a command applied to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimitiveAction {
    Select(SelectTarget),
    Command(Command),
}

impl PrimitiveAction {
    pub const NOOP: PrimitiveAction = PrimitiveAction::Command(Command::NoOp);

    pub fn is_select(&self) -> bool {
        matches!(self, PrimitiveAction::Select(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Win,
    Loss,
    Tie,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Ongoing
    }

    /// Ternary outcome value: +1 win, 0 tie, -1 loss (0 while ongoing).
    pub fn value(self) -> f64 {
        match self {
            Outcome::Win => 1.0,
            Outcome::Loss => -1.0,
            Outcome::Tie | Outcome::Ongoing => 0.0,
        }
    }

    /// The same result seen from the other player.
    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Win => Outcome::Loss,
            Outcome::Loss => Outcome::Win,
            o => o,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Ongoing => "ongoing",
            Outcome::Win => "win",
            Outcome::Loss => "loss",
            Outcome::Tie => "tie",
        }
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ongoing" => Ok(Outcome::Ongoing),
            "win" => Ok(Outcome::Win),
            "loss" => Ok(Outcome::Loss),
            "tie" => Ok(Outcome::Tie),
            _ => Err(format!("unknown outcome `{s}`")),
        }
    }
}

/// Rational multiplier applied to mined minerals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn apply(self, amount: i64) -> i64 {
        amount * self.num / self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Parameters of a scripted opponent. Levels 8-10 cheat with income and vision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyConfig {
    pub level: u8,
    /// Earliest tick at which the first attack wave may leave.
    pub attack_tick: u32,
    /// Army size that triggers an attack wave.
    pub army_target: u32,
    pub worker_target: u32,
    pub production_target: u32,
    /// Fraction of army production that is ranged (needs tech).
    pub ranged_share: f64,
    pub rebuild: bool,
    pub income_multiplier: Ratio,
    pub vision_cheat: bool,
}

impl DifficultyConfig {
    pub const MIN_LEVEL: u8 = 1;
    pub const MAX_LEVEL: u8 = 10;

    pub fn level(level: u8) -> Result<Self, EngineError> {
        // (attack_tick, army_target, workers, productions, ranged share, rebuild, income, vision)
        let (attack_tick, army_target, worker_target, production_target, ranged_share, rebuild, inc, vision) =
            match level {
                1 => (2600, 4, 6, 1, 0.0, false, (1, 1), false),
                2 => (2200, 5, 7, 1, 0.0, false, (1, 1), false),
                3 => (2000, 6, 8, 1, 0.0, true, (1, 1), false),
                4 => (1800, 7, 9, 2, 0.0, true, (1, 1), false),
                5 => (1600, 8, 10, 2, 0.25, true, (1, 1), false),
                6 => (1500, 9, 11, 2, 0.25, true, (1, 1), false),
                7 => (1400, 10, 12, 3, 0.33, true, (1, 1), false),
                8 => (1300, 11, 12, 3, 0.33, true, (5, 4), true),
                9 => (1200, 12, 13, 3, 0.33, true, (3, 2), true),
                10 => (1100, 13, 14, 3, 0.33, true, (7, 4), true),
                _ => return Err(EngineError::InvalidDifficulty(level)),
            };
        Ok(DifficultyConfig {
            level,
            attack_tick,
            army_target,
            worker_target,
            production_target,
            ranged_share,
            rebuild,
            income_multiplier: Ratio {
                num: inc.0,
                den: inc.1,
            },
            vision_cheat: vision,
        })
    }

    /// Configuration for a side that does not cheat (the learning agent or the expert).
    pub fn fair(level: u8) -> Result<Self, EngineError> {
        let mut cfg = Self::level(level)?;
        cfg.income_multiplier = Ratio::ONE;
        cfg.vision_cheat = false;
        Ok(cfg)
    }

    pub fn all() -> Vec<DifficultyConfig> {
        (Self::MIN_LEVEL..=Self::MAX_LEVEL)
            .map(|l| Self::level(l).expect("valid level"))
            .collect()
    }
}
