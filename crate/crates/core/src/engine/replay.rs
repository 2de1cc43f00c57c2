//! Line-delimited replay logs.
//!
//! ```text
//! # replay	version=1	seed=7	difficulty=1	map=32x32	max_ticks=3200	player=0
//! 0	0	select	entity	9	worker
//! 8	0	build	supply	6	9
//! 16	0	gather	3
//! 24	0	select	kind	production
//! 32	0	train	melee
//! 40	0	attack	27	27	now
//! 48	0	select	army
//! 56	0	move	12	12
//! 1840	0	end	win	worker=12	melee=7	ranged=0	base=1	supply=3	production=2	tech=0
//! ```
//!
//! Records are `tick<TAB>player<TAB>action_type<TAB>args...`. Ticks are the
//! simulator tick at which the decision was issued. No-op decisions are not
//! logged. The final `end` record carries the outcome and the logging player's
//! end-state entity counts.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use super::{
    Command, DifficultyConfig, EngineConfig, EngineError, EntityKind, GameState, Outcome, PlayerId, Pos,
    PrimitiveAction, ScriptedExpert, SelectTarget,
};

pub const REPLAY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
#[error("{file}:{line}: {msg}")]
pub struct ReplayParseError {
    pub file: String,
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayHeader {
    pub version: u32,
    pub seed: u64,
    pub difficulty: u8,
    pub width: i32,
    pub height: i32,
    pub max_ticks: u32,
    pub player: PlayerId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayRecord {
    Action {
        tick: u32,
        player: PlayerId,
        action: PrimitiveAction,
        /// Kind of the selected entity for single-entity selections.
        entity_kind: Option<EntityKind>,
    },
    End {
        tick: u32,
        player: PlayerId,
        outcome: Outcome,
        counts: Vec<(EntityKind, usize)>,
    },
}

impl ReplayRecord {
    pub fn tick(&self) -> u32 {
        match self {
            ReplayRecord::Action { tick, .. } | ReplayRecord::End { tick, .. } => *tick,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayLog {
    pub header: ReplayHeader,
    pub records: Vec<ReplayRecord>,
}

impl ReplayLog {
    pub fn actions(&self) -> impl Iterator<Item = &ReplayRecord> {
        self.records.iter().filter(|r| matches!(r, ReplayRecord::Action { .. }))
    }

    pub fn end(&self) -> Option<(Outcome, &[(EntityKind, usize)])> {
        self.records.iter().rev().find_map(|r| match r {
            ReplayRecord::End { outcome, counts, .. } => Some((*outcome, counts.as_slice())),
            _ => None,
        })
    }

    /// Parse a log; `file` is used only for error messages.
    pub fn parse(file: &str, text: &str) -> Result<ReplayLog, ReplayParseError> {
        let err = |line: usize, msg: String| ReplayParseError {
            file: file.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let header = parse_header(first).map_err(|m| err(1, m))?;
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_record(line).map_err(|m| err(i + 1, m))?);
        }
        Ok(ReplayLog { header, records })
    }
}

fn kv<'a>(field: &'a str, key: &str) -> Result<&'a str, String> {
    field
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| format!("expected `{key}=...`, found `{field}`"))
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("invalid number `{s}`"))
}

fn parse_header(line: &str) -> Result<ReplayHeader, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 7 || f[0] != "# replay" {
        return Err("malformed header".into());
    }
    let version: u32 = num(kv(f[1], "version")?)?;
    if version != REPLAY_FORMAT_VERSION {
        return Err(format!("unsupported replay version {version}"));
    }
    let (w, h) = kv(f[4], "map")?
        .split_once('x')
        .ok_or_else(|| "map must be WxH".to_string())?;
    Ok(ReplayHeader {
        version,
        seed: num(kv(f[2], "seed")?)?,
        difficulty: num(kv(f[3], "difficulty")?)?,
        width: num(w)?,
        height: num(h)?,
        max_ticks: num(kv(f[5], "max_ticks")?)?,
        player: num(kv(f[6], "player")?)?,
    })
}

fn parse_record(line: &str) -> Result<ReplayRecord, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() < 3 {
        return Err("expected tick, player and action type".into());
    }
    let tick: u32 = num(f[0])?;
    let player: PlayerId = num(f[1])?;
    if player > 1 {
        return Err(format!("invalid player {player}"));
    }
    let args = &f[3..];
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("`{}` expects {n} arguments, found {}", f[2], args.len()))
        }
    };
    let kind = |s: &str| EntityKind::from_str(s);
    let pos = |x: &str, y: &str| -> Result<Pos, String> { Ok(Pos::new(num(x)?, num(y)?)) };
    let mut entity_kind = None;
    let action = match f[2] {
        "select" => match args.first().copied() {
            Some("army") => {
                want(1)?;
                PrimitiveAction::Select(SelectTarget::Army)
            }
            Some("kind") => {
                want(2)?;
                PrimitiveAction::Select(SelectTarget::Kind(kind(args[1])?))
            }
            Some("entity") => {
                want(3)?;
                entity_kind = Some(kind(args[2])?);
                PrimitiveAction::Select(SelectTarget::Entity(num(args[1])?))
            }
            _ => return Err("select expects army | kind K | entity ID K".into()),
        },
        "build" => {
            want(3)?;
            let k = kind(args[0])?;
            if !k.is_structure() {
                return Err(format!("cannot build `{k}`"));
            }
            PrimitiveAction::Command(Command::BuildStructure(k, pos(args[1], args[2])?))
        }
        "train" => {
            want(1)?;
            let k = kind(args[0])?;
            if !k.is_unit() {
                return Err(format!("cannot train `{k}`"));
            }
            PrimitiveAction::Command(Command::TrainUnit(k))
        }
        "attack" => {
            want(3)?;
            let queued = match args[2] {
                "queued" => true,
                "now" => false,
                other => return Err(format!("attack mode must be queued|now, found `{other}`")),
            };
            PrimitiveAction::Command(Command::AttackPos {
                pos: pos(args[0], args[1])?,
                queued,
            })
        }
        "move" => {
            want(2)?;
            PrimitiveAction::Command(Command::MovePos(pos(args[0], args[1])?))
        }
        "gather" => {
            want(1)?;
            PrimitiveAction::Command(Command::Gather(num(args[0])?))
        }
        "noop" => {
            want(0)?;
            PrimitiveAction::NOOP
        }
        "end" => {
            if args.is_empty() {
                return Err("end expects an outcome".into());
            }
            let outcome = Outcome::from_str(args[0])?;
            let mut counts = Vec::new();
            for a in &args[1..] {
                let (k, n) = a.split_once('=').ok_or_else(|| format!("expected kind=count, found `{a}`"))?;
                counts.push((kind(k)?, num(n)?));
            }
            return Ok(ReplayRecord::End {
                tick,
                player,
                outcome,
                counts,
            });
        }
        other => return Err(format!("unknown action type `{other}`")),
    };
    Ok(ReplayRecord::Action {
        tick,
        player,
        action,
        entity_kind,
    })
}

impl fmt::Display for ReplayHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# replay\tversion={}\tseed={}\tdifficulty={}\tmap={}x{}\tmax_ticks={}\tplayer={}",
            self.version, self.seed, self.difficulty, self.width, self.height, self.max_ticks, self.player
        )
    }
}

impl fmt::Display for ReplayRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayRecord::End {
                tick,
                player,
                outcome,
                counts,
            } => {
                write!(f, "{tick}\t{player}\tend\t{}", outcome.name())?;
                for (k, n) in counts {
                    write!(f, "\t{k}={n}")?;
                }
                Ok(())
            }
            ReplayRecord::Action {
                tick,
                player,
                action,
                entity_kind,
            } => {
                write!(f, "{tick}\t{player}\t")?;
                match action {
                    PrimitiveAction::Select(SelectTarget::Army) => write!(f, "select\tarmy"),
                    PrimitiveAction::Select(SelectTarget::Kind(k)) => write!(f, "select\tkind\t{k}"),
                    PrimitiveAction::Select(SelectTarget::Entity(id)) => {
                        let k = entity_kind.map(|k| k.name()).unwrap_or("worker");
                        write!(f, "select\tentity\t{id}\t{k}")
                    }
                    PrimitiveAction::Command(c) => match c {
                        Command::BuildStructure(k, p) => write!(f, "build\t{k}\t{}\t{}", p.x, p.y),
                        Command::TrainUnit(k) => write!(f, "train\t{k}"),
                        Command::AttackPos { pos, queued } => {
                            write!(f, "attack\t{}\t{}\t{}", pos.x, pos.y, if *queued { "queued" } else { "now" })
                        }
                        Command::MovePos(p) => write!(f, "move\t{}\t{}", p.x, p.y),
                        Command::Gather(m) => write!(f, "gather\t{m}"),
                        Command::NoOp => write!(f, "noop"),
                    },
                }
            }
        }
    }
}

impl fmt::Display for ReplayLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.header)?;
        for r in &self.records {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Accumulates one player's decisions into a [`ReplayLog`].
#[derive(Clone, Debug)]
pub struct ReplayWriter {
    log: ReplayLog,
}

impl ReplayWriter {
    pub fn new(state: &GameState, player: PlayerId) -> Self {
        ReplayWriter {
            log: ReplayLog {
                header: ReplayHeader {
                    version: REPLAY_FORMAT_VERSION,
                    seed: state.seed,
                    difficulty: state.players[1 - player].difficulty.unwrap_or(0),
                    width: state.config.width,
                    height: state.config.height,
                    max_ticks: state.max_ticks,
                    player,
                },
                records: Vec::new(),
            },
        }
    }

    /// Record `action` as issued at the current tick of `state` (before stepping).
    pub fn record(&mut self, state: &GameState, action: PrimitiveAction) {
        if action == PrimitiveAction::NOOP {
            return;
        }
        let entity_kind = match action {
            PrimitiveAction::Select(SelectTarget::Entity(id)) => state.entity(id).map(|e| e.kind),
            _ => None,
        };
        self.log.records.push(ReplayRecord::Action {
            tick: state.tick,
            player: self.log.header.player,
            action,
            entity_kind,
        });
    }

    pub fn finish(mut self, state: &GameState) -> ReplayLog {
        let player = self.log.header.player;
        let outcome = if player == 0 { state.outcome } else { state.outcome.flipped() };
        let counts = state.counts(player);
        self.log.records.push(ReplayRecord::End {
            tick: state.tick,
            player,
            outcome,
            counts: EntityKind::OWNABLE.iter().map(|k| (*k, counts[k.index()])).collect(),
        });
        self.log
    }
}

/// Play the scripted expert (player 0) against a scripted opponent and log it.
pub fn record_expert_game(
    config: &EngineConfig,
    seed: u64,
    opponent: &DifficultyConfig,
    max_ticks: u32,
) -> Result<ReplayLog, EngineError> {
    let mut state = GameState::new(config.clone(), seed, None, opponent, max_ticks)?;
    let mut expert = ScriptedExpert::new();
    let mut writer = ReplayWriter::new(&state, 0);
    while !state.is_terminal() {
        let a = expert.act(&state, 0);
        writer.record(&state, a);
        state.step(a)?;
    }
    Ok(writer.finish(&state))
}

/// Serialize a log to its text form.
pub fn to_text(log: &ReplayLog) -> String {
    let mut s = String::new();
    let _ = write!(s, "{log}");
    s
}
