//! Macro-action mining: replay logs are cut into short fragments, tokenized as
//! (action type, selected kind) pairs, mined with PrefixSpan, filtered and turned into
//! executable macro-actions.

mod prefixspan;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prefixspan::{prefixspan, sort_patterns, Pattern};

use crate::combat::CombatRule;
use crate::engine::{
    Command, EngineError, EntityKind, GameState, Outcome, PlayerId, Pos, PrimitiveAction, ReplayLog, ReplayParseError,
    ReplayRecord, SelectTarget,
};
use crate::placement::{sample_build_location, Window};

#[derive(Debug, Error)]
pub enum MiningError {
    #[error(transparent)]
    Parse(#[from] ReplayParseError),
    #[error("invalid mining config: {0}")]
    Config(String),
    #[error("no macro-actions survived mining: {0}")]
    NoMacros(String),
    #[error("macro file line {line}: {msg}")]
    MacroFile { line: usize, msg: String },
}

/// What a selection step picks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SelectKind {
    Kind(EntityKind),
    Army,
}

impl SelectKind {
    fn name(self) -> &'static str {
        match self {
            SelectKind::Kind(k) => k.name(),
            SelectKind::Army => "army",
        }
    }

    fn parse(s: &str) -> Option<SelectKind> {
        if s == "army" {
            Some(SelectKind::Army)
        } else {
            s.parse().ok().map(SelectKind::Kind)
        }
    }

    /// Whether a selection of this kind can carry out `action`.
    pub fn can_execute(self, action: ActionType) -> bool {
        use ActionType::*;
        match self {
            SelectKind::Kind(EntityKind::Worker) => matches!(action, Build(_) | Gather),
            SelectKind::Kind(EntityKind::Base) => matches!(action, Train(EntityKind::Worker) | Gather),
            SelectKind::Kind(EntityKind::Production) => {
                matches!(action, Train(EntityKind::Melee | EntityKind::Ranged) | Move)
            }
            SelectKind::Army | SelectKind::Kind(EntityKind::Melee | EntityKind::Ranged) => {
                matches!(action, Attack | AttackQueued | Move)
            }
            _ => false,
        }
    }
}

/// Position-free action signature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionType {
    Select(SelectKind),
    Build(EntityKind),
    Train(EntityKind),
    Attack,
    AttackQueued,
    Move,
    Gather,
    NoOp,
}

/// A mining token: the action type plus, for commands, the kind selected when it was issued.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Token {
    pub action: ActionType,
    pub selected: Option<SelectKind>,
}

impl Token {
    pub fn select(kind: SelectKind) -> Token {
        Token {
            action: ActionType::Select(kind),
            selected: None,
        }
    }

    pub fn command(action: ActionType, selected: Option<SelectKind>) -> Token {
        Token { action, selected }
    }

    pub fn is_select(&self) -> bool {
        matches!(self.action, ActionType::Select(_))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.action {
            ActionType::Select(k) => return write!(f, "select_{}", k.name()),
            ActionType::Build(k) => format!("build_{}", k.name()),
            ActionType::Train(k) => format!("train_{}", k.name()),
            ActionType::Attack => "attack".to_string(),
            ActionType::AttackQueued => "attack_q".to_string(),
            ActionType::Move => "move".to_string(),
            ActionType::Gather => "gather".to_string(),
            ActionType::NoOp => return f.write_str("noop"),
        };
        let sel = self.selected.map(|s| s.name()).unwrap_or("none");
        write!(f, "{base}@{sel}")
    }
}

impl FromStr for Token {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("bad token `{s}`");
        if s == "noop" {
            return Ok(Token::command(ActionType::NoOp, None));
        }
        if let Some(k) = s.strip_prefix("select_") {
            return SelectKind::parse(k).map(Token::select).ok_or_else(bad);
        }
        let (base, sel) = s.split_once('@').ok_or_else(bad)?;
        let selected = if sel == "none" {
            None
        } else {
            Some(SelectKind::parse(sel).ok_or_else(bad)?)
        };
        let kind = |p: &str| base.strip_prefix(p).and_then(|k| k.parse::<EntityKind>().ok());
        let action = match base {
            "attack" => ActionType::Attack,
            "attack_q" => ActionType::AttackQueued,
            "move" => ActionType::Move,
            "gather" => ActionType::Gather,
            _ => {
                if let Some(k) = kind("build_") {
                    ActionType::Build(k)
                } else if let Some(k) = kind("train_") {
                    ActionType::Train(k)
                } else {
                    return Err(bad());
                }
            }
        };
        Ok(Token { action, selected })
    }
}

/// Tokenize one logged action given the kind currently selected (updated for selections).
pub fn tokenize(action: &PrimitiveAction, entity_kind: Option<EntityKind>, selected: &mut Option<SelectKind>) -> Token {
    match action {
        PrimitiveAction::Select(t) => {
            let kind = match t {
                SelectTarget::Army => Some(SelectKind::Army),
                SelectTarget::Kind(k) => Some(SelectKind::Kind(*k)),
                SelectTarget::Entity(_) => entity_kind.map(SelectKind::Kind),
            };
            *selected = kind;
            // An entity that no longer exists selects nothing; fall back to the worker token.
            Token::select(kind.unwrap_or(SelectKind::Kind(EntityKind::Worker)))
        }
        PrimitiveAction::Command(c) => {
            let action = match c {
                Command::BuildStructure(k, _) => ActionType::Build(*k),
                Command::TrainUnit(k) => ActionType::Train(*k),
                Command::AttackPos { queued: false, .. } => ActionType::Attack,
                Command::AttackPos { queued: true, .. } => ActionType::AttackQueued,
                Command::MovePos(_) => ActionType::Move,
                Command::Gather(_) => ActionType::Gather,
                Command::NoOp => ActionType::NoOp,
            };
            Token::command(action, *selected)
        }
    }
}

/// Fragments of replay logs as token sequences.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SequenceDatabase {
    pub sequences: Vec<Vec<Token>>,
}

impl SequenceDatabase {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// One sequence per non-empty fragment of `fragment_ticks` ticks, per log, in log order.
pub fn segment_replays(logs: &[ReplayLog], fragment_ticks: u32) -> Result<SequenceDatabase, MiningError> {
    if fragment_ticks == 0 {
        return Err(MiningError::Config("fragment_ticks must be > 0".into()));
    }
    let mut db = SequenceDatabase::default();
    for log in logs {
        let mut selected = None;
        let mut current: Option<(u32, Vec<Token>)> = None;
        for rec in &log.records {
            let ReplayRecord::Action {
                tick,
                action,
                entity_kind,
                ..
            } = rec
            else {
                continue;
            };
            if *action == PrimitiveAction::NOOP {
                continue;
            }
            let frag = tick / fragment_ticks;
            let token = tokenize(action, *entity_kind, &mut selected);
            match &mut current {
                Some((f, seq)) if *f == frag => seq.push(token),
                _ => {
                    if let Some((_, seq)) = current.take() {
                        db.sequences.push(seq);
                    }
                    current = Some((frag, vec![token]));
                }
            }
        }
        if let Some((_, seq)) = current {
            db.sequences.push(seq);
        }
    }
    Ok(db)
}

/// Parse `(file name, text)` pairs and segment them; parse errors name the file and line.
pub fn segment_replay_texts(files: &[(String, String)], fragment_ticks: u32) -> Result<SequenceDatabase, MiningError> {
    let logs = files
        .iter()
        .map(|(name, text)| ReplayLog::parse(name, text))
        .collect::<Result<Vec<_>, _>>()?;
    segment_replays(&logs, fragment_ticks)
}

/// Keep at most `top_k` patterns (in input order) that have no repeated token, more than two
/// tokens, and start with a selection.
pub fn filter_patterns(patterns: &[Pattern<Token>], top_k: usize) -> Vec<Pattern<Token>> {
    patterns
        .iter()
        .filter(|p| {
            let distinct: BTreeSet<&Token> = p.tokens.iter().collect();
            distinct.len() == p.tokens.len() && p.tokens.len() > 2 && p.tokens[0].is_select()
        })
        .take(top_k)
        .cloned()
        .collect()
}

/// A mined macro-action: a selection followed by commands it can execute.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MacroAction {
    pub id: usize,
    pub steps: Vec<Token>,
    pub support: usize,
}

/// Functional group of a macro, used to partition macros among sub-policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MacroGroup {
    /// Worker macros that place structures.
    Building,
    /// Unit production and economy.
    Population,
    /// Army commands.
    Army,
}

impl MacroAction {
    pub fn select_kind(&self) -> Option<SelectKind> {
        match self.steps.first()?.action {
            ActionType::Select(k) => Some(k),
            _ => None,
        }
    }

    pub fn group(&self) -> MacroGroup {
        let builds = self.steps.iter().any(|t| matches!(t.action, ActionType::Build(_)));
        match self.select_kind() {
            Some(SelectKind::Army | SelectKind::Kind(EntityKind::Melee | EntityKind::Ranged)) => MacroGroup::Army,
            _ if builds => MacroGroup::Building,
            _ => MacroGroup::Population,
        }
    }

    pub fn describe(&self) -> String {
        self.steps.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" -> ")
    }
}

/// Drop patterns with more than one selection or with commands the selection cannot perform,
/// remove duplicates, and number the survivors.
pub fn postprocess(patterns: &[Pattern<Token>]) -> Vec<MacroAction> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for p in patterns {
        let selects = p.tokens.iter().filter(|t| t.is_select()).count();
        if selects != 1 || !p.tokens[0].is_select() {
            continue;
        }
        let ActionType::Select(kind) = p.tokens[0].action else {
            continue;
        };
        let compatible = p.tokens[1..]
            .iter()
            .all(|t| t.selected == Some(kind) && kind.can_execute(t.action));
        if !compatible || !seen.insert(p.tokens.clone()) {
            continue;
        }
        out.push(MacroAction {
            id: out.len(),
            steps: p.tokens.clone(),
            support: p.support,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    /// Fragment length in engine ticks.
    pub fragment_ticks: u32,
    /// Longest pattern kept (C).
    pub max_len: usize,
    /// Minimum support as a fraction of the number of fragments.
    pub min_support_frac: f64,
    /// Absolute minimum support; overrides the fraction when set.
    pub min_support: Option<usize>,
    pub top_k: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            fragment_ticks: 80,
            max_len: 4,
            min_support_frac: 0.05,
            min_support: None,
            top_k: 75,
        }
    }
}

impl MiningConfig {
    pub fn support_threshold(&self, fragments: usize) -> usize {
        self.min_support
            .unwrap_or_else(|| (self.min_support_frac * fragments as f64).ceil() as usize)
            .max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiningReport {
    pub fragments: usize,
    pub min_support: usize,
    pub frequent: usize,
    pub filtered: Vec<Pattern<Token>>,
    pub macros: Vec<MacroAction>,
}

impl MiningReport {
    /// Human-readable frequency table of the surviving macros.
    pub fn frequency_table(&self) -> String {
        let mut s = format!(
            "# fragments={} min_support={} frequent_patterns={} filtered={} macros={}\n",
            self.fragments,
            self.min_support,
            self.frequent,
            self.filtered.len(),
            self.macros.len()
        );
        s.push_str("rank\tsupport\tfrequency\tmacro\n");
        let mut ranked: Vec<&MacroAction> = self.macros.iter().collect();
        ranked.sort_by(|a, b| b.support.cmp(&a.support).then(a.id.cmp(&b.id)));
        for (i, m) in ranked.iter().enumerate() {
            s.push_str(&format!(
                "{}\t{}\t{:.4}\t{}\n",
                i + 1,
                m.support,
                m.support as f64 / self.fragments.max(1) as f64,
                m.describe()
            ));
        }
        s
    }
}

/// Full pipeline: segment, mine, filter, postprocess.
pub fn mine_macros(logs: &[ReplayLog], cfg: &MiningConfig) -> Result<MiningReport, MiningError> {
    if cfg.max_len == 0 {
        return Err(MiningError::Config("max_len must be >= 1".into()));
    }
    let db = segment_replays(logs, cfg.fragment_ticks)?;
    let min_support = cfg.support_threshold(db.len());
    let patterns = prefixspan(&db.sequences, min_support, cfg.max_len);
    let filtered = filter_patterns(&patterns, cfg.top_k);
    let macros = postprocess(&filtered);
    if macros.is_empty() {
        return Err(MiningError::NoMacros(format!(
            "{} fragments, min_support {}, {} frequent patterns, {} after filtering",
            db.len(),
            min_support,
            patterns.len(),
            filtered.len()
        )));
    }
    Ok(MiningReport {
        fragments: db.len(),
        min_support,
        frequent: patterns.len(),
        filtered,
        macros,
    })
}

pub const MACRO_FILE_HEADER: &str = "# macros version=1";

pub fn write_macro_file(macros: &[MacroAction]) -> String {
    let mut s = format!("{MACRO_FILE_HEADER} count={}\n", macros.len());
    for m in macros {
        let steps: Vec<String> = m.steps.iter().map(|t| t.to_string()).collect();
        s.push_str(&format!("{}\t{}\t{}\n", m.id, m.support, steps.join(" ")));
    }
    s
}

pub fn parse_macro_file(text: &str) -> Result<Vec<MacroAction>, MiningError> {
    let err = |line: usize, msg: String| MiningError::MacroFile { line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.starts_with(MACRO_FILE_HEADER) => {}
        _ => return Err(err(1, format!("missing `{MACRO_FILE_HEADER}` header"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(err(n, "expected `id<TAB>support<TAB>steps`".into()));
        }
        let id = f[0].parse().map_err(|_| err(n, format!("bad id `{}`", f[0])))?;
        let support = f[1].parse().map_err(|_| err(n, format!("bad support `{}`", f[1])))?;
        let steps = f[2]
            .split_whitespace()
            .map(|t| t.parse::<Token>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|m| err(n, m))?;
        if steps.is_empty() || !steps[0].is_select() {
            return Err(err(n, "a macro must start with a selection".into()));
        }
        out.push(MacroAction { id, steps, support });
    }
    Ok(out)
}

/// Turns position-free tokens into concrete primitive actions for the current state.
pub trait StepResolver {
    fn resolve(&mut self, state: &GameState, player: PlayerId, token: &Token) -> PrimitiveAction;
}

/// Default grounding: workers are selected one at a time, builds use random placement near home,
/// attacks aim at the nearest known enemy structure (else the waypoint rule's target), moves go to
/// a forward rally point, and gathering uses the mineral patch nearest to home.
#[derive(Clone, Debug)]
pub struct DefaultResolver {
    pub rule: CombatRule,
    salt: u64,
}

impl DefaultResolver {
    pub fn new(state: &GameState, player: PlayerId) -> Self {
        DefaultResolver {
            rule: CombatRule::for_player(state, player),
            salt: 0,
        }
    }

    /// Rally point a quarter of the way from home towards the map centre.
    pub fn front(state: &GameState, player: PlayerId) -> Pos {
        let home = state.home(player);
        Pos::new(
            (home.x + state.config.width / 2) / 2,
            (home.y + state.config.height / 2) / 2,
        )
    }

    fn attack_target(&mut self, state: &GameState, player: PlayerId) -> Pos {
        self.rule.update(state, player);
        let from = state.home(player);
        state
            .structures(1 - player)
            .filter(|e| state.has_scouted(player, e.pos))
            .min_by_key(|e| (e.pos.dist2(from), e.id))
            .map(|e| e.pos)
            .unwrap_or_else(|| self.rule.current())
    }
}

impl StepResolver for DefaultResolver {
    fn resolve(&mut self, state: &GameState, player: PlayerId, token: &Token) -> PrimitiveAction {
        use PrimitiveAction::{Command as C, Select as S};
        let home = state.home(player);
        match token.action {
            ActionType::Select(SelectKind::Army) => S(SelectTarget::Army),
            ActionType::Select(SelectKind::Kind(EntityKind::Worker)) => {
                // Prefer a worker that is not carrying ore, nearest to home.
                let w = state
                    .owned(player)
                    .filter(|e| e.kind == EntityKind::Worker)
                    .min_by_key(|e| (e.carrying > 0, e.pos.dist2(home), e.id));
                match w {
                    Some(w) => S(SelectTarget::Entity(w.id)),
                    None => S(SelectTarget::Kind(EntityKind::Worker)),
                }
            }
            ActionType::Select(SelectKind::Kind(k)) => S(SelectTarget::Kind(k)),
            ActionType::Build(kind) => {
                self.salt += 1;
                let mut rng = state.decision_rng(0x5eed_0000 + self.salt);
                let side = state.config.width.min(state.config.height) / 2;
                let window = Window::centered(&state.config, home, side);
                match sample_build_location(state, player, kind, window, &mut rng) {
                    Some(p) => C(Command::BuildStructure(kind, p)),
                    None => PrimitiveAction::NOOP,
                }
            }
            ActionType::Train(kind) => C(Command::TrainUnit(kind)),
            ActionType::Attack => C(Command::AttackPos {
                pos: self.attack_target(state, player),
                queued: false,
            }),
            ActionType::AttackQueued => {
                self.rule.update(state, player);
                C(Command::AttackPos {
                    pos: self.rule.next(),
                    queued: true,
                })
            }
            ActionType::Move => C(Command::MovePos(Self::front(state, player))),
            ActionType::Gather => match state.nearest_mineral(home) {
                Some(m) => C(Command::Gather(m)),
                None => PrimitiveAction::NOOP,
            },
            ActionType::NoOp => PrimitiveAction::NOOP,
        }
    }
}

/// Result of running one macro-action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacroExecution {
    pub outcome: Outcome,
    /// Engine ticks that elapsed.
    pub ticks: u32,
    /// Primitive steps actually issued.
    pub steps: usize,
}

/// Issue the macro's steps in order, one per engine decision, for player 0 (the scripted
/// opponent moves in between). Stops as soon as the game ends.
pub fn execute_macro<R: StepResolver + ?Sized>(
    state: &mut GameState,
    mac: &MacroAction,
    resolver: &mut R,
) -> Result<MacroExecution, EngineError> {
    if state.is_terminal() {
        return Err(EngineError::Terminal);
    }
    let start = state.tick;
    let mut steps = 0;
    for token in &mac.steps {
        if state.is_terminal() {
            break;
        }
        let action = resolver.resolve(state, 0, token);
        state.step(action)?;
        steps += 1;
    }
    Ok(MacroExecution {
        outcome: state.outcome,
        ticks: state.tick - start,
        steps,
    })
}

/// Single-step macros over raw action signatures, used for the primitive-action baseline.
pub fn primitive_macros() -> Vec<MacroAction> {
    let mut tokens = vec![
        Token::select(SelectKind::Army),
        Token::command(ActionType::NoOp, None),
        Token::command(ActionType::Attack, None),
        Token::command(ActionType::AttackQueued, None),
        Token::command(ActionType::Move, None),
        Token::command(ActionType::Gather, None),
    ];
    for k in EntityKind::OWNABLE {
        tokens.push(Token::select(SelectKind::Kind(k)));
        if k.is_structure() {
            tokens.push(Token::command(ActionType::Build(k), None));
        } else {
            tokens.push(Token::command(ActionType::Train(k), None));
        }
    }
    tokens
        .into_iter()
        .enumerate()
        .map(|(id, t)| MacroAction {
            id,
            steps: vec![t],
            support: 0,
        })
        .collect()
}

#[cfg(test)]
mod tests;
