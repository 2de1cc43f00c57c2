//! Battle models: a fixed-waypoint attack rule, a learned attack/retreat/no-op network over
//! eight anchor points, and a mixture in which an extra anchor index defers to the rule.

mod harness;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{ApproxError, Head, NetSpec, Network};
use crate::engine::{
    observe_scalar, observe_spatial, Command, EngineConfig, GameState, PlayerId, Pos, PrimitiveAction, SelectTarget,
    SCALAR_DIM,
};
use crate::placement::Window;
use crate::rl::{act, decompose_action, Decision, RlError};

pub use harness::{
    evaluate_combat, run_combat_episode, train_combat_network, CombatEpisode, CombatEpisodeConfig, CombatEval,
    CombatTrainConfig,
};

#[derive(Debug, Error)]
pub enum CombatError {
    #[error("waypoint plan must not be empty")]
    EmptyPlan,
    #[error("waypoint {0} lies outside the map")]
    OutOfBounds(Pos),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

/// Radius around a waypoint inside which enemy structures keep it from counting as cleared.
pub const SITE_RADIUS: i32 = 5;

/// Fixed attack targets: every resource site other than the player's own spawn, nearest first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackWaypointPlan {
    pub waypoints: Vec<Pos>,
}

impl AttackWaypointPlan {
    pub fn new(config: &EngineConfig, waypoints: Vec<Pos>) -> Result<Self, CombatError> {
        if waypoints.is_empty() {
            return Err(CombatError::EmptyPlan);
        }
        if let Some(p) = waypoints.iter().find(|p| !config.in_bounds(**p)) {
            return Err(CombatError::OutOfBounds(*p));
        }
        Ok(AttackWaypointPlan { waypoints })
    }

    pub fn for_player(state: &GameState, player: PlayerId) -> Self {
        let own = state.players[player].spawn;
        let mut waypoints: Vec<Pos> = state.sites.iter().copied().filter(|s| *s != own).collect();
        waypoints.sort_by_key(|p| (p.dist2(own), p.y, p.x));
        AttackWaypointPlan { waypoints }
    }
}

/// The waypoint rule's runtime state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CombatRule {
    pub plan: AttackWaypointPlan,
    pub index: usize,
}

impl CombatRule {
    pub fn new(plan: AttackWaypointPlan) -> Self {
        CombatRule { plan, index: 0 }
    }

    pub fn for_player(state: &GameState, player: PlayerId) -> Self {
        Self::new(AttackWaypointPlan::for_player(state, player))
    }

    pub fn current(&self) -> Pos {
        self.plan.waypoints[self.index]
    }

    /// The waypoint after the current one (the last waypoint repeats).
    pub fn next(&self) -> Pos {
        self.plan.waypoints[(self.index + 1).min(self.plan.waypoints.len() - 1)]
    }

    /// A waypoint is cleared once the player has seen it and knows of no enemy structure around it.
    pub fn is_cleared(state: &GameState, player: PlayerId, waypoint: Pos) -> bool {
        if !state.sees(player, waypoint) {
            return false;
        }
        !state.structures(1 - player).any(|e| {
            e.pos.chebyshev(waypoint) <= SITE_RADIUS && state.has_scouted(player, e.pos)
        })
    }

    /// Advance past every cleared waypoint (never beyond the last).
    pub fn update(&mut self, state: &GameState, player: PlayerId) {
        while self.index + 1 < self.plan.waypoints.len() && Self::is_cleared(state, player, self.current()) {
            self.index += 1;
        }
    }
}

/// Rule model: select the army and queue an attack on the current waypoint.
pub fn combat_rule_action(state: &GameState, player: PlayerId, rule: &mut CombatRule) -> Vec<PrimitiveAction> {
    rule.update(state, player);
    if state.army(player).next().is_none() {
        return vec![PrimitiveAction::NOOP];
    }
    vec![
        PrimitiveAction::Select(SelectTarget::Army),
        PrimitiveAction::Command(Command::AttackPos {
            pos: rule.current(),
            queued: true,
        }),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetAction {
    AttackAll,
    RetreatAll,
    NoOp,
}

impl NetAction {
    pub const ALL: [NetAction; 3] = [NetAction::AttackAll, NetAction::RetreatAll, NetAction::NoOp];
}

pub const NETWORK_ACTIONS: usize = 3;
pub const ANCHORS: usize = 8;
/// Extra anchor index meaning "use the rule's waypoint" in mixture mode.
pub const SENTINEL: usize = ANCHORS;

/// Which sub-policy the camera follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Focus {
    Base,
    Battle,
}

/// Base location, or the most injured combat unit (army centroid when nobody is hurt).
pub fn army_focus_location(state: &GameState, player: PlayerId, focus: Focus) -> Pos {
    let home = state.home(player);
    if focus == Focus::Base {
        return home;
    }
    let army: Vec<_> = state.army(player).collect();
    if army.is_empty() {
        return home;
    }
    let injured = army
        .iter()
        .filter(|e| e.hp < e.max_hp)
        .max_by_key(|e| (e.max_hp - e.hp, std::cmp::Reverse(e.id)));
    if let Some(e) = injured {
        return e.pos;
    }
    let n = army.len() as i32;
    let (sx, sy) = army.iter().fold((0, 0), |(x, y), e| (x + e.pos.x, y + e.pos.y));
    Pos::new(sx / n, sy / n)
}

/// The local view: a window of half the map side centred on the focus (shifted inside the map).
pub fn screen_window(config: &EngineConfig, focus: Pos) -> Window {
    Window::centered(config, focus, config.width.min(config.height) / 2)
}

/// Eight points evenly spaced on a square of half the window side, centred in the window:
/// corners and edge midpoints, clockwise from the top-left corner.
pub fn anchor_points(config: &EngineConfig, focus: Pos) -> [Pos; ANCHORS] {
    let w = screen_window(config, focus);
    let c = w.centre();
    let h = w.width.min(w.height) / 4;
    let offsets = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    offsets.map(|(dx, dy)| Pos::new(c.x + dx * h, c.y + dy * h))
}

/// Input of the combat network: the flattened coarse spatial grid followed by the scalar features.
pub fn combat_features(state: &GameState, player: PlayerId) -> Vec<f64> {
    let mut v = observe_spatial(state, player).data;
    v.extend(observe_scalar(state, player));
    v
}

pub fn combat_input_dim(config: &EngineConfig) -> usize {
    let side = (config.width / config.coarse_cell) as usize * (config.height / config.coarse_cell) as usize;
    crate::engine::SPATIAL_CHANNELS * side + SCALAR_DIM
}

pub fn combat_net_spec(config: &EngineConfig, sentinel: bool, hidden: Vec<usize>) -> NetSpec {
    NetSpec {
        input_dim: combat_input_dim(config),
        hidden,
        head: Head::PolicyValue {
            factors: vec![NETWORK_ACTIONS, ANCHORS + sentinel as usize],
        },
        shared_trunk: true,
    }
}

/// Sampled (action, anchor) pair and the underlying policy decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkChoice {
    pub action: NetAction,
    pub anchor: usize,
    pub decision: Decision,
}

pub fn combat_network_action<R: Rng>(
    net: &Network,
    features: &[f64],
    greedy: bool,
    rng: &mut R,
) -> Result<NetworkChoice, CombatError> {
    let decision = act(net, features, greedy, rng)?;
    Ok(choice_from_index(net, decision))
}

fn choice_from_index(net: &Network, decision: Decision) -> NetworkChoice {
    let parts = decompose_action(decision.action, net.spec.head.factors());
    NetworkChoice {
        action: NetAction::ALL[parts[0]],
        anchor: parts[1],
        decision,
    }
}

/// Primitive steps for a network choice aimed at `target`.
pub fn network_command(state: &GameState, player: PlayerId, action: NetAction, target: Pos) -> Vec<PrimitiveAction> {
    if action == NetAction::NoOp || state.army(player).next().is_none() {
        return vec![PrimitiveAction::NOOP];
    }
    let cmd = match action {
        NetAction::AttackAll => Command::AttackPos {
            pos: target,
            queued: false,
        },
        _ => Command::MovePos(target),
    };
    vec![PrimitiveAction::Select(SelectTarget::Army), PrimitiveAction::Command(cmd)]
}

/// Mixture: the sentinel anchor takes the rule's current waypoint, any other index its anchor point.
pub fn mixture_action(
    state: &GameState,
    player: PlayerId,
    action: NetAction,
    anchor: usize,
    anchors: &[Pos; ANCHORS],
    rule: &mut CombatRule,
) -> Vec<PrimitiveAction> {
    let target = if anchor == SENTINEL {
        rule.update(state, player);
        rule.current()
    } else {
        anchors[anchor]
    };
    network_command(state, player, action, target)
}

/// Battle model selection.
#[derive(Clone, Debug, PartialEq)]
pub enum CombatModel {
    Rule,
    Network(Network),
    Mixture(Network),
    /// Uniformly random network actions and anchors.
    Random,
}

impl CombatModel {
    pub fn name(&self) -> &'static str {
        match self {
            CombatModel::Rule => "rule",
            CombatModel::Network(_) => "network",
            CombatModel::Mixture(_) => "mixture",
            CombatModel::Random => "random",
        }
    }

    pub fn network(&self) -> Option<&Network> {
        match self {
            CombatModel::Network(n) | CombatModel::Mixture(n) => Some(n),
            _ => None,
        }
    }

    pub fn network_mut(&mut self) -> Option<&mut Network> {
        match self {
            CombatModel::Network(n) | CombatModel::Mixture(n) => Some(n),
            _ => None,
        }
    }
}

/// One battle decision: primitive steps plus, for learned models, the policy decision taken.
#[derive(Clone, Debug, PartialEq)]
pub struct BattleTurn {
    pub steps: Vec<PrimitiveAction>,
    pub features: Option<Vec<f64>>,
    pub decision: Option<Decision>,
}

/// Decide one battle turn for `player` with the given model.
pub fn battle_turn<R: Rng>(
    model: &CombatModel,
    state: &GameState,
    player: PlayerId,
    rule: &mut CombatRule,
    greedy: bool,
    rng: &mut R,
) -> Result<BattleTurn, CombatError> {
    let anchors = anchor_points(&state.config, army_focus_location(state, player, Focus::Battle));
    match model {
        CombatModel::Rule => Ok(BattleTurn {
            steps: combat_rule_action(state, player, rule),
            features: None,
            decision: None,
        }),
        CombatModel::Random => {
            let action = NetAction::ALL[rng.gen_range(0..NETWORK_ACTIONS)];
            let anchor = rng.gen_range(0..ANCHORS);
            Ok(BattleTurn {
                steps: network_command(state, player, action, anchors[anchor]),
                features: None,
                decision: None,
            })
        }
        CombatModel::Network(net) | CombatModel::Mixture(net) => {
            let features = combat_features(state, player);
            let choice = combat_network_action(net, &features, greedy, rng)?;
            let steps = if matches!(model, CombatModel::Mixture(_)) {
                mixture_action(state, player, choice.action, choice.anchor, &anchors, rule)
            } else {
                network_command(state, player, choice.action, anchors[choice.anchor])
            };
            Ok(BattleTurn {
                steps,
                features: Some(features),
                decision: Some(choice.decision),
            })
        }
    }
}
