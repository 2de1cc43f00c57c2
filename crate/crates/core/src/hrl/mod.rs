//! Controller/sub-policy hierarchies over macro-actions.
//!
//! A hierarchy is a tree of policy nodes. Leaves choose macro-actions; internal nodes choose a
//! child and keep it active for `k` of that child's decisions, collecting the sum of the child's
//! rewards as their own reward.

mod baselines;
mod io;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{AdamState, ApproxError, NetSpec, Network};
use crate::engine::{
    observe_scalar, DifficultyConfig, EngineConfig, EngineError, GameState, Outcome, PlayerId, CONTROLLER_SLOTS,
    SCALAR_DIM,
};
use crate::mining::{execute_macro, DefaultResolver, MacroAction, MacroGroup, Token};
use crate::rewards::{RewardError, RewardSnapshot, RewardSpec, Role};
use crate::rl::{act, RlError, Transition};

pub use baselines::{evaluate, random_macro_baseline, random_primitive_action, random_primitive_baseline, EvalSummary};
pub use io::{load_hierarchy, save_hierarchy, HierarchyManifest, MANIFEST_FILE};
pub use train::{
    train, write_curve_header, write_curve_row, IterationRecord, NodeUpdate, TrainConfig, TrainReport, TrainableMask,
    UpdateMode, CURVE_SCHEMA,
};

#[derive(Debug, Error)]
pub enum HrlError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("training config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("hierarchy checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    TwoLayer,
    ThreeLayer,
    FinalThreeLayer,
    /// One policy over every macro-action, no controller.
    Flat,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] = [
        TopologyKind::TwoLayer,
        TopologyKind::ThreeLayer,
        TopologyKind::FinalThreeLayer,
        TopologyKind::Flat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::TwoLayer => "two-layer",
            TopologyKind::ThreeLayer => "three-layer",
            TopologyKind::FinalThreeLayer => "final-three-layer",
            TopologyKind::Flat => "flat",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyKind {
    type Err = HrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HrlError::Topology(format!("unknown topology `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    pub topology: TopologyKind,
    /// Child decisions per parent decision.
    pub k: usize,
    pub hidden: Vec<usize>,
    pub shared_trunk: bool,
    /// Leaves get no explicit no-op action.
    pub no_leaf_noop: bool,
    /// Seed for fresh parameter initialisation.
    pub init_seed: u64,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            topology: TopologyKind::TwoLayer,
            k: 8,
            hidden: vec![128, 128, 128],
            shared_trunk: false,
            no_leaf_noop: true,
            init_seed: 0,
        }
    }
}

impl HierarchyConfig {
    /// Defaults for a topology; the final three-layer network shares its policy/value trunk.
    pub fn for_topology(topology: TopologyKind) -> Self {
        HierarchyConfig {
            topology,
            shared_trunk: topology == TopologyKind::FinalThreeLayer,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), HrlError> {
        if self.k == 0 {
            return Err(HrlError::Topology("k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Internal { children: Vec<usize> },
    /// Indices into the hierarchy's macro list.
    Leaf { macros: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNode {
    pub name: String,
    pub kind: NodeKind,
    /// Reward role used for this node's own step rewards.
    pub role: Role,
    pub net: Network,
    pub adam: AdamState,
    /// Leaves only: index of the extra no-op action, if any.
    pub noop_action: Option<usize>,
}

impl PolicyNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn action_count(&self) -> usize {
        match &self.kind {
            NodeKind::Internal { children } => children.len(),
            NodeKind::Leaf { macros } => macros.len() + self.noop_action.is_some() as usize,
        }
    }

    pub fn observe(&self, state: &GameState, player: PlayerId) -> Vec<f64> {
        let full = observe_scalar(state, player);
        if self.is_leaf() {
            full
        } else {
            CONTROLLER_SLOTS.iter().map(|&i| full[i]).collect()
        }
    }

    pub fn input_dim(leaf: bool) -> usize {
        if leaf {
            SCALAR_DIM
        } else {
            CONTROLLER_SLOTS.len()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    pub config: HierarchyConfig,
    pub macros: Vec<MacroAction>,
    pub nodes: Vec<PolicyNode>,
    pub root: usize,
}

struct NodePlan {
    name: &'static str,
    children: Vec<&'static str>,
    groups: Vec<MacroGroup>,
    role: Role,
}

fn plan(kind: TopologyKind) -> Vec<NodePlan> {
    use MacroGroup::*;
    let internal = |name, children: Vec<&'static str>| NodePlan {
        name,
        children,
        groups: vec![],
        role: Role::Base,
    };
    let leaf = |name, groups: Vec<MacroGroup>, role| NodePlan {
        name,
        children: vec![],
        groups,
        role,
    };
    match kind {
        TopologyKind::TwoLayer => vec![
            internal("controller", vec!["base", "battle"]),
            leaf("base", vec![Building, Population], Role::Base),
            leaf("battle", vec![Army], Role::Battle),
        ],
        TopologyKind::ThreeLayer => vec![
            internal("controller", vec!["base", "battle"]),
            internal("base", vec!["building", "population"]),
            leaf("battle", vec![Army], Role::Battle),
            leaf("building", vec![Building], Role::Base),
            leaf("population", vec![Population], Role::Base),
        ],
        TopologyKind::FinalThreeLayer => vec![
            internal("controller", vec!["base", "battle"]),
            internal("base", vec!["building", "population"]),
            // The battle node may hand control to the population node.
            internal("battle", vec!["fight", "population"]),
            leaf("building", vec![Building], Role::Base),
            leaf("population", vec![Population], Role::Base),
            leaf("fight", vec![Army], Role::Battle),
        ],
        TopologyKind::Flat => vec![leaf("policy", vec![Building, Population, Army], Role::Base)],
    }
}

/// FNV-1a of a node name, used to derive per-node initialisation seeds.
fn name_hash(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn node_spec(config: &HierarchyConfig, leaf: bool, actions: usize) -> NetSpec {
    NetSpec::policy_value(PolicyNode::input_dim(leaf), actions, config.shared_trunk).with_hidden(config.hidden.clone())
}

/// Build a hierarchy of freshly initialised nodes, partitioning macros among the leaves by group.
pub fn build_topology(config: &HierarchyConfig, macros: &[MacroAction]) -> Result<Hierarchy, HrlError> {
    config.validate()?;
    if macros.is_empty() {
        return Err(HrlError::Topology("macro set is empty".into()));
    }
    let plans = plan(config.topology);
    let index = |name: &str| plans.iter().position(|p| p.name == name).expect("planned node");
    let mut owner = vec![None; macros.len()];
    for (pi, p) in plans.iter().enumerate() {
        for (mi, m) in macros.iter().enumerate() {
            if p.groups.contains(&m.group()) {
                owner[mi] = Some(pi);
            }
        }
    }
    if let Some(mi) = owner.iter().position(|o| o.is_none()) {
        return Err(HrlError::Topology(format!(
            "macro {} ({}) has no compatible leaf",
            macros[mi].id,
            macros[mi].describe()
        )));
    }
    let mut nodes = Vec::with_capacity(plans.len());
    for (pi, p) in plans.iter().enumerate() {
        let leaf = p.children.is_empty();
        let (kind, noop_action) = if leaf {
            let mine: Vec<usize> = (0..macros.len()).filter(|&mi| owner[mi] == Some(pi)).collect();
            if mine.is_empty() && config.no_leaf_noop {
                return Err(HrlError::Topology(format!("leaf `{}` has no macro-actions", p.name)));
            }
            let noop = (!config.no_leaf_noop).then_some(mine.len());
            (NodeKind::Leaf { macros: mine }, noop)
        } else {
            let children = p.children.iter().map(|c| index(c)).collect();
            (NodeKind::Internal { children }, None)
        };
        let actions = match &kind {
            NodeKind::Internal { children } => children.len(),
            NodeKind::Leaf { macros } => macros.len() + noop_action.is_some() as usize,
        };
        let spec = node_spec(config, leaf, actions);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.init_seed, name_hash(p.name)));
        let net = Network::new(spec, &mut rng)?;
        let adam = AdamState::new(net.param_count());
        nodes.push(PolicyNode {
            name: p.name.to_string(),
            kind,
            role: p.role,
            net,
            adam,
            noop_action,
        });
    }
    Ok(Hierarchy {
        config: config.clone(),
        macros: macros.to_vec(),
        nodes,
        root: 0,
    })
}

/// The flat baseline: one policy over the whole macro set.
pub fn single_policy_baseline(config: &HierarchyConfig, macros: &[MacroAction]) -> Result<Hierarchy, HrlError> {
    let config = HierarchyConfig {
        topology: TopologyKind::Flat,
        ..config.clone()
    };
    build_topology(&config, macros)
}

impl Hierarchy {
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node(&self, name: &str) -> Option<&PolicyNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    /// Which leaf owns each macro (by macro position).
    pub fn macro_owner(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.macros.len()];
        for (ni, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Leaf { macros } = &n.kind {
                for &m in macros {
                    owner[m] = Some(ni);
                }
            }
        }
        owner
    }
}

/// Opponent and horizon of training or evaluation games.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub engine: EngineConfig,
    pub difficulty: u8,
    pub max_ticks: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            engine: EngineConfig::default(),
            difficulty: 1,
            max_ticks: 4800,
        }
    }
}

impl EnvConfig {
    pub fn new_game(&self, seed: u64) -> Result<GameState, HrlError> {
        let opp = DifficultyConfig::level(self.difficulty)?;
        Ok(GameState::new(self.engine.clone(), seed, None, &opp, self.max_ticks)?)
    }
}

/// One internal-node decision window: the chosen child and the rewards of its decisions, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    pub child: usize,
    pub child_rewards: Vec<f64>,
}

/// Everything one node did during an episode. `windows` is aligned with `transitions` for
/// internal nodes and empty for leaves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeTrajectory {
    pub transitions: Vec<Transition>,
    pub windows: Vec<WindowRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub outcome: Outcome,
    pub ticks: u32,
    pub leaf_decisions: usize,
    pub trajectories: Vec<NodeTrajectory>,
}

/// Sum in order, starting from zero.
pub fn window_sum(rewards: &[f64]) -> f64 {
    rewards.iter().fold(0.0, |s, r| s + r)
}

const NOOP_MACRO: &str = "noop";

struct Episode<'a> {
    h: &'a Hierarchy,
    reward: &'a RewardSpec,
    state: GameState,
    resolver: DefaultResolver,
    rng: ChaCha8Rng,
    greedy: bool,
    trajectories: Vec<NodeTrajectory>,
    leaf_decisions: usize,
    noop: MacroAction,
}

impl Episode<'_> {
    /// One decision of `ni`; returns the reward credited to it.
    fn decide(&mut self, ni: usize) -> Result<f64, HrlError> {
        let node = &self.h.nodes[ni];
        let obs = node.observe(&self.state, 0);
        let d = act(&node.net, &obs, self.greedy, &mut self.rng)?;
        let slot = self.trajectories[ni].transitions.len();
        self.trajectories[ni].transitions.push(Transition {
            obs,
            action: d.action,
            log_prob: d.log_prob,
            value: d.value,
            reward: 0.0,
            done: false,
        });
        let reward = match &node.kind {
            NodeKind::Leaf { macros } => {
                let mac = match macros.get(d.action) {
                    Some(&m) => &self.h.macros[m],
                    None => &self.noop,
                };
                let before = RewardSnapshot::capture(&self.state, 0);
                execute_macro(&mut self.state, mac, &mut self.resolver)?;
                self.leaf_decisions += 1;
                let after = RewardSnapshot::capture(&self.state, 0);
                let terminal = self
                    .state
                    .is_terminal()
                    .then(|| (self.state.outcome, self.state.minutes()));
                self.reward.step_reward(&before, &after, node.role, terminal)
            }
            NodeKind::Internal { children } => {
                let child = children[d.action];
                self.trajectories[ni].windows.push(WindowRecord {
                    child,
                    child_rewards: Vec::new(),
                });
                let mut rewards = Vec::with_capacity(self.h.config.k);
                for _ in 0..self.h.config.k {
                    if self.state.is_terminal() {
                        break;
                    }
                    rewards.push(self.decide(child)?);
                }
                let sum = window_sum(&rewards);
                self.trajectories[ni].windows[slot].child_rewards = rewards;
                sum
            }
        };
        self.trajectories[ni].transitions[slot].reward = reward;
        Ok(reward)
    }
}

/// Play one game as player 0 against the configured scripted opponent.
pub fn run_episode(
    h: &Hierarchy,
    env: &EnvConfig,
    reward: &RewardSpec,
    seed: u64,
    greedy: bool,
) -> Result<EpisodeResult, HrlError> {
    let state = env.new_game(seed)?;
    let resolver = DefaultResolver::new(&state, 0);
    let mut ep = Episode {
        h,
        reward,
        state,
        resolver,
        rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x00e9_150d_e000_0001)),
        greedy,
        trajectories: vec![NodeTrajectory::default(); h.nodes.len()],
        leaf_decisions: 0,
        noop: MacroAction {
            id: usize::MAX,
            steps: vec![NOOP_MACRO.parse::<Token>().expect("noop token")],
            support: 0,
        },
    };
    while !ep.state.is_terminal() {
        ep.decide(h.root)?;
    }
    for t in &mut ep.trajectories {
        if let Some(last) = t.transitions.last_mut() {
            last.done = true;
        }
    }
    Ok(EpisodeResult {
        seed,
        outcome: ep.state.outcome,
        ticks: ep.state.tick,
        leaf_decisions: ep.leaf_decisions,
        trajectories: ep.trajectories,
    })
}

/// Uniform choice helper shared by the baselines.
pub(crate) fn uniform<R: Rng>(rng: &mut R, n: usize) -> usize {
    rng.gen_range(0..n)
}
