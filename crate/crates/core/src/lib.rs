//! Hierarchical reinforcement learning with mined macro-actions, trained and
//! evaluated against a deterministic micro-RTS simulator.

pub mod approx;
pub mod combat;
pub mod config;
pub mod curriculum;
pub mod engine;
pub mod hrl;
pub mod mining;
pub mod placement;
pub mod rewards;
pub mod rl;
