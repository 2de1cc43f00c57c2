//! Feedforward function approximators: categorical policies and scalar values.
//!
//! Dense layers with ReLU, exact reverse-mode gradients, Adam, and bit-exact text checkpoints.

mod checkpoint;
mod net;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use net::{
    backward, forward_policy, forward_value, log_softmax, softmax, Gradients, Head, Loss, NetSpec, Network,
    OutputGrads, Outputs, Params, DEFAULT_HIDDEN,
};

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("{what} has length {got}, expected {expected}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("non-finite gradient at index {0}")]
    NonFinite(usize),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Adam moment estimates. `step` counts completed updates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam descent step. Rejects non-finite gradients without touching the parameters.
pub fn adam_step(params: &mut Params, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<(), ApproxError> {
    let n = params.values.len();
    for (what, got) in [("gradient", grads.values.len()), ("adam m", state.m.len()), ("adam v", state.v.len())] {
        if got != n {
            return Err(ApproxError::Dimension { what, expected: n, got });
        }
    }
    if let Some(i) = grads.values.iter().position(|g| !g.is_finite()) {
        return Err(ApproxError::NonFinite(i));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..n {
        let g = grads.values[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params.values[i] -= lr * mh / (vh.sqrt() + state.eps);
    }
    Ok(())
}
