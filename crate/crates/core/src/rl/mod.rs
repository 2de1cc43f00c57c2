//! Proximal policy optimization with generalized advantage estimation.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{adam_step, log_softmax, AdamState, ApproxError, Loss, Network, OutputGrads, Outputs};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid PPO config: {0}")]
    Config(String),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("rollout is empty")]
    EmptyRollout,
}

/// One environment step of a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Joint action index; factors are mixed-radix with the first factor most significant.
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Episode ended after this step.
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    /// Value loss coefficient.
    pub c1: f64,
    /// Entropy bonus coefficient.
    pub c2: f64,
    pub lr: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub episodes_per_update: usize,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 0.01,
            lr: 3e-4,
            minibatch: 64,
            epochs: 4,
            episodes_per_update: 8,
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
        }
    }
}

impl PpoConfig {
    /// Settings used for the two-layer hierarchy runs.
    pub fn paper_two_layer() -> Self {
        PpoConfig {
            gamma: 1.0,
            lambda: 1.0,
            clip_eps: 0.1,
            c1: 0.01,
            c2: 1e-5,
            lr: 1e-4,
            minibatch: 64,
            epochs: 20,
            episodes_per_update: 100,
            normalize_advantages: true,
            max_grad_norm: None,
        }
    }

    /// Settings used for the final three-layer hierarchy runs.
    pub fn paper_final_three_layer() -> Self {
        PpoConfig {
            gamma: 0.9995,
            lambda: 0.9995,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 1e-3,
            lr: 1e-4,
            minibatch: 512,
            epochs: 10,
            episodes_per_update: 1000,
            normalize_advantages: true,
            max_grad_norm: None,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "paper-2layer" => Some(Self::paper_two_layer()),
            "paper-final3" => Some(Self::paper_final_three_layer()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.c1 < 0.0 || self.c2 < 0.0 || !(self.lr > 0.0) {
            return bad("coefficients must be non-negative and lr positive");
        }
        if self.minibatch == 0 || self.epochs == 0 || self.episodes_per_update == 0 {
            return bad("minibatch, epochs and episodes_per_update must be >= 1");
        }
        Ok(())
    }
}

/// Advantages and discounted returns for a flat sequence of steps.
///
/// `values` has one more entry than `rewards`: the bootstrap value after the last step
/// (ignored when that step is terminal).
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values must include the bootstrap value");
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * not_done - values[t];
        gae = delta + gamma * lambda * not_done * gae;
        adv[t] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Advantages and returns for a rollout of whole or truncated episodes.
pub fn rollout_targets(rollout: &[Transition], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let rewards: Vec<f64> = rollout.iter().map(|t| t.reward).collect();
    let dones: Vec<bool> = rollout.iter().map(|t| t.done).collect();
    let mut values: Vec<f64> = rollout.iter().map(|t| t.value).collect();
    values.push(last_value);
    compute_gae(&rewards, &values, &dones, gamma, lambda)
}

/// Split a joint action index into per-factor indices.
pub fn decompose_action(mut joint: usize, factors: &[usize]) -> Vec<usize> {
    let mut out = vec![0; factors.len()];
    for (i, &k) in factors.iter().enumerate().rev() {
        out[i] = joint % k;
        joint /= k;
    }
    out
}

pub fn compose_action(parts: &[usize], factors: &[usize]) -> usize {
    parts.iter().zip(factors).fold(0, |acc, (&p, &k)| acc * k + p)
}

/// Log-probability of a joint action under concatenated per-factor logits.
pub fn joint_log_prob(logits: &[f64], factors: &[usize], action: usize) -> f64 {
    let parts = decompose_action(action, factors);
    let mut off = 0;
    let mut lp = 0.0;
    for (&k, &a) in factors.iter().zip(&parts) {
        lp += log_softmax(&logits[off..off + k])[a];
        off += k;
    }
    lp
}

/// Draw from a categorical distribution.
pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// A policy decision: sampled (or greedy) joint action, its log-probability and the value estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
}

pub fn act<R: Rng>(net: &Network, obs: &[f64], greedy: bool, rng: &mut R) -> Result<Decision, RlError> {
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).map_err(|e| RlError::Config(e.to_string()))?;
    let out = net.forward(&x)?;
    let factors = net.spec.head.factors().to_vec();
    let logits = out.logits.row(0).to_vec();
    let mut parts = Vec::with_capacity(factors.len());
    let mut off = 0;
    for &k in &factors {
        let lp = log_softmax(&logits[off..off + k]);
        let a = if greedy {
            // First maximum, for determinism.
            lp.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        } else {
            let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
            sample_categorical(&probs, rng)
        };
        parts.push(a);
        off += k;
    }
    let action = compose_action(&parts, &factors);
    Ok(Decision {
        action,
        log_prob: joint_log_prob(&logits, &factors, action),
        value: out.values.first().copied().unwrap_or(0.0),
    })
}

/// Clipped surrogate objective with value and entropy terms, averaged over a minibatch.
pub struct PpoLoss<'a> {
    pub factors: &'a [usize],
    pub actions: &'a [usize],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
    pub clip_eps: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Diagnostics from one loss evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl PpoLoss<'_> {
    pub fn evaluate_with_stats(&self, o: &Outputs) -> (f64, OutputGrads, LossStats) {
        let n = self.actions.len();
        let nf = n as f64;
        let width: usize = self.factors.iter().sum();
        let mut dlogits = Array2::zeros((n, width));
        let mut dvalues = Array1::zeros(o.values.len());
        let mut stats = LossStats::default();
        for i in 0..n {
            let row = o.logits.row(i).to_vec();
            let parts = decompose_action(self.actions[i], self.factors);
            let mut lps = Vec::with_capacity(self.factors.len());
            let mut log_prob = 0.0;
            let mut off = 0;
            for (&k, &a) in self.factors.iter().zip(&parts) {
                let lp = log_softmax(&row[off..off + k]);
                log_prob += lp[a];
                lps.push(lp);
                off += k;
            }
            let ratio = (log_prob - self.old_log_probs[i]).exp();
            let adv = self.advantages[i];
            let clipped = ratio.clamp(1.0 - self.clip_eps, 1.0 + self.clip_eps);
            let surrogate = (ratio * adv).min(clipped * adv);
            stats.policy_loss -= surrogate / nf;
            stats.approx_kl += (self.old_log_probs[i] - log_prob) / nf;
            let is_clipped = (adv > 0.0 && ratio > 1.0 + self.clip_eps) || (adv < 0.0 && ratio < 1.0 - self.clip_eps);
            if is_clipped {
                stats.clip_fraction += 1.0 / nf;
            }
            // d(-surrogate)/d(log_prob)
            let g_lp = if is_clipped { 0.0 } else { -ratio * adv / nf };
            let mut off = 0;
            for ((&k, &a), lp) in self.factors.iter().zip(&parts).zip(&lps) {
                let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
                let h: f64 = -probs.iter().zip(lp).map(|(p, l)| p * l).sum::<f64>();
                stats.entropy += h / nf;
                for j in 0..k {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    let d_entropy = -probs[j] * (lp[j] + h);
                    dlogits[[i, off + j]] = g_lp * (onehot - probs[j]) - self.c2 * d_entropy / nf;
                }
                off += k;
            }
            if !o.values.is_empty() {
                let err = o.values[i] - self.returns[i];
                stats.value_loss += err * err / nf;
                dvalues[i] = 2.0 * self.c1 * err / nf;
            }
        }
        let total = stats.policy_loss + self.c1 * stats.value_loss - self.c2 * stats.entropy;
        (
            total,
            OutputGrads {
                logits: dlogits,
                values: dvalues,
            },
            stats,
        )
    }
}

impl Loss for PpoLoss<'_> {
    fn evaluate(&self, outputs: &Outputs) -> (f64, OutputGrads) {
        let (l, g, _) = self.evaluate_with_stats(outputs);
        (l, g)
    }
}

/// Mean diagnostics over every minibatch of an update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub minibatches: usize,
    pub skipped: usize,
}

/// Run `cfg.epochs` passes of minibatch Adam over the rollout.
pub fn ppo_update<R: Rng>(
    net: &mut Network,
    adam: &mut AdamState,
    rollout: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    cfg.validate()?;
    if rollout.is_empty() {
        return Err(RlError::EmptyRollout);
    }
    let n = rollout.len();
    let mut adv = advantages.to_vec();
    if cfg.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt() + 1e-8;
        adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }
    let factors = net.spec.head.factors().to_vec();
    let dim = net.spec.input_dim;
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mut obs = Array2::zeros((chunk.len(), dim));
            for (r, &i) in chunk.iter().enumerate() {
                if rollout[i].obs.len() != dim {
                    return Err(ApproxError::Dimension {
                        what: "observation",
                        expected: dim,
                        got: rollout[i].obs.len(),
                    }
                    .into());
                }
                obs.row_mut(r).assign(&ndarray::ArrayView1::from(&rollout[i].obs));
            }
            let actions: Vec<usize> = chunk.iter().map(|&i| rollout[i].action).collect();
            let old: Vec<f64> = chunk.iter().map(|&i| rollout[i].log_prob).collect();
            let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            let ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
            let loss = PpoLoss {
                factors: &factors,
                actions: &actions,
                old_log_probs: &old,
                advantages: &a,
                returns: &ret,
                clip_eps: cfg.clip_eps,
                c1: cfg.c1,
                c2: cfg.c2,
            };
            let (outputs, cache) = net.forward_cached(&obs)?;
            let (_, out_grads, ls) = loss.evaluate_with_stats(&outputs);
            let mut grads = net.backward_cached(&cache, &out_grads);
            if let Some(max) = cfg.max_grad_norm {
                grads.clip_norm(max);
            }
            match adam_step(&mut net.params, &grads, adam, cfg.lr) {
                Ok(()) => {}
                Err(ApproxError::NonFinite(_)) => {
                    stats.skipped += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            }
            stats.minibatches += 1;
            stats.loss.policy_loss += ls.policy_loss;
            stats.loss.value_loss += ls.value_loss;
            stats.loss.entropy += ls.entropy;
            stats.loss.approx_kl += ls.approx_kl;
            stats.loss.clip_fraction += ls.clip_fraction;
        }
    }
    if stats.minibatches > 0 {
        let k = stats.minibatches as f64;
        stats.loss.policy_loss /= k;
        stats.loss.value_loss /= k;
        stats.loss.entropy /= k;
        stats.loss.approx_kl /= k;
        stats.loss.clip_fraction /= k;
    }
    Ok(stats)
}
