use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ApproxError;

/// Output heads of a network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// Categorical policy; one normalized-exponential per factor.
    Policy { factors: Vec<usize> },
    /// Scalar value, no output nonlinearity.
    Value,
    /// Policy and value heads (actor-critic).
    PolicyValue { factors: Vec<usize> },
}

impl Head {
    pub fn factors(&self) -> &[usize] {
        match self {
            Head::Policy { factors } | Head::PolicyValue { factors } => factors,
            Head::Value => &[],
        }
    }

    pub fn has_policy(&self) -> bool {
        !matches!(self, Head::Value)
    }

    pub fn has_value(&self) -> bool {
        !matches!(self, Head::Policy { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
    /// Policy and value heads share the hidden layers (only meaningful for `PolicyValue`).
    pub shared_trunk: bool,
}

pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];

impl NetSpec {
    pub fn policy_value(input_dim: usize, actions: usize, shared_trunk: bool) -> Self {
        NetSpec {
            input_dim,
            hidden: DEFAULT_HIDDEN.to_vec(),
            head: Head::PolicyValue { factors: vec![actions] },
            shared_trunk,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    /// Width of the policy output (sum of factor sizes); 1 for a value-only net.
    pub fn output_dim(&self) -> usize {
        match &self.head {
            Head::Value => 1,
            h => h.factors().iter().sum(),
        }
    }

    /// Number of joint actions (product of factor sizes).
    pub fn joint_actions(&self) -> usize {
        self.head.factors().iter().product()
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        let bad = |m: &str| Err(ApproxError::Spec(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be >= 1");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be >= 1");
        }
        if self.head.has_policy() && (self.head.factors().is_empty() || self.head.factors().contains(&0)) {
            return bad("policy factors must be non-empty and >= 1");
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).param_count
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: usize,
    pub b: usize,
}

impl Dense {
    fn weights<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.input, self.output), &p[self.w..self.w + self.input * self.output]).unwrap()
    }
}

/// Parameter layout: an optional shared trunk feeding a policy chain and a value chain.
/// Every layer except the last of the policy/value chains is followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    pub trunk: Vec<Dense>,
    pub policy: Vec<Dense>,
    pub value: Vec<Dense>,
    pub param_count: usize,
}

impl Layout {
    pub fn new(spec: &NetSpec) -> Layout {
        let mut offset = 0;
        let mut chain = |dims: &[usize]| -> Vec<Dense> {
            dims.windows(2)
                .map(|w| {
                    let d = Dense {
                        input: w[0],
                        output: w[1],
                        w: offset,
                        b: offset + w[0] * w[1],
                    };
                    offset += w[0] * w[1] + w[1];
                    d
                })
                .collect()
        };
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden);
        let out = spec.output_dim();
        let (trunk, policy, value) = match &spec.head {
            Head::PolicyValue { .. } if spec.shared_trunk => {
                let trunk = chain(&dims);
                let last = *dims.last().unwrap();
                let policy = chain(&[last, out]);
                let value = chain(&[last, 1]);
                (trunk, policy, value)
            }
            head => {
                let policy = if head.has_policy() {
                    chain(&[dims.as_slice(), &[out]].concat())
                } else {
                    Vec::new()
                };
                let value = if head.has_value() {
                    chain(&[dims.as_slice(), &[1]].concat())
                } else {
                    Vec::new()
                };
                (Vec::new(), policy, value)
            }
        };
        Layout {
            trunk,
            policy,
            value,
            param_count: offset,
        }
    }
}

/// Flat parameter vector; offsets come from the owning [`Network`]'s layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub values: Vec<f64>,
    /// Initialization scheme tag, kept for provenance in checkpoints.
    pub init: String,
}

impl Params {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// FNV-1a over the bit patterns; used to compare parameter sets cheaply.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Gradient of a scalar loss with respect to [`Params::values`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Gradients { values: vec![0.0; n] }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescale so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            let k = max_norm / n;
            self.values.iter_mut().for_each(|g| *g *= k);
        }
    }
}

/// Batched network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    /// `n x output_dim` raw policy logits (empty for value-only nets).
    pub logits: Array2<f64>,
    /// Value per row (empty for policy-only nets).
    pub values: Array1<f64>,
}

/// Gradient of the batch loss with respect to [`Outputs`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputGrads {
    pub logits: Array2<f64>,
    pub values: Array1<f64>,
}

/// A differentiable scalar function of the network outputs (already averaged over the batch).
pub trait Loss {
    fn evaluate(&self, outputs: &Outputs) -> (f64, OutputGrads);
}

impl<F: Fn(&Outputs) -> (f64, OutputGrads)> Loss for F {
    fn evaluate(&self, outputs: &Outputs) -> (f64, OutputGrads) {
        self(outputs)
    }
}

struct ChainCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
}

pub(crate) struct Cache {
    trunk: ChainCache,
    policy: ChainCache,
    value: ChainCache,
}

fn run_chain(layers: &[Dense], p: &[f64], x: Array2<f64>, relu_last: bool) -> (Array2<f64>, ChainCache) {
    let mut cache = ChainCache {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut h = x;
    for (i, l) in layers.iter().enumerate() {
        let mut z = h.dot(&l.weights(p));
        z += &ArrayView2::from_shape((1, l.output), &p[l.b..l.b + l.output]).unwrap();
        let last = i + 1 == layers.len();
        let out = if !last || relu_last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
        cache.inputs.push(h);
        cache.pre.push(z);
        h = out;
    }
    (h, cache)
}

/// Backpropagate `grad` (w.r.t. the chain output) and return the gradient w.r.t. the chain input.
fn back_chain(
    layers: &[Dense],
    p: &[f64],
    cache: &ChainCache,
    mut grad: Array2<f64>,
    relu_last: bool,
    out: &mut [f64],
) -> Array2<f64> {
    for (i, l) in layers.iter().enumerate().rev() {
        let last = i + 1 == layers.len();
        if !last || relu_last {
            grad.zip_mut_with(&cache.pre[i], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
        }
        let gw = cache.inputs[i].t().dot(&grad);
        for (dst, src) in out[l.w..l.w + l.input * l.output].iter_mut().zip(gw.iter()) {
            *dst += src;
        }
        let gb = grad.sum_axis(Axis(0));
        for (dst, src) in out[l.b..l.b + l.output].iter_mut().zip(gb.iter()) {
            *dst += src;
        }
        grad = grad.dot(&l.weights(p).t());
    }
    grad
}

/// A network specification together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetSpec,
    pub params: Params,
    layout: Layout,
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random `rows x cols` matrix with orthonormal rows or columns (whichever is fewer), times `gain`.
fn orthogonal<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| gaussian(rng)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = gain * if rows <= cols { vecs[r][c] } else { vecs[c][r] };
        }
    }
    m
}

impl Network {
    pub const INIT_TAG: &'static str = "orthogonal(relu=sqrt2,policy=0.01,value=1)";

    /// Orthogonal-like initialization: hidden layers gain sqrt(2), policy output 0.01, value output 1; zero biases.
    pub fn new<R: Rng>(spec: NetSpec, rng: &mut R) -> Result<Network, ApproxError> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        let mut values = vec![0.0; layout.param_count];
        let mut init = |layers: &[Dense], out_gain: f64, values: &mut [f64]| {
            for (i, l) in layers.iter().enumerate() {
                let gain = if i + 1 == layers.len() { out_gain } else { 2f64.sqrt() };
                let w = orthogonal(l.input, l.output, gain, rng);
                values[l.w..l.w + w.len()].copy_from_slice(&w);
            }
        };
        init(&layout.trunk, 2f64.sqrt(), &mut values);
        init(&layout.policy, 0.01, &mut values);
        init(&layout.value, 1.0, &mut values);
        Ok(Network {
            spec,
            params: Params {
                values,
                init: Self::INIT_TAG.to_string(),
            },
            layout,
        })
    }

    pub fn zeros(spec: NetSpec) -> Result<Network, ApproxError> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        Ok(Network {
            params: Params {
                values: vec![0.0; layout.param_count],
                init: "zeros".to_string(),
            },
            spec,
            layout,
        })
    }

    pub fn from_params(spec: NetSpec, params: Params) -> Result<Network, ApproxError> {
        spec.validate()?;
        let layout = Layout::new(&spec);
        if params.values.len() != layout.param_count {
            return Err(ApproxError::Dimension {
                what: "parameter vector",
                expected: layout.param_count,
                got: params.values.len(),
            });
        }
        Ok(Network { spec, params, layout })
    }

    pub fn param_count(&self) -> usize {
        self.layout.param_count
    }

    fn check_input(&self, cols: usize) -> Result<(), ApproxError> {
        if cols != self.spec.input_dim {
            return Err(ApproxError::Dimension {
                what: "observation",
                expected: self.spec.input_dim,
                got: cols,
            });
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, obs: &Array2<f64>) -> Result<(Outputs, Cache), ApproxError> {
        self.check_input(obs.ncols())?;
        let p = &self.params.values;
        // An empty trunk passes the observation through unchanged.
        let (x, trunk) = run_chain(&self.layout.trunk, p, obs.clone(), true);
        let n = obs.nrows();
        let (logits, policy) = if self.layout.policy.is_empty() {
            (Array2::zeros((n, 0)), ChainCache { inputs: vec![], pre: vec![] })
        } else {
            run_chain(&self.layout.policy, p, x.clone(), false)
        };
        let (values, value) = if self.layout.value.is_empty() {
            (Array1::zeros(0), ChainCache { inputs: vec![], pre: vec![] })
        } else {
            let (v, c) = run_chain(&self.layout.value, p, x, false);
            (v.column(0).to_owned(), c)
        };
        Ok((Outputs { logits, values }, Cache { trunk, policy, value }))
    }

    /// Batched forward pass (rows are observations).
    pub fn forward(&self, obs: &Array2<f64>) -> Result<Outputs, ApproxError> {
        Ok(self.forward_cached(obs)?.0)
    }

    pub(crate) fn backward_cached(&self, cache: &Cache, grads: &OutputGrads) -> Gradients {
        let p = &self.params.values;
        let mut out = vec![0.0; self.layout.param_count];
        let mut d_shared: Option<Array2<f64>> = None;
        if !self.layout.policy.is_empty() {
            let g = back_chain(&self.layout.policy, p, &cache.policy, grads.logits.clone(), false, &mut out);
            d_shared = Some(g);
        }
        if !self.layout.value.is_empty() {
            let gv = grads.values.clone().insert_axis(Axis(1));
            let g = back_chain(&self.layout.value, p, &cache.value, gv, false, &mut out);
            d_shared = Some(match d_shared {
                Some(acc) => acc + g,
                None => g,
            });
        }
        if !self.layout.trunk.is_empty() {
            if let Some(g) = d_shared {
                back_chain(&self.layout.trunk, p, &cache.trunk, g, true, &mut out);
            }
        }
        Gradients { values: out }
    }

    /// Loss value and exact reverse-mode gradient for a batch.
    pub fn loss_and_grad(&self, obs: &Array2<f64>, loss: &dyn Loss) -> Result<(f64, Gradients), ApproxError> {
        let (outputs, cache) = self.forward_cached(obs)?;
        let (value, og) = loss.evaluate(&outputs);
        Ok((value, self.backward_cached(&cache, &og)))
    }

    /// Per-factor probability distributions for one observation, concatenated.
    pub fn policy(&self, obs: &[f64]) -> Result<Vec<f64>, ApproxError> {
        if !self.spec.head.has_policy() {
            return Err(ApproxError::Spec("network has no policy head".into()));
        }
        let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).unwrap();
        let out = self.forward(&x)?;
        let logits = out.logits.row(0);
        let mut probs = Vec::with_capacity(logits.len());
        let mut off = 0;
        for &k in self.spec.head.factors() {
            probs.extend(softmax(logits.slice(s![off..off + k]).as_slice().unwrap()));
            off += k;
        }
        Ok(probs)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, ApproxError> {
        if !self.spec.head.has_value() {
            return Err(ApproxError::Spec("network has no value head".into()));
        }
        let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).unwrap();
        Ok(self.forward(&x)?.values[0])
    }

    pub fn apply_gradients(&mut self, delta: &[f64]) {
        for (p, d) in self.params.values.iter_mut().zip(delta) {
            *p += d;
        }
    }
}

/// Numerically stable normalized exponential.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log softmax(logits)`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Probability distribution over actions for one observation.
pub fn forward_policy(net: &Network, obs: &[f64]) -> Result<Vec<f64>, ApproxError> {
    net.policy(obs)
}

pub fn forward_value(net: &Network, obs: &[f64]) -> Result<f64, ApproxError> {
    net.value(obs)
}

/// Exact gradient of the batch-mean `loss` with respect to the parameters.
pub fn backward(net: &Network, obs: &Array2<f64>, loss: &dyn Loss) -> Result<Gradients, ApproxError> {
    Ok(net.loss_and_grad(obs, loss)?.1)
}
