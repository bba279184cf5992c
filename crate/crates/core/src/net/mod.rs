//! Policy-value network `(p, v) = f(s)`.
//!
//! A shared trunk of three same-padded convolutions feeds two heads:
//!
//! * policy: 1×1 conv → fully connected → one logit per upper-triangle
//!   pivot, masked softmax over legal pivots;
//! * value: 1×1 conv → fully connected → ReLU → fully connected → `tanh`.
//!
//! All convolutions and the value hidden layer use ReLU.

mod checkpoint;
mod layers;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::num_actions;
use crate::error::{Error, Result};
use layers::{conv_backward, conv_forward, dense_backward, dense_forward, relu_backward, relu_in_place};

pub use checkpoint::{CHECKPOINT_VERSION, load_checkpoint, save_checkpoint};
pub use optim::{Optimizer, OptimizerKind, sgd_step};

/// Floor applied to probabilities inside `log`.
pub const PROB_FLOOR: f64 = 1e-12;

/// Layer sizes. Channel counts and hidden width are free parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub n: usize,
    /// Output channels of the three trunk convolutions.
    pub trunk_channels: [usize; 3],
    pub kernel: usize,
    pub policy_channels: usize,
    pub value_channels: usize,
    pub value_hidden: usize,
}

impl Arch {
    pub fn standard(n: usize) -> Self {
        Self { n, trunk_channels: [32, 64, 128], kernel: 3, policy_channels: 4, value_channels: 2, value_hidden: 64 }
    }

    pub fn num_actions(&self) -> usize {
        num_actions(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("network order must be >= 2"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid("kernel size must be odd"));
        }
        if self.trunk_channels.contains(&0) || self.policy_channels == 0 || self.value_channels == 0 || self.value_hidden == 0
        {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    /// `(name, shape, is_bias)` for each tensor in storage order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>, bool)> {
        let [c1, c2, c3] = self.trunk_channels;
        let (k, hw) = (self.kernel, self.n * self.n);
        let (p, v, h, na) = (self.policy_channels, self.value_channels, self.value_hidden, self.num_actions());
        let layer = |name: &str, w: Vec<usize>, b: usize| {
            [(format!("{name}.weight"), w, false), (format!("{name}.bias"), vec![b], true)]
        };
        [
            layer("conv1", vec![c1, 1, k, k], c1),
            layer("conv2", vec![c2, c1, k, k], c2),
            layer("conv3", vec![c3, c2, k, k], c3),
            layer("conv4", vec![p, c3, 1, 1], p),
            layer("fc0", vec![na, p * hw], na),
            layer("conv5", vec![v, c3, 1, 1], v),
            layer("fc1", vec![h, v * hw], h),
            layer("fc2", vec![1, h], 1),
        ]
        .into_iter()
        .flatten()
        .collect()
    }
}

// tensor slots in manifest order
const CONV1: usize = 0;
const CONV2: usize = 2;
const CONV3: usize = 4;
const CONV4: usize = 6;
const FC0: usize = 8;
const CONV5: usize = 10;
const FC1: usize = 12;
const FC2: usize = 14;
#[cfg(test)]
const NUM_TENSORS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub is_bias: bool,
    pub data: Vec<f64>,
}

/// Network weights. Also used to hold gradients of the same shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub arch: Arch,
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Extra factor on the output-layer ranges (`fc0`, `fc2`) so a fresh
    /// network starts near the uniform policy and zero value.
    pub head_gain: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { head_gain: 0.1 }
    }
}

impl NetParams {
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        let tensors = arch
            .manifest()
            .into_iter()
            .map(|(name, shape, is_bias)| {
                let len = shape.iter().product();
                Tensor { name, shape, is_bias, data: vec![0.0; len] }
            })
            .collect();
        Ok(Self { arch, tensors })
    }

    /// Weights uniform in `±√(6/(fan_in+fan_out))`, biases zero.
    pub fn init(arch: Arch, seed: u64, cfg: InitConfig) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (idx, t) in p.tensors.iter_mut().enumerate() {
            if t.is_bias {
                continue;
            }
            let receptive: usize = t.shape[2..].iter().product();
            let fan_in = t.shape[1] * receptive;
            let fan_out = t.shape[0] * receptive;
            let mut bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if idx == FC0 || idx == FC2 {
                bound *= cfg.head_gain;
            }
            for w in &mut t.data {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in &mut z.tensors {
            t.data.fill(0.0);
        }
        z
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Checks tensor shapes against the architecture and finiteness.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let manifest = self.arch.manifest();
        if manifest.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch {
                tensor: "<layer count>".into(),
                expected: vec![manifest.len()],
                got: vec![self.tensors.len()],
            });
        }
        for ((name, shape, _), t) in manifest.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch { tensor: name.clone(), expected: shape.clone(), got: t.shape.clone() });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("tensor {name} has non-finite values")));
            }
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &NetParams) -> Result<()> {
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape != b.shape || a.data.len() != b.data.len() {
                return Err(Error::ShapeMismatch { tensor: a.name.clone(), expected: a.shape.clone(), got: b.shape.clone() });
            }
        }
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::ShapeMismatch {
                tensor: "<layer count>".into(),
                expected: vec![self.tensors.len()],
                got: vec![other.tensors.len()],
            });
        }
        Ok(())
    }

    /// `Σ θ²` over weight tensors (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.tensors.iter().filter(|t| !t.is_bias).flat_map(|t| &t.data).map(|w| w * w).sum()
    }

    /// `Σ θ²` over every tensor.
    pub fn sq_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| &t.data).map(|w| w * w).sum()
    }

    /// `‖self − other‖₂`.
    pub fn distance(&self, other: &NetParams) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .tensors
            .iter()
            .zip(&other.tensors)
            .flat_map(|(a, b)| a.data.iter().zip(&b.data))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    }

    fn add_assign(&mut self, other: &NetParams) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x *= s;
            }
        }
    }

    fn w(&self, slot: usize) -> &[f64] {
        &self.tensors[slot].data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetOutput {
    /// Probability per flat action; zero off the legal mask.
    pub p: Vec<f64>,
    pub v: f64,
}

/// Activations retained for backpropagation.
struct Trace {
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
    ph: Vec<f64>,
    vh: Vec<f64>,
    h1: Vec<f64>,
    p: Vec<f64>,
    v: f64,
}

fn check_inputs(params: &NetParams, state: &[f64], mask: &[bool]) -> Result<()> {
    let arch = &params.arch;
    if state.len() != arch.n * arch.n {
        return Err(Error::ShapeMismatch { tensor: "state".into(), expected: vec![arch.n, arch.n], got: vec![state.len()] });
    }
    if mask.len() != arch.num_actions() {
        return Err(Error::ShapeMismatch { tensor: "legal_mask".into(), expected: vec![arch.num_actions()], got: vec![mask.len()] });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits.iter().zip(mask).filter(|(_, m)| **m).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().zip(mask).map(|(l, &m)| if m { (l - max).exp() } else { 0.0 }).collect();
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    p
}

fn forward_trace(params: &NetParams, state: &[f64], mask: &[bool]) -> Trace {
    let arch = &params.arch;
    let (n, k) = (arch.n, arch.kernel);
    let hw = n * n;
    let [c1, c2, c3] = arch.trunk_channels;
    let (pc, vc, h) = (arch.policy_channels, arch.value_channels, arch.value_hidden);

    let mut a1 = vec![0.0; c1 * hw];
    conv_forward(state, 1, n, params.w(CONV1), params.w(CONV1 + 1), c1, k, &mut a1);
    relu_in_place(&mut a1);
    let mut a2 = vec![0.0; c2 * hw];
    conv_forward(&a1, c1, n, params.w(CONV2), params.w(CONV2 + 1), c2, k, &mut a2);
    relu_in_place(&mut a2);
    let mut a3 = vec![0.0; c3 * hw];
    conv_forward(&a2, c2, n, params.w(CONV3), params.w(CONV3 + 1), c3, k, &mut a3);
    relu_in_place(&mut a3);

    let mut ph = vec![0.0; pc * hw];
    conv_forward(&a3, c3, n, params.w(CONV4), params.w(CONV4 + 1), pc, 1, &mut ph);
    relu_in_place(&mut ph);
    let mut logits = vec![0.0; arch.num_actions()];
    dense_forward(&ph, params.w(FC0), params.w(FC0 + 1), &mut logits);
    let p = masked_softmax(&logits, mask);

    let mut vh = vec![0.0; vc * hw];
    conv_forward(&a3, c3, n, params.w(CONV5), params.w(CONV5 + 1), vc, 1, &mut vh);
    relu_in_place(&mut vh);
    let mut h1 = vec![0.0; h];
    dense_forward(&vh, params.w(FC1), params.w(FC1 + 1), &mut h1);
    relu_in_place(&mut h1);
    let mut out = [0.0];
    dense_forward(&h1, params.w(FC2), params.w(FC2 + 1), &mut out);
    let v = out[0].tanh();

    Trace { a1, a2, a3, ph, vh, h1, p, v }
}

/// Evaluates the network on one encoded state.
pub fn forward(params: &NetParams, state: &[f64], legal_mask: &[bool]) -> Result<NetOutput> {
    check_inputs(params, state, legal_mask)?;
    let t = forward_trace(params, state, legal_mask);
    Ok(NetOutput { p: t.p, v: t.v })
}

/// Supervised targets for the network.
#[derive(Debug, Clone, Default)]
pub struct TrainBatch {
    pub states: Vec<Vec<f64>>,
    pub legal_masks: Vec<Vec<bool>>,
    pub target_policies: Vec<Vec<f64>>,
    pub target_values: Vec<f64>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: Vec<f64>, mask: Vec<bool>, pi: Vec<f64>, z: f64) {
        self.states.push(state);
        self.legal_masks.push(mask);
        self.target_policies.push(pi);
        self.target_values.push(z);
    }

    pub fn validate(&self, arch: &Arch) -> Result<()> {
        let b = self.states.len();
        if self.legal_masks.len() != b || self.target_policies.len() != b || self.target_values.len() != b {
            return Err(Error::invalid("batch components have different lengths"));
        }
        if b == 0 {
            return Err(Error::invalid("empty batch"));
        }
        for (idx, pi) in self.target_policies.iter().enumerate() {
            if pi.len() != arch.num_actions() {
                return Err(Error::ShapeMismatch {
                    tensor: format!("target_policies[{idx}]"),
                    expected: vec![arch.num_actions()],
                    got: vec![pi.len()],
                });
            }
            let sum: f64 = pi.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || pi.iter().any(|&x| x < 0.0) {
                return Err(Error::invalid(format!("target policy {idx} is not a distribution")));
            }
        }
        Ok(())
    }
}

/// Per-example `(z − v)² − Σ π log max(p, ε)`.
fn example_loss(p: &[f64], v: f64, pi: &[f64], z: f64) -> f64 {
    let ce: f64 = pi.iter().zip(p).filter(|(t, _)| **t > 0.0).map(|(t, q)| -t * q.max(PROB_FLOOR).ln()).sum();
    (z - v) * (z - v) + ce
}

/// Mean loss over the batch plus `c_reg · Σ θ²` over weights.
pub fn loss(params: &NetParams, batch: &TrainBatch, c_reg: f64) -> Result<f64> {
    batch.validate(&params.arch)?;
    if c_reg < 0.0 {
        return Err(Error::invalid("c_reg must be non-negative"));
    }
    for (s, m) in batch.states.iter().zip(&batch.legal_masks) {
        check_inputs(params, s, m)?;
    }
    let total: f64 = (0..batch.len())
        .into_par_iter()
        .map(|b| {
            let out = forward_trace(params, &batch.states[b], &batch.legal_masks[b]);
            example_loss(&out.p, out.v, &batch.target_policies[b], batch.target_values[b])
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / batch.len() as f64 + c_reg * params.weight_sq_norm())
}

/// Accumulates the gradient of one example's unregularized loss into `g`
/// and returns that loss.
fn backprop_example(params: &NetParams, state: &[f64], mask: &[bool], pi: &[f64], z: f64, g: &mut NetParams) -> f64 {
    let arch = &params.arch;
    let (n, k) = (arch.n, arch.kernel);
    let hw = n * n;
    let [c1, c2, c3] = arch.trunk_channels;
    let (pc, vc) = (arch.policy_channels, arch.value_channels);
    let t = forward_trace(params, state, mask);
    let l = example_loss(&t.p, t.v, pi, z);

    // policy head: d/dlogit_k = p_k · S − π_k over unclamped targets
    let unclamped = |a: usize| pi[a] > 0.0 && t.p[a] >= PROB_FLOOR;
    let s: f64 = (0..pi.len()).filter(|&a| unclamped(a)).map(|a| pi[a]).sum();
    let dlogits: Vec<f64> = (0..pi.len())
        .map(|a| if mask[a] { t.p[a] * s - if unclamped(a) { pi[a] } else { 0.0 } } else { 0.0 })
        .collect();
    let mut dph = vec![0.0; pc * hw];
    {
        let (dw, db) = split_grad(g, FC0);
        dense_backward(&t.ph, params.w(FC0), &dlogits, dw, db, Some(&mut dph));
    }
    relu_backward(&t.ph, &mut dph);
    let mut da3 = vec![0.0; c3 * hw];
    {
        let (dw, db) = split_grad(g, CONV4);
        conv_backward(&t.a3, c3, n, params.w(CONV4), pc, 1, &dph, dw, db, Some(&mut da3));
    }

    // value head
    let dv = 2.0 * (t.v - z);
    let du = [dv * (1.0 - t.v * t.v)];
    let mut dh1 = vec![0.0; arch.value_hidden];
    {
        let (dw, db) = split_grad(g, FC2);
        dense_backward(&t.h1, params.w(FC2), &du, dw, db, Some(&mut dh1));
    }
    relu_backward(&t.h1, &mut dh1);
    let mut dvh = vec![0.0; vc * hw];
    {
        let (dw, db) = split_grad(g, FC1);
        dense_backward(&t.vh, params.w(FC1), &dh1, dw, db, Some(&mut dvh));
    }
    relu_backward(&t.vh, &mut dvh);
    let mut da3_v = vec![0.0; c3 * hw];
    {
        let (dw, db) = split_grad(g, CONV5);
        conv_backward(&t.a3, c3, n, params.w(CONV5), vc, 1, &dvh, dw, db, Some(&mut da3_v));
    }
    for (a, b) in da3.iter_mut().zip(&da3_v) {
        *a += b;
    }

    // trunk
    relu_backward(&t.a3, &mut da3);
    let mut da2 = vec![0.0; c2 * hw];
    {
        let (dw, db) = split_grad(g, CONV3);
        conv_backward(&t.a2, c2, n, params.w(CONV3), c3, k, &da3, dw, db, Some(&mut da2));
    }
    relu_backward(&t.a2, &mut da2);
    let mut da1 = vec![0.0; c1 * hw];
    {
        let (dw, db) = split_grad(g, CONV2);
        conv_backward(&t.a1, c1, n, params.w(CONV2), c2, k, &da2, dw, db, Some(&mut da1));
    }
    relu_backward(&t.a1, &mut da1);
    {
        let (dw, db) = split_grad(g, CONV1);
        conv_backward(state, 1, n, params.w(CONV1), c1, k, &da1, dw, db, None);
    }
    l
}

fn split_grad(g: &mut NetParams, slot: usize) -> (&mut [f64], &mut [f64]) {
    let (w, b) = g.tensors[slot..slot + 2].split_at_mut(1);
    (&mut w[0].data, &mut b[0].data)
}

/// Examples per parallel work unit. Fixed so the summation order, and hence
/// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Loss and its analytic gradient.
pub fn loss_and_grad(params: &NetParams, batch: &TrainBatch, c_reg: f64) -> Result<(f64, NetParams)> {
    batch.validate(&params.arch)?;
    if c_reg < 0.0 {
        return Err(Error::invalid("c_reg must be non-negative"));
    }
    for (s, m) in batch.states.iter().zip(&batch.legal_masks) {
        check_inputs(params, s, m)?;
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let partials: Vec<(f64, NetParams)> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            let mut l = 0.0;
            for &b in chunk {
                l += backprop_example(
                    params,
                    &batch.states[b],
                    &batch.legal_masks[b],
                    &batch.target_policies[b],
                    batch.target_values[b],
                    &mut g,
                );
            }
            (l, g)
        })
        .collect();
    let mut grad = params.zeros_like();
    let mut total = 0.0;
    for (l, g) in &partials {
        total += l;
        grad.add_assign(g);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.scale(inv);
    for (gt, pt) in grad.tensors.iter_mut().zip(&params.tensors) {
        if !pt.is_bias {
            for (gv, pv) in gt.data.iter_mut().zip(&pt.data) {
                *gv += 2.0 * c_reg * pv;
            }
        }
    }
    Ok((total * inv + c_reg * params.weight_sq_norm(), grad))
}

pub fn grad(params: &NetParams, batch: &TrainBatch, c_reg: f64) -> Result<NetParams> {
    loss_and_grad(params, batch, c_reg).map(|(_, g)| g)
}
