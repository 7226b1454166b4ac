//! Small dense networks over `f64` with hand-written reverse-mode gradients.
//!
//! Everything trainable in this crate (actor, critic, the two-head
//! state-to-goal model) is a plain fully connected net. Gradients are exact,
//! verified against central finite differences by [`gradient_check`].
//! Parameters are plain values: cloning a net snapshots it, and read-only
//! evaluation is safe from any thread.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest sigmoid output we ever return; keeps the discount head strictly
/// inside (0, 1) even for saturating inputs.
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

fn sigmoid(z: f64) -> f64 {
    let y = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, SIGMOID_CEIL)
}

/// Elementwise nonlinearity attached to a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    /// Logistic output in (0, 1); used by the discount head.
    Sigmoid,
    /// Tanh squashed into `[lo, hi]`; used by the actor to keep setpoints in
    /// their physical bounds.
    Bounded { lo: f64, hi: f64 },
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Bounded { lo, hi } => lo + 0.5 * (hi - lo) * (z.tanh() + 1.0),
        }
    }

    /// d(output)/d(pre-activation), given both pre-activation and output.
    fn slope(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => post * (1.0 - post),
            Activation::Bounded { lo, hi } => {
                let span = hi - lo;
                let t = 2.0 * (post - lo) / span - 1.0;
                0.5 * span * (1.0 - t * t)
            }
        }
    }
}

/// One dense layer; weights are row-major `[out_dim x in_dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    /// Fan-in scaled uniform init, zero biases.
    fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Layer {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    fn forward_into(&self, input: &[f64], pre: &mut [f64], post: &mut [f64]) {
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            pre[o] = z;
            post[o] = self.activation.apply(z);
        }
    }
}

/// Feedforward net: rectifier hidden layers, configurable output activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Builds a net with the given layer widths, e.g. `[15, 64, 64, 1]`.
    /// All layers but the last use rectifiers; the last uses `output`.
    pub fn new(dims: &[usize], output: Activation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { output } else { Activation::Relu };
                Layer::init(w[0], w[1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Checks the shape chain and parameter finiteness; used when loading
    /// checkpoints from disk.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("net has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::Shape(format!("layer {k} parameter sizes inconsistent")));
            }
            if k + 1 < self.layers.len() && self.layers[k + 1].in_dim != l.out_dim {
                return Err(Error::Shape(format!(
                    "layer {k} output dim {} does not feed layer {} input dim {}",
                    l.out_dim,
                    k + 1,
                    self.layers[k + 1].in_dim
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|p| !p.is_finite()) {
                return Err(Error::Numeric(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} components, net expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Plain evaluation; allocates the output vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut pre = Vec::new();
        for l in &self.layers {
            pre.resize(l.out_dim, 0.0);
            let mut next = vec![0.0; l.out_dim];
            l.forward_into(&cur, &mut pre, &mut next);
            cur = next;
        }
        Ok(cur)
    }

    /// Evaluation that records pre- and post-activations for backprop.
    /// The cache is reusable across calls to avoid per-sample allocation.
    pub fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) -> Result<()> {
        self.check_input(input)?;
        cache.fit(self);
        for (k, l) in self.layers.iter().enumerate() {
            // split_at_mut keeps the borrow checker happy about reading the
            // previous layer's output while writing the current one
            let (done, rest) = cache.post.split_at_mut(k);
            let src: &[f64] = if k == 0 { input } else { &done[k - 1] };
            l.forward_into(src, &mut cache.pre[k], &mut rest[0]);
        }
        Ok(())
    }

    /// Reverse-mode gradients of `dot(output, upstream)` w.r.t. parameters
    /// (accumulated into `grads`) and, optionally, w.r.t. the input.
    /// `cache` must come from a `forward_cached` call on the same input.
    pub fn backward_accumulate(
        &self,
        input: &[f64],
        cache: &mut ForwardCache,
        upstream: &[f64],
        grads: &mut Gradients,
        mut input_grad: Option<&mut Vec<f64>>,
    ) {
        debug_assert_eq!(upstream.len(), self.output_dim());
        debug_assert_eq!(grads.layers.len(), self.layers.len());
        let mut up = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let src: &[f64] = if k == 0 { input } else { &cache.post[k - 1] };
            let lg = &mut grads.layers[k];
            let mut down = vec![0.0; l.in_dim];
            for o in 0..l.out_dim {
                let delta = up[o] * l.activation.slope(cache.pre[k][o], cache.post[k][o]);
                if delta == 0.0 {
                    continue;
                }
                lg.biases[o] += delta;
                let row = &l.weights[o * l.in_dim..(o + 1) * l.in_dim];
                let grow = &mut lg.weights[o * l.in_dim..(o + 1) * l.in_dim];
                for i in 0..l.in_dim {
                    grow[i] += delta * src[i];
                    down[i] += delta * row[i];
                }
            }
            up = down;
        }
        if let Some(out) = input_grad.as_deref_mut() {
            out.clear();
            out.extend_from_slice(&up);
        }
    }

    /// Convenience wrapper returning fresh gradient and input-gradient values.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut cache = ForwardCache::new();
        self.forward_cached(input, &mut cache)?;
        let mut grads = Gradients::zeros_like(self);
        let mut igrad = Vec::new();
        self.backward_accumulate(input, &mut cache, upstream, &mut grads, Some(&mut igrad));
        Ok((grads, igrad))
    }

    /// Smallest |pre-activation| over all rectifier units for this input.
    /// Test code uses it to exclude kink-straddling points from finite
    /// difference checks.
    pub fn min_abs_relu_preactivation(&self, input: &[f64]) -> Result<f64> {
        let mut cache = ForwardCache::new();
        self.forward_cached(input, &mut cache)?;
        let mut m = f64::INFINITY;
        for (k, l) in self.layers.iter().enumerate() {
            if l.activation == Activation::Relu {
                for z in &cache.pre[k] {
                    m = m.min(z.abs());
                }
            }
        }
        Ok(m)
    }
}

/// Per-layer pre- and post-activation buffers, reusable across samples.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn fit(&mut self, net: &Mlp) {
        self.pre.resize(net.layers.len(), Vec::new());
        self.post.resize(net.layers.len(), Vec::new());
        for (k, l) in net.layers.iter().enumerate() {
            self.pre[k].resize(l.out_dim, 0.0);
            self.post[k].resize(l.out_dim, 0.0);
        }
    }

    pub fn output(&self) -> &[f64] {
        self.post.last().expect("forward_cached not run")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter gradients mirroring an [`Mlp`]'s layer structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for lg in &mut self.layers {
            lg.weights.iter_mut().for_each(|g| *g = 0.0);
            lg.biases.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for lg in &mut self.layers {
            lg.weights.iter_mut().for_each(|g| *g *= s);
            lg.biases.iter_mut().for_each(|g| *g *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|lg| lg.weights.iter().chain(&lg.biases).all(|g| g.is_finite()))
    }
}

/// Adam moments and hyperparameters; moment vectors are flat, in the same
/// order as the net's parameters (per layer: weights row-major, then biases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(learning_rate: f64, num_params: usize) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }
}

/// One Adam update with bias correction. Rejects non-finite gradients and
/// leaves both the parameters and the optimizer state untouched in that case.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, opt: &mut AdamState) -> Result<()> {
    if grads.layers.len() != net.layers.len() {
        return Err(Error::Shape("gradient layer count mismatch".into()));
    }
    if opt.m.len() != net.num_params() {
        return Err(Error::Shape("optimizer state does not match net".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient; update skipped".into()));
    }
    opt.step += 1;
    let c1 = 1.0 - opt.beta1.powi(opt.step as i32);
    let c2 = 1.0 - opt.beta2.powi(opt.step as i32);
    let mut idx = 0;
    for (layer, lg) in net.layers.iter_mut().zip(&grads.layers) {
        for (p, g) in layer
            .weights
            .iter_mut()
            .chain(layer.biases.iter_mut())
            .zip(lg.weights.iter().chain(lg.biases.iter()))
        {
            let m = &mut opt.m[idx];
            let v = &mut opt.v[idx];
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            *p -= opt.learning_rate * (*m / c1) / ((*v / c2).sqrt() + opt.epsilon);
            idx += 1;
        }
    }
    Ok(())
}

/// Central finite-difference check of `backward` on the scalar
/// `f = dot(forward(input), upstream)`. Returns the worst relative error over
/// all parameters; the denominator is floored so near-zero gradients compare
/// on an absolute scale.
pub fn gradient_check(net: &Mlp, input: &[f64], upstream: &[f64], fd_step: f64) -> f64 {
    let mut cache = ForwardCache::new();
    net.forward_cached(input, &mut cache).expect("shape");
    let mut grads = Gradients::zeros_like(net);
    net.backward_accumulate(input, &mut cache, upstream, &mut grads, None);

    let mut probe = net.clone();
    let eval = |net: &Mlp| -> f64 {
        net.forward(input)
            .expect("shape")
            .iter()
            .zip(upstream)
            .map(|(y, u)| y * u)
            .sum()
    };
    let mut worst = 0.0f64;
    for k in 0..net.layers.len() {
        let n_w = net.layers[k].weights.len();
        let n_b = net.layers[k].biases.len();
        for j in 0..n_w + n_b {
            let get = |l: &Layer, j: usize| if j < n_w { l.weights[j] } else { l.biases[j - n_w] };
            let set = |l: &mut Layer, j: usize, val: f64| {
                if j < n_w {
                    l.weights[j] = val;
                } else {
                    l.biases[j - n_w] = val;
                }
            };
            let orig = get(&probe.layers[k], j);
            set(&mut probe.layers[k], j, orig + fd_step);
            let f_plus = eval(&probe);
            set(&mut probe.layers[k], j, orig - fd_step);
            let f_minus = eval(&probe);
            set(&mut probe.layers[k], j, orig);
            let numeric = (f_plus - f_minus) / (2.0 * fd_step);
            let analytic = get_grad(&grads, k, j, n_w);
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}

fn get_grad(grads: &Gradients, layer: usize, j: usize, n_w: usize) -> f64 {
    if j < n_w {
        grads.layers[layer].weights[j]
    } else {
        grads.layers[layer].biases[j - n_w]
    }
}

// ---------------------------------------------------------------------------
// Two-head net: shared body, scalar reward head, sigmoid discount head.
// ---------------------------------------------------------------------------

/// Shared-body network with a scalar reward head and a sigmoid discount head.
/// Inputs are state features concatenated with normalized goal coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoHeadNet {
    pub body: Mlp,
    pub reward_head: Mlp,
    pub discount_head: Mlp,
}

#[derive(Debug, Clone, Default)]
pub struct TwoHeadCache {
    body: ForwardCache,
    reward: ForwardCache,
    discount: ForwardCache,
    head_grad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TwoHeadGrads {
    pub body: Gradients,
    pub reward: Gradients,
    pub discount: Gradients,
}

impl TwoHeadGrads {
    pub fn zeros_like(net: &TwoHeadNet) -> Self {
        TwoHeadGrads {
            body: Gradients::zeros_like(&net.body),
            reward: Gradients::zeros_like(&net.reward_head),
            discount: Gradients::zeros_like(&net.discount_head),
        }
    }

    pub fn zero(&mut self) {
        self.body.zero();
        self.reward.zero();
        self.discount.zero();
    }

    pub fn is_finite(&self) -> bool {
        self.body.is_finite() && self.reward.is_finite() && self.discount.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoHeadAdam {
    pub body: AdamState,
    pub reward: AdamState,
    pub discount: AdamState,
}

impl TwoHeadAdam {
    pub fn new(learning_rate: f64, net: &TwoHeadNet) -> Self {
        TwoHeadAdam {
            body: AdamState::new(learning_rate, net.body.num_params()),
            reward: AdamState::new(learning_rate, net.reward_head.num_params()),
            discount: AdamState::new(learning_rate, net.discount_head.num_params()),
        }
    }
}

impl TwoHeadNet {
    pub fn new(input_dim: usize, hidden: (usize, usize), rng: &mut impl Rng) -> Self {
        let body = Mlp::new(&[input_dim, hidden.0, hidden.1], Activation::Relu, rng);
        let reward_head = Mlp::new(&[hidden.1, 1], Activation::Identity, rng);
        let discount_head = Mlp::new(&[hidden.1, 1], Activation::Sigmoid, rng);
        TwoHeadNet {
            body,
            reward_head,
            discount_head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.body.input_dim()
    }

    /// Returns (reward estimate, discount estimate); discount is in (0, 1).
    pub fn forward(&self, input: &[f64]) -> Result<(f64, f64)> {
        let h = self.body.forward(input)?;
        let r = self.reward_head.forward(&h)?[0];
        let g = self.discount_head.forward(&h)?[0];
        Ok((r, g))
    }

    pub fn forward_cached(&self, input: &[f64], cache: &mut TwoHeadCache) -> Result<(f64, f64)> {
        self.body.forward_cached(input, &mut cache.body)?;
        let h = cache.body.output().to_vec();
        self.reward_head.forward_cached(&h, &mut cache.reward)?;
        self.discount_head.forward_cached(&h, &mut cache.discount)?;
        Ok((cache.reward.output()[0], cache.discount.output()[0]))
    }

    /// Accumulates gradients of `up_r * reward + up_g * discount`.
    pub fn backward_accumulate(
        &self,
        input: &[f64],
        cache: &mut TwoHeadCache,
        up_r: f64,
        up_g: f64,
        grads: &mut TwoHeadGrads,
    ) {
        let h = cache.body.output().to_vec();
        let mut hg_r = Vec::new();
        let mut hg_g = Vec::new();
        self.reward_head
            .backward_accumulate(&h, &mut cache.reward, &[up_r], &mut grads.reward, Some(&mut hg_r));
        self.discount_head.backward_accumulate(
            &h,
            &mut cache.discount,
            &[up_g],
            &mut grads.discount,
            Some(&mut hg_g),
        );
        cache.head_grad.clear();
        cache
            .head_grad
            .extend(hg_r.iter().zip(&hg_g).map(|(a, b)| a + b));
        let hg = std::mem::take(&mut cache.head_grad);
        self.body
            .backward_accumulate(input, &mut cache.body, &hg, &mut grads.body, None);
        cache.head_grad = hg;
    }
}

/// Adam step over all three parameter groups; all-or-nothing on finiteness.
pub fn two_head_adam_step(
    net: &mut TwoHeadNet,
    grads: &TwoHeadGrads,
    opt: &mut TwoHeadAdam,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient; update skipped".into()));
    }
    adam_step(&mut net.body, &grads.body, &mut opt.body)?;
    adam_step(&mut net.reward_head, &grads.reward, &mut opt.reward)?;
    adam_step(&mut net.discount_head, &grads.discount, &mut opt.discount)?;
    Ok(())
}

/// Finite-difference check for the two-head net on
/// `f = up_r * reward + up_g * discount`.
pub fn gradient_check_two_head(
    net: &TwoHeadNet,
    input: &[f64],
    up_r: f64,
    up_g: f64,
    fd_step: f64,
) -> f64 {
    let mut cache = TwoHeadCache::default();
    net.forward_cached(input, &mut cache).expect("shape");
    let mut grads = TwoHeadGrads::zeros_like(net);
    net.backward_accumulate(input, &mut cache, up_r, up_g, &mut grads);

    let eval = |net: &TwoHeadNet| -> f64 {
        let (r, g) = net.forward(input).expect("shape");
        up_r * r + up_g * g
    };
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for part in 0..3 {
        let analytic_part = match part {
            0 => &grads.body,
            1 => &grads.reward,
            _ => &grads.discount,
        };
        let n_layers = analytic_part.layers.len();
        for k in 0..n_layers {
            let n_w = analytic_part.layers[k].weights.len();
            let n_b = analytic_part.layers[k].biases.len();
            for j in 0..n_w + n_b {
                let read = |p: &TwoHeadNet| -> f64 {
                    let l = match part {
                        0 => &p.body.layers[k],
                        1 => &p.reward_head.layers[k],
                        _ => &p.discount_head.layers[k],
                    };
                    if j < n_w {
                        l.weights[j]
                    } else {
                        l.biases[j - n_w]
                    }
                };
                let write = |p: &mut TwoHeadNet, val: f64| {
                    let l = match part {
                        0 => &mut p.body.layers[k],
                        1 => &mut p.reward_head.layers[k],
                        _ => &mut p.discount_head.layers[k],
                    };
                    if j < n_w {
                        l.weights[j] = val;
                    } else {
                        l.biases[j - n_w] = val;
                    }
                };
                let orig = read(&probe);
                write(&mut probe, orig + fd_step);
                let f_plus = eval(&probe);
                write(&mut probe, orig - fd_step);
                let f_minus = eval(&probe);
                write(&mut probe, orig);
                let numeric = (f_plus - f_minus) / (2.0 * fd_step);
                let analytic = get_grad(analytic_part, k, j, n_w);
                let denom = analytic.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    worst
}
