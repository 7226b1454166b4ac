//! Deterministic-policy actor-critic: replay buffer, target networks with
//! Polyak averaging, TD targets with optional potential-difference shaping,
//! and one Adam update per call for critic and actor.

use rand::rngs::StdRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsp::shape_reward;
use crate::nn::{adam_step, AdamState, Activation, ForwardCache, Gradients, Mlp};

/// One stored environment transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Episode the transition came from; with `step` this keys potential
    /// caches and trace reconstruction.
    pub episode: u32,
    pub step: u32,
}

/// Fixed-capacity FIFO ring of transitions with uniform batch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            data: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    /// Appends a transition, evicting the oldest once full.
    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Uniform sample of distinct slots. Errors when the buffer holds fewer
    /// transitions than requested.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut StdRng) -> Result<Vec<usize>> {
        if batch_size == 0 {
            return Err(Error::Usage("batch_size must be positive".into()));
        }
        if self.data.len() < batch_size {
            return Err(Error::Usage(format!(
                "cannot sample {batch_size} transitions from a buffer of {}",
                self.data.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.data.len(), batch_size).into_vec())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut StdRng) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.data[i])
            .collect())
    }
}

/// Agent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub noise_std: f64,
    pub batch_size: usize,
    pub learning_starts: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: (usize, usize),
    pub buffer_capacity: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            tau: 0.005,
            noise_std: 0.1,
            batch_size: 256,
            learning_starts: 1000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            hidden: (64, 64),
            buffer_capacity: 50_000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Validation("gamma must be in (0, 1]".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Validation("tau must be in (0, 1]".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Validation("noise_std must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be positive".into()));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::Validation("learning rates must be positive".into()));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(Error::Validation("hidden sizes must be positive".into()));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::Validation(
                "buffer_capacity must be at least batch_size".into(),
            ));
        }
        Ok(())
    }
}

/// Actor, critic, their targets, and both optimizer states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgAgent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub config: AgentConfig,
    pub action_low: f64,
    pub action_high: f64,
}

impl DdpgAgent {
    /// Fresh agent; targets start as exact copies of the online nets.
    pub fn new(state_dim: usize, config: AgentConfig, bounds: (f64, f64), rng: &mut StdRng) -> Self {
        let (h1, h2) = config.hidden;
        let actor = Mlp::new(
            &[state_dim, h1, h2, 1],
            Activation::Bounded {
                lo: bounds.0,
                hi: bounds.1,
            },
            rng,
        );
        let critic = Mlp::new(&[state_dim + 1, h1, h2, 1], Activation::Identity, rng);
        let actor_opt = AdamState::new(config.actor_lr, actor.num_params());
        let critic_opt = AdamState::new(config.critic_lr, critic.num_params());
        DdpgAgent {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            config,
            action_low: bounds.0,
            action_high: bounds.1,
        }
    }

    /// Validates network shapes against an observation dimensionality; used
    /// when loading checkpoints.
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        self.actor.validate()?;
        self.critic.validate()?;
        self.target_actor.validate()?;
        self.target_critic.validate()?;
        if self.actor.input_dim() != state_dim || self.critic.input_dim() != state_dim + 1 {
            return Err(Error::Shape(format!(
                "checkpoint nets expect state dim {}, environment provides {}",
                self.actor.input_dim(),
                state_dim
            )));
        }
        self.config.validate()
    }

    pub fn select_action(&self, state: &[f64], rng: &mut StdRng) -> f64 {
        select_action(
            &self.actor,
            state,
            self.config.noise_std,
            (self.action_low, self.action_high),
            rng,
        )
    }

    pub fn greedy_action(&self, state: &[f64]) -> f64 {
        select_action_noiseless(&self.actor, state, (self.action_low, self.action_high))
    }
}

fn select_action_noiseless(actor: &Mlp, state: &[f64], bounds: (f64, f64)) -> f64 {
    let u = actor.forward(state).expect("state dim matches actor")[0];
    u.clamp(bounds.0, bounds.1)
}

/// Policy output plus Gaussian exploration noise, clamped to bounds.
/// Deterministic when `noise_std` is zero.
pub fn select_action(
    actor: &Mlp,
    state: &[f64],
    noise_std: f64,
    bounds: (f64, f64),
    rng: &mut StdRng,
) -> f64 {
    let mut u = select_action_noiseless(actor, state, bounds);
    if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std).expect("noise_std >= 0");
        u += noise.sample(rng);
    }
    u.clamp(bounds.0, bounds.1)
}

/// Potential values at a transition's endpoints. The `next` entry must
/// already be zero for terminal successors; `td_target` enforces this again.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialPair {
    pub current: f64,
    pub next: f64,
}

/// Core TD-target arithmetic, shared by the network path and by tabular
/// tests: `y = r + gamma * next_value` with terminal transitions never
/// bootstrapping. With potentials, rewards are first shaped by the potential
/// difference.
pub fn td_targets_from_values(
    rewards: &[f64],
    dones: &[bool],
    next_values: &[f64],
    gamma: f64,
    potentials: Option<&[PotentialPair]>,
) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .zip(next_values)
        .enumerate()
        .map(|(i, ((&r, &done), &next_q))| {
            let shaped = match potentials {
                Some(p) => {
                    let next_phi = if done { 0.0 } else { p[i].next };
                    shape_reward(r, p[i].current, next_phi, gamma)
                }
                None => r,
            };
            if done {
                shaped
            } else {
                shaped + gamma * next_q
            }
        })
        .collect()
}

/// TD targets for a batch using the target networks:
/// `y = r + gamma * Q'(x', mu'(x'))`, with the optional shaped-reward variant.
pub fn td_target(
    batch: &[&Transition],
    target_actor: &Mlp,
    target_critic: &Mlp,
    gamma: f64,
    potentials: Option<&[PotentialPair]>,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    if let Some(p) = potentials {
        if p.len() != batch.len() {
            return Err(Error::Shape("potentials not aligned with batch".into()));
        }
    }
    let mut rewards = Vec::with_capacity(batch.len());
    let mut dones = Vec::with_capacity(batch.len());
    let mut next_values = Vec::with_capacity(batch.len());
    let mut critic_in = Vec::with_capacity(target_critic.input_dim());
    for t in batch {
        rewards.push(t.reward);
        dones.push(t.done);
        if t.done {
            next_values.push(0.0);
        } else {
            let a = target_actor.forward(&t.next_state)?[0];
            critic_in.clear();
            critic_in.extend_from_slice(&t.next_state);
            critic_in.push(a);
            next_values.push(target_critic.forward(&critic_in)?[0]);
        }
    }
    Ok(td_targets_from_values(
        &rewards,
        &dones,
        &next_values,
        gamma,
        potentials,
    ))
}

/// One Adam step on the mean squared error between `Q(x, u)` and the targets.
/// Returns the loss of the pre-update parameters; on a non-finite loss the
/// parameters are left untouched.
pub fn critic_update(
    critic: &mut Mlp,
    batch: &[&Transition],
    targets: &[f64],
    opt: &mut AdamState,
) -> Result<f64> {
    if batch.is_empty() || batch.len() != targets.len() {
        return Err(Error::Shape("batch and targets must align and be nonempty".into()));
    }
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(critic);
    let mut cache = ForwardCache::new();
    let mut input = Vec::with_capacity(critic.input_dim());
    let mut loss = 0.0;
    for (t, &y) in batch.iter().zip(targets) {
        input.clear();
        input.extend_from_slice(&t.state);
        input.push(t.action);
        critic.forward_cached(&input, &mut cache)?;
        let q = cache.output()[0];
        let err = q - y;
        loss += err * err;
        // d(mean squared error)/dq
        critic.backward_accumulate(&input, &mut cache, &[2.0 * err / n], &mut grads, None);
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite critic loss; update skipped".into()));
    }
    adam_step(critic, &grads, opt)?;
    Ok(loss)
}

/// Gradient (for minimization) of `-(1/N) sum Q(x, mu(x))` with respect to
/// the actor parameters, flowing through the critic's action input. The
/// critic itself is read-only.
pub fn policy_gradient(actor: &Mlp, critic: &Mlp, batch: &[&Transition]) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(actor);
    let mut actor_cache = ForwardCache::new();
    let mut critic_cache = ForwardCache::new();
    let mut critic_grads = Gradients::zeros_like(critic);
    let mut critic_in = Vec::with_capacity(critic.input_dim());
    let mut critic_in_grad = Vec::new();
    for t in batch {
        actor.forward_cached(&t.state, &mut actor_cache)?;
        let a = actor_cache.output()[0];
        critic_in.clear();
        critic_in.extend_from_slice(&t.state);
        critic_in.push(a);
        critic.forward_cached(&critic_in, &mut critic_cache)?;
        critic_grads.zero(); // discarded; only the input gradient is needed
        critic.backward_accumulate(
            &critic_in,
            &mut critic_cache,
            &[1.0],
            &mut critic_grads,
            Some(&mut critic_in_grad),
        );
        let dq_da = critic_in_grad[critic.input_dim() - 1];
        // ascend Q: minimize -Q
        actor.backward_accumulate(
            &t.state,
            &mut actor_cache,
            &[-dq_da / n],
            &mut grads,
            None,
        );
    }
    Ok(grads)
}

/// One Adam step ascending the critic's valuation of the actor's actions.
/// Skips the update (with an error) on non-finite gradients.
pub fn actor_update(
    actor: &mut Mlp,
    critic: &Mlp,
    batch: &[&Transition],
    opt: &mut AdamState,
) -> Result<()> {
    let grads = policy_gradient(actor, critic, batch)?;
    adam_step(actor, &grads, opt)
}

/// Polyak averaging: `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if target.layers.len() != online.layers.len() {
        return Err(Error::Shape("target and online nets differ in depth".into()));
    }
    for (tl, ol) in target.layers.iter_mut().zip(&online.layers) {
        if tl.weights.len() != ol.weights.len() || tl.biases.len() != ol.biases.len() {
            return Err(Error::Shape("target and online layer sizes differ".into()));
        }
        for (t, o) in tl
            .weights
            .iter_mut()
            .chain(tl.biases.iter_mut())
            .zip(ol.weights.iter().chain(ol.biases.iter()))
        {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> StdRng {
        StdRng::seed_from_u64(seed)
    }

    /// Constant-output net: zero weights, chosen bias, identity output.
    fn constant_net(input_dim: usize, value: f64) -> Mlp {
        Mlp {
            layers: vec![Layer {
                in_dim: input_dim,
                out_dim: 1,
                weights: vec![0.0; input_dim],
                biases: vec![value],
                activation: Activation::Identity,
            }],
        }
    }

    fn transition(state: Vec<f64>, action: f64, reward: f64, next: Vec<f64>, done: bool) -> Transition {
        Transition {
            state,
            action,
            reward,
            next_state: next,
            done,
            episode: 0,
            step: 0,
        }
    }

    #[test]
    fn select_action_noiseless_is_policy_output() {
        let mut r = rng(0);
        let actor = Mlp::new(&[2, 8, 1], Activation::Bounded { lo: -1.0, hi: 1.0 }, &mut r);
        let state = [0.3, -0.7];
        let mu = actor.forward(&state).unwrap()[0];
        assert_eq!(select_action(&actor, &state, 0.0, (-1.0, 1.0), &mut r), mu);
    }

    #[test]
    fn select_action_clamps_to_bounds() {
        let actor = constant_net(1, 0.9);
        let mut r = rng(1);
        // huge noise forces excursions; outputs must stay inside bounds
        for _ in 0..100 {
            let a = select_action(&actor, &[0.0], 5.0, (-1.0, 1.0), &mut r);
            assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn exploration_noise_has_requested_scale() {
        let actor = constant_net(1, 0.0);
        let mut r = rng(2);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| select_action(&actor, &[0.0], 0.1, (-100.0, 100.0), &mut r))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        assert!((std - 0.1).abs() < 0.01, "sample std {std}");
    }

    #[test]
    fn td_target_masks_terminal_transitions() {
        let ta = constant_net(2, 0.5);
        let tc = constant_net(3, 2.0);
        let t = transition(vec![0.0, 0.0], 0.1, 1.5, vec![0.0, 0.0], true);
        let y = td_target(&[&t], &ta, &tc, 0.99, None).unwrap();
        assert_eq!(y, vec![1.5]);
    }

    #[test]
    fn td_target_zero_gamma_reduces_to_reward() {
        let ta = constant_net(2, 0.5);
        let tc = constant_net(3, 2.0);
        let t = transition(vec![0.0, 0.0], 0.1, 1.5, vec![0.0, 0.0], false);
        let y = td_target(&[&t], &ta, &tc, 0.0, None).unwrap();
        assert_eq!(y, vec![1.5]);
    }

    #[test]
    fn td_target_bootstraps_target_networks() {
        // target critic pinned at 2.0 regardless of input
        let ta = constant_net(2, 0.5);
        let tc = constant_net(3, 2.0);
        let t = transition(vec![0.0, 0.0], 0.1, 1.0, vec![0.0, 0.0], false);
        let y = td_target(&[&t], &ta, &tc, 0.99, None).unwrap();
        assert!((y[0] - 2.98).abs() < 1e-12);
    }

    #[test]
    fn critic_update_loss_values() {
        // critic that already matches the target: zero loss, tiny update
        let mut critic = constant_net(3, 1.0);
        let mut opt = AdamState::new(1e-3, critic.num_params());
        let t = transition(vec![0.0, 0.0], 0.0, 1.0, vec![0.0, 0.0], true);
        let loss = critic_update(&mut critic, &[&t], &[1.0], &mut opt).unwrap();
        assert_eq!(loss, 0.0);
        assert!((critic.layers[0].biases[0] - 1.0).abs() < 1e-9);

        // unit error gives unit loss
        let mut critic = constant_net(3, 0.0);
        let mut opt = AdamState::new(1e-3, critic.num_params());
        let loss = critic_update(&mut critic, &[&t], &[1.0], &mut opt).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn critic_update_mean_is_duplication_invariant() {
        let mut r = rng(3);
        let base = Mlp::new(&[3, 8, 1], Activation::Identity, &mut r);
        let t = transition(vec![0.2, -0.4], 0.1, 0.7, vec![0.0, 0.0], true);

        let mut c1 = base.clone();
        let mut o1 = AdamState::new(1e-3, c1.num_params());
        let l1 = critic_update(&mut c1, &[&t], &[0.7], &mut o1).unwrap();

        let mut c4 = base.clone();
        let mut o4 = AdamState::new(1e-3, c4.num_params());
        let batch = vec![&t; 4];
        let l4 = critic_update(&mut c4, &batch, &[0.7; 4], &mut o4).unwrap();

        assert!((l1 - l4).abs() < 1e-12);
        assert_eq!(c1, c4);
    }

    #[test]
    fn zero_critic_gives_zero_policy_gradient() {
        let mut r = rng(4);
        let actor = Mlp::new(&[2, 8, 1], Activation::Bounded { lo: -1.0, hi: 1.0 }, &mut r);
        let critic = constant_net(3, 0.0);
        let t = transition(vec![0.1, 0.2], 0.0, 0.0, vec![0.0, 0.0], false);
        let grads = policy_gradient(&actor, &critic, &[&t]).unwrap();
        assert!(grads
            .layers
            .iter()
            .all(|lg| lg.weights.iter().chain(&lg.biases).all(|g| *g == 0.0)));
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let mut r = rng(5);
        let mut actor = Mlp::new(&[2, 6, 1], Activation::Bounded { lo: -1.0, hi: 1.0 }, &mut r);
        let critic = Mlp::new(&[3, 8, 1], Activation::Identity, &mut r);
        let batch_owned: Vec<Transition> = (0..4)
            .map(|i| {
                transition(
                    vec![0.1 * i as f64, -0.2 * i as f64],
                    0.0,
                    0.0,
                    vec![0.0, 0.0],
                    false,
                )
            })
            .collect();
        let batch: Vec<&Transition> = batch_owned.iter().collect();
        let analytic = policy_gradient(&actor, &critic, &batch).unwrap();

        let mean_q = |actor: &Mlp| -> f64 {
            batch
                .iter()
                .map(|t| {
                    let a = actor.forward(&t.state).unwrap()[0];
                    let mut input = t.state.clone();
                    input.push(a);
                    critic.forward(&input).unwrap()[0]
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        let h = 1e-6;
        let mut worst = 0.0f64;
        for k in 0..actor.layers.len() {
            for j in 0..actor.layers[k].weights.len() {
                let orig = actor.layers[k].weights[j];
                actor.layers[k].weights[j] = orig + h;
                let fp = mean_q(&actor);
                actor.layers[k].weights[j] = orig - h;
                let fm = mean_q(&actor);
                actor.layers[k].weights[j] = orig;
                // policy_gradient returns the descent direction of -meanQ
                let numeric = -(fp - fm) / (2.0 * h);
                let a = analytic.layers[k].weights[j];
                let denom = a.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        assert!(worst < 1e-3, "max relative error {worst}");
    }

    #[test]
    fn actor_drifts_toward_critic_optimum() {
        let mut r = rng(6);
        // fit a critic to Q(x, u) = -u^2 on a grid of actions
        let mut critic = Mlp::new(&[2, 16, 1], Activation::Identity, &mut r);
        let mut copt = AdamState::new(1e-2, critic.num_params());
        for _ in 0..1500 {
            let batch_owned: Vec<Transition> = (0..16)
                .map(|_| {
                    let u: f64 = r.gen_range(-1.0..1.0);
                    transition(vec![0.0], u, 0.0, vec![0.0], true)
                })
                .collect();
            let batch: Vec<&Transition> = batch_owned.iter().collect();
            let targets: Vec<f64> = batch.iter().map(|t| -t.action * t.action).collect();
            critic_update(&mut critic, &batch, &targets, &mut copt).unwrap();
        }
        let mut actor = Mlp::new(&[1, 8, 1], Activation::Bounded { lo: -1.0, hi: 1.0 }, &mut r);
        // nudge the initial policy away from the optimum
        actor.layers.last_mut().unwrap().biases[0] = 1.0;
        let before = actor.forward(&[0.0]).unwrap()[0].abs();
        let mut aopt = AdamState::new(1e-2, actor.num_params());
        let t = transition(vec![0.0], 0.0, 0.0, vec![0.0], false);
        for _ in 0..300 {
            actor_update(&mut actor, &critic, &[&t], &mut aopt).unwrap();
        }
        let after = actor.forward(&[0.0]).unwrap()[0].abs();
        assert!(
            after < before * 0.5,
            "|mu| did not shrink: {before} -> {after}"
        );
    }

    #[test]
    fn polyak_endpoints_and_rate() {
        let online = constant_net(1, 1.0);
        let mut target = constant_net(1, 0.0);
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.layers[0].biases[0], 1.0);

        let mut target = constant_net(1, 0.0);
        polyak_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target.layers[0].biases[0], 0.0);

        let mut target = constant_net(1, 0.0);
        polyak_update(&mut target, &online, 0.005).unwrap();
        assert!((target.layers[0].biases[0] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn polyak_gap_shrinks_geometrically() {
        let mut r = rng(7);
        let online = Mlp::new(&[2, 4, 1], Activation::Identity, &mut r);
        let mut target = Mlp::new(&[2, 4, 1], Activation::Identity, &mut r);
        let tau = 0.1;
        let gap = |t: &Mlp| -> f64 {
            t.layers
                .iter()
                .zip(&online.layers)
                .flat_map(|(a, b)| {
                    a.weights
                        .iter()
                        .chain(&a.biases)
                        .zip(b.weights.iter().chain(&b.biases))
                })
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let g0 = gap(&target);
        let k = 10;
        for _ in 0..k {
            polyak_update(&mut target, &online, tau).unwrap();
        }
        let expected = g0 * (1.0f64 - tau).powi(k);
        assert!((gap(&target) - expected).abs() < 1e-12 * g0.max(1.0));
    }

    #[test]
    fn buffer_evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..4 {
            buf.push(transition(vec![i as f64], 0.0, 0.0, vec![0.0], false));
        }
        assert_eq!(buf.len(), 3);
        let states: Vec<f64> = (0..3).map(|i| buf.get(i).state[0]).collect();
        assert!(states.contains(&3.0));
        assert!(!states.contains(&0.0));
    }

    #[test]
    fn buffer_sampling_is_seed_deterministic() {
        let mut buf = ReplayBuffer::new(100);
        for i in 0..50 {
            buf.push(transition(vec![i as f64], 0.0, 0.0, vec![0.0], false));
        }
        let a = buf.sample_indices(10, &mut rng(9)).unwrap();
        let b = buf.sample_indices(10, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn buffer_sampling_rejects_underfill() {
        let mut buf = ReplayBuffer::new(10);
        buf.push(transition(vec![0.0], 0.0, 0.0, vec![0.0], false));
        assert!(matches!(
            buf.sample_indices(2, &mut rng(0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn buffer_sampling_is_uniform_chi_squared() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(transition(vec![i as f64], 0.0, 0.0, vec![0.0], false));
        }
        let mut r = rng(12345);
        let mut counts = [0u64; 10];
        let draws = 20_000; // batches of 5 -> 1e5 marginal samples
        for _ in 0..draws {
            for idx in buf.sample_indices(5, &mut r).unwrap() {
                counts[idx] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // chi-squared critical value, 9 degrees of freedom, p = 0.01
        assert!(chi2 < 21.67, "chi2 = {chi2}");
    }

    /// TD learning with the shared target arithmetic converges to the value
    /// iteration fixed point on a tiny tabular problem, with the critic
    /// emulated exactly by a linear net over one-hot state-action features.
    #[test]
    fn tabular_td_matches_value_iteration() {
        // 2 states x 2 actions, deterministic transitions, gamma 0.9
        let gamma = 0.9;
        let next_state = [[0usize, 1], [0, 1]]; // next[s][a]
        let reward = [[1.0, 0.0], [0.5, 2.0]]; // r[s][a]

        // oracle: synchronous value iteration on the table
        let mut q_star = [[0.0f64; 2]; 2];
        for _ in 0..500 {
            let mut next_q = q_star;
            for s in 0..2 {
                for a in 0..2 {
                    let ns = next_state[s][a];
                    let best = q_star[ns][0].max(q_star[ns][1]);
                    next_q[s][a] = reward[s][a] + gamma * best;
                }
            }
            q_star = next_q;
        }

        // one-hot feature per (s, a) pair; a linear critic is an exact table
        let feat = |s: usize, a: usize| -> Vec<f64> {
            let mut v = vec![0.0; 4];
            v[s * 2 + a] = 1.0;
            v
        };
        let mut critic = Mlp {
            layers: vec![Layer {
                in_dim: 5, // 4 features + unused action slot
                out_dim: 1,
                weights: vec![0.0; 5],
                biases: vec![0.0],
                activation: Activation::Identity,
            }],
        };
        let mut opt = AdamState::new(5e-2, critic.num_params());
        let q_of = |critic: &Mlp, s: usize, a: usize| -> f64 {
            let mut input = feat(s, a);
            input.push(0.0);
            critic.forward(&input).unwrap()[0]
        };

        let mut buf = ReplayBuffer::new(1000);
        let mut r = rng(17);
        for _ in 0..1000 {
            let s = r.gen_range(0..2usize);
            let a = r.gen_range(0..2usize);
            buf.push(Transition {
                state: feat(s, a),
                action: 0.0,
                reward: reward[s][a],
                next_state: vec![s as f64, a as f64],
                done: false,
                episode: 0,
                step: 0,
            });
        }
        for _ in 0..3000 {
            let batch = buf.sample(32, &mut r).unwrap();
            let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
            let dones = vec![false; batch.len()];
            let next_values: Vec<f64> = batch
                .iter()
                .map(|t| {
                    let ns = next_state[t.next_state[0] as usize][t.next_state[1] as usize];
                    q_of(&critic, ns, 0).max(q_of(&critic, ns, 1))
                })
                .collect();
            let targets = td_targets_from_values(&rewards, &dones, &next_values, gamma, None);
            critic_update(&mut critic, &batch, &targets, &mut opt).unwrap();
        }
        for s in 0..2 {
            for a in 0..2 {
                let learned = q_of(&critic, s, a);
                assert!(
                    (learned - q_star[s][a]).abs() < 1e-2,
                    "Q({s},{a}) = {learned}, oracle {}",
                    q_star[s][a]
                );
            }
        }
    }

    #[test]
    fn agent_checkpoint_roundtrip() {
        let mut r = rng(20);
        let agent = DdpgAgent::new(4, AgentConfig::default(), (0.05, 0.55), &mut r);
        let text = serde_json::to_string(&agent).unwrap();
        let back: DdpgAgent = serde_json::from_str(&text).unwrap();
        assert_eq!(agent, back);
        back.validate(4).unwrap();
    }
}
