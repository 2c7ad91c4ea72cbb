//! Double deep Q-network controller.
//!
//! The online network picks actions ε-greedily and is regressed toward
//! `r + γ Q_target(s', argmax_a Q_online(s', a))` on minibatches drawn from
//! a FIFO replay memory. The target network is a periodic copy of the
//! online one.

mod network;
mod replay;
pub mod weights;

pub use network::{argmax, Dense, Target, ValueNetwork};
pub use replay::{ReplayBuffer, Transition};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Action, ActionSpace, Policy, PolicyObservation};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub discount: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps between target-network copies.
    pub target_sync_interval: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which ε decays linearly. When unset, ε decays
    /// over the first half of the training episodes.
    pub epsilon_decay_steps: Option<u64>,
    pub train_episodes: usize,
    pub grad_clip: f64,
    /// Rewards are multiplied by this before storage; the greedy policy is
    /// invariant to it.
    pub reward_scale: f64,
    pub updates_per_step: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 64],
            learning_rate: 0.01,
            discount: 0.2,
            replay_capacity: 20_000,
            batch_size: 32,
            target_sync_interval: 250,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            train_episodes: 1000,
            grad_clip: 10.0,
            reward_scale: 0.01,
            updates_per_step: 1,
            seed: 0xd0d0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!("discount {} outside [0, 1)", self.discount)));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "need 0 < batch_size ({}) <= replay_capacity ({})",
                self.batch_size, self.replay_capacity
            )));
        }
        if self.target_sync_interval == 0 {
            return Err(Error::Config("target_sync_interval must be positive".into()));
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("epsilon {e} outside [0, 1]")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.grad_clip > 0.0 && self.reward_scale > 0.0) {
            return Err(Error::Config("learning_rate, grad_clip and reward_scale out of range".into()));
        }
        Ok(())
    }

    fn dims(&self, inputs: usize, actions: usize) -> Vec<usize> {
        let mut dims = vec![inputs];
        dims.extend(&self.hidden_sizes);
        dims.push(actions);
        dims
    }
}

/// ε-greedy: uniform with probability `epsilon`, otherwise the argmax.
pub fn select_action<R: Rng + ?Sized>(
    net: &ValueNetwork,
    observation: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let q = net.forward(observation)?;
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..q.len()));
    }
    Ok(argmax(&q))
}

/// Double-Q bootstrap target.
pub fn td_target(
    reward: f64,
    next_observation: &[f64],
    terminal: bool,
    online: &ValueNetwork,
    target: &ValueNetwork,
    discount: f64,
) -> Result<f64> {
    if terminal || discount == 0.0 {
        return Ok(reward);
    }
    let best = argmax(&online.forward(next_observation)?);
    Ok(reward + discount * target.forward(next_observation)?[best])
}

pub struct DqnAgent {
    cfg: AgentConfig,
    online: ValueNetwork,
    target: ValueNetwork,
    replay: ReplayBuffer,
    replay_rng: ChaCha8Rng,
    updates: u64,
}

impl DqnAgent {
    pub fn new(cfg: AgentConfig, observation_dim: usize, num_actions: usize) -> Result<Self> {
        cfg.validate()?;
        let online = ValueNetwork::random(
            &cfg.dims(observation_dim, num_actions),
            &mut stream_rng(cfg.seed, Stream::Init),
        )?;
        Ok(Self {
            target: online.clone(),
            online,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            replay_rng: stream_rng(cfg.seed, Stream::Replay),
            updates: 0,
            cfg,
        })
    }

    pub fn online(&self) -> &ValueNetwork {
        &self.online
    }

    pub fn target(&self) -> &ValueNetwork {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn remember(&mut self, transition: Transition) {
        self.replay.push(transition);
    }

    /// One SGD step on the mean squared TD error of `batch`.
    pub fn train_on_batch(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = batch
            .iter()
            .map(|t| {
                td_target(
                    t.reward,
                    &t.next_observation,
                    t.terminal,
                    &self.online,
                    &self.target,
                    self.cfg.discount,
                )
            })
            .collect::<Result<Vec<f64>>>()?;
        let regress: Vec<Target<'_>> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &y)| Target {
                input: &t.observation,
                action: t.action,
                target: y,
            })
            .collect();
        let (loss, grad) = self.online.loss_and_gradient(&regress)?;
        self.online.sgd_step(&grad, self.cfg.learning_rate, self.cfg.grad_clip);
        self.updates += 1;
        if self.updates % self.cfg.target_sync_interval == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    /// Samples a minibatch from replay and trains on it.
    pub fn train_step(&mut self) -> Result<f64> {
        let batch = self
            .replay
            .sample(self.cfg.batch_size, &mut self.replay_rng)
            .ok_or(Error::InsufficientReplay {
                have: self.replay.len(),
                need: self.cfg.batch_size,
            })?;
        let batch: Vec<Transition> = batch.into_iter().cloned().collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        self.train_on_batch(&refs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub terminal: bool,
}

/// An episodic environment with a discrete action set.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn reset(&mut self, episode: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub network: ValueNetwork,
    /// Mean unscaled reward per episode.
    pub curve: Vec<f64>,
    pub env_steps: u64,
    pub updates: u64,
}

fn epsilon(cfg: &AgentConfig, episode: usize, env_steps: u64) -> f64 {
    let progress = match cfg.epsilon_decay_steps {
        Some(0) => 1.0,
        Some(n) => env_steps as f64 / n as f64,
        None => {
            let half = (cfg.train_episodes as f64 / 2.0).max(1.0);
            episode as f64 / half
        }
    };
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * progress.min(1.0)
}

pub fn train<E: Environment + ?Sized>(env: &mut E, cfg: &AgentConfig) -> Result<TrainingOutcome> {
    let mut agent = DqnAgent::new(cfg.clone(), env.observation_dim(), env.num_actions())?;
    let mut explore = stream_rng(cfg.seed, Stream::Exploration);
    let mut curve = Vec::with_capacity(cfg.train_episodes);
    let mut env_steps = 0u64;

    for episode in 0..cfg.train_episodes {
        let mut obs = env.reset(episode as u64)?;
        let mut total = 0.0;
        let mut steps = 0usize;
        loop {
            let eps = epsilon(cfg, episode, env_steps);
            let action = select_action(&agent.online, &obs, eps, &mut explore)?;
            let out = env.step(action)?;
            total += out.reward;
            steps += 1;
            env_steps += 1;
            agent.remember(Transition {
                observation: std::mem::take(&mut obs),
                action,
                reward: out.reward * cfg.reward_scale,
                next_observation: out.next_observation.clone(),
                terminal: out.terminal,
            });
            if agent.replay.len() >= cfg.batch_size {
                for _ in 0..cfg.updates_per_step {
                    agent.train_step()?;
                }
            }
            if out.terminal {
                break;
            }
            obs = out.next_observation;
        }
        curve.push(total / steps as f64);
    }

    Ok(TrainingOutcome {
        network: agent.online,
        curve,
        env_steps,
        updates: agent.updates,
    })
}

/// Greedy policy over a trained value network.
#[derive(Debug, Clone)]
pub struct QPolicy {
    net: ValueNetwork,
    space: ActionSpace,
}

impl QPolicy {
    pub fn new(net: ValueNetwork, space: ActionSpace) -> Result<Self> {
        if net.output_dim() != space.len() {
            return Err(Error::DimensionMismatch {
                expected: space.len(),
                got: net.output_dim(),
            });
        }
        Ok(Self { net, space })
    }

    pub fn network(&self) -> &ValueNetwork {
        &self.net
    }
}

impl Policy for QPolicy {
    fn label(&self) -> String {
        "ddqn".into()
    }

    fn act(&mut self, obs: &PolicyObservation) -> Action {
        let q = self
            .net
            .forward(&obs.features)
            .expect("observation width fixed by the action space and feature tail");
        self.space.get(argmax(&q))
    }
}
