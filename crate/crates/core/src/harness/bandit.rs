//! Contextual-bandit sanity environment: every round starts from the same
//! prompt, the channel state is redrawn independently each round, and
//! episodes have a fixed horizon. With discount 0 the optimal controller
//! picks the best action per channel state, so the best fixed action is a
//! lower bound on what a trained agent should reach.

use rand_chacha::ChaCha8Rng;

use crate::agent::{EnvStep, Environment};
use crate::channel::{ChannelConfig, ChannelState, InitialState};
use crate::engine::step;
use crate::error::{Error, Result};
use crate::lm::{DecodeState, ModelPair};
use crate::policy::{featurize, reward};
use crate::rng::{stream_rng, Stream};
use crate::timing::iteration_latency;

use super::episode::{synthetic_prompt, Simulator};

pub struct BanditEnv<M> {
    sim: Simulator<M>,
    prompt: DecodeState,
    horizon: usize,
    t: usize,
    channel: ChannelState,
    sampling: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
}

/// Channel whose state is drawn afresh every round with `P(high) = p_high`.
pub fn iid_channel(base: &ChannelConfig, p_high: f64) -> ChannelConfig {
    ChannelConfig {
        p_low_to_high: p_high,
        p_high_to_low: 1.0 - p_high,
        initial_state: InitialState::Stationary,
        ..base.clone()
    }
}

impl<M: ModelPair> BanditEnv<M> {
    /// The prompt comes from `prompt_seed`; sampling and channel draws from
    /// `seed`, so separate training and evaluation runs face the same arms.
    pub fn new(sim: Simulator<M>, horizon: usize, prompt_seed: u64, seed: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("bandit horizon must be positive".into()));
        }
        let vocab = sim.models.vocab();
        let prompt = DecodeState::new(synthetic_prompt(
            sim.prompt_len,
            vocab.size(),
            vocab.eos_id(),
            &mut stream_rng(prompt_seed, Stream::Prompt),
        ));
        let mut channel_rng = stream_rng(seed, Stream::Channel);
        let channel = sim.channel.initial(&mut channel_rng)?;
        Ok(Self {
            sim,
            prompt,
            horizon,
            t: 0,
            channel,
            sampling: stream_rng(seed, Stream::Sampling),
            channel_rng,
        })
    }

    pub fn simulator(&self) -> &Simulator<M> {
        &self.sim
    }

    fn observe(&self) -> Vec<f64> {
        featurize(&self.prompt, &self.channel, &self.sim.channel, self.sim.tail).features
    }

    /// Mean reward per round of `choose` over `episodes` episodes.
    pub fn evaluate(&mut self, episodes: usize, mut choose: impl FnMut(&[f64]) -> usize) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for e in 0..episodes {
            let mut obs = self.reset(e as u64)?;
            loop {
                let out = self.step(choose(&obs))?;
                total += out.reward;
                n += 1;
                if out.terminal {
                    break;
                }
                obs = out.next_observation;
            }
        }
        Ok(total / n as f64)
    }
}

impl<M: ModelPair> Environment for BanditEnv<M> {
    fn observation_dim(&self) -> usize {
        self.sim.tail + 3
    }

    fn num_actions(&self) -> usize {
        self.sim.space.len()
    }

    fn reset(&mut self, _episode: u64) -> Result<Vec<f64>> {
        self.t = 0;
        self.channel = self.sim.channel.initial(&mut self.channel_rng)?;
        Ok(self.observe())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let action = self.sim.space.get(action);
        let (_, out) = step(&self.sim.models, &self.prompt, &action, self.sim.mode, &mut self.sampling)?;
        let latency = iteration_latency(
            action.draft_len,
            action.bits,
            self.sim.models.vocab().size(),
            &self.sim.timing,
            self.channel.uplink_rate,
            self.channel.downlink_rate,
        )?;
        let r = reward(&out.accept_probs, latency.total)?;
        self.t += 1;
        self.channel = self.channel.advance(&self.sim.channel, &mut self.channel_rng);
        Ok(EnvStep {
            reward: r.reward,
            next_observation: self.observe(),
            terminal: self.t >= self.horizon,
        })
    }
}
