//! Decode episodes: policy, protocol round, channel transition, repeated
//! until the stopping rule fires.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{EnvStep, Environment};
use crate::channel::{ChannelConfig, ChannelState};
use crate::engine::{step, DraftMode};
use crate::error::{Error, Result};
use crate::lm::{DecodeState, ModelPair};
use crate::policy::{featurize, reward, Action, ActionSpace, Policy, PolicyObservation};
use crate::prob::Token;
use crate::rng::{stream_rng, Stream};
use crate::timing::{iteration_latency, IterationRecord, TimingParams};

use super::config::Config;

/// Decoding stops once the generated part holds `eos_id` or at least
/// `n_max` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingRule {
    pub n_max: usize,
    pub eos_id: Token,
}

impl StoppingRule {
    pub fn new(n_max: usize, eos_id: Token) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        Ok(Self { n_max, eos_id })
    }

    pub fn reached(&self, state: &DecodeState) -> bool {
        state.generated() >= self.n_max || state.prefix()[state.prompt_len()..].contains(&self.eos_id)
    }
}

/// Everything fixed across the episodes of one experiment cell.
#[derive(Debug, Clone)]
pub struct Simulator<M> {
    pub models: M,
    pub channel: ChannelConfig,
    pub timing: TimingParams,
    pub space: ActionSpace,
    pub stop: StoppingRule,
    pub mode: DraftMode,
    pub prompt_len: usize,
    pub tail: usize,
}

impl Simulator<crate::lm::SyntheticModels> {
    pub fn from_config(cfg: &Config, temperature: f64) -> Result<Self> {
        cfg.validate()?;
        let model_cfg = cfg.model_at(temperature);
        let vocab = model_cfg.validate()?;
        Ok(Self {
            models: crate::lm::SyntheticModels::new(model_cfg)?,
            channel: cfg.channel.clone(),
            timing: cfg.timing,
            space: ActionSpace::new(&cfg.actions, vocab)?,
            stop: StoppingRule::new(cfg.run.n_max, vocab.eos_id())?,
            mode: cfg.run.mode,
            prompt_len: cfg.run.prompt_len,
            tail: cfg.policy.k,
        })
    }
}

/// Random prompt of non-EOS tokens.
pub fn synthetic_prompt<R: Rng + ?Sized>(len: usize, vocab: u32, eos_id: Token, rng: &mut R) -> Vec<Token> {
    (0..len)
        .map(|_| {
            let t = rng.gen_range(0..vocab - 1);
            if t >= eos_id {
                t + 1
            } else {
                t
            }
        })
        .collect()
}

/// Mutable state of one episode. Prompt, protocol sampling and channel use
/// separate streams of the episode seed, so two policies run on the same
/// seed see the same prompt and the same channel path.
#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub decode: DecodeState,
    pub channel: ChannelState,
    pub records: Vec<IterationRecord>,
    sampling: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
}

impl EpisodeState {
    pub fn new<M: ModelPair>(sim: &Simulator<M>, seed: u64) -> Result<Self> {
        let vocab = sim.models.vocab();
        let prompt = synthetic_prompt(
            sim.prompt_len,
            vocab.size(),
            vocab.eos_id(),
            &mut stream_rng(seed, Stream::Prompt),
        );
        let mut channel_rng = stream_rng(seed, Stream::Channel);
        let channel = sim.channel.initial(&mut channel_rng)?;
        Ok(Self {
            decode: DecodeState::new(prompt),
            channel,
            records: Vec::new(),
            sampling: stream_rng(seed, Stream::Sampling),
            channel_rng,
        })
    }

    pub fn observation<M>(&self, sim: &Simulator<M>) -> PolicyObservation {
        featurize(&self.decode, &self.channel, &sim.channel, sim.tail)
    }

    pub fn finished<M>(&self, sim: &Simulator<M>) -> bool {
        sim.stop.reached(&self.decode)
    }

    /// One round under `action`, then one channel transition.
    pub fn advance<M: ModelPair>(&mut self, sim: &Simulator<M>, action: Action) -> Result<&IterationRecord> {
        let (next, out) = step(&sim.models, &self.decode, &action, sim.mode, &mut self.sampling)?;
        let latency = iteration_latency(
            action.draft_len,
            action.bits,
            sim.models.vocab().size(),
            &sim.timing,
            self.channel.uplink_rate,
            self.channel.downlink_rate,
        )?;
        let reward = reward(&out.accept_probs, latency.total)?;
        self.records.push(IterationRecord {
            iteration: self.records.len() + 1,
            draft_len: action.draft_len,
            ell: action.ell,
            bits: action.bits,
            accepted: out.accepted,
            tokens_appended: out.appended.len() as u32,
            alphas: out.accept_probs,
            latency,
            reward,
            channel: self.channel,
            appended_entropies: out.appended_entropies,
            zero_quantized_events: out.zero_quantized_events,
        });
        self.decode = next;
        self.channel = self.channel.advance(&sim.channel, &mut self.channel_rng);
        Ok(self.records.last().unwrap())
    }
}

/// Outcome of one decode episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub policy: String,
    pub temperature: f64,
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    /// Number of rounds until the stopping rule fired.
    pub tau_star: usize,
    /// Generated tokens, counted up to `n_max`.
    pub tokens: usize,
    pub total_s: f64,
    pub throughput: f64,
    /// Accepted drafts over drafted tokens.
    pub accept_rate: f64,
    pub mean_entropy: f64,
    pub mean_draft_len: f64,
    pub mean_bits: f64,
}

impl RunRecord {
    pub fn from_iterations(
        policy: String,
        temperature: f64,
        seed: u64,
        iterations: Vec<IterationRecord>,
        n_max: usize,
    ) -> Self {
        let appended: usize = iterations.iter().map(|r| r.tokens_appended as usize).sum();
        let tokens = appended.min(n_max);
        let total_s = crate::timing::total_latency(&iterations);
        let drafted: u64 = iterations.iter().map(|r| r.draft_len as u64).sum();
        let accepted: u64 = iterations.iter().map(|r| r.accepted as u64).sum();
        let rounds = iterations.len().max(1) as f64;
        Self {
            policy,
            temperature,
            seed,
            tau_star: iterations.len(),
            tokens,
            total_s,
            throughput: if total_s > 0.0 { tokens as f64 / total_s } else { 0.0 },
            accept_rate: if drafted > 0 { accepted as f64 / drafted as f64 } else { 0.0 },
            mean_entropy: entropy_per_token(&iterations),
            mean_draft_len: iterations.iter().map(|r| r.draft_len as f64).sum::<f64>() / rounds,
            mean_bits: iterations.iter().map(|r| r.bits as f64).sum::<f64>() / rounds,
            iterations,
        }
    }
}

/// Mean entropy (nats) of the target distribution at every appended
/// position.
pub fn entropy_per_token(records: &[IterationRecord]) -> f64 {
    let (sum, n) = records
        .iter()
        .flat_map(|r| &r.appended_entropies)
        .fold((0.0, 0usize), |(s, n), &h| (s + h, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn run_episode<M: ModelPair, P: Policy + ?Sized>(
    sim: &Simulator<M>,
    policy: &mut P,
    seed: u64,
    temperature: f64,
) -> Result<RunRecord> {
    policy.reset();
    let mut ep = EpisodeState::new(sim, seed)?;
    while !ep.finished(sim) {
        let action = policy.act(&ep.observation(sim));
        let record = ep.advance(sim, action)?;
        policy.observe(record);
    }
    Ok(RunRecord::from_iterations(
        policy.label(),
        temperature,
        seed,
        ep.records,
        sim.stop.n_max,
    ))
}

/// Decode episodes as a reinforcement-learning environment. Episode `e`
/// runs on master seed `seed_base + e`.
pub struct DecodeEnv<M> {
    sim: Simulator<M>,
    seed_base: u64,
    episode: Option<EpisodeState>,
}

impl<M: ModelPair> DecodeEnv<M> {
    pub fn new(sim: Simulator<M>, seed_base: u64) -> Self {
        Self {
            sim,
            seed_base,
            episode: None,
        }
    }

    pub fn simulator(&self) -> &Simulator<M> {
        &self.sim
    }
}

impl<M: ModelPair> Environment for DecodeEnv<M> {
    fn observation_dim(&self) -> usize {
        self.sim.tail + 3
    }

    fn num_actions(&self) -> usize {
        self.sim.space.len()
    }

    fn reset(&mut self, episode: u64) -> Result<Vec<f64>> {
        let ep = EpisodeState::new(&self.sim, self.seed_base.wrapping_add(episode))?;
        let obs = ep.observation(&self.sim).features;
        self.episode = Some(ep);
        Ok(obs)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::Config("step called before reset".into()))?;
        let reward = ep.advance(&self.sim, self.sim.space.get(action))?.reward.reward;
        Ok(EnvStep {
            reward,
            next_observation: ep.observation(&self.sim).features,
            terminal: ep.finished(&self.sim),
        })
    }
}
