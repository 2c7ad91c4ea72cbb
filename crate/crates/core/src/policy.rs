//! Control policies choosing the draft length and lattice resolution for
//! each round, plus the per-round throughput reward.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelState};
use crate::error::{Error, Result};
use crate::lattice::bit_cost;
use crate::lm::{DecodeState, VocabSpec};
use crate::timing::IterationRecord;

/// Draft length `L` and lattice resolution `ℓ` for one round; `bits` is the
/// per-distribution cost of `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub draft_len: u32,
    pub ell: u32,
    pub bits: u32,
}

impl Action {
    pub fn new(draft_len: u32, ell: u32, vocab: VocabSpec) -> Result<Self> {
        if draft_len == 0 {
            return Err(Error::Config("draft length must be at least 1".into()));
        }
        Ok(Self {
            draft_len,
            ell,
            bits: bit_cost(ell, vocab.size())?.bits,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionsConfig {
    pub draft_choices: Vec<u32>,
    pub ell_choices: Vec<u32>,
}

impl Default for ActionsConfig {
    fn default() -> Self {
        Self {
            draft_choices: (1..=8).collect(),
            ell_choices: vec![4, 16, 64, 256],
        }
    }
}

/// The flattened product of draft-length and resolution choices; index
/// `i_L * |ℓ choices| + i_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    draft_choices: Vec<u32>,
    ell_choices: Vec<u32>,
    actions: Vec<Action>,
}

impl ActionSpace {
    pub fn new(cfg: &ActionsConfig, vocab: VocabSpec) -> Result<Self> {
        if cfg.draft_choices.is_empty() || cfg.ell_choices.is_empty() {
            return Err(Error::Config("action choice sets must be non-empty".into()));
        }
        let mut actions = Vec::with_capacity(cfg.draft_choices.len() * cfg.ell_choices.len());
        for &l in &cfg.draft_choices {
            for &ell in &cfg.ell_choices {
                actions.push(Action::new(l, ell, vocab)?);
            }
        }
        Ok(Self {
            draft_choices: cfg.draft_choices.clone(),
            ell_choices: cfg.ell_choices.clone(),
            actions,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn index_of(&self, draft_len: u32, ell: u32) -> Option<usize> {
        let i = self.draft_choices.iter().position(|&l| l == draft_len)?;
        let j = self.ell_choices.iter().position(|&e| e == ell)?;
        Some(i * self.ell_choices.len() + j)
    }

    pub fn max_draft_len(&self) -> u32 {
        self.draft_choices.iter().copied().max().unwrap_or(1)
    }
}

/// What the edge knows when choosing an action.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyObservation {
    pub features: Vec<f64>,
    pub confidences: Vec<f64>,
    pub uplink_rate: f64,
}

/// Feature vector of length `K + 3`:
/// `[mean f, min f, last K of f (left-padded with 1.0), normalized log-rate]`.
pub fn featurize(
    state: &DecodeState,
    channel: &ChannelState,
    channel_cfg: &ChannelConfig,
    tail: usize,
) -> PolicyObservation {
    let f = state.confidences();
    let (mean, min) = if f.is_empty() {
        (1.0, 1.0)
    } else {
        (
            f.iter().sum::<f64>() / f.len() as f64,
            f.iter().copied().fold(f64::INFINITY, f64::min),
        )
    };
    let mut features = Vec::with_capacity(tail + 3);
    features.push(mean);
    features.push(min);
    let kept = f.len().min(tail);
    features.extend(std::iter::repeat(1.0).take(tail - kept));
    features.extend_from_slice(&f[f.len() - kept..]);
    let span = (channel_cfg.rate_high / channel_cfg.rate_low).log2();
    let rate = if span > 0.0 {
        (channel.uplink_rate / channel_cfg.rate_low).log2() / span
    } else {
        0.0
    };
    features.push(rate);
    PolicyObservation {
        features,
        confidences: f.to_vec(),
        uplink_rate: channel.uplink_rate,
    }
}

/// Expected number of tokens appended by a round whose drafts have
/// acceptance probabilities `alphas`, verified as sequential Bernoulli
/// trials:
/// `Σ_l l (Π_{j<l} α_j)(1 - α_l) + (L + 1) Π_j α_j`.
pub fn expected_accepted(alphas: &[f64]) -> f64 {
    let mut survive = 1.0;
    let mut total = 0.0;
    for (i, &a) in alphas.iter().enumerate() {
        total += (i + 1) as f64 * survive * (1.0 - a);
        survive *= a;
    }
    total + (alphas.len() + 1) as f64 * survive
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRecord {
    pub g_value: f64,
    /// One-sample estimate of the expected appended count.
    pub n_avg: f64,
    pub latency: f64,
    /// Tokens per second.
    pub reward: f64,
}

pub fn reward(alphas: &[f64], latency: f64) -> Result<RewardRecord> {
    if !(latency > 0.0) {
        return Err(Error::NonPositiveLatency(latency));
    }
    let g = expected_accepted(alphas);
    Ok(RewardRecord {
        g_value: g,
        n_avg: g,
        latency,
        reward: g / latency,
    })
}

pub trait Policy {
    fn label(&self) -> String;

    fn act(&mut self, obs: &PolicyObservation) -> Action;

    /// Feedback after each round.
    fn observe(&mut self, _record: &IterationRecord) {}

    /// Called at the start of every episode.
    fn reset(&mut self) {}
}

#[derive(Debug, Clone)]
pub struct StaticPolicy {
    action: Action,
}

pub fn static_policy(action: Action) -> StaticPolicy {
    StaticPolicy { action }
}

impl Policy for StaticPolicy {
    fn label(&self) -> String {
        format!("static_L{}_ell{}", self.action.draft_len, self.action.ell)
    }

    fn act(&mut self, _obs: &PolicyObservation) -> Action {
        self.action
    }
}

/// Grow `L` by one after a fully accepted round, otherwise shrink it to the
/// number of accepted drafts (at least one). `ℓ` stays fixed.
#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    initial_len: u32,
    max_len: u32,
    ell: u32,
    bits: u32,
    last: Option<(u32, u32)>,
}

pub fn heuristic_policy(initial_len: u32, max_len: u32, ell: u32, vocab: VocabSpec) -> Result<HeuristicPolicy> {
    if initial_len == 0 || initial_len > max_len {
        return Err(Error::Config(format!(
            "heuristic initial length {initial_len} outside [1, {max_len}]"
        )));
    }
    Ok(HeuristicPolicy {
        initial_len,
        max_len,
        ell,
        bits: bit_cost(ell, vocab.size())?.bits,
        last: None,
    })
}

impl HeuristicPolicy {
    pub fn next_len(&self, prev_len: u32, prev_accepted: u32) -> u32 {
        if prev_accepted >= prev_len {
            (prev_len + 1).min(self.max_len)
        } else {
            prev_accepted.clamp(1, self.max_len)
        }
    }
}

impl Policy for HeuristicPolicy {
    fn label(&self) -> String {
        format!("heuristic_ell{}", self.ell)
    }

    fn act(&mut self, _obs: &PolicyObservation) -> Action {
        let draft_len = match self.last {
            None => self.initial_len,
            Some((l, n)) => self.next_len(l, n),
        };
        Action {
            draft_len,
            ell: self.ell,
            bits: self.bits,
        }
    }

    fn observe(&mut self, record: &IterationRecord) {
        self.last = Some((record.draft_len, record.accepted));
    }

    fn reset(&mut self) {
        self.last = None;
    }
}
